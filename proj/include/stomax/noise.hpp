#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stomax/field.hpp"

namespace stomax {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    [[nodiscard]] static Counter generate(Counter counter, Key key) noexcept;
};

/// Address of one Gaussian draw.  Every increment is a pure function of its
/// address, so evaluation order and thread assignment never matter.
struct DrawAddress {
    std::uint64_t seed{0};
    std::uint32_t stream{0};
    std::uint32_t sample{0};
    std::uint32_t mode{0};
    std::uint32_t step{0};
};

/// Standard normal draw for an address (Box-Muller on two 53-bit uniforms).
[[nodiscard]] double standard_normal(const DrawAddress& address) noexcept;

struct SineMode {
    int kx{1};
    int ky{0};  // 0 in 1D
};

/// Truncated Karhunen-Loeve description of Q: Q e_j = q_j e_j with
/// q_j = scale * j^{-s} and e_j tensor sine modes vanishing on the boundary.
class NoiseSpec {
public:
    NoiseSpec(GridPtr grid, int num_modes, double decay_exponent, double variance_scale = 1.0);

    [[nodiscard]] const GridPtr& grid() const noexcept { return grid_; }
    [[nodiscard]] int num_modes() const noexcept { return static_cast<int>(modes_.size()); }
    [[nodiscard]] double decay_exponent() const noexcept { return decay_; }
    [[nodiscard]] double variance_scale() const noexcept { return scale_; }
    [[nodiscard]] std::span<const SineMode> modes() const noexcept { return modes_; }
    [[nodiscard]] std::span<const double> eigenvalues() const noexcept { return q_; }
    [[nodiscard]] double trace() const noexcept;

    /// e_j sampled at E nodes / H nodes (row j, contiguous nodes).
    [[nodiscard]] std::span<const double> e_values(int mode) const;
    [[nodiscard]] std::span<const double> h_values(int mode) const;
    [[nodiscard]] double evaluate(int mode, Point x) const;

    /// In the continuum limit sum q_j diverges for s <= 1.
    [[nodiscard]] bool trace_class_violation() const noexcept { return decay_ <= 1.0; }

private:
    GridPtr grid_;
    double decay_;
    double scale_;
    std::vector<SineMode> modes_;
    std::vector<double> q_;
    std::vector<double> e_table_;
    std::vector<double> h_table_;
};

NoiseSpec build_basis(GridPtr grid, int num_modes, double decay_exponent, double variance_scale = 1.0);

/// (sum_j q_j ||e_j||^2_{H^m})^{1/2} with analytic Sobolev norms of the sine modes.
double hs_norm(const NoiseSpec& spec, int sobolev_order);

/// Whether the untruncated series behind hs_norm converges: s > 2m/d + 1.
bool hs_norm_converges(const NoiseSpec& spec, int sobolev_order);

/// Realized Brownian increments Delta beta_j over a uniform time grid.
///
/// Always backed by the finest table it was sampled on; a coarsened view sums
/// `factor` consecutive fine increments in ascending step order, so any
/// chain of coarsenings with the same total factor is bit-identical.
class WienerPath {
public:
    [[nodiscard]] const std::shared_ptr<const NoiseSpec>& spec() const noexcept { return spec_; }
    [[nodiscard]] const TimeGrid& time_grid() const noexcept { return time_grid_; }
    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] std::uint32_t sample() const noexcept { return sample_; }
    [[nodiscard]] std::size_t factor() const noexcept { return factor_; }
    [[nodiscard]] std::size_t num_steps() const noexcept { return time_grid_.num_steps(); }
    [[nodiscard]] std::size_t num_modes() const noexcept { return modes_; }

    [[nodiscard]] double increment(std::size_t step, std::size_t mode) const;
    /// Row-major (num_steps x num_modes).
    [[nodiscard]] std::span<const double> table() const noexcept { return table_; }

    friend WienerPath sample_path(std::shared_ptr<const NoiseSpec>, const TimeGrid&, std::uint64_t, std::uint32_t,
                                  std::uint32_t);
    friend WienerPath coarsen_path(const WienerPath&, std::size_t);
    friend WienerPath path_from_table(std::shared_ptr<const NoiseSpec>, const TimeGrid&, std::vector<double>,
                                      std::uint64_t);

private:
    WienerPath(std::shared_ptr<const NoiseSpec> spec, TimeGrid grid, std::uint64_t seed, std::uint32_t sample,
               std::size_t factor, std::shared_ptr<const std::vector<double>> fine, std::vector<double> table);

    std::shared_ptr<const NoiseSpec> spec_;
    TimeGrid time_grid_;
    std::uint64_t seed_;
    std::uint32_t sample_;
    std::size_t factor_;
    std::size_t modes_;
    std::shared_ptr<const std::vector<double>> fine_;
    std::vector<double> table_;
};

/// Draws Delta beta_j^{n} ~ N(0, tau) for all steps and modes of one sample.
WienerPath sample_path(std::shared_ptr<const NoiseSpec> spec, const TimeGrid& fine_grid, std::uint64_t master_seed,
                       std::uint32_t sample_index = 0, std::uint32_t stream = 0);

WienerPath coarsen_path(const WienerPath& path, std::size_t factor);

/// Wraps an explicit increment table (tests, replays).
WienerPath path_from_table(std::shared_ptr<const NoiseSpec> spec, const TimeGrid& grid, std::vector<double> table,
                           std::uint64_t seed = 0);

/// Delta W^{n+1}(x) = sum_j sqrt(q_j) Delta beta_j^{n+1} e_j(x) at E and H nodes.
FieldState increment_field(const WienerPath& path, std::size_t n);

/// Same evaluation for caller-supplied Brownian increments (one per mode).
FieldState noise_field(const NoiseSpec& spec, std::span<const double> brownian_increments);

/// Little-endian dump: uint64 J, uint64 N, uint64 seed, then N*J float64
/// values of the increment table in row-major (step, mode) order.
void write_increment_table(const WienerPath& path, std::ostream& out);
void write_increment_table(const WienerPath& path, const std::string& file);

struct IncrementTable {
    std::uint64_t num_modes{0};
    std::uint64_t num_steps{0};
    std::uint64_t seed{0};
    std::vector<double> values;
};
IncrementTable read_increment_table(std::istream& in);

}  // namespace stomax
