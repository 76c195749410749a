#include "stomax/noise.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>

#include "stomax/error.hpp"

namespace stomax {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) noexcept {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(b);
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

double unit_interval_open_left(std::uint32_t hi, std::uint32_t lo) noexcept {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;  // (0, 1]
}

double sine_mode_value(const SineMode& m, const Grid& g, Point p) {
    if (g.dimension() == 1) {
        const double len = g.length(0);
        return std::sqrt(2.0 / len) * std::sin(m.kx * std::numbers::pi * p.x / len);
    }
    const double lx = g.length(0);
    const double ly = g.length(1);
    return 2.0 / std::sqrt(lx * ly) * std::sin(m.kx * std::numbers::pi * p.x / lx) *
           std::sin(m.ky * std::numbers::pi * p.y / ly);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(v >> (8 * b));
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw std::ios_base::failure("increment table: truncated input");
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    return v;
}

}  // namespace

Philox4x32::Counter Philox4x32::generate(Counter c, Key k) noexcept {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            k[0] += kPhiloxW0;
            k[1] += kPhiloxW1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, c[0], hi0, lo0);
        mulhilo(kPhiloxM1, c[2], hi1, lo1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
    return c;
}

double standard_normal(const DrawAddress& a) noexcept {
    const Philox4x32::Counter out = Philox4x32::generate(
        {a.step, a.mode, a.sample, a.stream},
        {static_cast<std::uint32_t>(a.seed), static_cast<std::uint32_t>(a.seed >> 32)});
    const double u1 = unit_interval_open_left(out[0], out[1]);
    const double u2 = unit_interval_open_left(out[2], out[3]);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

NoiseSpec::NoiseSpec(GridPtr grid, int num_modes, double decay_exponent, double variance_scale)
    : grid_(std::move(grid)), decay_(decay_exponent), scale_(variance_scale) {
    if (!grid_) throw StructuralError("noise: null grid");
    if (num_modes < 1) throw StructuralError("noise: at least one mode is required");
    if (!(decay_ >= 0.0) || !std::isfinite(decay_)) throw StructuralError("noise: decay exponent must be >= 0");
    if (!(scale_ > 0.0) || !std::isfinite(scale_)) throw StructuralError("noise: variance scale must be positive");
    const Grid& g = *grid_;

    // Wave indices up to cells - 1 per axis stay pairwise orthogonal under the node quadrature.
    if (g.dimension() == 1) {
        const int available = g.cells(0) - 1;
        if (num_modes > available) {
            throw CapabilityError("noise: " + std::to_string(num_modes) + " modes exceed the " +
                                  std::to_string(available) + " resolvable on this grid");
        }
        for (int k = 1; k <= num_modes; ++k) modes_.push_back({k, 0});
    } else {
        const int mx = g.cells(0) - 1;
        const int my = g.cells(1) - 1;
        if (num_modes > mx * my) {
            throw CapabilityError("noise: " + std::to_string(num_modes) + " modes exceed the " +
                                  std::to_string(mx * my) + " resolvable on this grid");
        }
        std::vector<SineMode> all;
        for (int kx = 1; kx <= mx; ++kx) {
            for (int ky = 1; ky <= my; ++ky) all.push_back({kx, ky});
        }
        const double lx = g.length(0);
        const double ly = g.length(1);
        auto wave = [&](const SineMode& m) {
            return (m.kx / lx) * (m.kx / lx) + (m.ky / ly) * (m.ky / ly);
        };
        std::stable_sort(all.begin(), all.end(), [&](const SineMode& a, const SineMode& b) {
            const double wa = wave(a);
            const double wb = wave(b);
            if (wa != wb) return wa < wb;
            return a.kx < b.kx;
        });
        modes_.assign(all.begin(), all.begin() + num_modes);
    }

    const std::size_t ne = g.num_e_nodes();
    const std::size_t nh = g.num_h_nodes();
    e_table_.resize(modes_.size() * ne);
    h_table_.resize(modes_.size() * nh);
    for (std::size_t j = 0; j < modes_.size(); ++j) {
        q_.push_back(scale_ * std::pow(static_cast<double>(j + 1), -decay_));
        for (std::size_t k = 0; k < ne; ++k) {
            e_table_[j * ne + k] = g.is_boundary_e(k) ? 0.0 : sine_mode_value(modes_[j], g, g.e_position(k));
        }
        for (std::size_t k = 0; k < nh; ++k) h_table_[j * nh + k] = sine_mode_value(modes_[j], g, g.h_position(k));
    }
}

double NoiseSpec::trace() const noexcept {
    double s = 0.0;
    for (double q : q_) s += q;
    return s;
}

std::span<const double> NoiseSpec::e_values(int mode) const {
    const std::size_t ne = grid_->num_e_nodes();
    return std::span<const double>(e_table_).subspan(static_cast<std::size_t>(mode) * ne, ne);
}

std::span<const double> NoiseSpec::h_values(int mode) const {
    const std::size_t nh = grid_->num_h_nodes();
    return std::span<const double>(h_table_).subspan(static_cast<std::size_t>(mode) * nh, nh);
}

double NoiseSpec::evaluate(int mode, Point x) const {
    return sine_mode_value(modes_.at(static_cast<std::size_t>(mode)), *grid_, x);
}

NoiseSpec build_basis(GridPtr grid, int num_modes, double decay_exponent, double variance_scale) {
    return NoiseSpec(std::move(grid), num_modes, decay_exponent, variance_scale);
}

double hs_norm(const NoiseSpec& spec, int sobolev_order) {
    if (sobolev_order < 0) throw StructuralError("hs_norm: Sobolev order must be >= 0");
    const Grid& g = *spec.grid();
    double total = 0.0;
    for (int j = 0; j < spec.num_modes(); ++j) {
        const SineMode& m = spec.modes()[static_cast<std::size_t>(j)];
        const double wx = m.kx * std::numbers::pi / g.length(0);
        double norm_sq = 0.0;
        if (g.dimension() == 1) {
            for (int l = 0; l <= sobolev_order; ++l) norm_sq += std::pow(wx, 2 * l);
        } else {
            const double wy = m.ky * std::numbers::pi / g.length(1);
            for (int a = 0; a <= sobolev_order; ++a) {
                for (int b = 0; a + b <= sobolev_order; ++b) norm_sq += std::pow(wx, 2 * a) * std::pow(wy, 2 * b);
            }
        }
        total += spec.eigenvalues()[static_cast<std::size_t>(j)] * norm_sq;
    }
    return std::sqrt(total);
}

bool hs_norm_converges(const NoiseSpec& spec, int sobolev_order) {
    const double d = spec.grid()->dimension();
    return spec.decay_exponent() > 2.0 * sobolev_order / d + 1.0;
}

WienerPath::WienerPath(std::shared_ptr<const NoiseSpec> spec, TimeGrid grid, std::uint64_t seed,
                       std::uint32_t sample, std::size_t factor, std::shared_ptr<const std::vector<double>> fine,
                       std::vector<double> table)
    : spec_(std::move(spec)), time_grid_(grid), seed_(seed), sample_(sample), factor_(factor),
      modes_(static_cast<std::size_t>(spec_->num_modes())), fine_(std::move(fine)), table_(std::move(table)) {}

double WienerPath::increment(std::size_t step, std::size_t mode) const {
    if (step >= num_steps() || mode >= modes_) throw StructuralError("wiener path: index out of range");
    return table_[step * modes_ + mode];
}

WienerPath sample_path(std::shared_ptr<const NoiseSpec> spec, const TimeGrid& fine_grid, std::uint64_t master_seed,
                       std::uint32_t sample_index, std::uint32_t stream) {
    if (!spec) throw StructuralError("sample_path: null noise spec");
    const std::size_t n = fine_grid.num_steps();
    const auto modes = static_cast<std::size_t>(spec->num_modes());
    const double sd = std::sqrt(fine_grid.tau());
    auto table = std::make_shared<std::vector<double>>(n * modes);
    DrawAddress a{master_seed, stream, sample_index, 0, 0};
    for (std::size_t step = 0; step < n; ++step) {
        a.step = static_cast<std::uint32_t>(step);
        for (std::size_t j = 0; j < modes; ++j) {
            a.mode = static_cast<std::uint32_t>(j);
            (*table)[step * modes + j] = sd * standard_normal(a);
        }
    }
    std::vector<double> copy = *table;
    return WienerPath(std::move(spec), fine_grid, master_seed, sample_index, 1, std::move(table), std::move(copy));
}

WienerPath coarsen_path(const WienerPath& path, std::size_t factor) {
    if (factor == 0 || path.num_steps() % factor != 0) {
        throw StructuralError("coarsen_path: factor " + std::to_string(factor) + " does not divide " +
                              std::to_string(path.num_steps()) + " steps");
    }
    const std::size_t total = path.factor_ * factor;
    const std::size_t coarse_steps = path.num_steps() / factor;
    const std::size_t modes = path.modes_;
    const std::vector<double>& fine = *path.fine_;
    std::vector<double> table(coarse_steps * modes);
    for (std::size_t n = 0; n < coarse_steps; ++n) {
        for (std::size_t j = 0; j < modes; ++j) {
            double sum = 0.0;
            for (std::size_t k = 0; k < total; ++k) sum += fine[(n * total + k) * modes + j];
            table[n * modes + j] = sum;
        }
    }
    TimeGrid grid(path.time_grid().horizon(), coarse_steps);
    return WienerPath(path.spec_, grid, path.seed_, path.sample_, total, path.fine_, std::move(table));
}

WienerPath path_from_table(std::shared_ptr<const NoiseSpec> spec, const TimeGrid& grid, std::vector<double> table,
                           std::uint64_t seed) {
    if (!spec) throw StructuralError("path_from_table: null noise spec");
    if (table.size() != grid.num_steps() * static_cast<std::size_t>(spec->num_modes())) {
        throw StructuralError("path_from_table: table size mismatch");
    }
    auto fine = std::make_shared<const std::vector<double>>(table);
    return WienerPath(std::move(spec), grid, seed, 0, 1, std::move(fine), std::move(table));
}

FieldState noise_field(const NoiseSpec& spec, std::span<const double> inc) {
    if (inc.size() != static_cast<std::size_t>(spec.num_modes())) {
        throw StructuralError("noise_field: one increment per mode is required");
    }
    const Grid& g = *spec.grid();
    std::vector<double> e(g.num_e_nodes(), 0.0);
    std::vector<double> h(g.num_h_nodes(), 0.0);
    for (int j = 0; j < spec.num_modes(); ++j) {
        const double c = std::sqrt(spec.eigenvalues()[static_cast<std::size_t>(j)]) * inc[static_cast<std::size_t>(j)];
        if (c == 0.0) continue;
        const auto ev = spec.e_values(j);
        const auto hv = spec.h_values(j);
        for (std::size_t k = 0; k < e.size(); ++k) e[k] += c * ev[k];
        for (std::size_t k = 0; k < h.size(); ++k) h[k] += c * hv[k];
    }
    return FieldState(spec.grid(), std::move(e), std::move(h));
}

FieldState increment_field(const WienerPath& path, std::size_t n) {
    if (n >= path.num_steps()) throw StructuralError("increment_field: step index out of range");
    return noise_field(*path.spec(), path.table().subspan(n * path.num_modes(), path.num_modes()));
}

void write_increment_table(const WienerPath& path, std::ostream& out) {
    write_u64(out, path.num_modes());
    write_u64(out, path.num_steps());
    write_u64(out, path.seed());
    for (double v : path.table()) write_u64(out, std::bit_cast<std::uint64_t>(v));
    if (!out) throw std::ios_base::failure("increment table: write failed");
}

void write_increment_table(const WienerPath& path, const std::string& file) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::ios_base::failure("increment table: cannot open " + file);
    write_increment_table(path, out);
}

IncrementTable read_increment_table(std::istream& in) {
    IncrementTable t;
    t.num_modes = read_u64(in);
    t.num_steps = read_u64(in);
    t.seed = read_u64(in);
    t.values.resize(t.num_modes * t.num_steps);
    for (double& v : t.values) v = std::bit_cast<double>(read_u64(in));
    return t;
}

}  // namespace stomax
