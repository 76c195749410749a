#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stomax/field.hpp"
#include "stomax/noise.hpp"

namespace stomax {

/// Pointwise current density J(t, x, E, H).
using CurrentFn = std::function<double(double t, Point x, double e, double h)>;

/// The four current densities J_e, J_m (drift) and J_e^r, J_m^r (diffusion)
/// with their declared growth/Lipschitz constant L.
struct CurrentModel {
    std::string name;
    CurrentFn je;
    CurrentFn jm;
    CurrentFn jer;
    CurrentFn jmr;
    double lipschitz{0.0};
    bool time_dependent{false};
    bool zero_drift{false};
    bool zero_diffusion{false};
    /// J^r does not depend on (E, H); B is a constant operator.
    bool additive{false};
    std::map<std::string, double> parameters;
};

using ModelParameters = std::map<std::string, double>;

/// Built-ins (u = (E, H), lipschitz overrides the declared L whose default is
/// a constant the formulas guarantee):
///   zero             all four currents vanish
///   linear-damping   J = sigma u, J^r = sigma_r u
///   tanh-saturable   J_e = drift tanh(E + coupling H), J_e^r = noise (offset + tanh(E + coupling H)),
///                    J_m, J_m^r likewise with E and H exchanged
///   additive         J = 0, J_e^r = amplitude, J_m^r = amplitude_m
/// Unknown names or parameters raise ConfigError listing every offender.
CurrentModel make_model(const std::string& name, const ModelParameters& params = {});
std::vector<std::string> model_parameter_names(const std::string& name);

/// Neighbour tables that bring E values to H nodes and H values to E nodes
/// by two-point averaging.  In 2D the H argument seen at an Ez vertex is the
/// magnitude of the averaged (Hx, Hy) pair.
class Colocation {
public:
    explicit Colocation(const Grid& grid);

    [[nodiscard]] double h_at_e(std::span<const double> h, std::size_t k) const noexcept;
    [[nodiscard]] double e_at_h(std::span<const double> e, std::size_t k) const noexcept;
    [[nodiscard]] Point e_position(std::size_t k) const noexcept { return e_pos_[k]; }
    [[nodiscard]] Point h_position(std::size_t k) const noexcept { return h_pos_[k]; }
    [[nodiscard]] bool boundary_e(std::size_t k) const noexcept { return boundary_[k] != 0; }

private:
    int dimension_;
    std::vector<std::array<std::size_t, 4>> h_nbr_;
    std::vector<std::array<std::size_t, 2>> e_nbr_;
    std::vector<Point> e_pos_;
    std::vector<Point> h_pos_;
    std::vector<char> boundary_;
};

/// F(t,u) = (-eps^-1 J_e, -mu^-1 J_m); boundary E entries are zero.
class NemytskijDrift {
public:
    NemytskijDrift(std::shared_ptr<const CurrentModel> model, std::shared_ptr<const MediumCoefficients> med);

    [[nodiscard]] const CurrentModel& model() const noexcept { return *model_; }
    [[nodiscard]] const MediumCoefficients& medium() const noexcept { return *med_; }

    [[nodiscard]] FieldState eval(double t, const FieldState& u) const;
    /// Packed [E..., H...] in, packed out.
    void eval_packed(double t, std::span<const double> u, std::span<double> out) const;

private:
    std::shared_ptr<const CurrentModel> model_;
    std::shared_ptr<const MediumCoefficients> med_;
    Colocation colocation_;
};

/// (B(t,u)v)(x) = (-eps^-1 J_e^r v, -mu^-1 J_m^r v); boundary E entries are zero.
class NemytskijDiffusion {
public:
    NemytskijDiffusion(std::shared_ptr<const CurrentModel> model, std::shared_ptr<const MediumCoefficients> med);

    [[nodiscard]] const CurrentModel& model() const noexcept { return *model_; }
    [[nodiscard]] const MediumCoefficients& medium() const noexcept { return *med_; }

    [[nodiscard]] FieldState apply(double t, const FieldState& u, const FieldState& dw) const;
    void apply_packed(double t, std::span<const double> u, std::span<const double> dw, std::span<double> out) const;

private:
    std::shared_ptr<const CurrentModel> model_;
    std::shared_ptr<const MediumCoefficients> med_;
    Colocation colocation_;
};

FieldState eval_F(double t, const FieldState& u, const NemytskijDrift& drift);
FieldState eval_B_apply(double t, const FieldState& u, const NemytskijDiffusion& diff, const FieldState& dw);

/// sum_j ||B(t,u)(sqrt(q_j) e_j)||_H^2
double diffusion_hs_squared(const NemytskijDiffusion& diff, const NoiseSpec& spec, double t, const FieldState& u);

/// C in ||F(t,u)||_H <= C (1 + ||u||_H), from delta, |D| and L.
double drift_growth_constant(const CurrentModel& model, const MediumCoefficients& med);
/// C_F in ||F(t,u) - F(t,v)||_H <= C_F ||u - v||_H.
double drift_lipschitz_constant(const CurrentModel& model, const MediumCoefficients& med);
/// C in sum_j ||B(t,u) sqrt(q_j) e_j||^2 <= C^2 hs_norm(spec, m)^2 (1 + ||u||^2), any m >= 0.
double diffusion_hs_constant(const CurrentModel& model, const MediumCoefficients& med);

struct ProbeBox {
    double field_bound{10.0};
    double horizon{1.0};
    Point origin{0.0, 0.0};
    Point extent{1.0, 1.0};
};

struct LipschitzReport {
    std::string model;
    double declared_l{0.0};
    std::size_t num_probes{0};
    ProbeBox box;
    /// max over probes of |J| / (L (1 + |E| + |H|)), per current.
    std::array<double, 4> growth_ratio{};
    /// max over probes of |J(t,..) - J(s,..)| / (L (|t-s| + |dE| + |dH|)), per current.
    std::array<double, 4> lipschitz_ratio{};
    [[nodiscard]] double worst() const noexcept;
    [[nodiscard]] bool pass() const noexcept { return worst() <= 1.0 + 1e-9; }
};

LipschitzReport lipschitz_probe(const CurrentModel& model, std::size_t num_probes, std::uint64_t seed,
                                const ProbeBox& box = {});

}  // namespace stomax
