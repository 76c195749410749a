#include "stomax/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "stomax/error.hpp"

namespace stomax {

namespace {

const std::map<std::string, std::vector<std::string>>& parameter_table() {
    static const std::map<std::string, std::vector<std::string>> table{
        {"zero", {}},
        {"linear-damping", {"sigma", "sigma_r", "lipschitz"}},
        {"tanh-saturable", {"lipschitz", "drift", "noise", "offset", "coupling"}},
        {"additive", {"amplitude", "amplitude_m", "lipschitz"}},
    };
    return table;
}

double param(const ModelParameters& p, const std::string& key, double fallback) {
    const auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

CurrentFn constant(double c) {
    return [c](double, Point, double, double) { return c; };
}

// Numeric factors of the quadrature chain |J|^2 <= L^2 (1+|E|+|H|)^2 summed
// against the node weights, including the neighbour averaging (see models.hpp).
double growth_factor(int dimension) { return dimension == 1 ? 6.0 : 10.0; }
double lipschitz_factor(int dimension) { return dimension == 1 ? 4.0 : 7.0; }

double safe_ratio(double num, double den) {
    if (num == 0.0) return 0.0;
    if (den == 0.0) return std::numeric_limits<double>::infinity();
    return num / den;
}

}  // namespace

std::vector<std::string> model_parameter_names(const std::string& name) {
    const auto& table = parameter_table();
    const auto it = table.find(name);
    if (it == table.end()) throw ConfigError("model: unknown model '" + name + "'");
    return it->second;
}

CurrentModel make_model(const std::string& name, const ModelParameters& params) {
    const auto allowed = model_parameter_names(name);
    std::vector<std::string> problems;
    for (const auto& [key, value] : params) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            problems.push_back("model." + key + ": unknown parameter for model '" + name + "'");
        } else if (!std::isfinite(value)) {
            problems.push_back("model." + key + ": must be finite");
        }
    }
    if (!problems.empty()) {
        std::ostringstream os;
        for (std::size_t i = 0; i < problems.size(); ++i) os << (i ? "; " : "") << problems[i];
        throw ConfigError(os.str());
    }

    CurrentModel m;
    m.name = name;
    m.parameters = params;
    if (name == "zero") {
        m.je = m.jm = m.jer = m.jmr = constant(0.0);
        m.zero_drift = m.zero_diffusion = true;
        m.additive = true;
        m.lipschitz = 0.0;
    } else if (name == "linear-damping") {
        const double sigma = param(params, "sigma", 0.5);
        const double sigma_r = param(params, "sigma_r", sigma);
        m.lipschitz = param(params, "lipschitz", std::max(std::abs(sigma), std::abs(sigma_r)));
        m.je = [sigma](double, Point, double e, double) { return sigma * e; };
        m.jm = [sigma](double, Point, double, double h) { return sigma * h; };
        m.jer = [sigma_r](double, Point, double e, double) { return sigma_r * e; };
        m.jmr = [sigma_r](double, Point, double, double h) { return sigma_r * h; };
        m.zero_drift = sigma == 0.0;
        m.zero_diffusion = sigma_r == 0.0;
        m.additive = m.zero_diffusion;
    } else if (name == "tanh-saturable") {
        const double a = param(params, "drift", 1.0);
        const double b = param(params, "noise", a);
        const double c = param(params, "offset", 0.0);
        const double k = param(params, "coupling", 0.0);
        m.lipschitz = param(params, "lipschitz",
                            std::max(std::abs(a), std::abs(b)) * std::max({1.0, std::abs(k), std::abs(c)}));
        m.je = [a, k](double, Point, double e, double h) { return a * std::tanh(e + k * h); };
        m.jm = [a, k](double, Point, double e, double h) { return a * std::tanh(h + k * e); };
        m.jer = [b, c, k](double, Point, double e, double h) { return b * (c + std::tanh(e + k * h)); };
        m.jmr = [b, c, k](double, Point, double e, double h) { return b * (c + std::tanh(h + k * e)); };
        m.zero_drift = a == 0.0;
        m.zero_diffusion = b == 0.0;
        m.additive = m.zero_diffusion;
    } else {  // additive
        const double c = param(params, "amplitude", 1.0);
        const double cm = param(params, "amplitude_m", c);
        m.lipschitz = param(params, "lipschitz", std::max(std::abs(c), std::abs(cm)));
        m.je = m.jm = constant(0.0);
        m.jer = constant(c);
        m.jmr = constant(cm);
        m.zero_drift = true;
        m.zero_diffusion = c == 0.0 && cm == 0.0;
        m.additive = true;
    }
    return m;
}

Colocation::Colocation(const Grid& g) : dimension_(g.dimension()) {
    const std::size_t ne = g.num_e_nodes();
    const std::size_t nh = g.num_h_nodes();
    h_nbr_.resize(ne);
    e_nbr_.resize(nh);
    e_pos_.resize(ne);
    h_pos_.resize(nh);
    boundary_.resize(ne);
    for (std::size_t k = 0; k < ne; ++k) {
        e_pos_[k] = g.e_position(k);
        boundary_[k] = g.is_boundary_e(k) ? 1 : 0;
    }
    for (std::size_t k = 0; k < nh; ++k) h_pos_[k] = g.h_position(k);

    if (dimension_ == 1) {
        const std::size_t n = nh;
        for (std::size_t i = 0; i < ne; ++i) {
            const std::size_t left = i == 0 ? 0 : i - 1;
            const std::size_t right = i == n ? n - 1 : i;
            h_nbr_[i] = {left, right, left, right};
        }
        for (std::size_t k = 0; k < nh; ++k) e_nbr_[k] = {k, k + 1};
        return;
    }
    const int nx = g.cells(0);
    const int ny = g.cells(1);
    const std::size_t nhx = g.num_hx_nodes();
    auto hx = [&](int i, int jh) { return static_cast<std::size_t>(jh * (nx + 1) + i); };
    auto hy = [&](int ih, int j) { return nhx + static_cast<std::size_t>(j * nx + ih); };
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) {
            const int jb = std::max(j - 1, 0);
            const int ja = std::min(j, ny - 1);
            const int ib = std::max(i - 1, 0);
            const int ia = std::min(i, nx - 1);
            h_nbr_[g.vertex(i, j)] = {hx(i, jb), hx(i, ja), hy(ib, j), hy(ia, j)};
        }
    }
    for (int jh = 0; jh < ny; ++jh) {
        for (int i = 0; i <= nx; ++i) e_nbr_[hx(i, jh)] = {g.vertex(i, jh), g.vertex(i, jh + 1)};
    }
    for (int j = 0; j <= ny; ++j) {
        for (int ih = 0; ih < nx; ++ih) e_nbr_[hy(ih, j)] = {g.vertex(ih, j), g.vertex(ih + 1, j)};
    }
}

double Colocation::h_at_e(std::span<const double> h, std::size_t k) const noexcept {
    const auto& n = h_nbr_[k];
    if (dimension_ == 1) return 0.5 * (h[n[0]] + h[n[1]]);
    const double hx = 0.5 * (h[n[0]] + h[n[1]]);
    const double hy = 0.5 * (h[n[2]] + h[n[3]]);
    return std::hypot(hx, hy);
}

double Colocation::e_at_h(std::span<const double> e, std::size_t k) const noexcept {
    const auto& n = e_nbr_[k];
    return 0.5 * (e[n[0]] + e[n[1]]);
}

NemytskijDrift::NemytskijDrift(std::shared_ptr<const CurrentModel> model, std::shared_ptr<const MediumCoefficients> med)
    : model_(std::move(model)), med_(std::move(med)), colocation_(*med_->grid()) {}

void NemytskijDrift::eval_packed(double t, std::span<const double> u, std::span<double> out) const {
    const Grid& g = *med_->grid();
    const std::size_t ne = g.num_e_nodes();
    const std::size_t nh = g.num_h_nodes();
    if (u.size() != ne + nh || out.size() != ne + nh) throw StructuralError("eval_F: packed size mismatch");
    if (model_->zero_drift) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    const auto e = u.first(ne);
    const auto h = u.subspan(ne);
    const auto eps = med_->epsilon();
    const auto mu = med_->mu();
    for (std::size_t k = 0; k < ne; ++k) {
        out[k] = colocation_.boundary_e(k)
                     ? 0.0
                     : -model_->je(t, colocation_.e_position(k), e[k], colocation_.h_at_e(h, k)) / eps[k];
    }
    for (std::size_t k = 0; k < nh; ++k) {
        out[ne + k] = -model_->jm(t, colocation_.h_position(k), colocation_.e_at_h(e, k), h[k]) / mu[k];
    }
}

FieldState NemytskijDrift::eval(double t, const FieldState& u) const {
    require_same_grid(*u.grid(), *med_->grid(), "eval_F");
    const auto in = u.packed();
    std::vector<double> out(in.size());
    eval_packed(t, in, out);
    return FieldState::from_packed(u.grid(), out);
}

NemytskijDiffusion::NemytskijDiffusion(std::shared_ptr<const CurrentModel> model,
                                       std::shared_ptr<const MediumCoefficients> med)
    : model_(std::move(model)), med_(std::move(med)), colocation_(*med_->grid()) {}

void NemytskijDiffusion::apply_packed(double t, std::span<const double> u, std::span<const double> dw,
                                      std::span<double> out) const {
    const Grid& g = *med_->grid();
    const std::size_t ne = g.num_e_nodes();
    const std::size_t nh = g.num_h_nodes();
    if (u.size() != ne + nh || dw.size() != ne + nh || out.size() != ne + nh) {
        throw StructuralError("eval_B_apply: packed size mismatch");
    }
    if (model_->zero_diffusion) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    const auto e = u.first(ne);
    const auto h = u.subspan(ne);
    const auto eps = med_->epsilon();
    const auto mu = med_->mu();
    for (std::size_t k = 0; k < ne; ++k) {
        if (colocation_.boundary_e(k) || dw[k] == 0.0) {
            out[k] = 0.0;
            continue;
        }
        out[k] = -model_->jer(t, colocation_.e_position(k), e[k], colocation_.h_at_e(h, k)) * dw[k] / eps[k];
    }
    for (std::size_t k = 0; k < nh; ++k) {
        out[ne + k] =
            -model_->jmr(t, colocation_.h_position(k), colocation_.e_at_h(e, k), h[k]) * dw[ne + k] / mu[k];
    }
}

FieldState NemytskijDiffusion::apply(double t, const FieldState& u, const FieldState& dw) const {
    require_same_grid(*u.grid(), *med_->grid(), "eval_B_apply");
    require_same_grid(*dw.grid(), *med_->grid(), "eval_B_apply (increment)");
    const auto in = u.packed();
    const auto w = dw.packed();
    std::vector<double> out(in.size());
    apply_packed(t, in, w, out);
    return FieldState::from_packed(u.grid(), out);
}

FieldState eval_F(double t, const FieldState& u, const NemytskijDrift& drift) { return drift.eval(t, u); }

FieldState eval_B_apply(double t, const FieldState& u, const NemytskijDiffusion& diff, const FieldState& dw) {
    return diff.apply(t, u, dw);
}

double diffusion_hs_squared(const NemytskijDiffusion& diff, const NoiseSpec& spec, double t, const FieldState& u) {
    double total = 0.0;
    std::vector<double> unit(static_cast<std::size_t>(spec.num_modes()), 0.0);
    for (int j = 0; j < spec.num_modes(); ++j) {
        std::fill(unit.begin(), unit.end(), 0.0);
        unit[static_cast<std::size_t>(j)] = 1.0;
        const FieldState mode = noise_field(spec, unit);  // sqrt(q_j) e_j
        total += energy(diff.apply(t, u, mode), diff.medium());
    }
    return total;
}

double drift_growth_constant(const CurrentModel& model, const MediumCoefficients& med) {
    const Grid& g = *med.grid();
    const double delta = med.delta();
    return model.lipschitz * std::sqrt(growth_factor(g.dimension()) / delta) *
           std::max(std::sqrt(g.domain_volume()), 1.0 / std::sqrt(delta));
}

double drift_lipschitz_constant(const CurrentModel& model, const MediumCoefficients& med) {
    return model.lipschitz * std::sqrt(lipschitz_factor(med.grid()->dimension())) / med.delta();
}

double diffusion_hs_constant(const CurrentModel& model, const MediumCoefficients& med) {
    const Grid& g = *med.grid();
    const double delta = med.delta();
    const double vol = g.domain_volume();
    const double sup_factor = std::pow(2.0, g.dimension()) / vol;  // sup_x e_j(x)^2
    const double c2 = sup_factor * growth_factor(g.dimension()) * model.lipschitz * model.lipschitz / delta *
                      std::max(vol, 1.0 / delta);
    return std::sqrt(c2);
}

double LipschitzReport::worst() const noexcept {
    double w = 0.0;
    for (double r : growth_ratio) w = std::max(w, r);
    for (double r : lipschitz_ratio) w = std::max(w, r);
    return w;
}

LipschitzReport lipschitz_probe(const CurrentModel& model, std::size_t num_probes, std::uint64_t seed,
                                const ProbeBox& box) {
    if (num_probes == 0) throw StructuralError("lipschitz_probe: at least one probe is required");
    LipschitzReport report;
    report.model = model.name;
    report.declared_l = model.lipschitz;
    report.num_probes = num_probes;
    report.box = box;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> field(-box.field_bound, box.field_bound);
    std::uniform_real_distribution<double> time(0.0, box.horizon);
    std::uniform_real_distribution<double> px(box.origin.x, box.origin.x + box.extent.x);
    std::uniform_real_distribution<double> py(box.origin.y, box.origin.y + box.extent.y);
    const std::array<const CurrentFn*, 4> fns{&model.je, &model.jm, &model.jer, &model.jmr};
    const double l = model.lipschitz;
    for (std::size_t p = 0; p < num_probes; ++p) {
        const double t = time(rng);
        const double s = time(rng);
        const Point x{px(rng), py(rng)};
        const double u1 = field(rng);
        const double v1 = field(rng);
        // Every fourth probe uses a nearby second point to exercise the local slope.
        const bool near = p % 4 == 3;
        const double u2 = near ? u1 + 1e-3 * field(rng) : field(rng);
        const double v2 = near ? v1 + 1e-3 * field(rng) : field(rng);
        for (std::size_t f = 0; f < 4; ++f) {
            const CurrentFn& fn = *fns[f];
            const double j1 = fn(t, x, u1, v1);
            const double j2 = fn(s, x, u2, v2);
            report.growth_ratio[f] =
                std::max(report.growth_ratio[f], safe_ratio(std::abs(j1), l * (1.0 + std::abs(u1) + std::abs(v1))));
            report.lipschitz_ratio[f] = std::max(
                report.lipschitz_ratio[f],
                safe_ratio(std::abs(j1 - j2), l * (std::abs(t - s) + std::abs(u1 - u2) + std::abs(v1 - v2))));
        }
    }
    return report;
}

}  // namespace stomax
