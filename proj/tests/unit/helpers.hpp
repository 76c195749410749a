#pragma once

#include <memory>
#include <random>
#include <vector>

#include "stomax/field.hpp"

namespace testing {

inline stomax::GridPtr line(int cells, double length = 1.0) {
    return std::make_shared<const stomax::Grid>(stomax::Grid::line(length, cells));
}

inline stomax::GridPtr rect(int nx, int ny, double lx = 1.0, double ly = 1.0) {
    return std::make_shared<const stomax::Grid>(stomax::Grid::rectangle(lx, ly, nx, ny));
}

inline std::shared_ptr<const stomax::MediumCoefficients> uniform(const stomax::GridPtr& g, double eps = 1.0,
                                                                 double mu = 1.0) {
    return std::make_shared<const stomax::MediumCoefficients>(stomax::MediumCoefficients::uniform(g, eps, mu));
}

/// Coefficients drawn from [1, 3].
inline std::shared_ptr<const stomax::MediumCoefficients> varying(const stomax::GridPtr& g, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(1.0, 3.0);
    std::vector<double> eps(g->num_e_nodes()), mu(g->num_h_nodes());
    for (auto& x : eps) x = d(rng);
    for (auto& x : mu) x = d(rng);
    return std::make_shared<const stomax::MediumCoefficients>(g, eps, mu, 1.0);
}

/// Random state with zero tangential E on the boundary unless `boundary` is set.
inline stomax::FieldState random_state(const stomax::GridPtr& g, std::mt19937_64& rng, bool boundary = false) {
    std::normal_distribution<double> d;
    std::vector<double> e(g->num_e_nodes()), h(g->num_h_nodes());
    for (std::size_t k = 0; k < e.size(); ++k) e[k] = (boundary || !g->is_boundary_e(k)) ? d(rng) : 0.0;
    for (auto& x : h) x = d(rng);
    return stomax::FieldState(g, e, h);
}

}  // namespace testing
