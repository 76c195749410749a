#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "stomax/error.hpp"
#include "stomax/models.hpp"

using namespace stomax;

namespace {

auto model_ptr(const std::string& name, const ModelParameters& p = {}) {
    return std::make_shared<const CurrentModel>(make_model(name, p));
}

FieldState scaled_random(const GridPtr& g, std::mt19937_64& rng, double scale) {
    return testing::random_state(g, rng).scaled(scale);
}

}  // namespace

TEST_CASE("model names and parameters") {
    CHECK_THROWS_AS(make_model("cubic"), ConfigError);
    try {
        make_model("tanh-saturable", {{"slope", 1.0}, {"gain", 2.0}, {"drift", 0.5}});
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        CHECK(what.find("slope") != std::string::npos);
        CHECK(what.find("gain") != std::string::npos);
    }
    CHECK(model_parameter_names("additive").size() == 3);
    CHECK(make_model("linear-damping").lipschitz == 0.5);
    CHECK(make_model("tanh-saturable", {{"drift", 2.0}, {"offset", 1.5}}).lipschitz == 3.0);
    CHECK(make_model("zero").zero_drift);
}

TEST_CASE("zero model gives zero fields") {
    std::mt19937_64 rng(1);
    const auto g = testing::rect(4, 4);
    const auto med = testing::varying(g, rng);
    const NemytskijDrift f(model_ptr("zero"), med);
    const NemytskijDiffusion b(model_ptr("zero"), med);
    const auto u = testing::random_state(g, rng);
    CHECK(eval_F(0.3, u, f) == FieldState::zeros(g));
    CHECK(eval_B_apply(0.3, u, b, testing::random_state(g, rng)) == FieldState::zeros(g));
}

TEST_CASE("linear damping drift is -sigma u") {
    std::mt19937_64 rng(2);
    for (const auto& g : {testing::line(10), testing::rect(5, 3)}) {
        const NemytskijDrift f(model_ptr("linear-damping", {{"sigma", 0.5}}), testing::uniform(g));
        const auto u = testing::random_state(g, rng);
        CHECK(eval_F(0.0, u, f) == u.scaled(-0.5));
    }
}

TEST_CASE("tanh single node probe") {
    const auto g = testing::line(2);
    const auto med = std::make_shared<const MediumCoefficients>(g, std::vector<double>(3, 2.0),
                                                                std::vector<double>(2, 2.0), 2.0);
    const NemytskijDrift f(model_ptr("tanh-saturable", {{"lipschitz", 1.0}}), med);
    const FieldState u(g, {0.0, 1.0, 0.0}, {0.0, 0.0});
    const auto out = eval_F(0.0, u, f);
    CHECK(out.e()[1] == doctest::Approx(-std::tanh(1.0) / 2).epsilon(1e-15));
    CHECK(out.e()[1] == doctest::Approx(-0.380797).epsilon(1e-6));
    CHECK(out.e()[0] == 0.0);
    // H nodes see the averaged E = 1/2 but J_m depends on H only.
    CHECK(out.h()[0] == 0.0);
}

TEST_CASE("colocation averages neighbours") {
    const auto g = testing::line(3);
    const NemytskijDrift f(model_ptr("tanh-saturable", {{"coupling", 1.0}, {"drift", 1.0}}), testing::uniform(g));
    const FieldState u(g, {0.0, 0.4, -0.2, 0.0}, {0.1, 0.3, 0.5});
    const auto out = eval_F(0.0, u, f);
    CHECK(out.e()[1] == doctest::Approx(-std::tanh(0.4 + 0.2)));
    CHECK(out.h()[1] == doctest::Approx(-std::tanh(0.3 + 0.1)));
    CHECK(out.h()[0] == doctest::Approx(-std::tanh(0.1 + 0.2)));
}

TEST_CASE("diffusion application") {
    std::mt19937_64 rng(3);
    const auto g = testing::line(12);
    const auto med = testing::varying(g, rng);
    const auto u = testing::random_state(g, rng);
    const auto dw = testing::random_state(g, rng);
    {
        const NemytskijDiffusion b(model_ptr("tanh-saturable"), med);
        CHECK(eval_B_apply(0.0, u, b, FieldState::zeros(g)) == FieldState::zeros(g));
    }
    {
        const NemytskijDiffusion b(model_ptr("additive", {{"amplitude", 0.7}}), testing::uniform(g));
        const auto out = eval_B_apply(0.0, u, b, dw);
        for (std::size_t k = 1; k + 1 < g->num_e_nodes(); ++k) CHECK(out.e()[k] == -0.7 * dw.e()[k]);
        for (std::size_t k = 0; k < g->num_h_nodes(); ++k) CHECK(out.h()[k] == -0.7 * dw.h()[k]);
    }
    {
        const double sigma = 0.3;
        const NemytskijDiffusion b(model_ptr("linear-damping", {{"sigma", sigma}}), med);
        const auto out = eval_B_apply(0.0, u, b, dw);
        for (std::size_t k = 0; k < g->num_e_nodes(); ++k) {
            const double ref = g->is_boundary_e(k) ? 0.0 : -sigma * u.e()[k] * dw.e()[k] / med->epsilon()[k];
            CHECK(out.e()[k] == doctest::Approx(ref).epsilon(1e-15));
        }
        for (std::size_t k = 0; k < g->num_h_nodes(); ++k) {
            CHECK(out.h()[k] == doctest::Approx(-sigma * u.h()[k] * dw.h()[k] / med->mu()[k]).epsilon(1e-15));
        }
    }
}

TEST_CASE("lipschitz probe") {
    CHECK(lipschitz_probe(make_model("zero"), 500, 1).pass());
    CHECK(lipschitz_probe(make_model("zero"), 500, 1).worst() == 0.0);
    CHECK(lipschitz_probe(make_model("tanh-saturable"), 2000, 2).pass());
    CHECK(lipschitz_probe(make_model("tanh-saturable", {{"drift", 1.5}, {"noise", 2.0}, {"offset", 1.0},
                                                         {"coupling", 0.5}}),
                          2000, 3)
              .pass());
    CHECK(lipschitz_probe(make_model("linear-damping", {{"sigma", 0.5}}), 2000, 4).pass());
    CHECK(lipschitz_probe(make_model("additive"), 2000, 5).pass());
    const auto bad = lipschitz_probe(make_model("linear-damping", {{"sigma", 0.5}, {"lipschitz", 0.2}}), 2000, 6);
    CHECK_FALSE(bad.pass());
    CHECK(bad.worst() > 2.0);
    CHECK_THROWS(lipschitz_probe(make_model("zero"), 0, 1));
}

TEST_CASE("drift growth and Lipschitz bounds in the H-norm") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> mag(0.0, 20.0);
    for (const auto& g : {testing::line(24, 1.7), testing::rect(6, 5, 0.8, 1.3)}) {
        const auto med = testing::varying(g, rng);
        for (const auto& model :
             {make_model("tanh-saturable", {{"drift", 1.3}, {"coupling", 0.8}}), make_model("linear-damping")}) {
            const NemytskijDrift f(std::make_shared<const CurrentModel>(model), med);
            const double cg = drift_growth_constant(model, *med);
            const double cl = drift_lipschitz_constant(model, *med);
            for (int trial = 0; trial < 100; ++trial) {
                const auto u = scaled_random(g, rng, mag(rng));
                const auto v = u + scaled_random(g, rng, trial % 2 ? 1e-3 : mag(rng));
                CHECK(h_norm(eval_F(0.2, u, f), *med) <= cg * (1.0 + h_norm(u, *med)));
                CHECK(h_norm(eval_F(0.2, u, f) - eval_F(0.2, v, f), *med) <= cl * h_norm(u - v, *med) * (1 + 1e-12));
            }
        }
    }
}

TEST_CASE("diffusion Hilbert-Schmidt bound") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> mag(0.0, 20.0);
    for (const auto& g : {testing::line(32, 1.5), testing::rect(7, 6)}) {
        const auto med = testing::varying(g, rng);
        const NoiseSpec spec(g, 6, 3.0);
        const double hs = hs_norm(spec, 0);
        for (const auto& model : {make_model("tanh-saturable", {{"offset", 1.0}, {"coupling", 0.5}}),
                                  make_model("linear-damping"), make_model("additive")}) {
            const NemytskijDiffusion b(std::make_shared<const CurrentModel>(model), med);
            const double c = diffusion_hs_constant(model, *med);
            for (int trial = 0; trial < 50; ++trial) {
                const auto u = scaled_random(g, rng, mag(rng));
                const double lhs = diffusion_hs_squared(b, spec, 0.0, u);
                CHECK(lhs <= c * c * hs * hs * (1.0 + energy(u, *med)));
            }
        }
    }
}

TEST_CASE("Hilbert-Schmidt sum against explicit mode loop") {
    std::mt19937_64 rng(10);
    const auto g = testing::line(16);
    const auto med = testing::varying(g, rng);
    const NoiseSpec spec(g, 4, 2.0);
    const NemytskijDiffusion b(model_ptr("linear-damping", {{"sigma", 0.7}}), med);
    const auto u = testing::random_state(g, rng);
    double ref = 0.0;
    for (int j = 0; j < 4; ++j) {
        double s = 0.0;
        const double q = spec.eigenvalues()[j];
        for (std::size_t k = 1; k + 1 < g->num_e_nodes(); ++k) {
            const double v = 0.7 * u.e()[k] * std::sqrt(q) * spec.e_values(j)[k] / med->epsilon()[k];
            s += med->epsilon()[k] * v * v * g->e_weight(k);
        }
        for (std::size_t k = 0; k < g->num_h_nodes(); ++k) {
            const double v = 0.7 * u.h()[k] * std::sqrt(q) * spec.h_values(j)[k] / med->mu()[k];
            s += med->mu()[k] * v * v * g->h_weight(k);
        }
        ref += s;
    }
    CHECK(diffusion_hs_squared(b, spec, 0.0, u) == doctest::Approx(ref).epsilon(1e-13));
}
