#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "stomax/error.hpp"
#include "stomax/noise.hpp"

using namespace stomax;

namespace {

std::shared_ptr<const NoiseSpec> spec_ptr(const GridPtr& g, int j, double s, double scale = 1.0) {
    return std::make_shared<const NoiseSpec>(g, j, s, scale);
}

}  // namespace

TEST_CASE("philox known answers") {
    using C = Philox4x32::Counter;
    CHECK(Philox4x32::generate({0, 0, 0, 0}, {0, 0}) == C{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    CHECK(Philox4x32::generate({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}) ==
          C{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    CHECK(Philox4x32::generate({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}) ==
          C{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("single mode basis") {
    const auto g = testing::line(10);
    const NoiseSpec s(g, 1, 3.0);
    CHECK(s.num_modes() == 1);
    CHECK(s.eigenvalues()[0] == 1.0);
    CHECK(hs_norm(s, 0) == doctest::Approx(1.0));
}

TEST_CASE("eigenvalues decay strictly") {
    const NoiseSpec s(testing::line(64), 16, 6.0, 2.0);
    for (int j = 0; j < 16; ++j) CHECK(s.eigenvalues()[j] == doctest::Approx(2.0 * std::pow(j + 1, -6.0)));
    for (int j = 1; j < 16; ++j) CHECK(s.eigenvalues()[j] < s.eigenvalues()[j - 1]);
}

TEST_CASE("Gram matrix is the identity") {
    for (const auto& g : {testing::line(64), testing::line(40, 2.5), testing::rect(12, 10, 1.0, 1.7)}) {
        const NoiseSpec s(g, 8, 4.0);
        for (int i = 0; i < 8; ++i) {
            for (int j = 0; j < 8; ++j) {
                double ge = 0.0, gh = 0.0;
                const auto ei = s.e_values(i), ej = s.e_values(j);
                const auto hi = s.h_values(i), hj = s.h_values(j);
                for (std::size_t k = 0; k < g->num_e_nodes(); ++k) ge += ei[k] * ej[k] * g->e_weight(k);
                CHECK(std::abs(ge - (i == j ? 1.0 : 0.0)) <= 1e-10);
                if (g->dimension() == 1) {
                    for (std::size_t k = 0; k < g->num_h_nodes(); ++k) gh += hi[k] * hj[k] * g->h_weight(k);
                    CHECK(std::abs(gh - (i == j ? 1.0 : 0.0)) <= 1e-10);
                }
            }
        }
    }
}

TEST_CASE("sine mode values and boundary") {
    const auto g = testing::line(16, 2.0);
    const NoiseSpec s(g, 3, 2.0);
    const auto e = s.e_values(2);
    for (std::size_t k = 0; k < g->num_e_nodes(); ++k) {
        const double x = g->e_position(k).x;
        CHECK(e[k] == doctest::Approx(std::sqrt(1.0) * std::sin(3 * std::numbers::pi * x / 2.0)).epsilon(1e-13));
    }
    CHECK(e[0] == 0.0);
    CHECK(e[16] == 0.0);
}

TEST_CASE("2d modes are ordered by frequency") {
    const auto g = testing::rect(8, 8);
    const NoiseSpec s(g, 6, 2.0);
    const auto m = s.modes();
    CHECK(m[0].kx == 1);
    CHECK(m[0].ky == 1);
    auto freq = [](const SineMode& a) { return a.kx * a.kx + a.ky * a.ky; };
    for (std::size_t j = 1; j < m.size(); ++j) CHECK(freq(m[j]) >= freq(m[j - 1]));
    std::set<std::pair<int, int>> seen;
    for (const auto& mode : m) CHECK(seen.insert({mode.kx, mode.ky}).second);
}

TEST_CASE("unresolvable mode counts are refused") {
    CHECK_THROWS_AS(NoiseSpec(testing::line(8), 8, 2.0), CapabilityError);
    CHECK_NOTHROW(NoiseSpec(testing::line(8), 7, 2.0));
    CHECK_THROWS_AS(NoiseSpec(testing::line(8), 0, 2.0), StructuralError);
    CHECK_THROWS_AS(NoiseSpec(testing::rect(3, 3), 5, 2.0), CapabilityError);
}

TEST_CASE("trace class flag") {
    CHECK(NoiseSpec(testing::line(8), 4, 0.0).trace_class_violation());
    CHECK(NoiseSpec(testing::line(8), 4, 1.0).trace_class_violation());
    CHECK_FALSE(NoiseSpec(testing::line(8), 4, 1.5).trace_class_violation());
}

TEST_CASE("hs_norm against direct summation") {
    const NoiseSpec s(testing::line(64), 8, 4.0);
    double ref = 0.0;
    for (int j = 1; j <= 8; ++j) ref += std::pow(j, -4.0) * (1.0 + std::pow(j * std::numbers::pi, 2));
    CHECK(hs_norm(s, 1) == doctest::Approx(std::sqrt(ref)).epsilon(1e-14));
    CHECK(hs_norm_converges(s, 1));
    CHECK_FALSE(hs_norm_converges(NoiseSpec(testing::line(64), 8, 3.0), 1));
    CHECK(hs_norm_converges(NoiseSpec(testing::line(64), 16, 6.0), 2));
}

TEST_CASE("hs_norm partial sums approach zeta(2)") {
    const int j = 999;
    const NoiseSpec s(testing::line(1000), j, 2.0);
    const double z2 = std::numbers::pi * std::numbers::pi / 6.0;
    const double partial = hs_norm(s, 0) * hs_norm(s, 0);
    // Tail of sum j^-2 beyond J lies in [1/(J+1), 1/J].
    CHECK(z2 - partial >= 1.0 / (j + 1) - 1e-12);
    CHECK(z2 - partial <= 1.0 / j + 1e-12);
}

TEST_CASE("sampling is deterministic and keyed by address") {
    const auto spec = spec_ptr(testing::line(32), 4, 2.0);
    const TimeGrid tg(1.0, 64);
    const auto a = sample_path(spec, tg, 42);
    const auto b = sample_path(spec, tg, 42);
    CHECK(std::equal(a.table().begin(), a.table().end(), b.table().begin()));
    const auto c = sample_path(spec, tg, 43);
    CHECK(a.table()[0] != c.table()[0]);
    const auto d = sample_path(spec, tg, 42, 1);
    CHECK(a.table()[0] != d.table()[0]);
    const double z = standard_normal({42, 0, 0, 3, 10});
    CHECK(a.increment(10, 3) == doctest::Approx(z * std::sqrt(tg.tau())).epsilon(1e-15));
}

TEST_CASE("increment statistics") {
    const auto spec = spec_ptr(testing::line(32), 2, 2.0);
    const std::size_t steps = 1000;
    const TimeGrid tg(0.5, steps);
    const double tau = tg.tau();
    double sum[2] = {0, 0}, sq[2] = {0, 0}, cross = 0.0;
    std::size_t count = 0;
    for (std::uint32_t s = 0; s < 100; ++s) {
        const auto p = sample_path(spec, tg, 2024, s);
        for (std::size_t n = 0; n < steps; ++n) {
            const double x = p.increment(n, 0), y = p.increment(n, 1);
            sum[0] += x;
            sum[1] += y;
            sq[0] += x * x;
            sq[1] += y * y;
            cross += x * y;
            ++count;
        }
    }
    const double cnt = static_cast<double>(count);
    for (int j = 0; j < 2; ++j) {
        CHECK(std::abs(sum[j] / cnt) <= 5.0 * std::sqrt(tau / cnt));
        // Var of x^2 is 2 tau^2.
        CHECK(std::abs(sq[j] / cnt - tau) <= 5.0 * std::sqrt(2.0 / cnt) * tau);
    }
    CHECK(std::abs(cross / cnt) <= 5.0 * tau / std::sqrt(cnt));
}

TEST_CASE("coarsening") {
    const auto spec = spec_ptr(testing::line(16), 3, 2.0);
    const TimeGrid tg(1.0, 64);
    const auto p = sample_path(spec, tg, 9);
    const auto same = coarsen_path(p, 1);
    CHECK(std::equal(p.table().begin(), p.table().end(), same.table().begin()));

    const auto c2 = coarsen_path(coarsen_path(p, 2), 2);
    const auto c4 = coarsen_path(p, 4);
    REQUIRE(c2.table().size() == c4.table().size());
    for (std::size_t i = 0; i < c4.table().size(); ++i) CHECK(c2.table()[i] == c4.table()[i]);
    CHECK(coarsen_path(coarsen_path(p, 4), 8).table()[1] == coarsen_path(p, 32).table()[1]);
    CHECK(c4.time_grid().tau() == doctest::Approx(4 * tg.tau()));
    CHECK(c4.factor() == 4);

    const auto whole = coarsen_path(p, 64);
    REQUIRE(whole.num_steps() == 1);
    for (std::size_t j = 0; j < 3; ++j) {
        double s = 0.0;
        for (std::size_t n = 0; n < 64; ++n) s += p.increment(n, j);
        CHECK(whole.increment(0, j) == s);
    }
    CHECK_THROWS_AS(coarsen_path(p, 3), StructuralError);
    CHECK_THROWS_AS(coarsen_path(p, 0), StructuralError);
}

TEST_CASE("increment field") {
    const auto g = testing::line(20);
    {
        const auto spec = spec_ptr(g, 3, 2.0);
        const auto p = path_from_table(spec, TimeGrid(1.0, 2), std::vector<double>(6, 0.0));
        CHECK(increment_field(p, 1) == FieldState::zeros(g));
        CHECK_THROWS_AS(increment_field(p, 2), StructuralError);
    }
    {
        const auto spec = spec_ptr(g, 1, 2.0);
        const auto p = sample_path(spec, TimeGrid(1.0, 4), 5);
        const auto f = increment_field(p, 2);
        const auto e1 = spec->e_values(0);
        CHECK(f.e()[3] / f.e()[7] == doctest::Approx(e1[3] / e1[7]).epsilon(1e-14));
    }
    {
        const auto g2 = testing::rect(6, 5);
        const auto spec = spec_ptr(g2, 4, 3.0);
        const auto p = sample_path(spec, TimeGrid(1.0, 8), 77);
        const auto f = increment_field(p, 5);
        for (std::size_t k = 0; k < g2->num_e_nodes(); ++k) {
            double v = 0.0;
            for (int j = 0; j < 4; ++j) {
                v += std::sqrt(std::pow(j + 1, -3.0)) * p.increment(5, j) * spec->evaluate(j, g2->e_position(k));
            }
            if (g2->is_boundary_e(k)) v = 0.0;
            CHECK(f.e()[k] == doctest::Approx(v).epsilon(1e-12).scale(1e-12));
        }
        for (std::size_t k = 0; k < g2->num_h_nodes(); ++k) {
            double v = 0.0;
            for (int j = 0; j < 4; ++j) {
                v += std::sqrt(std::pow(j + 1, -3.0)) * p.increment(5, j) * spec->evaluate(j, g2->h_position(k));
            }
            CHECK(f.h()[k] == doctest::Approx(v).epsilon(1e-12).scale(1e-12));
        }
    }
}

TEST_CASE("isometry of the increment field") {
    const auto g = testing::line(24);
    const auto spec = spec_ptr(g, 5, 2.0);
    const TimeGrid tg(0.25, 1);
    double sum = 0.0, sumsq = 0.0;
    const int samples = 10000;
    for (int s = 0; s < samples; ++s) {
        const auto p = sample_path(spec, tg, 31, static_cast<std::uint32_t>(s));
        const auto f = increment_field(p, 0);
        double l2 = 0.0;
        for (std::size_t k = 0; k < g->num_e_nodes(); ++k) l2 += f.e()[k] * f.e()[k] * g->e_weight(k);
        sum += l2;
        sumsq += l2 * l2;
    }
    const double mean = sum / samples;
    const double se = std::sqrt((sumsq / samples - mean * mean) / samples);
    CHECK(std::abs(mean - tg.tau() * spec->trace()) <= 5.0 * se);
}

TEST_CASE("binary dump round trip") {
    const auto spec = spec_ptr(testing::line(16), 3, 2.0);
    const auto p = sample_path(spec, TimeGrid(1.0, 5), 0xDEADBEEFCAFEull);
    std::stringstream buf;
    write_increment_table(p, buf);
    const std::string bytes = buf.str();
    CHECK(bytes.size() == 24 + 8 * 15);
    CHECK(static_cast<unsigned char>(bytes[0]) == 3);
    CHECK(static_cast<unsigned char>(bytes[8]) == 5);
    CHECK(static_cast<unsigned char>(bytes[16]) == 0xFE);
    const auto t = read_increment_table(buf);
    CHECK(t.num_modes == 3);
    CHECK(t.num_steps == 5);
    CHECK(t.seed == 0xDEADBEEFCAFEull);
    CHECK(std::equal(t.values.begin(), t.values.end(), p.table().begin()));
    std::stringstream truncated(bytes.substr(0, 30));
    CHECK_THROWS(read_increment_table(truncated));
}
