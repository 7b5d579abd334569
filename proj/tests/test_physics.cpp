#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cellspan/error.hpp"
#include "cellspan/physics.hpp"
#include "cellspan/rng.hpp"

using namespace cellspan;

namespace {

CapacityLossSeries series_from_law(const PhysicsParams& p, int first, int last,
                                   double noise_sd = 0.0, std::uint64_t seed = 0) {
    Rng rng(seed);
    CapacityLossSeries s;
    for (int x = first; x <= last; ++x) {
        s.cycles.push_back(x);
        double v = q_loss(p, x);
        if (noise_sd > 0.0) v += rng.normal(0.0, noise_sd);
        s.loss.push_back(std::max(v, 0.0));
    }
    return s;
}

} // namespace

TEST_CASE("q_loss basics") {
    CHECK(q_loss({-3.0, 0.8, 0.05}, 0.0) == 0.05);  // continuity at x = 0
    CHECK(q_loss({0.0, 1.0, 0.0}, 0.2) == doctest::Approx(0.2).epsilon(1e-15));
    // high-precision reference value
    CHECK(q_loss({-8.0, 0.9, 0.01}, 500.0) ==
          doctest::Approx(0.10009841451954828).epsilon(1e-14));
    CHECK_THROWS_AS(q_loss({0.0, 1.0, 0.0}, -1.0), DataError);
}

TEST_CASE("q_loss is strictly increasing in x for positive B") {
    Rng rng(11);
    for (int t = 0; t < 200; ++t) {
        PhysicsParams p{rng.uniform(-10.0, -2.0), rng.uniform(0.3, 1.5),
                        rng.uniform(0.0, 0.05)};
        const double x = rng.uniform(1.0, 2000.0);
        CHECK(q_loss(p, x * 1.01) > q_loss(p, x));
    }
}

TEST_CASE("analytic q_loss gradient matches central differences") {
    Rng rng(7);
    const double h = 1e-6;
    for (int t = 0; t < 100; ++t) {
        PhysicsParams p{rng.uniform(-10.0, -2.0), rng.uniform(0.3, 1.5),
                        rng.uniform(0.0, 0.05)};
        const double x = rng.uniform(2.0, 1500.0);
        const auto g = q_loss_grad_ab(p, x);
        PhysicsParams pa = p, pb = p;
        pa.a += h;
        pb.a -= h;
        const double fd_a = (q_loss(pa, x) - q_loss(pb, x)) / (2 * h);
        pa = p;
        pb = p;
        pa.b += h;
        pb.b -= h;
        const double fd_b = (q_loss(pa, x) - q_loss(pb, x)) / (2 * h);
        CHECK(std::fabs(g[0] - fd_a) / std::max({std::fabs(g[0]), std::fabs(fd_a), 1e-10}) <
              1e-5);
        CHECK(std::fabs(g[1] - fd_b) / std::max({std::fabs(g[1]), std::fabs(fd_b), 1e-10}) <
              1e-5);
    }
}

TEST_CASE("initial_loss_c from the first recorded cycle") {
    CellRecord cell;
    cell.cell_id = "c";
    cell.nominal_capacity_ah = 1.1;
    cell.summaries = {{1, 1.078, 0.016, 30, 32}};
    CHECK(initial_loss_c(cell) == doctest::Approx(0.02).epsilon(1e-12));
    cell.summaries[0].qd = 1.1;
    CHECK(initial_loss_c(cell) == 0.0);
    cell.summaries[0].qd = 1.12;  // measurement overshoot clamps to zero
    CHECK(initial_loss_c(cell) == 0.0);
}

TEST_CASE("cycle_life direct substitution and errors") {
    CHECK(cycle_life({0.0, 1.0, 0.0}, 0.2) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK_THROWS_AS(cycle_life({-5.0, 1.0, 0.3}, 0.2), DataError);  // threshold <= C
    CHECK_THROWS_AS(cycle_life({-5.0, -1.0, 0.0}, 0.2), DataError);
    CHECK_THROWS_AS(cycle_life({-5.0, 1.0, 0.0}, 1.0), DataError);
}

TEST_CASE("inversion round-trip over random parameter triples") {
    Rng rng(42);
    for (int t = 0; t < 10000; ++t) {
        PhysicsParams p{rng.uniform(-12.0, -2.0), rng.uniform(0.2, 2.0),
                        rng.uniform(0.0, 0.1)};
        const double threshold = rng.uniform(p.c + 0.01, 0.9);
        const double life = cycle_life(p, threshold);
        CHECK(q_loss(p, life) == doctest::Approx(threshold).epsilon(1e-9));
    }
}

TEST_CASE("cycle_life strictly increasing in threshold") {
    Rng rng(17);
    for (int t = 0; t < 200; ++t) {
        PhysicsParams p{rng.uniform(-10.0, -3.0), rng.uniform(0.3, 1.5),
                        rng.uniform(0.0, 0.05)};
        const double t1 = rng.uniform(p.c + 0.01, 0.5);
        const double t2 = t1 + rng.uniform(0.01, 0.3);
        CHECK(cycle_life(p, t1) < cycle_life(p, t2));
    }
}

TEST_CASE("fit_params recovers noiseless parameters") {
    Rng rng(3);
    for (int t = 0; t < 25; ++t) {
        PhysicsParams truth{rng.uniform(-9.0, -6.0), rng.uniform(0.6, 1.2),
                            rng.uniform(0.0, 0.03)};
        const auto series = series_from_law(truth, 1, 600);
        const auto report = fit_params(series, truth.c);
        CHECK(report.converged);
        CHECK(std::fabs(report.params.a - truth.a) < 1e-6);
        CHECK(std::fabs(report.params.b - truth.b) < 1e-6);
        CHECK(report.r_squared == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("fit_params objective trace is non-increasing") {
    PhysicsParams truth{-7.8, 0.9, 0.01};
    const auto series = series_from_law(truth, 1, 800, 0.002, 5);
    const auto report = fit_params(series, truth.c);
    REQUIRE(report.objective_trace.size() > 1);
    for (std::size_t i = 1; i < report.objective_trace.size(); ++i)
        CHECK(report.objective_trace[i] <= report.objective_trace[i - 1]);
    CHECK(report.r_squared > 0.97);
    CHECK(report.rmse_loss < 0.005);
}

TEST_CASE("fit_params rejects degenerate input") {
    CapacityLossSeries flat;
    for (int x = 1; x <= 20; ++x) {
        flat.cycles.push_back(x);
        flat.loss.push_back(0.01);  // constant at C
    }
    CHECK_THROWS_AS(fit_params(flat, 0.01), DataError);

    CapacityLossSeries tiny;
    tiny.cycles = {1, 2, 3};
    tiny.loss = {0.01, 0.02, 0.03};
    CHECK_THROWS_AS(fit_params(tiny, 0.0), DataError);
}

TEST_CASE("fitted cycle life matches truth on noiseless series") {
    Rng rng(9);
    for (int t = 0; t < 10; ++t) {
        PhysicsParams truth{rng.uniform(-8.5, -7.0), rng.uniform(0.8, 1.0),
                            rng.uniform(0.0, 0.02)};
        const auto series = series_from_law(truth, 1, 1200);
        const auto report = fit_params(series, truth.c);
        const double life_fit = cycle_life(report.params, 0.2);
        const double life_true = cycle_life(truth, 0.2);
        CHECK(std::fabs(life_fit - life_true) < 0.5);
    }
}
