#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "cellspan/elastic_net.hpp"
#include "cellspan/error.hpp"
#include "cellspan/physics.hpp"
#include "cellspan/rng.hpp"
#include "cellspan/training.hpp"

using namespace cellspan;

namespace {

std::vector<TrainSample> correlated_samples(int n, std::uint64_t seed) {
    // targets lie on a noisy 1-D family, the inputs are monotone encodings
    // of the same latent, mirroring what the feature pipeline produces
    Rng rng(seed);
    std::vector<TrainSample> samples;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform(-1.0, 1.0);
        TrainSample s;
        s.cell_id = "s" + std::to_string(i);
        s.a_target = -7.7 + 0.35 * u + 0.01 * rng.normal();
        s.b_target = 0.9 - 0.06 * u + 0.002 * rng.normal();
        s.c = 0.01;
        s.life_true = cycle_life({s.a_target, s.b_target, s.c}, 0.2);
        s.z = {u, 0.8 * u + 0.05 * rng.normal(), u * u, 0.5 * u + 0.1 * rng.normal(),
               -0.7 * u};
        samples.push_back(std::move(s));
    }
    return samples;
}

} // namespace

TEST_CASE("param_loss definition") {
    std::vector<std::array<double, 2>> preds{{1.0, 2.0}};
    std::vector<std::array<double, 2>> targets{{4.0, 6.0}};  // errors (3, 4)
    CHECK(param_loss(preds, targets, 1.0, 1.0).value == doctest::Approx(5.0));
    CHECK(param_loss(preds, preds, 1.0, 1.0).value == 0.0);
    CHECK(param_loss(preds, targets, 1.0, 1.0).kind == LossKind::param_loss);
    CHECK_THROWS_AS(param_loss({}, {}, 1.0, 1.0), DataError);

    // random batch against the direct formula
    Rng rng(13);
    const double w_a = 0.7, w_b = 1.9;
    std::vector<std::array<double, 2>> p(25), t(25);
    double acc = 0.0;
    for (int i = 0; i < 25; ++i) {
        p[i] = {rng.uniform(-9, -6), rng.uniform(0.5, 1.3)};
        t[i] = {rng.uniform(-9, -6), rng.uniform(0.5, 1.3)};
        acc += w_a * (t[i][0] - p[i][0]) * (t[i][0] - p[i][0]) +
               w_b * (t[i][1] - p[i][1]) * (t[i][1] - p[i][1]);
    }
    CHECK(param_loss(p, t, w_a, w_b).value ==
          doctest::Approx(std::sqrt(acc / 25.0)).epsilon(1e-12));
}

TEST_CASE("cycle_life_loss composes the loss-law inversion") {
    Rng rng(23);
    std::vector<std::array<double, 2>> preds;
    std::vector<double> cs, lives;
    for (int i = 0; i < 15; ++i) {
        const double a = rng.uniform(-9.0, -6.5);
        const double b = rng.uniform(0.7, 1.1);
        const double c = rng.uniform(0.0, 0.05);
        preds.push_back({a, b});
        cs.push_back(c);
        lives.push_back(cycle_life({a, b, c}, 0.2));
    }
    // exact parameters reproduce the lives
    CHECK(cycle_life_loss(preds, cs, lives, 0.2).value < 1e-9);

    // equals the directly computed residual RMSE when predictions differ
    auto preds2 = preds;
    for (auto& p : preds2) p[0] += 0.05;
    double acc = 0.0;
    for (std::size_t i = 0; i < preds2.size(); ++i) {
        const double life = cycle_life({preds2[i][0], preds2[i][1], cs[i]}, 0.2);
        acc += (lives[i] - life) * (lives[i] - life);
    }
    CHECK(cycle_life_loss(preds2, cs, lives, 0.2).value ==
          doctest::Approx(std::sqrt(acc / preds2.size())).epsilon(1e-12));

    // vanishing B explodes and is reported as an error
    preds2[3][1] = 1e-8;
    CHECK_THROWS_AS(cycle_life_loss(preds2, cs, lives, 0.2), NumericError);
    preds2[3][1] = -0.5;
    CHECK_THROWS_AS(cycle_life_loss(preds2, cs, lives, 0.2), NumericError);
}

TEST_CASE("zero-epoch training leaves the model unchanged") {
    const auto samples = correlated_samples(20, 3);
    const auto model = init_attention(5, 8, 2, 11);
    TrainConfig cfg;
    cfg.stage1_epochs = 0;
    cfg.stage2_epochs = 0;
    const auto result = train_two_stage(model, fit_calibration(samples), samples, cfg,
                                        Exec::serial);
    CHECK(result.history.empty());
    CHECK(result.model.w_q == model.w_q);
    CHECK(result.model.w_k == model.w_k);
    CHECK(result.model.w_v == model.w_v);
}

TEST_CASE("training is reproducible bit for bit") {
    const auto samples = correlated_samples(24, 7);
    TrainConfig cfg;
    cfg.stage1_epochs = 60;
    cfg.stage2_epochs = 40;
    cfg.rng_seed = 5;
    auto run = [&] {
        return train_two_stage(init_attention(5, 8, 2, cfg.rng_seed),
                               fit_calibration(samples), samples, cfg, Exec::serial);
    };
    const auto r1 = run();
    const auto r2 = run();
    CHECK(r1.model.w_q == r2.model.w_q);
    CHECK(r1.model.w_k == r2.model.w_k);
    CHECK(r1.model.w_v == r2.model.w_v);
    REQUIRE(r1.history.size() == r2.history.size());
    for (std::size_t i = 0; i < r1.history.size(); ++i) {
        CHECK(r1.history[i].param_loss == r2.history[i].param_loss);
        CHECK(r1.history[i].cycle_life_loss == r2.history[i].cycle_life_loss);
    }
}

TEST_CASE("stage losses do not increase start to end") {
    const auto samples = correlated_samples(40, 19);
    TrainConfig cfg;
    cfg.stage1_epochs = 2000;  // the 1e-3 rate moves weights ~lr per epoch
    cfg.stage2_epochs = 200;
    const auto result = train_two_stage(init_attention(5, 8, 2, 1),
                                        fit_calibration(samples), samples, cfg,
                                        Exec::serial);
    // history: stage-1 rows 0..epochs, then stage-2 rows 0..epochs
    REQUIRE(result.history.size() ==
            static_cast<std::size_t>(cfg.stage1_epochs + cfg.stage2_epochs + 2));
    const auto& s1_first = result.history.front();
    const auto& s1_last = result.history[static_cast<std::size_t>(cfg.stage1_epochs)];
    CHECK(s1_first.stage == 1);
    CHECK(s1_last.stage == 1);
    CHECK(s1_last.param_loss <= s1_first.param_loss);

    const auto& s2_first = result.history[static_cast<std::size_t>(cfg.stage1_epochs) + 1];
    const auto& s2_last = result.history.back();
    CHECK(s2_first.stage == 2);
    CHECK(s2_last.stage == 2);
    CHECK(s2_last.cycle_life_loss <= s2_first.cycle_life_loss);

    // stage 1 should have moved parameters toward the targets
    CHECK(s1_last.param_loss < 0.5 * s1_first.param_loss);
}

TEST_CASE("threshold monotonicity of trained predictions") {
    const auto samples = correlated_samples(30, 29);
    TrainConfig cfg;
    cfg.stage1_epochs = 200;
    cfg.stage2_epochs = 100;
    const auto result = train_two_stage(init_attention(5, 8, 2, 2),
                                        fit_calibration(samples), samples, cfg,
                                        Exec::serial);
    for (const auto& s : samples) {
        const double l15 = predict_cycle_life(result.model, result.calib, s.z, s.c, 0.15);
        const double l20 = predict_cycle_life(result.model, result.calib, s.z, s.c, 0.20);
        CHECK(l15 < l20);
    }
}

TEST_CASE("with zero query/key weights training solves the pooled linear fit") {
    // gradients of w_q/w_k vanish at zero, so the model stays linear:
    // A_hat = w_v0 * mean(z); the optimum is the closed-form least squares
    Rng rng(43);
    std::vector<TrainSample> samples;
    for (int i = 0; i < 16; ++i) {
        TrainSample s;
        s.cell_id = "lin" + std::to_string(i);
        s.z = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
               rng.uniform(-1, 1), rng.uniform(-1, 1)};
        s.a_target = rng.uniform(-1.0, 1.0);
        s.b_target = rng.uniform(0.8, 1.2);
        s.c = 0.0;
        s.life_true = 100.0;
        samples.push_back(std::move(s));
    }
    auto model = init_attention(5, 4, 2, 77);
    std::fill(model.w_q.begin(), model.w_q.end(), 0.0);
    std::fill(model.w_k.begin(), model.w_k.end(), 0.0);

    OutputCalibration identity;  // A_hat = y0 directly
    TrainConfig cfg;
    cfg.stage1_epochs = 6000;
    cfg.stage1_lr = 0.02;
    cfg.stage2_epochs = 0;
    const auto result = train_two_stage(model, identity, samples, cfg, Exec::serial);

    for (double w : result.model.w_q) CHECK(w == 0.0);
    for (double w : result.model.w_k) CHECK(w == 0.0);

    double num = 0.0, den = 0.0;
    for (const auto& s : samples) {
        double mean_z = 0.0;
        for (double v : s.z) mean_z += v;
        mean_z /= 5.0;
        num += s.a_target * mean_z;
        den += mean_z * mean_z;
    }
    CHECK(result.model.w_v[0] == doctest::Approx(num / den).epsilon(1e-4));
}

TEST_CASE("divergent training reports the stage and epoch") {
    auto samples = correlated_samples(10, 37);
    samples[4].life_true = 1e200;  // squared residual overflows immediately
    TrainConfig cfg;
    cfg.stage1_epochs = 0;
    cfg.stage2_epochs = 5;
    try {
        train_two_stage(init_attention(5, 8, 2, 0), fit_calibration(samples), samples,
                        cfg, Exec::serial);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("stage 2") != std::string::npos);
        CHECK(msg.find("epoch 0") != std::string::npos);
    }
}

TEST_CASE("training rejects invalid inputs") {
    auto samples = correlated_samples(10, 31);
    TrainConfig cfg;
    CHECK_THROWS_AS(
        train_two_stage(init_attention(5, 8, 2, 0), OutputCalibration{}, {}, cfg),
        DataError);
    samples[2].c = 0.25;  // past the threshold
    CHECK_THROWS_AS(train_two_stage(init_attention(5, 8, 2, 0), OutputCalibration{},
                                    samples, cfg),
                    DataError);
}

// ---------------------------------------------------------------------------
// Elastic-net baseline
// ---------------------------------------------------------------------------

namespace {

struct Problem {
    std::vector<std::vector<double>> x;
    std::vector<std::array<double, 2>> y;
};

Problem random_problem(int n, int p, std::uint64_t seed) {
    Rng rng(seed);
    Problem prob;
    std::vector<double> coef_a(p), coef_b(p);
    for (int j = 0; j < p; ++j) {
        coef_a[j] = rng.uniform(-1.0, 1.0);
        coef_b[j] = rng.uniform(-1.0, 1.0);
    }
    for (int i = 0; i < n; ++i) {
        std::vector<double> row(p);
        for (int j = 0; j < p; ++j) row[j] = rng.uniform(-2.0, 2.0);
        double ya = -7.5 + 0.05 * rng.normal();
        double yb = 0.9 + 0.01 * rng.normal();
        for (int j = 0; j < p; ++j) {
            ya += coef_a[j] * row[j];
            yb += 0.1 * coef_b[j] * row[j];
        }
        prob.x.push_back(std::move(row));
        prob.y.push_back({ya, yb});
    }
    return prob;
}

// closed-form ridge on centered data
std::pair<std::vector<double>, double> ridge_oracle(const Problem& prob, int output,
                                                    double alpha) {
    const int n = static_cast<int>(prob.x.size());
    const int p = static_cast<int>(prob.x[0].size());
    Eigen::MatrixXd x(n, p);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) x(i, j) = prob.x[i][j];
        y(i) = prob.y[i][output];
    }
    const Eigen::RowVectorXd xbar = x.colwise().mean();
    const double ybar = y.mean();
    const Eigen::MatrixXd xc = x.rowwise() - xbar;
    const Eigen::VectorXd yc = y.array() - ybar;
    const Eigen::MatrixXd gram = xc.transpose() * xc / n +
                                 alpha * Eigen::MatrixXd::Identity(p, p);
    const Eigen::VectorXd beta = gram.ldlt().solve(xc.transpose() * yc / n);
    const double icept = ybar - xbar * beta;
    return {std::vector<double>(beta.data(), beta.data() + p), icept};
}

} // namespace

TEST_CASE("alpha=0 elastic net matches ordinary least squares") {
    const auto prob = random_problem(40, 5, 101);
    const auto model = fit_elastic_net(prob.x, prob.y, 0.0, 0.5);
    for (int o = 0; o < 2; ++o) {
        const auto [beta, icept] = ridge_oracle(prob, o, 0.0);  // alpha 0 = OLS
        for (int j = 0; j < 5; ++j)
            CHECK(model.coef[o][j] == doctest::Approx(beta[j]).epsilon(1e-8));
        CHECK(model.intercept[o] == doctest::Approx(icept).epsilon(1e-8));
    }
}

TEST_CASE("l1_ratio=0 elastic net matches closed-form ridge") {
    const auto prob = random_problem(40, 5, 202);
    const double alpha = 0.7;
    const auto model = fit_elastic_net(prob.x, prob.y, alpha, 0.0);
    for (int o = 0; o < 2; ++o) {
        const auto [beta, icept] = ridge_oracle(prob, o, alpha);
        for (int j = 0; j < 5; ++j)
            CHECK(model.coef[o][j] == doctest::Approx(beta[j]).epsilon(1e-8));
        CHECK(model.intercept[o] == doctest::Approx(icept).epsilon(1e-8));
    }
}

TEST_CASE("elastic-net solution satisfies the subgradient conditions") {
    const auto prob = random_problem(50, 5, 303);
    const double alpha = 0.4, l1 = 0.5;
    const auto model = fit_elastic_net(prob.x, prob.y, alpha, l1);
    const int n = static_cast<int>(prob.x.size());

    for (int o = 0; o < 2; ++o) {
        // residuals on centered data with the fitted coefficients
        std::vector<double> resid(n);
        for (int i = 0; i < n; ++i) {
            double pred = model.intercept[o];
            for (int j = 0; j < 5; ++j) pred += model.coef[o][j] * prob.x[i][j];
            resid[i] = prob.y[i][o] - pred;
        }
        for (int j = 0; j < 5; ++j) {
            double g = 0.0;
            for (int i = 0; i < n; ++i) g += prob.x[i][j] * resid[i];
            g = -g / n + alpha * (1.0 - l1) * model.coef[o][j];
            if (model.coef[o][j] != 0.0)
                CHECK(std::fabs(g + alpha * l1 * (model.coef[o][j] > 0 ? 1.0 : -1.0)) <
                      1e-6);
            else
                CHECK(std::fabs(g) <= alpha * l1 + 1e-6);
        }
    }
}

TEST_CASE("hyperparameter grids follow the documented ranges") {
    const auto alphas = default_alpha_grid();
    CHECK(alphas.front() == doctest::Approx(1.0));
    CHECK(alphas.back() == doctest::Approx(10.0));
    int clamped = 0;
    const auto l1s = default_l1_grid(&clamped);
    CHECK(clamped == 2);  // 10 and 100 clamp to 1
    CHECK(l1s.front() == doctest::Approx(1e-5));
    CHECK(l1s.back() == 1.0);
    for (double v : l1s) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("tuning selects by cycle-life RMSE on the selection split") {
    const auto train = correlated_samples(60, 404);
    const auto primary = correlated_samples(20, 505);
    const auto result = tune_elastic_net(train, primary, default_alpha_grid(),
                                         default_l1_grid(), 0.2);
    CHECK(std::isfinite(result.primary_rmse));
    CHECK(result.primary_rmse >= 0.0);
    // tuned model predicts finite parameters
    const auto pred = result.model.predict(primary[0].z);
    CHECK(std::isfinite(pred[0]));
    CHECK(pred[1] > 0.0);
}

TEST_CASE("elastic net input validation") {
    CHECK_THROWS_AS(fit_elastic_net({}, {}, 1.0, 0.5), DataError);
    const auto prob = random_problem(10, 3, 9);
    CHECK_THROWS_AS(fit_elastic_net(prob.x, prob.y, -1.0, 0.5), DataError);
    CHECK_THROWS_AS(fit_elastic_net(prob.x, prob.y, 1.0, 1.5), DataError);
    const auto model = fit_elastic_net(prob.x, prob.y, 0.1, 0.5);
    CHECK_THROWS_AS(model.predict(std::vector<double>{1.0}), DataError);
}
