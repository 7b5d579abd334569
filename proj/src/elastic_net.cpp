#include "cellspan/elastic_net.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "cellspan/error.hpp"
#include "cellspan/physics.hpp"

namespace cellspan {

namespace {

constexpr double kCoefTol = 1e-8;
constexpr int kMaxSweeps = 10000;

double soft_threshold(double z, double gamma) {
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

} // namespace

std::array<double, 2> ElasticNetModel::predict(std::span<const double> z) const {
    std::array<double, 2> out{intercept[0], intercept[1]};
    for (int o = 0; o < 2; ++o) {
        if (z.size() != coef[o].size())
            throw DataError("elastic net: input length " + std::to_string(z.size()) +
                            " does not match " + std::to_string(coef[o].size()) +
                            " coefficients");
        for (std::size_t j = 0; j < z.size(); ++j) out[o] += coef[o][j] * z[j];
    }
    return out;
}

ElasticNetModel fit_elastic_net(const std::vector<std::vector<double>>& x,
                                const std::vector<std::array<double, 2>>& y,
                                double alpha, double l1_ratio) {
    if (x.empty()) throw DataError("fit_elastic_net: empty design matrix");
    if (x.size() != y.size()) throw DataError("fit_elastic_net: x/y misaligned");
    if (alpha < 0.0) throw DataError("fit_elastic_net: alpha must be >= 0");
    if (l1_ratio < 0.0 || l1_ratio > 1.0)
        throw DataError("fit_elastic_net: l1_ratio must be in [0, 1]");
    const std::size_t n = x.size();
    const std::size_t p = x[0].size();
    for (const auto& row : x)
        if (row.size() != p) throw DataError("fit_elastic_net: ragged design matrix");

    ElasticNetModel model;
    model.alpha = alpha;
    model.l1_ratio = l1_ratio;

    // center columns and targets; the intercept absorbs the means
    std::vector<double> xbar(p, 0.0);
    for (const auto& row : x)
        for (std::size_t j = 0; j < p; ++j) xbar[j] += row[j];
    for (auto& v : xbar) v /= static_cast<double>(n);

    std::vector<double> colsq(p, 0.0);  // (1/n) sum_i xc_ij^2
    std::vector<std::vector<double>> xc(n, std::vector<double>(p));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) {
            xc[i][j] = x[i][j] - xbar[j];
            colsq[j] += xc[i][j] * xc[i][j];
        }
    for (auto& v : colsq) v /= static_cast<double>(n);

    const double l1_penalty = alpha * l1_ratio;
    const double l2_penalty = alpha * (1.0 - l1_ratio);

    for (int o = 0; o < 2; ++o) {
        double ybar = 0.0;
        for (const auto& t : y) ybar += t[o];
        ybar /= static_cast<double>(n);

        std::vector<double> beta(p, 0.0);
        std::vector<double> resid(n);
        for (std::size_t i = 0; i < n; ++i) resid[i] = y[i][o] - ybar;

        int sweep = 0;
        for (; sweep < kMaxSweeps; ++sweep) {
            double max_change = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
                if (colsq[j] == 0.0) continue;  // constant column, stays at 0
                double rho = 0.0;
                for (std::size_t i = 0; i < n; ++i) rho += xc[i][j] * resid[i];
                rho = rho / static_cast<double>(n) + colsq[j] * beta[j];
                const double bnew = soft_threshold(rho, l1_penalty) /
                                    (colsq[j] + l2_penalty);
                const double delta = bnew - beta[j];
                if (delta != 0.0) {
                    for (std::size_t i = 0; i < n; ++i) resid[i] -= delta * xc[i][j];
                    beta[j] = bnew;
                }
                max_change = std::max(max_change, std::fabs(delta));
            }
            if (max_change < kCoefTol) break;
        }
        if (sweep == kMaxSweeps)
            throw NumericError("fit_elastic_net: coordinate descent did not converge in " +
                               std::to_string(kMaxSweeps) + " sweeps");

        double icept = ybar;
        for (std::size_t j = 0; j < p; ++j) icept -= beta[j] * xbar[j];
        model.coef[o] = std::move(beta);
        model.intercept[o] = icept;
    }
    return model;
}

std::vector<double> default_alpha_grid() {
    // log-spaced over [10^0, 10^1]
    std::vector<double> alphas;
    for (int i = 0; i <= 4; ++i) alphas.push_back(std::pow(10.0, 0.25 * i));
    return alphas;
}

std::vector<double> default_l1_grid(int* clamp_warnings) {
    // log-spaced over [10^-5, 10^2]; ratios above 1 are undefined for the
    // penalty, so they clamp to 1
    std::vector<double> l1s;
    int clamped = 0;
    for (int i = 0; i <= 7; ++i) {
        double v = std::pow(10.0, -5.0 + i);
        if (v > 1.0) {
            v = 1.0;
            ++clamped;
        }
        if (l1s.empty() || l1s.back() != v) l1s.push_back(v);
    }
    if (clamp_warnings) *clamp_warnings = clamped;
    return l1s;
}

ElasticNetSearchResult tune_elastic_net(const std::vector<TrainSample>& train,
                                        const std::vector<TrainSample>& primary,
                                        const std::vector<double>& alphas,
                                        const std::vector<double>& l1_ratios,
                                        double threshold) {
    if (train.empty()) throw DataError("tune_elastic_net: empty training set");
    if (primary.empty()) throw DataError("tune_elastic_net: empty selection split");
    if (alphas.empty() || l1_ratios.empty())
        throw DataError("tune_elastic_net: empty hyperparameter grid");

    std::vector<std::vector<double>> x(train.size());
    std::vector<std::array<double, 2>> y(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        x[i] = train[i].z;
        y[i] = {train[i].a_target, train[i].b_target};
    }

    ElasticNetSearchResult best;
    best.primary_rmse = std::numeric_limits<double>::infinity();
    bool have_best = false;

    for (double alpha : alphas) {
        for (double l1 : l1_ratios) {
            const ElasticNetModel model = fit_elastic_net(x, y, alpha, l1);
            double se = 0.0;
            bool ok = true;
            for (const auto& s : primary) {
                const auto pred = model.predict(s.z);
                double life = 0.0;
                try {
                    life = cycle_life(PhysicsParams{pred[0], pred[1], s.c}, threshold);
                } catch (const Error&) {
                    ok = false;  // invalid B_hat on this split: reject the combination
                    break;
                }
                se += (s.life_true - life) * (s.life_true - life);
            }
            if (!ok) continue;
            const double rmse = std::sqrt(se / static_cast<double>(primary.size()));
            if (rmse < best.primary_rmse) {
                best.primary_rmse = rmse;
                best.model = model;
                have_best = true;
            }
        }
    }
    if (!have_best)
        throw NumericError("tune_elastic_net: no hyperparameter combination produced "
                           "valid predictions on the selection split");
    return best;
}

} // namespace cellspan
