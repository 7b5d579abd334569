#include "cellspan/physics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cellspan/dataset.hpp"
#include "cellspan/error.hpp"

namespace cellspan {

namespace {

constexpr double kMinB = 1e-6;          // positivity projection for B
constexpr double kInitLossMargin = 1e-6; // loss > C + margin usable for the log seed
constexpr double kGradTol = 1e-10;
constexpr double kObjectiveRelTol = 1e-12;
constexpr int kMaxIterations = 200;

} // namespace

double q_loss(const PhysicsParams& p, double x) {
    if (x < 0.0) throw DataError("q_loss: cycle number must be >= 0");
    if (x == 0.0) return p.c;  // continuity limit for b > 0
    const double v = std::exp(p.a + p.b * std::log(x)) + p.c;
    if (!std::isfinite(v))
        throw NumericError("q_loss: non-finite value at x = " + std::to_string(x));
    return v;
}

std::array<double, 2> q_loss_grad_ab(const PhysicsParams& p, double x) {
    const double lx = std::log(x);
    const double e = std::exp(p.a + p.b * lx);
    return {e, e * lx};
}

double initial_loss_c(const CellRecord& cell) {
    if (cell.summaries.empty())
        throw DataError("cell '" + cell.cell_id + "': no summaries for initial loss");
    const double qd0 = cell.summaries.front().qd;
    return std::max(0.0, 1.0 - qd0 / cell.nominal_capacity_ah);
}

double cycle_life(const PhysicsParams& p, double threshold) {
    if (!(p.b > 0.0)) throw DataError("cycle_life: B must be positive");
    if (!(threshold < 1.0)) throw DataError("cycle_life: threshold must be < 1");
    if (!(threshold > p.c))
        throw DataError("cycle_life: threshold <= C (end of life already passed)");
    const double life = std::exp((-p.a + std::log(threshold - p.c)) / p.b);
    if (!std::isfinite(life)) throw NumericError("cycle_life: non-finite result");
    return life;
}

FitReport fit_params(const CapacityLossSeries& series, double c) {
    const std::size_t n = series.cycles.size();
    if (n < 5) throw DataError("fit_params: need at least 5 points");

    std::vector<double> lx(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (series.cycles[i] < 1) throw DataError("fit_params: cycles must be >= 1");
        lx[i] = std::log(static_cast<double>(series.cycles[i]));
        y[i] = series.loss[i];
    }

    // Log-linear seed on ln(loss - C) = A + B ln x, restricted to points
    // safely above C.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t usable = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (y[i] > c + kInitLossMargin) {
            const double w = std::log(y[i] - c);
            sx += lx[i];
            sy += w;
            sxx += lx[i] * lx[i];
            sxy += lx[i] * w;
            ++usable;
        }
    }
    if (usable < 3)
        throw DataError("fit_params: fewer than 3 points above C; nothing to fit");
    const double um = static_cast<double>(usable);
    const double denom = sxx - sx * sx / um;
    double b = denom > 0.0 ? (sxy - sx * sy / um) / denom : 1.0;
    b = std::max(b, kMinB);
    double a = sy / um - b * sx / um;

    auto objective = [&](double aa, double bb) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = std::exp(aa + bb * lx[i]) + c - y[i];
            s += r * r;
        }
        return s;
    };

    FitReport report;
    double obj = objective(a, b);
    report.objective_trace.push_back(obj);
    double mu = 1e-3;
    double grad_inf = std::numeric_limits<double>::infinity();
    bool converged = false;
    int iter = 0;

    for (; iter < kMaxIterations; ++iter) {
        // residuals, gradient, Gauss-Newton Hessian
        double ga = 0, gb = 0, haa = 0, hab = 0, hbb = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = std::exp(a + b * lx[i]);
            const double r = e + c - y[i];
            ga += r * e;
            gb += r * e * lx[i];
            haa += e * e;
            hab += e * e * lx[i];
            hbb += e * e * lx[i] * lx[i];
        }
        ga *= 2.0;
        gb *= 2.0;
        grad_inf = std::max(std::fabs(ga), std::fabs(gb));
        if (grad_inf < kGradTol) {
            converged = true;
            break;
        }

        bool accepted = false;
        bool tiny_drop = false;
        while (mu < 1e12) {
            const double m00 = haa * (1.0 + mu);
            const double m11 = hbb * (1.0 + mu);
            const double det = m00 * m11 - hab * hab;
            if (std::fabs(det) < 1e-300) {
                mu *= 10.0;
                continue;
            }
            // solve (H + mu diag(H)) step = -g/2   (factor 2 folded out)
            const double rhs0 = -0.5 * ga;
            const double rhs1 = -0.5 * gb;
            const double da = (m11 * rhs0 - hab * rhs1) / det;
            const double db = (m00 * rhs1 - hab * rhs0) / det;
            const double a_new = a + da;
            const double b_new = std::max(b + db, kMinB);
            const double obj_new = objective(a_new, b_new);
            if (std::isfinite(obj_new) && obj_new < obj) {
                tiny_drop = (obj - obj_new) < kObjectiveRelTol * std::max(obj, 1e-300);
                a = a_new;
                b = b_new;
                obj = obj_new;
                report.objective_trace.push_back(obj);
                mu = std::max(mu / 3.0, 1e-12);
                accepted = true;
                break;
            }
            mu *= 10.0;
        }
        if (!accepted) break;  // damping exhausted with the gradient still large
        if (tiny_drop) {
            converged = true;
            ++iter;
            break;
        }
    }

    // gradient at the exit point (grad_inf above is pre-step)
    {
        double ga = 0, gb = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = std::exp(a + b * lx[i]);
            const double r = e + c - y[i];
            ga += 2.0 * r * e;
            gb += 2.0 * r * e * lx[i];
        }
        grad_inf = std::max(std::fabs(ga), std::fabs(gb));
    }

    report.params = {a, b, c};
    report.iterations = iter;
    report.converged = converged;
    report.grad_inf_norm = grad_inf;
    report.rmse_loss = std::sqrt(obj / static_cast<double>(n));

    double mean_y = 0;
    for (double v : y) mean_y += v;
    mean_y /= static_cast<double>(n);
    double ss_tot = 0;
    for (double v : y) ss_tot += (v - mean_y) * (v - mean_y);
    report.r_squared = ss_tot > 0.0 ? 1.0 - obj / ss_tot : (obj < 1e-300 ? 1.0 : 0.0);
    return report;
}

CurveFitBatch fit_curves_batch(const std::vector<CellRecord>& cells, Exec exec) {
    CurveFitBatch batch;
    batch.reports.resize(cells.size());
    batch.c_values.assign(cells.size(), 0.0);
    batch.errors.resize(cells.size());
    for_each_index(cells.size(), exec, [&](std::size_t i) {
        try {
            const double c = initial_loss_c(cells[i]);
            batch.c_values[i] = c;
            batch.reports[i] = fit_params(capacity_loss_series(cells[i]), c);
        } catch (const Error& e) {
            batch.errors[i] = e.what();
        }
    });
    return batch;
}

} // namespace cellspan
