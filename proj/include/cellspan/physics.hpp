#pragma once

#include <array>
#include <string>
#include <vector>

#include "cellspan/parallel.hpp"
#include "cellspan/types.hpp"

namespace cellspan {

// Reduced capacity-loss law: q_loss(x) = exp(A) * x^B + C over cycle
// number x. A = ln of the (huge) Arrhenius prefactor, so all evaluation
// happens in log space. C is the fixed per-cell initial loss, not fitted.
struct PhysicsParams {
    double a = 0.0;  // log prefactor
    double b = 1.0;  // power-law exponent, > 0
    double c = 0.0;  // initial fractional loss, >= 0
};

struct FitReport {
    PhysicsParams params{};
    double r_squared = 0.0;
    double rmse_loss = 0.0;               // in loss-fraction units
    int iterations = 0;
    bool converged = false;
    double grad_inf_norm = 0.0;           // at exit
    std::vector<double> objective_trace;  // accepted-step objectives
};

// exp(A + B ln x) + C; x = 0 returns C (continuity limit for B > 0).
double q_loss(const PhysicsParams& p, double x);

// Partial derivatives of q_loss w.r.t. (A, B) at cycle x.
std::array<double, 2> q_loss_grad_ab(const PhysicsParams& p, double x);

// C = max(0, 1 - qd(first recorded cycle) / nominal).
double initial_loss_c(const CellRecord& cell);

// Least-squares fit of (A, B) on the original loss scale by Gauss-Newton
// with Levenberg-Marquardt damping; log-linear OLS on ln(loss - C) seeds
// the iteration. B is kept positive by projection at 1e-6. Non-convergence
// within 200 iterations is reported, not thrown.
FitReport fit_params(const CapacityLossSeries& series, double c);

// Inverts the loss law at the given threshold:
//   cycle_life = [exp(-A) * (threshold - C)]^(1/B)
// computed in log space. Requires C < threshold < 1 and B > 0.
double cycle_life(const PhysicsParams& p, double threshold);

// Per-cell loss-series fits. Failures are captured per cell; serial and
// parallel execution produce bit-identical results.
struct CurveFitBatch {
    std::vector<FitReport> reports;   // default-initialized on failure
    std::vector<double> c_values;     // initial loss per cell
    std::vector<std::string> errors;  // empty string when ok
};

CurveFitBatch fit_curves_batch(const std::vector<CellRecord>& cells, Exec exec);

} // namespace cellspan
