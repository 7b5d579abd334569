#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cellspan/features.hpp"
#include "cellspan/parallel.hpp"
#include "cellspan/types.hpp"

namespace cellspan {

// Maps a standardized input vector to predicted (A_hat, B_hat).
using ParamPredictor = std::function<std::array<double, 2>(std::span<const double>)>;

struct SplitMetrics {
    int n_cells = 0;        // cells with a prediction and a true life
    double rmse_cycles = 0.0;
    double rmse_params = 0.0;  // unit-weight parameter RMSE vs refitted (A, B)
    double r_squared = 0.0;    // on cycle life
};

struct CellPrediction {
    std::string cell_id;
    Split split = Split::train;
    double a_hat = 0.0;
    double b_hat = 0.0;
    double c = 0.0;
    double life_pred = 0.0;
    std::optional<double> life_true;
    std::optional<double> a_fit;  // refit targets, when available
    std::optional<double> b_fit;
};

struct EvalReport {
    double threshold = 0.0;
    std::map<Split, SplitMetrics> splits;     // absent splits omitted
    std::vector<CellPrediction> cells;        // ordered by cell_id
    std::vector<std::string> notices;         // skipped cells, absent splits
};

// Runs the full per-cell prediction path (features -> standardize ->
// predict -> invert at threshold) and aggregates per-split metrics.
// Cells whose features or inversion fail are skipped with a notice.
EvalReport evaluate(const std::vector<CellRecord>& cells, const ParamPredictor& predictor,
                    const Standardizer& standardizer, const VoltageGrid& grid,
                    Kernel kernel, int degree, double threshold,
                    Exec exec = Exec::parallel);

} // namespace cellspan
