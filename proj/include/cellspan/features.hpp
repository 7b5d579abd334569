#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cellspan/parallel.hpp"
#include "cellspan/rbf.hpp"
#include "cellspan/types.hpp"

namespace cellspan {

// Candidate features computed per cell from the first 100 cycles.
inline constexpr std::array<const char*, 13> kCandidateFeatures = {
    "DeltaQ_logVar",
    "DeltaQ_logMin",
    "DeltaQ_logMean",
    "DeltaQ_logSkew",
    "DeltaQ_logKurt",
    "Slope_capacity_fade_2_100",
    "Slope_capacity_fade_91_100",
    "QD_Max_2",
    "QD_2",
    "Intercept_capacity_fade_2_100",
    "Intercept_capacity_fade_91_100",
    "Min_IR",
    "IR_100_2",
};

// All values finite; construction rejects NaN/Inf.
struct FeatureVector {
    std::map<std::string, double> values;

    double at(const std::string& name) const;
    void set(const std::string& name, double value);
};

struct FeatureCorrelation {
    std::string name;
    double rho_a = 0.0;   // Spearman correlation against fitted A
    double rho_b = 0.0;   // against fitted B
    bool valid = false;   // correlation computable (non-degenerate column)
    bool selected = false;
};

struct CorrelationReport {
    std::vector<FeatureCorrelation> rows;        // candidate order
    std::vector<std::string> selected_order;     // exactly 5, score-descending
};

// Affine per-feature scaling fitted on the train split only.
struct Standardizer {
    std::vector<std::string> names;  // model input order
    std::vector<double> mean;
    std::vector<double> sd;          // population sd, > 0

    // Throws DataError on a constant column.
    static Standardizer fit(const std::vector<FeatureVector>& train_features,
                            const std::vector<std::string>& names);

    // (x - mean) / sd in stored order; unseen feature name -> DataError.
    std::vector<double> apply(const FeatureVector& fv) const;
};

// Difference of the resampled cycle-100 and cycle-10 discharge curves on
// the shared grid. Throws DataError naming the missing cycle.
std::vector<double> delta_q_curve(const CellRecord& cell, const VoltageGrid& grid,
                                  Kernel kernel = Kernel::cubic, int degree = 1);

// Computes the full candidate set. Degenerate cells (zero variance or any
// zero statistic ahead of a log) and missing summary cycles raise DataError.
FeatureVector extract_features(const CellRecord& cell, const VoltageGrid& grid,
                               Kernel kernel = Kernel::cubic, int degree = 1);

// Spearman rank correlation: Pearson on fractional ranks, ties averaged.
double spearman(std::span<const double> x, std::span<const double> y);

// Scores every candidate by max(|rho_A|, |rho_B|) against the fitted
// per-cell (A, B) targets (train split only) and marks the top five.
// Deterministic tie-break by feature name.
CorrelationReport select_features(const std::vector<FeatureVector>& features,
                                  const std::vector<std::pair<double, double>>& targets);

// Batch feature extraction. Failed cells get an error message instead of a
// value; both variants produce bit-identical results.
struct FeatureBatch {
    std::vector<FeatureVector> values;   // one per cell (empty on failure)
    std::vector<std::string> errors;     // empty string when ok
};

FeatureBatch extract_features_batch(const std::vector<CellRecord>& cells,
                                    const VoltageGrid& grid, Kernel kernel, int degree,
                                    Exec exec);

} // namespace cellspan
