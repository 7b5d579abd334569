#pragma once

#include <map>
#include <string>
#include <vector>

#include "cellspan/types.hpp"

namespace cellspan {

// True generator parameters for one synthetic cell. cycle_life_true is the
// exact (real-valued) crossing of the 20% loss threshold.
struct TruthRecord {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double cycle_life_true = 0.0;
};

using TruthMap = std::map<std::string, TruthRecord>;

struct SyntheticDataset {
    std::vector<CellRecord> cells;
    TruthMap truth;
};

// Interchange format: UTF-8 JSON, {"cells": [...]}; summaries as parallel
// arrays cycle/qd/ir/t_avg/t_max, early_curves keyed by cycle number.
std::vector<CellRecord> load_dataset(const std::string& path);
void save_dataset(const std::vector<CellRecord>& cells, const std::string& path);

// Truth sidecar: JSON map cell_id -> {A, B, C, cycle_life_true}.
TruthMap load_truth(const std::string& path);
void save_truth(const TruthMap& truth, const std::string& path);

// loss[i] = 1 - qd_i / nominal, clamped to >= 0 (clamped counts recorded).
// Throws DataError if the cell has no summaries or a loss value reaches 1.
CapacityLossSeries capacity_loss_series(const CellRecord& cell);

// Synthesizes cells whose loss series follow exp(A) * x^B + C with
// parameters drawn uniformly from the given ranges plus i.i.d. Gaussian
// noise. Deterministic per seed. Splits are assigned by index:
// 8/10 train, 1/10 primary_test, 1/10 secondary_test.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

namespace synthetic {

// Construction of the synthetic early-cycle curves, exposed so tests can
// evaluate the exact expected shapes.
//
// Cycle 10:  Qd(V) = qd2 * discharge_shape(V)
// Cycle 100: Qd(V) = qd2 * discharge_shape(V) - dip_amplitude(l) * dip_template(V)
//
// so the cycle-100/10 difference curve is the fixed template scaled by a
// strictly decreasing function of true cycle life l: shorter-lived cells
// dip deeper.
double discharge_shape(double v);
double dip_template(double v);
double dip_amplitude(double cycle_life);

} // namespace synthetic

} // namespace cellspan
