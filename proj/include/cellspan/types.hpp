#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cellspan {

// Voltage window of the cells' discharge curves (manufacturer limits).
inline constexpr double kVoltageMin = 2.0;
inline constexpr double kVoltageMax = 3.6;

// Default end-of-life threshold: 20% capacity loss (80% state of health).
inline constexpr double kDefaultThreshold = 0.2;

enum class Split { train, primary_test, secondary_test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

// Per-cycle aggregate measurements.
struct CycleSummary {
    int cycle = 0;        // >= 1
    double qd = 0.0;      // discharge capacity, Ah
    double ir = 0.0;      // internal resistance, ohm
    double t_avg = 0.0;   // average cell temperature, degC
    double t_max = 0.0;   // max cell temperature, degC
};

// Discharged capacity vs voltage for one cycle's discharge phase.
// Parallel arrays; voltages are clipped into [kVoltageMin, kVoltageMax]
// during load validation.
struct DischargeCurve {
    std::vector<double> voltage;
    std::vector<double> capacity;
};

// One battery cell: identity, split label, per-cycle summaries ordered by
// cycle number, and the early-cycle discharge curves (cycles 10 and 100 at
// minimum) the feature pipeline needs.
struct CellRecord {
    std::string cell_id;
    Split split = Split::train;
    double nominal_capacity_ah = 0.0;
    std::string charge_policy;            // opaque label
    std::optional<int> cycle_life;        // absent for prediction-only inputs
    std::vector<CycleSummary> summaries;  // strictly increasing cycle numbers
    std::map<int, DischargeCurve> early_curves;

    // nullptr if the cycle is not recorded.
    const CycleSummary* summary_at(int cycle) const;
};

// Fractional capacity loss per recorded cycle: loss = 1 - qd / nominal.
// 0.2 means 20% of nominal capacity lost.
struct CapacityLossSeries {
    std::vector<int> cycles;    // strictly increasing
    std::vector<double> loss;   // in [0, 1)
    std::size_t clamped = 0;    // raw qd > nominal occurrences clamped to 0
};

// Parameters for the synthetic ground-truth generator. The default ranges
// mimic the fitted spread of commercial cells: lives between roughly 430
// and 1750 cycles, driven mainly by the prefactor, with a narrow band of
// power-law exponents.
struct SyntheticSpec {
    int n_cells = 0;
    std::array<double, 2> a_range{-8.1, -7.4};
    std::array<double, 2> b_range{0.895, 0.905};
    std::array<double, 2> c_range{0.005, 0.02};
    double noise_sd = 0.0;      // additive Gaussian on the loss series
    int max_cycles = 2500;
    std::uint64_t rng_seed = 0;
};

// Throws DataError naming the cell and the violated rule.
void validate(const CellRecord& cell);
void validate(const SyntheticSpec& spec);

} // namespace cellspan
