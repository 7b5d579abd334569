#include "cellspan/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cellspan/error.hpp"
#include "cellspan/physics.hpp"
#include "cellspan/rng.hpp"

namespace cellspan {

using nlohmann::json;

std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::primary_test: return "primary_test";
        case Split::secondary_test: return "secondary_test";
    }
    throw DataError("unknown split value");
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "primary_test") return Split::primary_test;
    if (s == "secondary_test") return Split::secondary_test;
    throw DataError("unknown split label '" + s + "'");
}

const CycleSummary* CellRecord::summary_at(int cycle) const {
    auto it = std::lower_bound(summaries.begin(), summaries.end(), cycle,
                               [](const CycleSummary& s, int c) { return s.cycle < c; });
    if (it == summaries.end() || it->cycle != cycle) return nullptr;
    return &*it;
}

namespace {

[[noreturn]] void cell_error(const std::string& cell_id, const std::string& rule) {
    throw DataError("cell '" + cell_id + "': " + rule);
}

void validate_curve(const std::string& cell_id, int cycle, DischargeCurve& curve) {
    if (curve.voltage.size() != curve.capacity.size())
        cell_error(cell_id, "early curve for cycle " + std::to_string(cycle) +
                                " has mismatched voltage/capacity lengths");
    if (curve.voltage.size() < 4)
        cell_error(cell_id, "early curve for cycle " + std::to_string(cycle) +
                                " needs at least 4 samples");
    for (std::size_t i = 0; i < curve.voltage.size(); ++i) {
        double& v = curve.voltage[i];
        if (!std::isfinite(v) || !std::isfinite(curve.capacity[i]))
            cell_error(cell_id, "non-finite sample in early curve for cycle " +
                                    std::to_string(cycle));
        v = std::clamp(v, kVoltageMin, kVoltageMax);
        if (curve.capacity[i] < 0.0)
            cell_error(cell_id, "negative capacity in early curve for cycle " +
                                    std::to_string(cycle));
    }
}

} // namespace

void validate(const CellRecord& cell) {
    if (cell.cell_id.empty()) throw DataError("cell with empty cell_id");
    if (!(cell.nominal_capacity_ah > 0.0))
        cell_error(cell.cell_id, "nominal_capacity_ah must be > 0");
    int prev_cycle = 0;
    for (const auto& s : cell.summaries) {
        if (s.cycle < 1) cell_error(cell.cell_id, "summary cycle numbers must be >= 1");
        if (s.cycle == prev_cycle)
            cell_error(cell.cell_id, "duplicate summary cycle " + std::to_string(s.cycle));
        if (s.cycle < prev_cycle)
            cell_error(cell.cell_id, "summary cycles not increasing at cycle " +
                                         std::to_string(s.cycle));
        if (s.qd < 0.0)
            cell_error(cell.cell_id,
                       "negative discharge capacity at cycle " + std::to_string(s.cycle));
        prev_cycle = s.cycle;
    }
    if (cell.cycle_life) {
        if (*cell.cycle_life < 1) cell_error(cell.cell_id, "cycle_life must be >= 1");
        if (cell.summaries.empty() || cell.summaries.back().cycle < 100)
            cell_error(cell.cell_id, "labeled cells must cover at least cycle 100");
    }
    for (const auto& [cycle, curve] : cell.early_curves) {
        if (cycle < 1)
            cell_error(cell.cell_id, "early curve cycle numbers must be >= 1");
        // validate_curve also clips; validate() runs on already-loaded data
        DischargeCurve copy = curve;
        validate_curve(cell.cell_id, cycle, copy);
    }
}

void validate(const SyntheticSpec& spec) {
    if (spec.n_cells < 0) throw DataError("synthetic spec: n_cells must be >= 0");
    auto check_range = [](const std::array<double, 2>& r, const char* name) {
        if (!(r[0] <= r[1]))
            throw DataError(std::string("synthetic spec: empty ") + name + " range");
    };
    check_range(spec.a_range, "A");
    check_range(spec.b_range, "B");
    check_range(spec.c_range, "C");
    if (!(spec.b_range[0] > 0.0))
        throw DataError("synthetic spec: B range must be positive");
    if (!(spec.c_range[0] >= 0.0))
        throw DataError("synthetic spec: C range must be non-negative");
    if (!(spec.noise_sd >= 0.0))
        throw DataError("synthetic spec: noise_sd must be >= 0");
    if (spec.n_cells > 0 && spec.max_cycles < 105)
        throw DataError("synthetic spec: max_cycles must be >= 105 so labels and "
                        "cycle-2..100 features exist");
}

// ---------------------------------------------------------------------------
// Interchange format
// ---------------------------------------------------------------------------

namespace {

json curve_to_json(const DischargeCurve& c) {
    return json{{"v", c.voltage}, {"qd", c.capacity}};
}

json cell_to_json(const CellRecord& cell) {
    json summaries = json::object();
    std::vector<int> cycles;
    std::vector<double> qd, ir, t_avg, t_max;
    for (const auto& s : cell.summaries) {
        cycles.push_back(s.cycle);
        qd.push_back(s.qd);
        ir.push_back(s.ir);
        t_avg.push_back(s.t_avg);
        t_max.push_back(s.t_max);
    }
    summaries["cycle"] = cycles;
    summaries["qd"] = qd;
    summaries["ir"] = ir;
    summaries["t_avg"] = t_avg;
    summaries["t_max"] = t_max;

    json curves = json::object();
    for (const auto& [cycle, curve] : cell.early_curves)
        curves[std::to_string(cycle)] = curve_to_json(curve);

    json j{{"cell_id", cell.cell_id},
           {"split", to_string(cell.split)},
           {"nominal_capacity_ah", cell.nominal_capacity_ah},
           {"charge_policy", cell.charge_policy},
           {"summaries", summaries},
           {"early_curves", curves}};
    if (cell.cycle_life)
        j["cycle_life"] = *cell.cycle_life;
    else
        j["cycle_life"] = nullptr;
    return j;
}

template <class T>
T require_field(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key))
        throw DataError(where + ": missing field '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw DataError(where + ": field '" + key + "': " + e.what());
    }
}

CellRecord cell_from_json(const json& j, std::size_t index) {
    const std::string where = "cells[" + std::to_string(index) + "]";
    CellRecord cell;
    cell.cell_id = require_field<std::string>(j, "cell_id", where);
    const std::string id_where = "cell '" + cell.cell_id + "'";
    cell.split = split_from_string(require_field<std::string>(j, "split", id_where));
    cell.nominal_capacity_ah = require_field<double>(j, "nominal_capacity_ah", id_where);
    cell.charge_policy = require_field<std::string>(j, "charge_policy", id_where);
    if (j.contains("cycle_life") && !j.at("cycle_life").is_null())
        cell.cycle_life = j.at("cycle_life").get<int>();

    const json& s = j.contains("summaries") ? j.at("summaries") : json::object();
    auto cycles = require_field<std::vector<int>>(s, "cycle", id_where + " summaries");
    auto qd = require_field<std::vector<double>>(s, "qd", id_where + " summaries");
    auto ir = require_field<std::vector<double>>(s, "ir", id_where + " summaries");
    auto t_avg = require_field<std::vector<double>>(s, "t_avg", id_where + " summaries");
    auto t_max = require_field<std::vector<double>>(s, "t_max", id_where + " summaries");
    if (qd.size() != cycles.size() || ir.size() != cycles.size() ||
        t_avg.size() != cycles.size() || t_max.size() != cycles.size())
        cell_error(cell.cell_id, "summary arrays are not parallel");
    cell.summaries.reserve(cycles.size());
    for (std::size_t i = 0; i < cycles.size(); ++i)
        cell.summaries.push_back({cycles[i], qd[i], ir[i], t_avg[i], t_max[i]});

    if (j.contains("early_curves")) {
        for (const auto& [key, jc] : j.at("early_curves").items()) {
            int cycle = 0;
            try {
                cycle = std::stoi(key);
            } catch (...) {
                cell_error(cell.cell_id, "early curve key '" + key + "' is not a cycle number");
            }
            DischargeCurve curve;
            curve.voltage = require_field<std::vector<double>>(jc, "v",
                                                               id_where + " early_curves");
            curve.capacity = require_field<std::vector<double>>(jc, "qd",
                                                                id_where + " early_curves");
            validate_curve(cell.cell_id, cycle, curve);
            cell.early_curves.emplace(cycle, std::move(curve));
        }
    }
    validate(cell);
    return cell;
}

json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError("parse failure in '" + path + "': " + e.what());
    }
}

} // namespace

std::vector<CellRecord> load_dataset(const std::string& path) {
    const json root = parse_file(path);
    if (!root.contains("cells") || !root.at("cells").is_array())
        throw DataError("'" + path + "': top-level object must contain a 'cells' array");
    std::vector<CellRecord> cells;
    std::set<std::string> seen;
    cells.reserve(root.at("cells").size());
    std::size_t index = 0;
    for (const auto& jc : root.at("cells")) {
        CellRecord cell = cell_from_json(jc, index++);
        if (!seen.insert(cell.cell_id).second)
            cell_error(cell.cell_id, "duplicate cell_id in dataset");
        cells.push_back(std::move(cell));
    }
    return cells;
}

void save_dataset(const std::vector<CellRecord>& cells, const std::string& path) {
    json arr = json::array();
    for (const auto& cell : cells) arr.push_back(cell_to_json(cell));
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << json{{"cells", arr}}.dump(2) << "\n";
}

TruthMap load_truth(const std::string& path) {
    const json root = parse_file(path);
    TruthMap truth;
    for (const auto& [id, jt] : root.items()) {
        TruthRecord t;
        t.a = require_field<double>(jt, "A", "truth '" + id + "'");
        t.b = require_field<double>(jt, "B", "truth '" + id + "'");
        t.c = require_field<double>(jt, "C", "truth '" + id + "'");
        t.cycle_life_true = require_field<double>(jt, "cycle_life_true", "truth '" + id + "'");
        truth.emplace(id, t);
    }
    return truth;
}

void save_truth(const TruthMap& truth, const std::string& path) {
    json root = json::object();
    for (const auto& [id, t] : truth)
        root[id] = json{{"A", t.a}, {"B", t.b}, {"C", t.c},
                        {"cycle_life_true", t.cycle_life_true}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << root.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Capacity loss
// ---------------------------------------------------------------------------

CapacityLossSeries capacity_loss_series(const CellRecord& cell) {
    if (cell.summaries.empty())
        cell_error(cell.cell_id, "no summaries to derive a loss series from");
    CapacityLossSeries series;
    series.cycles.reserve(cell.summaries.size());
    series.loss.reserve(cell.summaries.size());
    for (const auto& s : cell.summaries) {
        double loss = 1.0 - s.qd / cell.nominal_capacity_ah;
        if (loss < 0.0) {
            loss = 0.0;
            ++series.clamped;
        }
        if (loss >= 1.0)
            cell_error(cell.cell_id, "loss reached 1 at cycle " + std::to_string(s.cycle) +
                                         " (zero capacity)");
        series.cycles.push_back(s.cycle);
        series.loss.push_back(loss);
    }
    return series;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

namespace synthetic {

// LFP-style discharge shape: ~1 at 2.0 V falling through a plateau knee to
// ~0 at 3.6 V.
double discharge_shape(double v) {
    return 0.5 * (1.0 - std::tanh((v - 3.15) / 0.12));
}

// Mid-voltage dip template, ~0 at both window edges.
double dip_template(double v) {
    const double t = (v - 3.05) / 0.12;
    return std::exp(-0.5 * t * t);
}

// Dip depth decreases with cycle life: log-linear in life so the log-scale
// dip features are affine in log cycle life. Capped so the cycle-100 curve
// stays non-negative even for degenerate draws.
double dip_amplitude(double cycle_life) {
    const double ref_life = 1000.0;
    const double ref_amp = 0.06;  // Ah at the reference life
    return std::min(ref_amp * ref_life / std::max(cycle_life, 1.0), 0.35);
}

} // namespace synthetic

namespace {

// Irregular voltage sampling mimicking measured discharge curves: sparser
// near the window edges, denser around the plateau knee. A 1 mV minimum
// spacing matches instrument resolution and keeps the interpolation system
// well conditioned.
std::vector<double> sample_curve_voltages(Rng& rng, int n) {
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(n) + 2);
    v.push_back(kVoltageMin);
    v.push_back(kVoltageMax);
    for (int i = 0; i + 2 < n; ++i) {
        const double pick = rng.uniform();
        if (pick < 0.45)
            v.push_back(rng.uniform(3.0, 3.2));
        else if (pick < 0.8)
            v.push_back(rng.uniform(kVoltageMin, 3.0));
        else
            v.push_back(rng.uniform(3.2, kVoltageMax));
    }
    std::sort(v.begin(), v.end());
    std::vector<double> spaced;
    spaced.reserve(v.size());
    for (double x : v)
        if (spaced.empty() || x - spaced.back() >= 1e-3) spaced.push_back(x);
    if (spaced.back() != kVoltageMax) spaced.push_back(kVoltageMax);
    return spaced;
}

DischargeCurve make_curve(const std::vector<double>& voltages, double scale_qd,
                          double dip_amp) {
    DischargeCurve c;
    c.voltage = voltages;
    c.capacity.reserve(voltages.size());
    for (double v : voltages) {
        // stays positive for dip_amp <= 0.35; validate() re-checks
        c.capacity.push_back(scale_qd * synthetic::discharge_shape(v) -
                             dip_amp * synthetic::dip_template(v));
    }
    return c;
}

} // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
    validate(spec);
    SyntheticDataset out;
    Rng rng(spec.rng_seed);
    const double nominal = 1.1;
    const int curve_samples = 64;

    for (int i = 0; i < spec.n_cells; ++i) {
        PhysicsParams p;
        p.a = rng.uniform(spec.a_range[0], spec.a_range[1]);
        p.b = rng.uniform(spec.b_range[0], spec.b_range[1]);
        p.c = rng.uniform(spec.c_range[0], spec.c_range[1]);

        CellRecord cell;
        char id[32];
        std::snprintf(id, sizeof id, "synth_%04d", i);
        cell.cell_id = id;
        const int slot = i % 10;
        cell.split = slot < 8 ? Split::train
                              : (slot == 8 ? Split::primary_test : Split::secondary_test);
        cell.nominal_capacity_ah = nominal;
        cell.charge_policy = "synthetic";

        const double life_true =
            p.c < kDefaultThreshold ? cycle_life(p, kDefaultThreshold)
                                    : 1.0;  // degenerate draw, already past threshold
        // Record past end of life (like the source cells) but never into
        // loss >= 1 territory.
        const int last_cycle = std::min(spec.max_cycles,
                                        std::max(105, static_cast<int>(std::ceil(1.2 * life_true))));

        std::optional<int> label;
        cell.summaries.reserve(static_cast<std::size_t>(last_cycle));
        for (int cycle = 1; cycle <= last_cycle; ++cycle) {
            const double true_loss = q_loss(p, cycle);
            if (!label && true_loss >= kDefaultThreshold) label = cycle;
            double observed = true_loss;
            if (spec.noise_sd > 0.0) observed += rng.normal(0.0, spec.noise_sd);
            CycleSummary s;
            s.cycle = cycle;
            s.qd = nominal * (1.0 - observed);
            // resistance grows with degradation, so faster-fading cells show
            // a larger rise over the first 100 cycles
            s.ir = 0.016 + 0.004 * std::pow(cycle / life_true, 0.85) +
                   5e-6 * rng.normal();
            s.t_avg = 30.0 + 0.3 * rng.normal();
            s.t_max = 32.0 + 0.3 * rng.normal();
            cell.summaries.push_back(s);
        }
        if (label && cell.summaries.back().cycle >= 100) cell.cycle_life = label;

        // Both early curves share one irregular node set per cell; the
        // cycle-100 curve carries the life-dependent dip.
        const auto voltages = sample_curve_voltages(rng, curve_samples);
        const double qd2 = cell.summaries.size() >= 2 ? cell.summaries[1].qd
                                                      : cell.summaries.front().qd;
        const double amp = synthetic::dip_amplitude(life_true);
        cell.early_curves.emplace(10, make_curve(voltages, qd2, 0.0));
        cell.early_curves.emplace(100, make_curve(voltages, qd2, amp));

        validate(cell);
        out.truth.emplace(cell.cell_id, TruthRecord{p.a, p.b, p.c, life_true});
        out.cells.push_back(std::move(cell));
    }
    return out;
}

} // namespace cellspan
