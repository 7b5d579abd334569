// cellspan: reconstructs battery capacity-loss curves from early-cycle data.
//
// Pipeline: synth -> fit-curves -> features -> train -> evaluate / predict.
// Every command writes a manifest.json into its output directory recording
// the command line, configuration, inputs and wall time.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cellspan/checkpoint.hpp"
#include "cellspan/csv.hpp"
#include "cellspan/dataset.hpp"
#include "cellspan/elastic_net.hpp"
#include "cellspan/error.hpp"
#include "cellspan/evaluate.hpp"
#include "cellspan/features.hpp"
#include "cellspan/physics.hpp"
#include "cellspan/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cellspan;

namespace {

constexpr const char* kVersion = "0.1.0";

// exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct ManifestWriter {
    std::string command;
    fs::path out_dir;
    json config = json::object();
    json inputs = json::object();
    json outputs = json::object();
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void write() const {
        json j{{"tool", "cellspan"},
               {"version", kVersion},
               {"command", command},
               {"config", config},
               {"inputs", inputs},
               {"outputs", outputs},
               {"wall_time_s",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                    .count()}};
        std::ofstream out(out_dir / "manifest.json");
        if (!out) throw DataError("cannot write manifest in '" + out_dir.string() + "'");
        out << j.dump(2) << "\n";
    }
};

void ensure_out_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory '" + dir.string() + "'");
}

// shared feature-extraction options
struct FeatureOptions {
    int grid_points = 1000;
    std::string kernel = "cubic";
    int degree = 1;

    VoltageGrid grid() const { return {kVoltageMin, kVoltageMax, grid_points}; }
    Kernel kernel_enum() const { return kernel_from_string(kernel); }
};

void add_feature_flags(CLI::App* cmd, FeatureOptions& opts) {
    cmd->add_option("--grid-points", opts.grid_points, "Voltage grid resolution")
        ->check(CLI::Range(2, 1000000));
    cmd->add_option("--kernel", opts.kernel, "RBF kernel: cubic, thin_plate, linear");
    cmd->add_option("--degree", opts.degree, "Polynomial trend degree")
        ->check(CLI::Range(0, 8));
}

std::string split_or_blank(const std::optional<int>& v) {
    return v ? std::to_string(*v) : "";
}

// ---------------------------------------------------------------------------
// per-cell pipeline shared by train/evaluate/predict
// ---------------------------------------------------------------------------

struct PipelineRow {
    const CellRecord* cell = nullptr;
    FeatureVector features;
    FitReport fit;
    double c = 0.0;
    bool fit_ok = false;
    std::string error;  // feature/fit failure
};

std::vector<PipelineRow> run_cell_pipeline(const std::vector<CellRecord>& cells,
                                           const FeatureOptions& opts) {
    const auto feats = extract_features_batch(cells, opts.grid(), opts.kernel_enum(),
                                              opts.degree, Exec::parallel);
    const auto fits = fit_curves_batch(cells, Exec::parallel);

    std::vector<PipelineRow> rows(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
        rows[i].cell = &cells[i];
        rows[i].error = feats.errors[i];
        if (rows[i].error.empty()) rows[i].features = feats.values[i];
        rows[i].c = fits.c_values[i];
        if (!fits.errors[i].empty() && rows[i].error.empty())
            rows[i].error = fits.errors[i];
        rows[i].fit_ok = fits.errors[i].empty();
        if (rows[i].fit_ok) rows[i].fit = fits.reports[i];
    }
    return rows;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(const SyntheticSpec& spec, const fs::path& out_dir) {
    ensure_out_dir(out_dir);
    ManifestWriter manifest{"synth", out_dir};
    manifest.config = {{"n_cells", spec.n_cells},
                       {"a_range", spec.a_range},
                       {"b_range", spec.b_range},
                       {"c_range", spec.c_range},
                       {"noise_sd", spec.noise_sd},
                       {"max_cycles", spec.max_cycles},
                       {"seed", spec.rng_seed}};
    const auto data = generate_synthetic(spec);
    const auto dataset_path = out_dir / "dataset.json";
    const auto truth_path = out_dir / "truth.json";
    save_dataset(data.cells, dataset_path.string());
    save_truth(data.truth, truth_path.string());
    manifest.outputs = {{"dataset", dataset_path.string()}, {"truth", truth_path.string()}};
    manifest.write();
    std::cout << "wrote " << data.cells.size() << " cells to " << dataset_path.string()
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// fit-curves
// ---------------------------------------------------------------------------

int cmd_fit_curves(const std::string& dataset_path, const std::string& truth_path,
                   const fs::path& out_dir, double threshold) {
    ensure_out_dir(out_dir);
    ManifestWriter manifest{"fit-curves", out_dir};
    manifest.config = {{"threshold", threshold}};
    manifest.inputs = {{"dataset", dataset_path}};
    if (!truth_path.empty()) manifest.inputs["truth"] = truth_path;

    const auto cells = load_dataset(dataset_path);
    TruthMap truth;
    if (!truth_path.empty()) truth = load_truth(truth_path);
    const auto batch = fit_curves_batch(cells, Exec::parallel);

    CsvTable table;
    table.header = {"cell_id", "split",         "A",
                    "B",       "C",             "r_squared",
                    "rmse_loss", "converged",   "cycle_life_fit",
                    "cycle_life_true"};
    int failures = 0;
    double mean_r2 = 0.0;
    int fitted = 0;
    std::vector<std::pair<double, double>> life_pairs;  // (fit, true)
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (!batch.errors[i].empty()) {
            std::cerr << "fit failed: " << batch.errors[i] << "\n";
            ++failures;
            continue;
        }
        const auto& rep = batch.reports[i];
        if (!rep.converged) ++failures;
        double life_fit = std::nan("");
        if (rep.params.c < threshold) life_fit = cycle_life(rep.params, threshold);
        // prefer exact truth lives when a sidecar is given
        double life_true = std::nan("");
        if (auto it = truth.find(cells[i].cell_id); it != truth.end())
            life_true = it->second.cycle_life_true;
        else if (cells[i].cycle_life)
            life_true = static_cast<double>(*cells[i].cycle_life);
        table.rows.push_back({cells[i].cell_id, to_string(cells[i].split),
                              format_double(rep.params.a), format_double(rep.params.b),
                              format_double(rep.params.c), format_double(rep.r_squared),
                              format_double(rep.rmse_loss),
                              rep.converged ? "true" : "false", format_double(life_fit),
                              format_double(life_true)});
        mean_r2 += rep.r_squared;
        ++fitted;
        if (std::isfinite(life_fit) && std::isfinite(life_true))
            life_pairs.emplace_back(life_fit, life_true);
    }
    const auto csv_path = out_dir / "params.csv";
    write_csv(table, csv_path.string());

    json summary{{"n_cells", cells.size()}, {"n_failures", failures}};
    if (fitted > 0) summary["mean_per_cell_r_squared"] = mean_r2 / fitted;
    if (life_pairs.size() >= 2) {
        double mean_true = 0.0;
        for (const auto& [f, t] : life_pairs) mean_true += t;
        mean_true /= static_cast<double>(life_pairs.size());
        double se = 0.0, ss = 0.0;
        for (const auto& [f, t] : life_pairs) {
            se += (t - f) * (t - f);
            ss += (t - mean_true) * (t - mean_true);
        }
        summary["cycle_life_r_squared"] = ss > 0 ? 1.0 - se / ss : 1.0;
        summary["cycle_life_rmse"] = std::sqrt(se / static_cast<double>(life_pairs.size()));
    }
    std::ofstream sum_out(out_dir / "summary.json");
    sum_out << summary.dump(2) << "\n";
    std::cout << summary.dump(2) << "\n";

    manifest.outputs = {{"params", csv_path.string()},
                        {"summary", (out_dir / "summary.json").string()}};
    manifest.write();
    return failures == 0 ? 0 : kExitNumeric;
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

int cmd_features(const std::string& dataset_path, const fs::path& out_dir,
                 const FeatureOptions& opts, bool dump_dq) {
    ensure_out_dir(out_dir);
    ManifestWriter manifest{"features", out_dir};
    manifest.config = {{"grid_points", opts.grid_points},
                       {"kernel", opts.kernel},
                       {"degree", opts.degree}};
    manifest.inputs = {{"dataset", dataset_path}};

    const auto cells = load_dataset(dataset_path);
    const auto rows = run_cell_pipeline(cells, opts);

    if (dump_dq) {
        // resampled difference curves, one column per grid voltage
        CsvTable dq_table;
        dq_table.header.push_back("cell_id");
        for (double v : grid_voltages(opts.grid()))
            dq_table.header.push_back(format_double(v));
        for (const auto& cell : cells) {
            try {
                const auto dq = delta_q_curve(cell, opts.grid(), opts.kernel_enum(),
                                              opts.degree);
                std::vector<std::string> out{cell.cell_id};
                for (double q : dq) out.push_back(format_double(q));
                dq_table.rows.push_back(std::move(out));
            } catch (const Error&) {
                // cells without both early curves are simply absent
            }
        }
        write_csv(dq_table, (out_dir / "delta_q_curves.csv").string());
        manifest.outputs["delta_q_curves"] = (out_dir / "delta_q_curves.csv").string();
    }

    CsvTable table;
    table.header = {"cell_id", "split"};
    for (const char* name : kCandidateFeatures) table.header.push_back(name);
    table.header.insert(table.header.end(), {"A", "B", "C", "cycle_life"});

    std::vector<FeatureVector> train_fv;
    std::vector<std::pair<double, double>> train_targets;
    int skipped = 0;
    for (const auto& row : rows) {
        if (!row.error.empty() || !row.fit_ok) {
            std::cerr << "skipping cell '" << row.cell->cell_id << "': " << row.error
                      << "\n";
            ++skipped;
            continue;
        }
        std::vector<std::string> out{row.cell->cell_id, to_string(row.cell->split)};
        for (const char* name : kCandidateFeatures)
            out.push_back(format_double(row.features.at(name)));
        out.push_back(format_double(row.fit.params.a));
        out.push_back(format_double(row.fit.params.b));
        out.push_back(format_double(row.c));
        out.push_back(split_or_blank(row.cell->cycle_life));
        table.rows.push_back(std::move(out));
        if (row.cell->split == Split::train) {
            train_fv.push_back(row.features);
            train_targets.emplace_back(row.fit.params.a, row.fit.params.b);
        }
    }
    const auto csv_path = out_dir / "features.csv";
    write_csv(table, csv_path.string());

    const auto report = select_features(train_fv, train_targets);
    json jreport = json::array();
    for (const auto& r : report.rows)
        jreport.push_back({{"feature", r.name},
                           {"rho_A", r.rho_a},
                           {"rho_B", r.rho_b},
                           {"valid", r.valid},
                           {"selected", r.selected}});
    json out{{"correlations", jreport}, {"selected_order", report.selected_order}};
    std::ofstream rep_out(out_dir / "correlations.json");
    rep_out << out.dump(2) << "\n";
    std::cout << "selected:";
    for (const auto& n : report.selected_order) std::cout << " " << n;
    std::cout << "\n";
    if (skipped > 0) std::cout << "skipped " << skipped << " cells\n";

    manifest.outputs = {{"features", csv_path.string()},
                        {"correlations", (out_dir / "correlations.json").string()}};
    manifest.write();
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct LoadedSamples {
    std::vector<TrainSample> train, primary;
};

LoadedSamples samples_from_tables(const CsvTable& features, const CsvTable& params,
                                  const Standardizer& st, double threshold) {
    // params.csv keyed by cell_id for (A, B, C); features.csv carries the
    // split, candidate features, and the label
    std::map<std::string, std::array<double, 3>> abc;
    const int pid = params.column("cell_id");
    const int pa = params.column("A");
    const int pb = params.column("B");
    const int pc = params.column("C");
    if (pid < 0 || pa < 0 || pb < 0 || pc < 0)
        throw DataError("params CSV must have cell_id, A, B, C columns");
    for (const auto& row : params.rows)
        abc[row[pid]] = {std::stod(row[pa]), std::stod(row[pb]), std::stod(row[pc])};

    const int fid = features.column("cell_id");
    const int fsplit = features.column("split");
    const int flife = features.column("cycle_life");
    if (fid < 0 || fsplit < 0 || flife < 0)
        throw DataError("features CSV must have cell_id, split, cycle_life columns");

    LoadedSamples out;
    for (const auto& row : features.rows) {
        auto it = abc.find(row[fid]);
        if (it == abc.end())
            throw DataError("cell '" + row[fid] + "' missing from params CSV");
        if (row[flife].empty()) continue;  // unlabeled: cannot train on it
        TrainSample s;
        s.cell_id = row[fid];
        FeatureVector fv;
        for (const char* name : kCandidateFeatures) {
            const int col = features.column(name);
            if (col < 0) throw DataError(std::string("features CSV missing column ") + name);
            fv.set(name, std::stod(row[col]));
        }
        s.z = st.apply(fv);
        s.a_target = it->second[0];
        s.b_target = it->second[1];
        s.c = it->second[2];
        s.life_true = std::stod(row[flife]);
        if (!(s.c < threshold)) continue;  // cannot invert for this cell
        const Split split = split_from_string(row[fsplit]);
        if (split == Split::train)
            out.train.push_back(std::move(s));
        else if (split == Split::primary_test)
            out.primary.push_back(std::move(s));
    }
    return out;
}

Standardizer standardizer_from_tables(const CsvTable& features,
                                      const std::vector<std::string>& selected) {
    const int fsplit = features.column("split");
    std::vector<FeatureVector> train_fv;
    for (const auto& row : features.rows) {
        if (split_from_string(row[fsplit]) != Split::train) continue;
        FeatureVector fv;
        for (const char* name : kCandidateFeatures)
            fv.set(name, std::stod(row[features.column(name)]));
        train_fv.push_back(std::move(fv));
    }
    return Standardizer::fit(train_fv, selected);
}

int cmd_train(const std::string& features_path, const std::string& params_path,
              const fs::path& out_dir, const TrainConfig& cfg, int embed_dim,
              bool baseline, const std::vector<double>& alpha_grid,
              const std::vector<double>& l1_grid, const FeatureOptions& opts) {
    ensure_out_dir(out_dir);
    ManifestWriter manifest{"train", out_dir};
    manifest.inputs = {{"features", features_path}, {"params", params_path}};
    manifest.config = {{"stage1_epochs", cfg.stage1_epochs},
                       {"stage1_lr", cfg.stage1_lr},
                       {"stage2_epochs", cfg.stage2_epochs},
                       {"stage2_lr", cfg.stage2_lr},
                       {"w_a", cfg.w_a},
                       {"w_b", cfg.w_b},
                       {"seed", cfg.rng_seed},
                       {"threshold", cfg.threshold},
                       {"embed_dim", embed_dim},
                       {"model", baseline ? "elastic_net" : "attention"}};

    const auto features = read_csv(features_path);
    const auto params = read_csv(params_path);

    // feature selection on the train rows of the table
    std::vector<FeatureVector> train_fv;
    std::vector<std::pair<double, double>> train_targets;
    {
        const int fid = features.column("cell_id");
        const int fsplit = features.column("split");
        if (fid < 0 || fsplit < 0)
            throw DataError("features CSV must have cell_id and split columns");
        std::map<std::string, std::array<double, 2>> ab;
        const int pid = params.column("cell_id");
        for (const auto& row : params.rows)
            ab[row[pid]] = {std::stod(row[params.column("A")]),
                            std::stod(row[params.column("B")])};
        for (const auto& row : features.rows) {
            if (split_from_string(row[fsplit]) != Split::train) continue;
            auto it = ab.find(row[fid]);
            if (it == ab.end()) continue;
            FeatureVector fv;
            for (const char* name : kCandidateFeatures)
                fv.set(name, std::stod(row[features.column(name)]));
            train_fv.push_back(std::move(fv));
            train_targets.emplace_back(it->second[0], it->second[1]);
        }
    }
    const auto selection = select_features(train_fv, train_targets);
    const auto st = standardizer_from_tables(features, selection.selected_order);
    const auto samples = samples_from_tables(features, params, st, cfg.threshold);
    if (samples.train.empty()) throw DataError("no labeled train cells to fit");

    Checkpoint ckpt;
    ckpt.threshold = cfg.threshold;
    ckpt.grid = opts.grid();
    ckpt.kernel = opts.kernel_enum();
    ckpt.degree = opts.degree;
    ckpt.standardizer = st;
    ckpt.train_config = cfg;

    if (baseline) {
        const auto& selection_split = samples.primary.empty() ? samples.train
                                                              : samples.primary;
        const auto tuned = tune_elastic_net(samples.train, selection_split, alpha_grid,
                                            l1_grid, cfg.threshold);
        ckpt.kind = ModelKind::elastic_net;
        ckpt.baseline = tuned.model;
        std::cout << "elastic net: alpha=" << tuned.model.alpha
                  << " l1_ratio=" << tuned.model.l1_ratio
                  << " selection RMSE=" << tuned.primary_rmse << "\n";
    } else {
        const auto calib = fit_calibration(samples.train);
        const auto result = train_two_stage(
            init_attention(5, embed_dim, 2, cfg.rng_seed), calib, samples.train, cfg,
            Exec::parallel);
        ckpt.kind = ModelKind::attention;
        ckpt.model = result.model;
        ckpt.calib = result.calib;

        CsvTable history;
        history.header = {"epoch", "stage", "param_loss", "cycle_life_loss"};
        for (const auto& h : result.history)
            history.rows.push_back({std::to_string(h.epoch), std::to_string(h.stage),
                                    format_double(h.param_loss),
                                    format_double(h.cycle_life_loss)});
        write_csv(history, (out_dir / "history.csv").string());
        manifest.outputs["history"] = (out_dir / "history.csv").string();
        if (!result.history.empty())
            std::cout << "final losses: param=" << result.history.back().param_loss
                      << " cycle=" << result.history.back().cycle_life_loss << "\n";
    }

    const auto ckpt_path = out_dir / "checkpoint.json";
    save_checkpoint(ckpt, ckpt_path.string());
    manifest.outputs["checkpoint"] = ckpt_path.string();
    manifest.write();
    std::cout << "wrote " << ckpt_path.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate / predict
// ---------------------------------------------------------------------------

CsvTable prediction_table(const EvalReport& report) {
    CsvTable table;
    table.header = {"cell_id", "split",     "A_hat",     "B_hat",    "C",
                    "life_pred", "life_true", "A_fit",   "B_fit"};
    for (const auto& cell : report.cells) {
        table.rows.push_back(
            {cell.cell_id, to_string(cell.split), format_double(cell.a_hat),
             format_double(cell.b_hat), format_double(cell.c),
             format_double(cell.life_pred),
             cell.life_true ? format_double(*cell.life_true) : "",
             cell.a_fit ? format_double(*cell.a_fit) : "",
             cell.b_fit ? format_double(*cell.b_fit) : ""});
    }
    return table;
}

json report_to_json(const EvalReport& report) {
    json splits = json::object();
    for (const auto& [split, m] : report.splits)
        splits[to_string(split)] = {{"n_cells", m.n_cells},
                                    {"rmse_cycles", m.rmse_cycles},
                                    {"rmse_params", m.rmse_params},
                                    {"r_squared", m.r_squared}};
    return json{{"threshold", report.threshold},
                {"splits", splits},
                {"notices", report.notices}};
}

// reconstructed loss curves for plotting, one row per sampled cycle
CsvTable curve_table(const EvalReport& report, int samples_per_cell) {
    CsvTable table;
    table.header = {"cell_id", "cycle", "q_loss_pred"};
    for (const auto& cell : report.cells) {
        const PhysicsParams params{cell.a_hat, cell.b_hat, cell.c};
        const double horizon = 1.1 * cell.life_pred;
        for (int k = 1; k <= samples_per_cell; ++k) {
            const double x = horizon * k / samples_per_cell;
            table.rows.push_back({cell.cell_id, format_double(x),
                                  format_double(q_loss(params, x))});
        }
    }
    return table;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& dataset_path,
                 const fs::path& out_dir, std::optional<double> threshold_flag) {
    ensure_out_dir(out_dir);
    ManifestWriter manifest{"evaluate", out_dir};
    manifest.inputs = {{"checkpoint", ckpt_path}, {"dataset", dataset_path}};

    const auto ckpt = load_checkpoint(ckpt_path);
    const double threshold = threshold_flag.value_or(ckpt.threshold);
    manifest.config = {{"threshold", threshold}};
    const auto cells = load_dataset(dataset_path);
    const auto report = evaluate(cells, ckpt.predictor(), ckpt.standardizer, ckpt.grid,
                                 ckpt.kernel, ckpt.degree, threshold, Exec::parallel);

    write_csv(prediction_table(report), (out_dir / "predictions.csv").string());
    write_csv(curve_table(report, 100), (out_dir / "curves.csv").string());
    const json jreport = report_to_json(report);
    std::ofstream rep_out(out_dir / "report.json");
    rep_out << jreport.dump(2) << "\n";
    std::cout << jreport.dump(2) << "\n";

    manifest.outputs = {{"report", (out_dir / "report.json").string()},
                        {"predictions", (out_dir / "predictions.csv").string()},
                        {"curves", (out_dir / "curves.csv").string()}};
    manifest.write();
    return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& cell_path,
                const fs::path& out_dir, std::optional<double> threshold_flag,
                const std::vector<double>& sweep) {
    ensure_out_dir(out_dir);
    ManifestWriter manifest{"predict", out_dir};
    manifest.inputs = {{"checkpoint", ckpt_path}, {"cell", cell_path}};

    const auto ckpt = load_checkpoint(ckpt_path);
    const double threshold = threshold_flag.value_or(ckpt.threshold);
    manifest.config = {{"threshold", threshold}};
    const auto cells = load_dataset(cell_path);
    if (cells.empty()) throw DataError("no cells in '" + cell_path + "'");

    // same code path as evaluate, so rows agree byte for byte
    const auto report = evaluate(cells, ckpt.predictor(), ckpt.standardizer, ckpt.grid,
                                 ckpt.kernel, ckpt.degree, threshold, Exec::parallel);
    if (report.cells.empty()) {
        for (const auto& notice : report.notices) std::cerr << notice << "\n";
        throw DataError("no predictable cells in '" + cell_path + "'");
    }
    write_csv(prediction_table(report), (out_dir / "predictions.csv").string());
    write_csv(curve_table(report, 100), (out_dir / "curves.csv").string());

    json jcells = json::array();
    for (const auto& cell : report.cells) {
        json jc{{"cell_id", cell.cell_id},
                {"A_hat", cell.a_hat},
                {"B_hat", cell.b_hat},
                {"C", cell.c},
                {"life_pred", cell.life_pred}};
        if (!sweep.empty()) {
            json lives = json::object();
            for (double t : sweep) {
                if (t <= cell.c || t >= 1.0) continue;
                lives[format_double(t)] =
                    cycle_life(PhysicsParams{cell.a_hat, cell.b_hat, cell.c}, t);
            }
            jc["life_by_threshold"] = lives;
        }
        jcells.push_back(std::move(jc));
    }
    std::ofstream pred_out(out_dir / "prediction.json");
    pred_out << jcells.dump(2) << "\n";
    std::cout << jcells.dump(2) << "\n";

    manifest.outputs = {{"prediction", (out_dir / "prediction.json").string()},
                        {"predictions", (out_dir / "predictions.csv").string()},
                        {"curves", (out_dir / "curves.csv").string()}};
    manifest.write();
    return 0;
}

std::vector<double> parse_grid(const std::string& csv, const char* what) {
    std::vector<double> values;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            values.push_back(std::stod(tok));
        } catch (...) {
            throw DataError(std::string("bad ") + what + " grid value '" + tok + "'");
        }
    }
    if (values.empty()) throw DataError(std::string("empty ") + what + " grid");
    return values;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cellspan: battery capacity-loss curve reconstruction from "
                 "early-cycle data"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with truth");
    SyntheticSpec spec;
    std::string synth_out;
    std::vector<double> a_range{spec.a_range[0], spec.a_range[1]};
    std::vector<double> b_range{spec.b_range[0], spec.b_range[1]};
    std::vector<double> c_range{spec.c_range[0], spec.c_range[1]};
    synth->add_option("--n-cells", spec.n_cells, "Number of cells")->required();
    synth->add_option("--seed", spec.rng_seed, "RNG seed");
    synth->add_option("--noise-sd", spec.noise_sd, "Gaussian noise on the loss series");
    synth->add_option("--max-cycles", spec.max_cycles, "Recording horizon");
    synth->add_option("--a-range", a_range, "A range (two values)")->expected(2);
    synth->add_option("--b-range", b_range, "B range (two values)")->expected(2);
    synth->add_option("--c-range", c_range, "C range (two values)")->expected(2);
    synth->add_option("--out", synth_out, "Output directory")->required();

    // fit-curves
    auto* fitc = app.add_subcommand("fit-curves", "Fit the loss law per cell");
    std::string fit_dataset, fit_truth, fit_out;
    double fit_threshold = kDefaultThreshold;
    fitc->add_option("--dataset", fit_dataset, "Dataset JSON")->required();
    fitc->add_option("--truth", fit_truth, "Truth sidecar JSON (optional)");
    fitc->add_option("--threshold", fit_threshold, "End-of-life loss threshold");
    fitc->add_option("--out", fit_out, "Output directory")->required();

    // features
    auto* feat = app.add_subcommand("features", "Extract features and correlations");
    std::string feat_dataset, feat_out;
    FeatureOptions feat_opts;
    bool feat_dump_dq = false;
    feat->add_option("--dataset", feat_dataset, "Dataset JSON")->required();
    feat->add_option("--out", feat_out, "Output directory")->required();
    feat->add_flag("--dump-dq", feat_dump_dq,
                   "Also write the resampled difference curves as CSV");
    add_feature_flags(feat, feat_opts);

    // train
    auto* train = app.add_subcommand("train", "Two-stage training (or baseline)");
    std::string train_features, train_params, train_out;
    std::string alpha_grid_csv, l1_grid_csv;
    TrainConfig cfg;
    int embed_dim = 8;
    bool baseline = false;
    FeatureOptions train_opts;
    train->add_option("--features", train_features, "features.csv from 'features'")
        ->required();
    train->add_option("--params", train_params, "params.csv from 'fit-curves'")
        ->required();
    train->add_option("--out", train_out, "Output directory")->required();
    train->add_option("--seed", cfg.rng_seed, "RNG seed");
    train->add_option("--threshold", cfg.threshold, "End-of-life loss threshold");
    train->add_option("--embed-dim", embed_dim, "Attention embedding dimension")
        ->check(CLI::Range(1, 4096));
    train->add_option("--stage1-epochs", cfg.stage1_epochs, "Stage-1 epochs")
        ->check(CLI::Range(0, 10000000));
    train->add_option("--stage1-lr", cfg.stage1_lr, "Stage-1 learning rate");
    train->add_option("--stage2-epochs", cfg.stage2_epochs, "Stage-2 epochs")
        ->check(CLI::Range(0, 10000000));
    train->add_option("--stage2-lr", cfg.stage2_lr, "Stage-2 learning rate");
    train->add_option("--w-a", cfg.w_a, "Parameter-loss weight for A");
    train->add_option("--w-b", cfg.w_b, "Parameter-loss weight for B");
    train->add_flag("--baseline", baseline, "Fit the elastic-net baseline instead");
    train->add_option("--alpha-grid", alpha_grid_csv, "Comma-separated alpha grid");
    train->add_option("--l1-grid", l1_grid_csv, "Comma-separated l1_ratio grid");
    add_feature_flags(train, train_opts);

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
    std::string eval_ckpt, eval_dataset, eval_out;
    double eval_threshold = -1.0;
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint.json")->required();
    eval->add_option("--dataset", eval_dataset, "Dataset JSON")->required();
    eval->add_option("--threshold", eval_threshold,
                     "End-of-life threshold (defaults to the checkpoint's)");
    eval->add_option("--out", eval_out, "Output directory")->required();

    // predict
    auto* pred = app.add_subcommand("predict", "Predict for a single-cell file");
    std::string pred_ckpt, pred_cell, pred_out, sweep_csv;
    double pred_threshold = -1.0;
    pred->add_option("--checkpoint", pred_ckpt, "checkpoint.json")->required();
    pred->add_option("--cell", pred_cell, "Single-cell dataset JSON")->required();
    pred->add_option("--threshold", pred_threshold,
                     "End-of-life threshold (defaults to the checkpoint's)");
    pred->add_option("--sweep", sweep_csv, "Comma-separated threshold sweep");
    pred->add_option("--out", pred_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    try {
        if (synth->parsed()) {
            spec.a_range = {a_range[0], a_range[1]};
            spec.b_range = {b_range[0], b_range[1]};
            spec.c_range = {c_range[0], c_range[1]};
            return cmd_synth(spec, synth_out);
        }
        if (fitc->parsed())
            return cmd_fit_curves(fit_dataset, fit_truth, fit_out, fit_threshold);
        if (feat->parsed())
            return cmd_features(feat_dataset, feat_out, feat_opts, feat_dump_dq);
        if (train->parsed()) {
            const auto alphas = alpha_grid_csv.empty() ? default_alpha_grid()
                                                       : parse_grid(alpha_grid_csv, "alpha");
            int clamped = 0;
            auto l1s = l1_grid_csv.empty() ? default_l1_grid(&clamped)
                                           : parse_grid(l1_grid_csv, "l1_ratio");
            for (auto& v : l1s) {
                if (v > 1.0) {
                    std::cerr << "warning: l1_ratio " << v << " clamped to 1\n";
                    v = 1.0;
                }
            }
            return cmd_train(train_features, train_params, train_out, cfg, embed_dim,
                             baseline, alphas, l1s, train_opts);
        }
        if (eval->parsed())
            return cmd_evaluate(eval_ckpt, eval_dataset, eval_out,
                                eval_threshold > 0 ? std::optional<double>(eval_threshold)
                                                   : std::nullopt);
        if (pred->parsed()) {
            std::vector<double> sweep;
            if (!sweep_csv.empty()) sweep = parse_grid(sweep_csv, "threshold sweep");
            return cmd_predict(pred_ckpt, pred_cell, pred_out,
                               pred_threshold > 0 ? std::optional<double>(pred_threshold)
                                                  : std::nullopt,
                               sweep);
        }
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
