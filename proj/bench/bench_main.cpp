// Kernel benchmark: times the per-cell batch kernels in serial and OpenMP
// execution and verifies both produce identical results. Sizes are chosen
// so each kernel runs long enough to time meaningfully on a laptop.
//
// Usage: cellspan_bench [n_cells]   (default 400)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "cellspan/dataset.hpp"
#include "cellspan/evaluate.hpp"
#include "cellspan/features.hpp"
#include "cellspan/parallel.hpp"
#include "cellspan/physics.hpp"
#include "cellspan/training.hpp"

using namespace cellspan;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Row {
    const char* name;
    double serial_s;
    double parallel_s;
    bool identical;
};

void print_rows(const std::vector<Row>& rows) {
    std::printf("%-24s %12s %12s %9s %s\n", "kernel", "serial [s]", "openmp [s]",
                "speedup", "identical");
    for (const auto& row : rows)
        std::printf("%-24s %12.3f %12.3f %8.2fx %s\n", row.name, row.serial_s,
                    row.parallel_s, row.serial_s / row.parallel_s,
                    row.identical ? "yes" : "NO");
}

} // namespace

int main(int argc, char** argv) {
    const int n_cells = argc > 1 ? std::atoi(argv[1]) : 400;
    std::printf("threads: %d, cells: %d\n", effective_threads(), n_cells);

    SyntheticSpec spec;
    spec.n_cells = n_cells;
    spec.noise_sd = 1e-4;
    spec.rng_seed = 99;
    const auto data = generate_synthetic(spec);
    const VoltageGrid grid{kVoltageMin, kVoltageMax, 1000};

    std::vector<Row> rows;

    // curve fitting
    auto t0 = Clock::now();
    const auto fits_serial = fit_curves_batch(data.cells, Exec::serial);
    const double fit_serial_s = seconds_since(t0);
    t0 = Clock::now();
    const auto fits_parallel = fit_curves_batch(data.cells, Exec::parallel);
    const double fit_parallel_s = seconds_since(t0);
    bool fits_same = true;
    for (std::size_t i = 0; i < data.cells.size(); ++i)
        fits_same = fits_same &&
                    fits_serial.reports[i].params.a == fits_parallel.reports[i].params.a &&
                    fits_serial.reports[i].params.b == fits_parallel.reports[i].params.b;
    rows.push_back({"fit_curves_batch", fit_serial_s, fit_parallel_s, fits_same});

    // feature extraction (dominated by the RBF solves)
    t0 = Clock::now();
    const auto feats_serial =
        extract_features_batch(data.cells, grid, Kernel::cubic, 1, Exec::serial);
    const double feat_serial_s = seconds_since(t0);
    t0 = Clock::now();
    const auto feats_parallel =
        extract_features_batch(data.cells, grid, Kernel::cubic, 1, Exec::parallel);
    const double feat_parallel_s = seconds_since(t0);
    bool feats_same = true;
    for (std::size_t i = 0; i < data.cells.size(); ++i)
        feats_same = feats_same && feats_serial.values[i].values ==
                                       feats_parallel.values[i].values;
    rows.push_back({"extract_features_batch", feat_serial_s, feat_parallel_s, feats_same});

    // training epochs (per-example forward/backward under both policies)
    std::vector<FeatureVector> train_fv;
    std::vector<std::pair<double, double>> targets;
    for (std::size_t i = 0; i < data.cells.size(); ++i)
        if (data.cells[i].split == Split::train) {
            train_fv.push_back(feats_serial.values[i]);
            targets.emplace_back(fits_serial.reports[i].params.a,
                                 fits_serial.reports[i].params.b);
        }
    const auto selection = select_features(train_fv, targets);
    const auto standardizer = Standardizer::fit(train_fv, selection.selected_order);
    std::vector<TrainSample> samples;
    for (std::size_t i = 0; i < data.cells.size(); ++i) {
        if (data.cells[i].split != Split::train) continue;
        TrainSample s;
        s.cell_id = data.cells[i].cell_id;
        s.z = standardizer.apply(feats_serial.values[i]);
        s.a_target = fits_serial.reports[i].params.a;
        s.b_target = fits_serial.reports[i].params.b;
        s.c = fits_serial.c_values[i];
        s.life_true = static_cast<double>(*data.cells[i].cycle_life);
        samples.push_back(std::move(s));
    }
    TrainConfig cfg;
    cfg.stage1_epochs = 400;
    cfg.stage2_epochs = 200;
    const auto calib = fit_calibration(samples);
    t0 = Clock::now();
    const auto train_serial =
        train_two_stage(init_attention(5, 8, 2, 0), calib, samples, cfg, Exec::serial);
    const double train_serial_s = seconds_since(t0);
    t0 = Clock::now();
    const auto train_parallel =
        train_two_stage(init_attention(5, 8, 2, 0), calib, samples, cfg, Exec::parallel);
    const double train_parallel_s = seconds_since(t0);
    const bool train_same = train_serial.model.w_q == train_parallel.model.w_q &&
                            train_serial.model.w_k == train_parallel.model.w_k &&
                            train_serial.model.w_v == train_parallel.model.w_v;
    rows.push_back({"train_two_stage", train_serial_s, train_parallel_s, train_same});

    // evaluation
    const AttentionModel& model = train_serial.model;
    auto predictor = [&model, &calib](std::span<const double> z) {
        return calib.map(forward(model, z).y);
    };
    t0 = Clock::now();
    const auto eval_serial = evaluate(data.cells, predictor, standardizer, grid,
                                      Kernel::cubic, 1, 0.2, Exec::serial);
    const double eval_serial_s = seconds_since(t0);
    t0 = Clock::now();
    const auto eval_parallel = evaluate(data.cells, predictor, standardizer, grid,
                                        Kernel::cubic, 1, 0.2, Exec::parallel);
    const double eval_parallel_s = seconds_since(t0);
    bool eval_same = eval_serial.cells.size() == eval_parallel.cells.size();
    for (std::size_t i = 0; eval_same && i < eval_serial.cells.size(); ++i)
        eval_same = eval_serial.cells[i].life_pred == eval_parallel.cells[i].life_pred;
    rows.push_back({"evaluate", eval_serial_s, eval_parallel_s, eval_same});

    print_rows(rows);

    bool all_same = true;
    for (const auto& row : rows) all_same = all_same && row.identical;
    return all_same ? 0 : 1;
}
