#include "cellspan/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include "cellspan/dataset.hpp"
#include "cellspan/error.hpp"
#include "cellspan/physics.hpp"

namespace cellspan {

EvalReport evaluate(const std::vector<CellRecord>& cells, const ParamPredictor& predictor,
                    const Standardizer& standardizer, const VoltageGrid& grid,
                    Kernel kernel, int degree, double threshold, Exec exec) {
    EvalReport report;
    report.threshold = threshold;

    struct Row {
        bool ok = false;
        std::string error;
        CellPrediction pred;
    };
    std::vector<Row> rows(cells.size());

    for_each_index(cells.size(), exec, [&](std::size_t i) {
        Row& row = rows[i];
        const CellRecord& cell = cells[i];
        row.pred.cell_id = cell.cell_id;
        row.pred.split = cell.split;
        try {
            const auto fv = extract_features(cell, grid, kernel, degree);
            const auto z = standardizer.apply(fv);
            const auto params = predictor(z);
            row.pred.a_hat = params[0];
            row.pred.b_hat = params[1];
            row.pred.c = initial_loss_c(cell);
            row.pred.life_pred =
                cycle_life(PhysicsParams{params[0], params[1], row.pred.c}, threshold);
            if (cell.cycle_life) row.pred.life_true = static_cast<double>(*cell.cycle_life);
            // refit targets for the parameter-error metric
            try {
                const auto series = capacity_loss_series(cell);
                const auto fit = fit_params(series, row.pred.c);
                row.pred.a_fit = fit.params.a;
                row.pred.b_fit = fit.params.b;
            } catch (const Error&) {
                // cells without a fittable loss curve still get predictions
            }
            row.ok = true;
        } catch (const Error& e) {
            row.error = e.what();
        }
    });

    // stable output order by cell_id
    std::vector<std::size_t> order(rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return rows[a].pred.cell_id < rows[b].pred.cell_id;
    });

    struct Accum {
        int n = 0;
        double se_life = 0.0;
        double sum_life = 0.0;
        std::vector<double> lives_true, lives_pred;
        int n_params = 0;
        double se_params = 0.0;
    };
    std::map<Split, Accum> accum;

    for (std::size_t idx : order) {
        const Row& row = rows[idx];
        if (!row.ok) {
            report.notices.push_back("skipped cell '" + row.pred.cell_id +
                                     "': " + row.error);
            continue;
        }
        report.cells.push_back(row.pred);
        Accum& a = accum[row.pred.split];
        if (row.pred.life_true) {
            ++a.n;
            const double d = *row.pred.life_true - row.pred.life_pred;
            a.se_life += d * d;
            a.sum_life += *row.pred.life_true;
            a.lives_true.push_back(*row.pred.life_true);
            a.lives_pred.push_back(row.pred.life_pred);
        }
        if (row.pred.a_fit) {
            ++a.n_params;
            const double da = *row.pred.a_fit - row.pred.a_hat;
            const double db = *row.pred.b_fit - row.pred.b_hat;
            a.se_params += da * da + db * db;
        }
    }

    for (const auto& [split, a] : accum) {
        if (a.n == 0) {
            report.notices.push_back("split '" + to_string(split) +
                                     "' has no labeled cells; metrics omitted");
            continue;
        }
        SplitMetrics m;
        m.n_cells = a.n;
        m.rmse_cycles = std::sqrt(a.se_life / a.n);
        m.rmse_params = a.n_params > 0 ? std::sqrt(a.se_params / a.n_params) : 0.0;
        const double mean_life = a.sum_life / a.n;
        double ss_tot = 0.0;
        for (double lt : a.lives_true) ss_tot += (lt - mean_life) * (lt - mean_life);
        m.r_squared = ss_tot > 0.0 ? 1.0 - a.se_life / ss_tot
                                   : (a.se_life == 0.0 ? 1.0 : 0.0);
        report.splits[split] = m;
    }
    for (Split s : {Split::train, Split::primary_test, Split::secondary_test})
        if (!accum.count(s))
            report.notices.push_back("split '" + to_string(s) + "' absent from dataset");
    return report;
}

} // namespace cellspan
