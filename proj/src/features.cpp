#include "cellspan/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cellspan/error.hpp"

namespace cellspan {

double FeatureVector::at(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw DataError("unknown feature '" + name + "'");
    return it->second;
}

void FeatureVector::set(const std::string& name, double value) {
    if (!std::isfinite(value))
        throw DataError("feature '" + name + "' is not finite");
    values[name] = value;
}

std::vector<double> delta_q_curve(const CellRecord& cell, const VoltageGrid& grid,
                                  Kernel kernel, int degree) {
    for (int cycle : {10, 100})
        if (!cell.early_curves.count(cycle))
            throw DataError("cell '" + cell.cell_id + "': missing early curve for cycle " +
                            std::to_string(cycle));
    const auto q10 = resample(fit_rbf(cell.early_curves.at(10), kernel, degree), grid);
    const auto q100 = resample(fit_rbf(cell.early_curves.at(100), kernel, degree), grid);
    std::vector<double> dq(q10.size());
    for (std::size_t i = 0; i < dq.size(); ++i) dq[i] = q100[i] - q10[i];
    return dq;
}

namespace {

struct OlsLine {
    double slope = 0.0;
    double intercept = 0.0;
};

OlsLine ols(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double denom = sxx - sx * sx / n;
    if (denom <= 0.0) throw DataError("degenerate regression window");
    OlsLine line;
    line.slope = (sxy - sx * sy / n) / denom;
    line.intercept = sy / n - line.slope * sx / n;
    return line;
}

double log10_abs(const std::string& name, double v) {
    const double a = std::fabs(v);
    if (a == 0.0) throw DataError("degenerate cell: " + name + " is zero before log");
    return std::log10(a);
}

} // namespace

FeatureVector extract_features(const CellRecord& cell, const VoltageGrid& grid,
                               Kernel kernel, int degree) {
    const auto dq = delta_q_curve(cell, grid, kernel, degree);
    const double n = static_cast<double>(dq.size());

    double mean = std::accumulate(dq.begin(), dq.end(), 0.0) / n;
    double m2 = 0, m3 = 0, m4 = 0;
    for (double v : dq) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if (m2 <= 0.0)
        throw DataError("cell '" + cell.cell_id + "': degenerate cell, Var(dQ) is zero");
    const double variance = m2;  // population variance
    const double minimum = *std::min_element(dq.begin(), dq.end());
    const double skew = m3 / std::pow(m2, 1.5);
    const double exkurt = m4 / (m2 * m2) - 3.0;

    // capacity-fade windows over the summary table
    std::vector<double> cyc_2_100, qd_2_100, cyc_91_100, qd_91_100;
    double qd_max = 0.0;
    double min_ir = 0.0;
    bool any = false;
    for (const auto& s : cell.summaries) {
        if (s.cycle > 100) break;
        if (!any) {
            qd_max = s.qd;
            min_ir = s.ir;
            any = true;
        } else {
            qd_max = std::max(qd_max, s.qd);
            min_ir = std::min(min_ir, s.ir);
        }
        if (s.cycle >= 2) {
            cyc_2_100.push_back(s.cycle);
            qd_2_100.push_back(s.qd);
        }
        if (s.cycle >= 91) {
            cyc_91_100.push_back(s.cycle);
            qd_91_100.push_back(s.qd);
        }
    }
    const CycleSummary* s2 = cell.summary_at(2);
    const CycleSummary* s100 = cell.summary_at(100);
    if (!s2 || !s100)
        throw DataError("cell '" + cell.cell_id +
                        "': summaries must cover cycles 2 and 100 for feature extraction");
    if (cyc_2_100.size() < 3 || cyc_91_100.size() < 2)
        throw DataError("cell '" + cell.cell_id +
                        "': too few summary cycles in the fade windows");

    const OlsLine fade_full = ols(cyc_2_100, qd_2_100);
    const OlsLine fade_late = ols(cyc_91_100, qd_91_100);

    FeatureVector fv;
    try {
        fv.set("DeltaQ_logVar", log10_abs("Var(dQ)", variance));
        fv.set("DeltaQ_logMin", log10_abs("min(dQ)", minimum));
        fv.set("DeltaQ_logMean", log10_abs("mean(dQ)", mean));
        fv.set("DeltaQ_logSkew", log10_abs("skew(dQ)", skew));
        fv.set("DeltaQ_logKurt", log10_abs("kurt(dQ)", exkurt));
    } catch (const DataError& e) {
        throw DataError("cell '" + cell.cell_id + "': " + e.what());
    }
    fv.set("Slope_capacity_fade_2_100", fade_full.slope);
    fv.set("Slope_capacity_fade_91_100", fade_late.slope);
    fv.set("Intercept_capacity_fade_2_100", fade_full.intercept);
    fv.set("Intercept_capacity_fade_91_100", fade_late.intercept);
    fv.set("QD_2", s2->qd);
    fv.set("QD_Max_2", qd_max - s2->qd);
    fv.set("Min_IR", min_ir);
    fv.set("IR_100_2", s100->ir - s2->ir);
    return fv;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DataError("spearman: length mismatch");
    if (x.size() < 3) throw DataError("spearman: need at least 3 observations");
    const std::size_t n = x.size();

    auto ranks = [n](std::span<const double> v) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(n);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
            // ties share the average rank (1-based)
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };

    const auto rx = ranks(x);
    const auto ry = ranks(y);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = rx[i] - mx;
        const double dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) throw DataError("spearman: zero rank variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationReport select_features(const std::vector<FeatureVector>& features,
                                  const std::vector<std::pair<double, double>>& targets) {
    if (features.size() != targets.size())
        throw DataError("select_features: features/targets misaligned");

    std::vector<double> ta(targets.size()), tb(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        ta[i] = targets[i].first;
        tb[i] = targets[i].second;
    }

    CorrelationReport report;
    std::vector<std::pair<double, std::string>> scored;  // (-score, name) for sorting
    for (const char* name : kCandidateFeatures) {
        FeatureCorrelation fc;
        fc.name = name;
        try {
            std::vector<double> col(features.size());
            for (std::size_t i = 0; i < features.size(); ++i) col[i] = features[i].at(name);
            fc.rho_a = spearman(col, ta);
            fc.rho_b = spearman(col, tb);
            fc.valid = true;
            scored.emplace_back(-std::max(std::fabs(fc.rho_a), std::fabs(fc.rho_b)),
                                fc.name);
        } catch (const DataError&) {
            fc.valid = false;  // constant or missing column
        }
        report.rows.push_back(std::move(fc));
    }
    if (scored.size() < 5)
        throw DataError("select_features: fewer than 5 features with computable "
                        "correlations");
    std::sort(scored.begin(), scored.end());  // score desc, then name asc
    for (std::size_t i = 0; i < 5; ++i) {
        report.selected_order.push_back(scored[i].second);
        for (auto& row : report.rows)
            if (row.name == scored[i].second) row.selected = true;
    }
    return report;
}

Standardizer Standardizer::fit(const std::vector<FeatureVector>& train_features,
                               const std::vector<std::string>& names) {
    if (train_features.empty()) throw DataError("standardizer: empty training set");
    Standardizer st;
    st.names = names;
    const double n = static_cast<double>(train_features.size());
    for (const auto& name : names) {
        double mean = 0;
        for (const auto& fv : train_features) mean += fv.at(name);
        mean /= n;
        double var = 0;
        for (const auto& fv : train_features) {
            const double d = fv.at(name) - mean;
            var += d * d;
        }
        var /= n;  // population variance
        if (var <= 1e-24 * std::max(1.0, mean * mean))
            throw DataError("standardizer: feature '" + name + "' is constant on train");
        st.mean.push_back(mean);
        st.sd.push_back(std::sqrt(var));
    }
    return st;
}

std::vector<double> Standardizer::apply(const FeatureVector& fv) const {
    std::vector<double> z(names.size());
    for (std::size_t i = 0; i < names.size(); ++i)
        z[i] = (fv.at(names[i]) - mean[i]) / sd[i];
    return z;
}

FeatureBatch extract_features_batch(const std::vector<CellRecord>& cells,
                                    const VoltageGrid& grid, Kernel kernel, int degree,
                                    Exec exec) {
    FeatureBatch batch;
    batch.values.resize(cells.size());
    batch.errors.resize(cells.size());
    for_each_index(cells.size(), exec, [&](std::size_t i) {
        try {
            batch.values[i] = extract_features(cells[i], grid, kernel, degree);
        } catch (const Error& e) {
            batch.errors[i] = e.what();
        }
    });
    return batch;
}

} // namespace cellspan
