#include "cellspan/training.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cellspan/error.hpp"
#include "cellspan/physics.hpp"

namespace cellspan {

namespace {

struct LifeTerm {
    double life = 0.0;
    double dlife_da = 0.0;  // d life / d A_hat
    double dlife_db = 0.0;  // d life / d B_hat
    bool ok = false;
};

// Non-throwing core, usable inside parallel regions.
LifeTerm life_term(double a_hat, double b_hat, double c, double threshold) {
    LifeTerm t;
    if (!(b_hat > 0.0) || !(c < threshold)) return t;
    const double u = (-a_hat + std::log(threshold - c)) / b_hat;  // = ln(life)
    t.life = std::exp(u);
    if (!std::isfinite(t.life)) return t;
    t.dlife_da = -t.life / b_hat;
    t.dlife_db = -t.life * u / b_hat;
    t.ok = true;
    return t;
}

LifeTerm life_and_grad(double a_hat, double b_hat, double c, double threshold,
                       const std::string& who) {
    if (!(b_hat > 0.0))
        throw NumericError("cycle-life loss: non-positive B_hat for " + who);
    if (!(c < threshold))
        throw NumericError("cycle-life loss: C >= threshold for " + who);
    const LifeTerm t = life_term(a_hat, b_hat, c, threshold);
    if (!t.ok)
        throw NumericError("cycle-life loss: non-finite predicted life for " + who);
    return t;
}

} // namespace

LossValue param_loss(const std::vector<std::array<double, 2>>& preds,
                     const std::vector<std::array<double, 2>>& targets,
                     double w_a, double w_b) {
    if (preds.empty()) throw DataError("param_loss: empty input");
    if (preds.size() != targets.size()) throw DataError("param_loss: misaligned input");
    double s = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double da = targets[i][0] - preds[i][0];
        const double db = targets[i][1] - preds[i][1];
        s += w_a * da * da + w_b * db * db;
    }
    return {LossKind::param_loss, std::sqrt(s / static_cast<double>(preds.size()))};
}

LossValue cycle_life_loss(const std::vector<std::array<double, 2>>& preds,
                          const std::vector<double>& c_list,
                          const std::vector<double>& true_lives, double threshold) {
    if (preds.empty()) throw DataError("cycle_life_loss: empty input");
    if (preds.size() != c_list.size() || preds.size() != true_lives.size())
        throw DataError("cycle_life_loss: misaligned input");
    double s = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto t = life_and_grad(preds[i][0], preds[i][1], c_list[i], threshold,
                                     "cell #" + std::to_string(i));
        const double d = true_lives[i] - t.life;
        s += d * d;
    }
    return {LossKind::cycle_life_loss, std::sqrt(s / static_cast<double>(preds.size()))};
}

OutputCalibration fit_calibration(const std::vector<TrainSample>& samples) {
    if (samples.empty()) throw DataError("fit_calibration: empty training set");
    const double n = static_cast<double>(samples.size());
    double ma = 0.0, mb = 0.0;
    std::vector<double> braw(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        ma += samples[i].a_target;
        braw[i] = softplus_inv(samples[i].b_target);
        mb += braw[i];
    }
    ma /= n;
    mb /= n;
    double va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        va += (samples[i].a_target - ma) * (samples[i].a_target - ma);
        vb += (braw[i] - mb) * (braw[i] - mb);
    }
    // The scales carry a gain above the raw target spread: the projection
    // weights then reach the whole target range within a small fraction of
    // a unit of movement, which is what the fixed epoch budgets allow.
    constexpr double kOutputGain = 4.0;
    OutputCalibration calib;
    calib.a_mean = ma;
    calib.a_scale = kOutputGain * (va > 0.0 ? std::sqrt(va / n) : 1.0);
    calib.b_raw_mean = mb;
    calib.b_raw_scale = kOutputGain * (vb > 0.0 ? std::sqrt(vb / n) : 1.0);
    return calib;
}

namespace {

// Adam over the three projection vectors.
struct AdamState {
    std::vector<double> m, v;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    void step(std::vector<double>& w, const std::vector<double>& g, double lr, int t) {
        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        const double bc1 = 1.0 - std::pow(beta1, t);
        const double bc2 = 1.0 - std::pow(beta2, t);
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
};

struct EpochEval {
    double param_loss = 0.0;
    double cycle_loss = 0.0;
    AttentionGradients grads;  // of the active stage's loss
};

// Per-sample buffers reused across epochs; the training loop would
// otherwise spend most of its time in the allocator.
struct EpochWorkspace {
    std::vector<ForwardTrace> traces;
    std::vector<std::array<double, 2>> mapped;
    std::vector<LifeTerm> lives;
    std::vector<AttentionGradients> per_sample;
    std::vector<BackwardScratch> scratch;

    explicit EpochWorkspace(std::size_t n)
        : traces(n), mapped(n), lives(n), per_sample(n), scratch(n) {}
};

// Forward, both losses, and exact gradients of the active stage's loss in
// one parallel region per epoch. The upstream gradient of each sample is
// its raw residual term; the global 1/(n * loss) factor of the RMSE is
// applied at the fixed-order reduction, which also keeps the result
// independent of the thread count.
EpochEval batch_pass(const AttentionModel& model, const OutputCalibration& calib,
                     const std::vector<TrainSample>& batch, const TrainConfig& cfg,
                     int stage, bool want_grads, Exec exec, EpochWorkspace& ws) {
    const std::size_t n = batch.size();
    std::vector<ForwardTrace>& traces = ws.traces;
    std::vector<std::array<double, 2>>& mapped = ws.mapped;
    std::vector<LifeTerm>& lives = ws.lives;
    std::vector<AttentionGradients>& per_sample = ws.per_sample;

    for_each_index(n, exec, [&](std::size_t i) {
        forward_into(model, batch[i].z, traces[i]);
        mapped[i] = calib.map(traces[i].y);
        lives[i] = life_term(mapped[i][0], mapped[i][1], batch[i].c, cfg.threshold);
        if (!want_grads) return;
        std::array<double, 2> raw{0.0, 0.0};
        if (stage == 1) {
            raw[0] = cfg.w_a * (mapped[i][0] - batch[i].a_target);
            raw[1] = cfg.w_b * (mapped[i][1] - batch[i].b_target);
        } else if (lives[i].ok) {
            const double dl = -(batch[i].life_true - lives[i].life);
            raw[0] = dl * lives[i].dlife_da;
            raw[1] = dl * lives[i].dlife_db;
        }
        const auto cg = calib.map_grad(traces[i].y);
        backward_into(model, traces[i], {raw[0] * cg[0], raw[1] * cg[1]}, ws.scratch[i],
                      per_sample[i]);
    });

    EpochEval out;
    const double nn = static_cast<double>(n);
    double sp = 0.0, sc = 0.0;
    bool lives_ok = true;
    std::size_t first_bad = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = batch[i].a_target - mapped[i][0];
        const double db = batch[i].b_target - mapped[i][1];
        sp += cfg.w_a * da * da + cfg.w_b * db * db;
        if (lives[i].ok) {
            const double dl = batch[i].life_true - lives[i].life;
            sc += dl * dl;
        } else if (lives_ok) {
            lives_ok = false;
            first_bad = i;
        }
    }
    out.param_loss = std::sqrt(sp / nn);
    if (lives_ok) {
        out.cycle_loss = std::sqrt(sc / nn);
    } else if (stage == 2) {
        // the cycle-life loss is the training objective here, so an
        // unrepresentable life is a hard failure naming the cell
        life_and_grad(mapped[first_bad][0], mapped[first_bad][1], batch[first_bad].c,
                      cfg.threshold, "cell '" + batch[first_bad].cell_id + "'");
    } else {
        // stage-1 monitoring column only
        out.cycle_loss = std::numeric_limits<double>::quiet_NaN();
    }
    if (!want_grads) return out;

    const double active = stage == 1 ? out.param_loss : out.cycle_loss;
    const double scale = active > 0.0 ? 1.0 / (nn * active) : 0.0;
    out.grads.w_q.assign(model.w_q.size(), 0.0);
    out.grads.w_k.assign(model.w_k.size(), 0.0);
    out.grads.w_v.assign(model.w_v.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {  // fixed reduction order
        for (std::size_t j = 0; j < out.grads.w_q.size(); ++j)
            out.grads.w_q[j] += per_sample[i].w_q[j];
        for (std::size_t j = 0; j < out.grads.w_k.size(); ++j)
            out.grads.w_k[j] += per_sample[i].w_k[j];
        for (std::size_t j = 0; j < out.grads.w_v.size(); ++j)
            out.grads.w_v[j] += per_sample[i].w_v[j];
    }
    for (auto* block : {&out.grads.w_q, &out.grads.w_k, &out.grads.w_v})
        for (double& g : *block) g *= scale;
    return out;
}

} // namespace

TrainResult train_two_stage(AttentionModel model, OutputCalibration calib,
                            const std::vector<TrainSample>& train, const TrainConfig& cfg,
                            Exec exec) {
    if (train.empty()) throw DataError("train_two_stage: empty training set");
    if (!(cfg.stage1_lr > 0.0) || !(cfg.stage2_lr > 0.0))
        throw DataError("train_two_stage: learning rates must be positive");
    if (cfg.stage1_epochs < 0 || cfg.stage2_epochs < 0)
        throw DataError("train_two_stage: epoch counts must be >= 0");
    for (const auto& s : train) {
        if (!(s.c < cfg.threshold))
            throw DataError("train_two_stage: cell '" + s.cell_id +
                            "' has C >= threshold");
        if (!(s.b_target > 0.0))
            throw DataError("train_two_stage: cell '" + s.cell_id +
                            "' has non-positive B target");
    }

    TrainResult result;
    result.calib = calib;
    EpochWorkspace ws(train.size());

    for (int stage = 1; stage <= 2; ++stage) {
        const int epochs = stage == 1 ? cfg.stage1_epochs : cfg.stage2_epochs;
        const double lr = stage == 1 ? cfg.stage1_lr : cfg.stage2_lr;
        if (epochs == 0) continue;

        AdamState adam_q(model.w_q.size()), adam_k(model.w_k.size()),
            adam_v(model.w_v.size());
        for (int epoch = 0; epoch < epochs; ++epoch) {
            EpochEval ev;
            try {
                ev = batch_pass(model, calib, train, cfg, stage, true, exec, ws);
            } catch (const NumericError& e) {
                throw NumericError("training diverged at stage " + std::to_string(stage) +
                                   " epoch " + std::to_string(epoch) + ": " + e.what());
            }
            const double active = stage == 1 ? ev.param_loss : ev.cycle_loss;
            if (!std::isfinite(active))
                throw NumericError("training diverged at stage " + std::to_string(stage) +
                                   " epoch " + std::to_string(epoch) +
                                   ": loss is not finite");
            result.history.push_back({stage, epoch, ev.param_loss, ev.cycle_loss});
            adam_q.step(model.w_q, ev.grads.w_q, lr, epoch + 1);
            adam_k.step(model.w_k, ev.grads.w_k, lr, epoch + 1);
            adam_v.step(model.w_v, ev.grads.w_v, lr, epoch + 1);
        }
        // closing row: losses at the stage's final weights
        const EpochEval ev = batch_pass(model, calib, train, cfg, stage, false, exec, ws);
        result.history.push_back({stage, epochs, ev.param_loss, ev.cycle_loss});
    }

    result.model = std::move(model);
    return result;
}

} // namespace cellspan
