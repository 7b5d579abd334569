#include "cellspan/attention.hpp"

#include <cmath>
#include <string>

#include "cellspan/error.hpp"
#include "cellspan/physics.hpp"
#include "cellspan/rng.hpp"

namespace cellspan {

double softplus(double x) {
    // overflow-safe: x + log1p(exp(-x)) for positive x
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double softplus_inv(double y) {
    if (!(y > 0.0)) throw DataError("softplus_inv: argument must be positive");
    // ln(e^y - 1), stable for both small and large y
    return y > 30.0 ? y : std::log(std::expm1(y));
}

double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

std::array<double, 2> OutputCalibration::map(std::array<double, 2> y) const {
    return {a_mean + a_scale * y[0], softplus(b_raw_mean + b_raw_scale * y[1])};
}

std::array<double, 2> OutputCalibration::map_grad(std::array<double, 2> y) const {
    return {a_scale, sigmoid(b_raw_mean + b_raw_scale * y[1]) * b_raw_scale};
}

AttentionModel init_attention(int n, int d, int d_v, std::uint64_t rng_seed) {
    if (n < 1 || d < 1 || d_v < 1) throw DataError("init_attention: dimensions must be >= 1");
    AttentionModel model;
    model.n = n;
    model.d = d;
    model.d_v = d_v;
    model.rng_seed = rng_seed;
    Rng rng(rng_seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    model.w_q.resize(static_cast<std::size_t>(d));
    model.w_k.resize(static_cast<std::size_t>(d));
    model.w_v.resize(static_cast<std::size_t>(d_v));
    for (auto& w : model.w_q) w = rng.uniform(-bound, bound);
    for (auto& w : model.w_k) w = rng.uniform(-bound, bound);
    for (auto& w : model.w_v) w = rng.uniform(-bound, bound);
    return model;
}

namespace {

void check_finite(const std::vector<double>& v, const char* layer) {
    for (double x : v)
        if (!std::isfinite(x))
            throw NumericError(std::string("attention forward: non-finite value in ") +
                               layer);
}

} // namespace

void forward_into(const AttentionModel& model, std::span<const double> z,
                  ForwardTrace& t) {
    const std::size_t n = static_cast<std::size_t>(model.n);
    const std::size_t d = static_cast<std::size_t>(model.d);
    const std::size_t dv = static_cast<std::size_t>(model.d_v);
    if (dv != 2)
        throw DataError("attention forward: this pipeline predicts exactly two outputs");
    if (z.size() != n)
        throw DataError("attention forward: expected input of length " +
                        std::to_string(n) + ", got " + std::to_string(z.size()));
    for (double v : z)
        if (!std::isfinite(v)) throw NumericError("attention forward: non-finite input");

    t.z.assign(z.begin(), z.end());
    t.q.resize(n * d);
    t.k.resize(n * d);
    t.v.resize(n * dv);
    t.attn.resize(n * n);
    t.h.assign(n * dv, 0.0);

    // tokens are scalars, so the projections are outer products
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < d; ++a) {
            t.q[i * d + a] = z[i] * model.w_q[a];
            t.k[i * d + a] = z[i] * model.w_k[a];
        }
        for (std::size_t j = 0; j < dv; ++j) t.v[i * dv + j] = z[i] * model.w_v[j];
    }
    check_finite(t.q, "Q");
    check_finite(t.k, "K");
    check_finite(t.v, "V");

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(model.d));
    for (std::size_t i = 0; i < n; ++i) {
        double row_max = -HUGE_VAL;
        for (std::size_t kk = 0; kk < n; ++kk) {
            double s = 0.0;
            for (std::size_t a = 0; a < d; ++a) s += t.q[i * d + a] * t.k[kk * d + a];
            s *= inv_sqrt_d;
            t.attn[i * n + kk] = s;
            row_max = std::max(row_max, s);
        }
        double denom = 0.0;
        for (std::size_t kk = 0; kk < n; ++kk) {
            const double e = std::exp(t.attn[i * n + kk] - row_max);
            t.attn[i * n + kk] = e;
            denom += e;
        }
        for (std::size_t kk = 0; kk < n; ++kk) t.attn[i * n + kk] /= denom;
    }
    check_finite(t.attn, "attention matrix");

    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t kk = 0; kk < n; ++kk)
            for (std::size_t j = 0; j < dv; ++j)
                t.h[i * dv + j] += t.attn[i * n + kk] * t.v[kk * dv + j];
    check_finite(t.h, "H");

    // mean over sequence positions
    for (std::size_t j = 0; j < dv; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += t.h[i * dv + j];
        t.y[j] = s / static_cast<double>(n);
    }
}

ForwardTrace forward(const AttentionModel& model, std::span<const double> z) {
    ForwardTrace t;
    forward_into(model, z, t);
    return t;
}

void backward_into(const AttentionModel& model, const ForwardTrace& trace,
                   std::array<double, 2> loss_grad_y, BackwardScratch& scratch,
                   AttentionGradients& g) {
    const std::size_t n = static_cast<std::size_t>(model.n);
    const std::size_t d = static_cast<std::size_t>(model.d);
    const std::size_t dv = static_cast<std::size_t>(model.d_v);
    if (trace.z.size() != n || trace.attn.size() != n * n)
        throw DataError("attention backward: trace does not match the model shape");

    g.w_q.assign(d, 0.0);
    g.w_k.assign(d, 0.0);
    g.w_v.assign(dv, 0.0);

    // y_j = (1/n) sum_i H_ij
    std::vector<double>& dh = scratch.dh;
    dh.resize(n * dv);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dv; ++j)
            dh[i * dv + j] = loss_grad_y[j] / static_cast<double>(n);

    // H = A V
    std::vector<double>& dattn = scratch.dattn;
    std::vector<double>& dval = scratch.dval;
    dattn.assign(n * n, 0.0);
    dval.assign(n * dv, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t kk = 0; kk < n; ++kk)
            for (std::size_t j = 0; j < dv; ++j) {
                dattn[i * n + kk] += dh[i * dv + j] * trace.v[kk * dv + j];
                dval[kk * dv + j] += trace.attn[i * n + kk] * dh[i * dv + j];
            }

    // row-softmax Jacobian: ds = A o (dA - (dA . A) 1)
    std::vector<double>& ds = scratch.ds;
    ds.resize(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t kk = 0; kk < n; ++kk)
            dot += dattn[i * n + kk] * trace.attn[i * n + kk];
        for (std::size_t kk = 0; kk < n; ++kk)
            ds[i * n + kk] = trace.attn[i * n + kk] * (dattn[i * n + kk] - dot);
    }

    // S = Q K^T / sqrt(D)
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(model.d));
    std::vector<double>& dq = scratch.dq;
    std::vector<double>& dk = scratch.dk;
    dq.assign(n * d, 0.0);
    dk.assign(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t kk = 0; kk < n; ++kk) {
            const double s = ds[i * n + kk] * inv_sqrt_d;
            for (std::size_t a = 0; a < d; ++a) {
                dq[i * d + a] += s * trace.k[kk * d + a];
                dk[kk * d + a] += s * trace.q[i * d + a];
            }
        }

    // Q = z w_q^T etc., so dW collapses along the sequence
    for (std::size_t a = 0; a < d; ++a) {
        double gq = 0.0, gk = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            gq += trace.z[i] * dq[i * d + a];
            gk += trace.z[i] * dk[i * d + a];
        }
        g.w_q[a] = gq;
        g.w_k[a] = gk;
    }
    for (std::size_t j = 0; j < dv; ++j) {
        double gv = 0.0;
        for (std::size_t i = 0; i < n; ++i) gv += trace.z[i] * dval[i * dv + j];
        g.w_v[j] = gv;
    }
}

AttentionGradients backward(const AttentionModel& model, const ForwardTrace& trace,
                            std::array<double, 2> loss_grad_y) {
    AttentionGradients g;
    BackwardScratch scratch;
    backward_into(model, trace, loss_grad_y, scratch, g);
    return g;
}

double predict_cycle_life(const AttentionModel& model, const OutputCalibration& calib,
                          std::span<const double> z, double c, double threshold) {
    const auto trace = forward(model, z);
    const auto params = calib.map(trace.y);
    return cycle_life(PhysicsParams{params[0], params[1], c}, threshold);
}

} // namespace cellspan
