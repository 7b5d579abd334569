#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace cellspan {

// Single-head self-attention block over a length-N sequence of scalar
// tokens (the standardized feature values), projecting to two outputs.
//
//   Q = z w_q^T, K = z w_k^T, V = z w_v^T
//   H = row_softmax(Q K^T / sqrt(D)) V
//   y = column means of H            (length d_v)
//
// The only learnable state is the three projection vectors.
struct AttentionModel {
    int n = 5;       // input feature count
    int d = 8;       // embedding dimension
    int d_v = 2;     // output dimension (A, B)
    std::uint64_t rng_seed = 0;
    std::vector<double> w_q;  // length d
    std::vector<double> w_k;  // length d
    std::vector<double> w_v;  // length d_v
};

// Cached intermediates of one forward pass, consumed by backward().
struct ForwardTrace {
    std::vector<double> z;     // n
    std::vector<double> q;     // n x d, row-major
    std::vector<double> k;     // n x d
    std::vector<double> v;     // n x d_v
    std::vector<double> attn;  // n x n, rows sum to 1
    std::vector<double> h;     // n x d_v
    std::array<double, 2> y{0.0, 0.0};
};

struct AttentionGradients {
    std::vector<double> w_q;
    std::vector<double> w_k;
    std::vector<double> w_v;
};

// Affine calibration of the raw outputs into physical parameters:
//   A_hat = a_mean + a_scale * y0
//   B_hat = softplus(b_raw_mean + b_raw_scale * y1)
// The softplus keeps B_hat positive as the loss-law inversion requires.
// Constants are train-target statistics (fitted like the feature
// standardizer, not learned); the defaults reduce to the identity mapping
// A_hat = y0, B_hat = softplus(y1).
struct OutputCalibration {
    double a_mean = 0.0;
    double a_scale = 1.0;
    double b_raw_mean = 0.0;
    double b_raw_scale = 1.0;

    // (A_hat, B_hat) from raw outputs.
    std::array<double, 2> map(std::array<double, 2> y) const;
    // (dA_hat/dy0, dB_hat/dy1).
    std::array<double, 2> map_grad(std::array<double, 2> y) const;
};

double softplus(double x);
double softplus_inv(double y);  // inverse on y > 0
double sigmoid(double x);

// Weights i.i.d. uniform on [-1/sqrt(d), 1/sqrt(d)], deterministic per seed.
AttentionModel init_attention(int n, int d, int d_v, std::uint64_t rng_seed);

// Throws NumericError naming the layer on a non-finite intermediate.
ForwardTrace forward(const AttentionModel& model, std::span<const double> z);

// Exact gradients of a scalar loss with upstream gradient dL/dy, through
// the mean pooling, the attention product, and the row-softmax Jacobian.
AttentionGradients backward(const AttentionModel& model, const ForwardTrace& trace,
                            std::array<double, 2> loss_grad_y);

// Reusable-buffer variants for hot loops (training runs millions of these;
// per-call allocation is what they save). Identical numerics to the
// plain calls.
void forward_into(const AttentionModel& model, std::span<const double> z,
                  ForwardTrace& out);

struct BackwardScratch {
    std::vector<double> dh, dattn, dval, ds, dq, dk;
};

void backward_into(const AttentionModel& model, const ForwardTrace& trace,
                   std::array<double, 2> loss_grad_y, BackwardScratch& scratch,
                   AttentionGradients& out);

// forward + calibration + loss-law inversion at the threshold.
double predict_cycle_life(const AttentionModel& model, const OutputCalibration& calib,
                          std::span<const double> z, double c, double threshold);

} // namespace cellspan
