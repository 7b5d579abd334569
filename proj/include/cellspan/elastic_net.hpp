#pragma once

#include <array>
#include <span>
#include <vector>

#include "cellspan/training.hpp"

namespace cellspan {

// Linear baseline predicting (A, B) from the standardized features with a
// mixed L1/L2 penalty:
//   (1/2n) ||y - X beta||^2 + alpha (l1_ratio ||beta||_1
//                                    + (1 - l1_ratio)/2 ||beta||^2)
// per output, intercept unpenalized.
struct ElasticNetModel {
    std::array<std::vector<double>, 2> coef;  // per output, one per input
    std::array<double, 2> intercept{0.0, 0.0};
    double alpha = 0.0;
    double l1_ratio = 0.0;

    std::array<double, 2> predict(std::span<const double> z) const;
};

// Cyclic coordinate descent; converged when the largest coefficient change
// in a sweep drops below 1e-8. Throws NumericError after 10^4 sweeps.
ElasticNetModel fit_elastic_net(const std::vector<std::vector<double>>& x,
                                const std::vector<std::array<double, 2>>& y,
                                double alpha, double l1_ratio);

// Default hyperparameter grids: alpha log-spaced on [1, 10]; l1_ratio
// log-spaced on [1e-5, 1e2] with values above 1 clamped to 1 (and
// deduplicated). clamp_warnings counts the clamped entries.
std::vector<double> default_alpha_grid();
std::vector<double> default_l1_grid(int* clamp_warnings = nullptr);

struct ElasticNetSearchResult {
    ElasticNetModel model;
    double primary_rmse = 0.0;  // cycle-life RMSE on the selection split
};

// Fits every (alpha, l1_ratio) combination on the train samples and keeps
// the model with the lowest cycle-life RMSE on the primary-test samples.
ElasticNetSearchResult tune_elastic_net(const std::vector<TrainSample>& train,
                                        const std::vector<TrainSample>& primary,
                                        const std::vector<double>& alphas,
                                        const std::vector<double>& l1_ratios,
                                        double threshold);

} // namespace cellspan
