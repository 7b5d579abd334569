#pragma once

#include <string>

#include "cellspan/attention.hpp"
#include "cellspan/elastic_net.hpp"
#include "cellspan/evaluate.hpp"
#include "cellspan/features.hpp"
#include "cellspan/training.hpp"

namespace cellspan {

enum class ModelKind { attention, elastic_net };

// Everything needed to reload a trained pipeline bit-exactly: model
// weights, output calibration, the feature standardizer with the selected
// feature names in model input order, and the feature-extraction
// configuration.
struct Checkpoint {
    ModelKind kind = ModelKind::attention;
    double threshold = kDefaultThreshold;
    VoltageGrid grid{};
    Kernel kernel = Kernel::cubic;
    int degree = 1;
    Standardizer standardizer{};
    AttentionModel model{};
    OutputCalibration calib{};
    ElasticNetModel baseline{};
    TrainConfig train_config{};

    ParamPredictor predictor() const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace cellspan
