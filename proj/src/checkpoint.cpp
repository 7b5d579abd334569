#include "cellspan/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "cellspan/error.hpp"

namespace cellspan {

using nlohmann::json;

ParamPredictor Checkpoint::predictor() const {
    if (kind == ModelKind::attention) {
        AttentionModel m = model;
        OutputCalibration c = calib;
        return [m, c](std::span<const double> z) {
            return c.map(forward(m, z).y);
        };
    }
    ElasticNetModel b = baseline;
    return [b](std::span<const double> z) { return b.predict(z); };
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json j;
    j["format"] = "cellspan-checkpoint";
    j["version"] = 1;
    j["kind"] = ckpt.kind == ModelKind::attention ? "attention" : "elastic_net";
    j["threshold"] = ckpt.threshold;
    j["feature_grid"] = {{"v_min", ckpt.grid.v_min},
                         {"v_max", ckpt.grid.v_max},
                         {"n_points", ckpt.grid.n_points}};
    j["kernel"] = to_string(ckpt.kernel);
    j["degree"] = ckpt.degree;
    j["selected_features"] = ckpt.standardizer.names;
    j["standardizer"] = {{"mean", ckpt.standardizer.mean}, {"sd", ckpt.standardizer.sd}};
    j["train_config"] = {{"stage1_epochs", ckpt.train_config.stage1_epochs},
                         {"stage1_lr", ckpt.train_config.stage1_lr},
                         {"stage2_epochs", ckpt.train_config.stage2_epochs},
                         {"stage2_lr", ckpt.train_config.stage2_lr},
                         {"w_a", ckpt.train_config.w_a},
                         {"w_b", ckpt.train_config.w_b},
                         {"rng_seed", ckpt.train_config.rng_seed},
                         {"threshold", ckpt.train_config.threshold}};
    if (ckpt.kind == ModelKind::attention) {
        j["attention"] = {{"n", ckpt.model.n},
                          {"d", ckpt.model.d},
                          {"d_v", ckpt.model.d_v},
                          {"rng_seed", ckpt.model.rng_seed},
                          {"w_q", ckpt.model.w_q},
                          {"w_k", ckpt.model.w_k},
                          {"w_v", ckpt.model.w_v},
                          {"calibration", {{"a_mean", ckpt.calib.a_mean},
                                           {"a_scale", ckpt.calib.a_scale},
                                           {"b_raw_mean", ckpt.calib.b_raw_mean},
                                           {"b_raw_scale", ckpt.calib.b_raw_scale}}}};
    } else {
        j["elastic_net"] = {{"coef_a", ckpt.baseline.coef[0]},
                            {"coef_b", ckpt.baseline.coef[1]},
                            {"intercept", ckpt.baseline.intercept},
                            {"alpha", ckpt.baseline.alpha},
                            {"l1_ratio", ckpt.baseline.l1_ratio}};
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError("checkpoint parse failure in '" + path + "': " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "cellspan-checkpoint")
            throw DataError("'" + path + "' is not a checkpoint file");
        Checkpoint ckpt;
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "attention")
            ckpt.kind = ModelKind::attention;
        else if (kind == "elastic_net")
            ckpt.kind = ModelKind::elastic_net;
        else
            throw DataError("unknown checkpoint kind '" + kind + "'");
        ckpt.threshold = j.at("threshold").get<double>();
        const json& g = j.at("feature_grid");
        ckpt.grid.v_min = g.at("v_min").get<double>();
        ckpt.grid.v_max = g.at("v_max").get<double>();
        ckpt.grid.n_points = g.at("n_points").get<int>();
        ckpt.kernel = kernel_from_string(j.at("kernel").get<std::string>());
        ckpt.degree = j.at("degree").get<int>();
        ckpt.standardizer.names = j.at("selected_features").get<std::vector<std::string>>();
        ckpt.standardizer.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
        ckpt.standardizer.sd = j.at("standardizer").at("sd").get<std::vector<double>>();
        const json& tc = j.at("train_config");
        ckpt.train_config.stage1_epochs = tc.at("stage1_epochs").get<int>();
        ckpt.train_config.stage1_lr = tc.at("stage1_lr").get<double>();
        ckpt.train_config.stage2_epochs = tc.at("stage2_epochs").get<int>();
        ckpt.train_config.stage2_lr = tc.at("stage2_lr").get<double>();
        ckpt.train_config.w_a = tc.at("w_a").get<double>();
        ckpt.train_config.w_b = tc.at("w_b").get<double>();
        ckpt.train_config.rng_seed = tc.at("rng_seed").get<std::uint64_t>();
        ckpt.train_config.threshold = tc.at("threshold").get<double>();
        if (ckpt.kind == ModelKind::attention) {
            const json& a = j.at("attention");
            ckpt.model.n = a.at("n").get<int>();
            ckpt.model.d = a.at("d").get<int>();
            ckpt.model.d_v = a.at("d_v").get<int>();
            ckpt.model.rng_seed = a.at("rng_seed").get<std::uint64_t>();
            ckpt.model.w_q = a.at("w_q").get<std::vector<double>>();
            ckpt.model.w_k = a.at("w_k").get<std::vector<double>>();
            ckpt.model.w_v = a.at("w_v").get<std::vector<double>>();
            const json& c = a.at("calibration");
            ckpt.calib.a_mean = c.at("a_mean").get<double>();
            ckpt.calib.a_scale = c.at("a_scale").get<double>();
            ckpt.calib.b_raw_mean = c.at("b_raw_mean").get<double>();
            ckpt.calib.b_raw_scale = c.at("b_raw_scale").get<double>();
        } else {
            const json& e = j.at("elastic_net");
            ckpt.baseline.coef[0] = e.at("coef_a").get<std::vector<double>>();
            ckpt.baseline.coef[1] = e.at("coef_b").get<std::vector<double>>();
            const auto icept = e.at("intercept").get<std::vector<double>>();
            if (icept.size() != 2) throw DataError("checkpoint: bad intercept length");
            ckpt.baseline.intercept = {icept[0], icept[1]};
            ckpt.baseline.alpha = e.at("alpha").get<double>();
            ckpt.baseline.l1_ratio = e.at("l1_ratio").get<double>();
        }
        return ckpt;
    } catch (const json::exception& e) {
        throw DataError("checkpoint '" + path + "': " + e.what());
    }
}

} // namespace cellspan
