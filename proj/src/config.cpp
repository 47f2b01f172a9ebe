#include "traffic/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "traffic/errors.hpp"
#include "traffic/graph.hpp"

namespace traffic {

namespace {

using nlohmann::json;

// Sections are open: any subset of keys may appear (the rest keep their
// defaults), but a key that is not recognised is an error.
void parse_data_section(const json& j, RunConfig& cfg) {
    if (!j.is_object()) throw ValidationError("config: data must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        const json& v = it.value();
        SynthConfig& d = cfg.data;
        if (k == "grid_rows") d.grid_rows = v.get<std::size_t>();
        else if (k == "grid_cols") d.grid_cols = v.get<std::size_t>();
        else if (k == "extra_edges") d.extra_edges = v.get<std::size_t>();
        else if (k == "days") d.days = v.get<std::size_t>();
        else if (k == "step_minutes") d.step_minutes = v.get<std::int64_t>();
        else if (k == "start") d.start = v.get<std::string>();
        else if (k == "base_flow_min") d.base_flow_min = v.get<double>();
        else if (k == "base_flow_max") d.base_flow_max = v.get<double>();
        else if (k == "amplitude_min") d.amplitude_min = v.get<double>();
        else if (k == "amplitude_max") d.amplitude_max = v.get<double>();
        else if (k == "weekend_scale") d.weekend_scale = v.get<double>();
        else if (k == "holiday_scale") d.holiday_scale = v.get<double>();
        else if (k == "holidays") d.holidays = v.get<std::vector<std::size_t>>();
        else if (k == "noise_sigma") d.noise_sigma = v.get<double>();
        else if (k == "accident_rate") d.accident_rate = v.get<double>();
        else if (k == "accident_duration_steps") d.accident_duration_steps = v.get<std::size_t>();
        else if (k == "accident_severity") d.accident_severity = v.get<double>();
        else if (k == "rain_probability") d.rain_probability = v.get<double>();
        else if (k == "rain_flow_scale") d.rain_flow_scale = v.get<double>();
        else if (k == "free_flow_speed") d.free_flow_speed = v.get<double>();
        else if (k == "capacity") d.capacity = v.get<double>();
        else if (k == "jam_constant") d.jam_constant = v.get<double>();
        else if (k == "train_ratio") cfg.train_ratio = v.get<double>();
        else if (k == "val_ratio") cfg.val_ratio = v.get<double>();
        else if (k == "test_ratio") cfg.test_ratio = v.get<double>();
        else if (k == "stride") cfg.stride = v.get<std::size_t>();
        else throw ValidationError("config: data has unknown key '" + k + "'");
    }
}

void parse_model_section(const json& j, ModelConfig& m) {
    if (!j.is_object()) throw ValidationError("config: model must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        const json& v = it.value();
        if (k == "window") m.window = v.get<std::size_t>();
        else if (k == "horizon") m.horizon = v.get<std::size_t>();
        else if (k == "out_features") m.out_features = v.get<std::size_t>();
        else if (k == "spatial_dim") m.spatial_dim = v.get<std::size_t>();
        else if (k == "model_dim") m.model_dim = v.get<std::size_t>();
        else if (k == "external_embed_dim") m.external_embed_dim = v.get<std::size_t>();
        else if (k == "ff_dim") m.ff_dim = v.get<std::size_t>();
        else if (k == "gcn_layers") m.gcn_layers = v.get<std::size_t>();
        else if (k == "encoder_blocks") m.encoder_blocks = v.get<std::size_t>();
        else if (k == "heads") m.heads = v.get<std::size_t>();
        else if (k == "gcn_activation")
            m.gcn_activation = activation_from_string(v.get<std::string>());
        else if (k == "use_gnn") m.use_gnn = v.get<bool>();
        else if (k == "use_temporal") m.use_temporal = v.get<bool>();
        else if (k == "use_external") m.use_external = v.get<bool>();
        else throw ValidationError("config: model has unknown key '" + k + "'");
    }
}

void parse_train_section(const json& j, TrainConfig& t) {
    if (!j.is_object()) throw ValidationError("config: train must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        const json& v = it.value();
        if (k == "epochs") t.epochs = v.get<std::size_t>();
        else if (k == "batch_size") t.batch_size = v.get<std::size_t>();
        else if (k == "lr") t.lr = v.get<double>();
        else if (k == "beta1") t.beta1 = v.get<double>();
        else if (k == "beta2") t.beta2 = v.get<double>();
        else if (k == "epsilon") t.eps = v.get<double>();
        else if (k == "patience") t.patience = v.get<std::size_t>();
        else throw ValidationError("config: train has unknown key '" + k + "'");
    }
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path + ": cannot open config");
    std::ostringstream buf;
    buf << in.rdbuf();

    json j;
    try {
        j = json::parse(buf.str());
    } catch (const json::parse_error& e) {
        throw ValidationError(path + ": not valid JSON: " + e.what());
    }

    RunConfig cfg;
    try {
        if (!j.is_object()) throw ValidationError("config: top level must be an object");
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& k = it.key();
            if (k == "data") parse_data_section(it.value(), cfg);
            else if (k == "model") parse_model_section(it.value(), cfg.model);
            else if (k == "train") parse_train_section(it.value(), cfg.train);
            else if (k == "seed") cfg.seed = it.value().get<std::uint64_t>();
            else throw ValidationError("config: unknown top-level key '" + k + "'");
        }
    } catch (const json::exception& e) {
        throw ValidationError(path + ": malformed config: " + e.what());
    }

    apply_seed(cfg, cfg.seed);

    if (!(cfg.train_ratio > 0.0) || !(cfg.val_ratio > 0.0) || !(cfg.test_ratio > 0.0))
        throw ValidationError("config: split ratios must all be positive");
    if (std::abs(cfg.train_ratio + cfg.val_ratio + cfg.test_ratio - 1.0) > 1e-9)
        throw ValidationError("config: split ratios must sum to 1");
    if (cfg.stride == 0) throw ValidationError("config: stride must be at least 1");
    cfg.data.validate();
    cfg.train.validate();
    // model dims that depend on the corpus (nodes, feature widths) are filled
    // in and validated by the command that loads the data
    return cfg;
}

void apply_seed(RunConfig& cfg, std::uint64_t seed) {
    cfg.seed = seed;
    cfg.data.seed = seed;
    cfg.train.seed = seed;
}

std::string run_config_json(const RunConfig& cfg) {
    const SynthConfig& d = cfg.data;
    const ModelConfig& m = cfg.model;
    const TrainConfig& t = cfg.train;
    json j;
    j["seed"] = cfg.seed;
    j["data"] = json{{"grid_rows", d.grid_rows},
                     {"grid_cols", d.grid_cols},
                     {"extra_edges", d.extra_edges},
                     {"days", d.days},
                     {"step_minutes", d.step_minutes},
                     {"start", d.start},
                     {"base_flow_min", d.base_flow_min},
                     {"base_flow_max", d.base_flow_max},
                     {"amplitude_min", d.amplitude_min},
                     {"amplitude_max", d.amplitude_max},
                     {"weekend_scale", d.weekend_scale},
                     {"holiday_scale", d.holiday_scale},
                     {"holidays", d.holidays},
                     {"noise_sigma", d.noise_sigma},
                     {"accident_rate", d.accident_rate},
                     {"accident_duration_steps", d.accident_duration_steps},
                     {"accident_severity", d.accident_severity},
                     {"rain_probability", d.rain_probability},
                     {"rain_flow_scale", d.rain_flow_scale},
                     {"free_flow_speed", d.free_flow_speed},
                     {"capacity", d.capacity},
                     {"jam_constant", d.jam_constant},
                     {"train_ratio", cfg.train_ratio},
                     {"val_ratio", cfg.val_ratio},
                     {"test_ratio", cfg.test_ratio},
                     {"stride", cfg.stride}};
    j["model"] = json{{"window", m.window},
                      {"horizon", m.horizon},
                      {"out_features", m.out_features},
                      {"spatial_dim", m.spatial_dim},
                      {"model_dim", m.model_dim},
                      {"external_embed_dim", m.external_embed_dim},
                      {"ff_dim", m.ff_dim},
                      {"gcn_layers", m.gcn_layers},
                      {"encoder_blocks", m.encoder_blocks},
                      {"heads", m.heads},
                      {"gcn_activation", to_string(m.gcn_activation)},
                      {"use_gnn", m.use_gnn},
                      {"use_temporal", m.use_temporal},
                      {"use_external", m.use_external}};
    j["train"] = json{{"epochs", t.epochs},   {"batch_size", t.batch_size}, {"lr", t.lr},
                      {"beta1", t.beta1},     {"beta2", t.beta2},           {"epsilon", t.eps},
                      {"patience", t.patience}};
    return j.dump(2) + "\n";
}

}  // namespace traffic
