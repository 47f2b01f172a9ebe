#include "traffic/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "traffic/errors.hpp"
#include "traffic/graph.hpp"

namespace traffic {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "traffic-checkpoint-v1";

// Strict section contract: every listed key present, nothing else allowed.
void expect_keys(const json& obj, const std::string& where,
                 std::initializer_list<const char*> keys) {
    if (!obj.is_object())
        throw ValidationError("checkpoint: " + where + " must be an object");
    for (const char* k : keys)
        if (!obj.contains(k))
            throw ValidationError("checkpoint: " + where + " is missing key '" + k + "'");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : keys) known = known || it.key() == k;
        if (!known)
            throw ValidationError("checkpoint: " + where + " has unknown key '" + it.key() + "'");
    }
}

json tensor_json(const Tensor& t) {
    return json{{"shape", t.shape()}, {"data", t.data()}};
}

Tensor tensor_from_json(const json& j, const std::string& where) {
    expect_keys(j, where, {"shape", "data"});
    auto shape = j.at("shape").get<Shape>();
    auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != shape_size(shape))
        throw ValidationError("checkpoint: " + where + " holds " + std::to_string(data.size()) +
                              " values but its shape " + shape_str(shape) + " needs " +
                              std::to_string(shape_size(shape)));
    return Tensor(std::move(shape), std::move(data));
}

std::uint64_t parse_u64(const std::string& s, const std::string& where) {
    std::uint64_t v = 0;
    const char* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || p != end)
        throw ValidationError("checkpoint: " + where + " is not an unsigned integer: '" + s + "'");
    return v;
}

json model_json(const ModelConfig& m) {
    return json{{"nodes", m.nodes},
                {"in_features", m.in_features},
                {"window", m.window},
                {"horizon", m.horizon},
                {"out_features", m.out_features},
                {"external_dim", m.external_dim},
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
}

ModelConfig model_from_json(const json& j) {
    expect_keys(j, "model",
                {"nodes", "in_features", "window", "horizon", "out_features", "external_dim",
                 "spatial_dim", "model_dim", "external_embed_dim", "ff_dim", "gcn_layers",
                 "encoder_blocks", "heads", "gcn_activation", "use_gnn", "use_temporal",
                 "use_external"});
    ModelConfig m;
    m.nodes = j.at("nodes").get<std::size_t>();
    m.in_features = j.at("in_features").get<std::size_t>();
    m.window = j.at("window").get<std::size_t>();
    m.horizon = j.at("horizon").get<std::size_t>();
    m.out_features = j.at("out_features").get<std::size_t>();
    m.external_dim = j.at("external_dim").get<std::size_t>();
    m.spatial_dim = j.at("spatial_dim").get<std::size_t>();
    m.model_dim = j.at("model_dim").get<std::size_t>();
    m.external_embed_dim = j.at("external_embed_dim").get<std::size_t>();
    m.ff_dim = j.at("ff_dim").get<std::size_t>();
    m.gcn_layers = j.at("gcn_layers").get<std::size_t>();
    m.encoder_blocks = j.at("encoder_blocks").get<std::size_t>();
    m.heads = j.at("heads").get<std::size_t>();
    m.gcn_activation = activation_from_string(j.at("gcn_activation").get<std::string>());
    m.use_gnn = j.at("use_gnn").get<bool>();
    m.use_temporal = j.at("use_temporal").get<bool>();
    m.use_external = j.at("use_external").get<bool>();
    return m;
}

json train_json(const TrainConfig& t) {
    return json{{"epochs", t.epochs},   {"batch_size", t.batch_size}, {"lr", t.lr},
                {"beta1", t.beta1},     {"beta2", t.beta2},           {"epsilon", t.eps},
                {"patience", t.patience}, {"seed", t.seed}};
}

TrainConfig train_from_json(const json& j) {
    expect_keys(j, "train",
                {"epochs", "batch_size", "lr", "beta1", "beta2", "epsilon", "patience", "seed"});
    TrainConfig t;
    t.epochs = j.at("epochs").get<std::size_t>();
    t.batch_size = j.at("batch_size").get<std::size_t>();
    t.lr = j.at("lr").get<double>();
    t.beta1 = j.at("beta1").get<double>();
    t.beta2 = j.at("beta2").get<double>();
    t.eps = j.at("epsilon").get<double>();
    t.patience = j.at("patience").get<std::size_t>();
    t.seed = j.at("seed").get<std::uint64_t>();
    return t;
}

json norm_json(const NormStats& n) {
    return json{{"mean", tensor_json(n.mean)},
                {"stdev", tensor_json(n.stdev)},
                {"ext_mean", tensor_json(n.ext_mean)},
                {"ext_std", tensor_json(n.ext_std)},
                {"ext_is_flag", n.ext_is_flag}};
}

NormStats norm_from_json(const json& j) {
    expect_keys(j, "norm", {"mean", "stdev", "ext_mean", "ext_std", "ext_is_flag"});
    NormStats n;
    n.mean = tensor_from_json(j.at("mean"), "norm.mean");
    n.stdev = tensor_from_json(j.at("stdev"), "norm.stdev");
    n.ext_mean = tensor_from_json(j.at("ext_mean"), "norm.ext_mean");
    n.ext_std = tensor_from_json(j.at("ext_std"), "norm.ext_std");
    n.ext_is_flag = j.at("ext_is_flag").get<std::vector<bool>>();
    if (!n.mean.same_shape(n.stdev))
        throw ValidationError("checkpoint: norm.mean and norm.stdev shapes differ");
    if (n.ext_mean.shape() != Shape{Dataset::kExternals} ||
        n.ext_std.shape() != Shape{Dataset::kExternals} ||
        n.ext_is_flag.size() != Dataset::kExternals)
        throw ValidationError("checkpoint: external statistics must have " +
                              std::to_string(Dataset::kExternals) + " entries");
    return n;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json j;
    j["format"] = kFormat;
    j["seed"] = ckpt.seed;
    j["step_minutes"] = ckpt.step_minutes;
    j["train_ratio"] = ckpt.train_ratio;
    j["val_ratio"] = ckpt.val_ratio;
    j["test_ratio"] = ckpt.test_ratio;
    j["stride"] = ckpt.stride;
    j["graph_fingerprint"] = std::to_string(ckpt.graph_fingerprint);
    j["model"] = model_json(ckpt.params.cfg);
    j["train"] = train_json(ckpt.train);
    j["norm"] = norm_json(ckpt.norm);
    json params = json::object();
    ckpt.params.for_each(
        [&](const std::string& name, const Tensor& t) { params[name] = tensor_json(t); });
    j["params"] = std::move(params);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path + ": cannot open for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError(path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path + ": cannot open checkpoint");
    std::ostringstream buf;
    buf << in.rdbuf();

    json j;
    try {
        j = json::parse(buf.str());
    } catch (const json::parse_error& e) {
        throw ValidationError(path + ": not valid JSON: " + e.what());
    }

    try {
        expect_keys(j, "checkpoint",
                    {"format", "seed", "step_minutes", "train_ratio", "val_ratio", "test_ratio",
                     "stride", "graph_fingerprint", "model", "train", "norm", "params"});
        const auto format = j.at("format").get<std::string>();
        if (format != kFormat)
            throw ValidationError("checkpoint: unsupported format '" + format + "' (expected '" +
                                  std::string(kFormat) + "')");

        Checkpoint c;
        c.seed = j.at("seed").get<std::uint64_t>();
        c.step_minutes = j.at("step_minutes").get<std::int64_t>();
        c.train_ratio = j.at("train_ratio").get<double>();
        c.val_ratio = j.at("val_ratio").get<double>();
        c.test_ratio = j.at("test_ratio").get<double>();
        c.stride = j.at("stride").get<std::size_t>();
        c.graph_fingerprint =
            parse_u64(j.at("graph_fingerprint").get<std::string>(), "graph_fingerprint");
        c.train = train_from_json(j.at("train"));
        c.norm = norm_from_json(j.at("norm"));

        const ModelConfig mcfg = model_from_json(j.at("model"));
        mcfg.validate();
        if (c.norm.mean.shape() != Shape{mcfg.nodes, mcfg.in_features})
            throw ValidationError("checkpoint: norm.mean is shaped " +
                                  shape_str(c.norm.mean.shape()) + " but the model expects " +
                                  shape_str(Shape{mcfg.nodes, mcfg.in_features}));
        c.params = ModelParams::init(mcfg, 0);

        const json& params = j.at("params");
        if (!params.is_object())
            throw ValidationError("checkpoint: params must be an object");
        std::size_t used = 0;
        c.params.for_each([&](const std::string& name, Tensor& t) {
            if (!params.contains(name))
                throw ValidationError("checkpoint: params is missing tensor '" + name + "'");
            Tensor loaded = tensor_from_json(params.at(name), "params." + name);
            if (!loaded.same_shape(t))
                throw ValidationError("checkpoint: params." + name + " has shape " +
                                      shape_str(loaded.shape()) + " but the model expects " +
                                      shape_str(t.shape()));
            t = std::move(loaded);
            ++used;
        });
        if (params.size() != used)
            for (auto it = params.begin(); it != params.end(); ++it) {
                bool known = false;
                for (const auto& name : c.params.param_names()) known = known || name == it.key();
                if (!known)
                    throw ValidationError("checkpoint: params has unknown tensor '" + it.key() +
                                          "'");
            }
        return c;
    } catch (const json::exception& e) {
        throw ValidationError(path + ": malformed checkpoint: " + e.what());
    }
}

}  // namespace traffic
