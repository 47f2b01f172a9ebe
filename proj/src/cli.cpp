#include "traffic/cli.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "traffic/checkpoint.hpp"
#include "traffic/config.hpp"
#include "traffic/data.hpp"
#include "traffic/errors.hpp"
#include "traffic/graph.hpp"
#include "traffic/model.hpp"
#include "traffic/train.hpp"

namespace traffic {

namespace {

namespace fs = std::filesystem;

RunConfig config_or_defaults(const std::string& path) {
    if (path.empty()) {
        RunConfig cfg;
        cfg.data.validate();
        cfg.train.validate();
        return cfg;
    }
    return load_run_config(path);
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError(dir + ": cannot create output directory: " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path + ": cannot open for writing");
    out << text;
    if (!out) throw IoError(path + ": write failed");
}

struct LoadedCorpus {
    RoadGraph graph;
    Dataset ds;
};

LoadedCorpus load_corpus(const std::string& dir, std::int64_t step_minutes) {
    RawCorpus raw =
        ingest_csv(dir + "/traffic.csv", dir + "/external.csv", dir + "/graph.csv");
    Dataset ds = align_and_impute(raw, step_minutes);
    return {std::move(raw.graph), std::move(ds)};
}

// Fills in the corpus-derived widths that a config file cannot know.
ModelConfig bind_model(ModelConfig mcfg, std::size_t nodes) {
    mcfg.nodes = nodes;
    mcfg.in_features = Dataset::kFeatures;
    mcfg.external_dim = Dataset::kExternals;
    mcfg.validate();
    return mcfg;
}

ModelConfig apply_ablations(ModelConfig mcfg, const std::vector<std::string>& ablate) {
    for (const std::string& a : ablate) {
        if (a == "gnn") mcfg.use_gnn = false;
        else if (a == "temporal") mcfg.use_temporal = false;
        else if (a == "fusion") mcfg.use_external = false;
        else
            throw ValidationError("train: unknown ablation '" + a +
                                  "' (expected gnn, temporal, or fusion)");
    }
    return mcfg;
}

void check_graph_binding(const RoadGraph& graph, std::size_t corpus_nodes,
                         const Checkpoint& ckpt, const std::string& cmd) {
    if (corpus_nodes != ckpt.params.cfg.nodes)
        throw ValidationError(cmd + ": corpus has " + std::to_string(corpus_nodes) +
                              " nodes but the checkpoint was trained with " +
                              std::to_string(ckpt.params.cfg.nodes));
    if (graph.fingerprint() != ckpt.graph_fingerprint)
        throw ValidationError(cmd + ": graph fingerprint " + std::to_string(graph.fingerprint()) +
                              " does not match the checkpoint's " +
                              std::to_string(ckpt.graph_fingerprint));
}

}  // namespace

void cmd_generate(const GenerateArgs& args, std::ostream& out) {
    RunConfig cfg = config_or_defaults(args.config_path);
    if (args.seed) apply_seed(cfg, *args.seed);

    auto [graph, ds] = generate_synthetic(cfg.data);

    ensure_dir(args.out_dir);
    save_graph_csv(graph, args.out_dir + "/graph.csv");
    write_traffic_csv(ds, args.out_dir + "/traffic.csv");
    write_external_csv(ds, args.out_dir + "/external.csv");
    write_text(args.out_dir + "/config.json", run_config_json(cfg));
    out << "generated " << ds.steps << " steps x " << ds.nodes << " nodes into " << args.out_dir
        << " (seed " << cfg.seed << ")\n";
}

void cmd_train(const TrainArgs& args, std::ostream& out) {
    RunConfig cfg = config_or_defaults(args.config_path);
    if (args.seed) apply_seed(cfg, *args.seed);
    cfg.model = apply_ablations(cfg.model, args.ablate);

    auto [graph, ds] = load_corpus(args.data_dir, cfg.data.step_minutes);
    const ModelConfig mcfg = bind_model(cfg.model, ds.nodes);

    const SplitRanges split =
        chronological_split(ds.steps, cfg.train_ratio, cfg.val_ratio, cfg.test_ratio);
    auto [norm, stats] = normalize(ds, 0, split.train_hi);
    const auto train_w = make_windows(norm, mcfg.window, mcfg.horizon, mcfg.out_features,
                                      cfg.stride, 0, split.train_hi);
    const auto val_w = make_windows(norm, mcfg.window, mcfg.horizon, mcfg.out_features, 1,
                                    split.train_hi, split.val_hi);
    if (train_w.empty())
        throw ValidationError("train: the training split (" + std::to_string(split.train_hi) +
                              " steps) is too short for window " + std::to_string(mcfg.window) +
                              " + horizon " + std::to_string(mcfg.horizon));
    if (val_w.empty())
        throw ValidationError("train: the validation split (" +
                              std::to_string(split.val_hi - split.train_hi) +
                              " steps) is too short for window " + std::to_string(mcfg.window) +
                              " + horizon " + std::to_string(mcfg.horizon));

    ensure_dir(args.out_dir);
    auto [params, history] = train_model(mcfg, graph, train_w, val_w, cfg.train);

    Checkpoint ckpt;
    ckpt.seed = cfg.seed;
    ckpt.step_minutes = cfg.data.step_minutes;
    ckpt.train_ratio = cfg.train_ratio;
    ckpt.val_ratio = cfg.val_ratio;
    ckpt.test_ratio = cfg.test_ratio;
    ckpt.stride = cfg.stride;
    ckpt.graph_fingerprint = graph.fingerprint();
    ckpt.train = cfg.train;
    ckpt.norm = stats;
    ckpt.params = params;
    save_checkpoint(ckpt, args.out_dir + "/checkpoint.json");
    write_history_csv(history, args.out_dir + "/history.csv");
    write_text(args.out_dir + "/config.json", run_config_json(cfg));

    out << "best epoch " << (history.best_epoch + 1) << "/" << history.train_loss.size()
        << ": val loss " << format_double(history.val_loss[history.best_epoch]) << ", train loss "
        << format_double(history.train_loss[history.best_epoch]) << "\n";
}

void cmd_eval(const EvalArgs& args, std::ostream& out) {
    const Checkpoint ckpt = load_checkpoint(args.checkpoint_path);
    auto [graph, ds] = load_corpus(args.data_dir, ckpt.step_minutes);
    check_graph_binding(graph, ds.nodes, ckpt, "eval");

    const Dataset norm = apply_norm(ds, ckpt.norm);
    const SplitRanges split =
        chronological_split(ds.steps, ckpt.train_ratio, ckpt.val_ratio, ckpt.test_ratio);
    const ModelConfig& base = ckpt.params.cfg;
    const auto train_w = make_windows(norm, base.window, base.horizon, base.out_features,
                                      ckpt.stride, 0, split.train_hi);
    const auto val_w = make_windows(norm, base.window, base.horizon, base.out_features, 1,
                                    split.train_hi, split.val_hi);
    const auto test_w = make_windows(norm, base.window, base.horizon, base.out_features, 1,
                                     split.val_hi, split.steps);
    if (test_w.empty())
        throw ValidationError("eval: the test split (" + std::to_string(split.steps - split.val_hi) +
                              " steps) is too short for window " + std::to_string(base.window) +
                              " + horizon " + std::to_string(base.horizon));
    if (train_w.empty() || val_w.empty())
        throw ValidationError("eval: the train/val splits are too short to retrain ablations");

    ensure_dir(args.out_dir);

    std::vector<std::pair<std::string, MetricReport>> rows;
    rows.emplace_back("hybrid", evaluate_model(ckpt.params, graph, test_w, ckpt.norm));

    const std::pair<const char*, bool ModelConfig::*> switches[] = {
        {"gnn_off", &ModelConfig::use_gnn},
        {"temporal_off", &ModelConfig::use_temporal},
        {"fusion_off", &ModelConfig::use_external},
    };
    for (const auto& [name, member] : switches) {
        ModelConfig vcfg = base;
        vcfg.*member = false;
        vcfg.validate();
        auto [vparams, vhistory] = train_model(vcfg, graph, train_w, val_w, ckpt.train);
        rows.emplace_back(name, evaluate_model(vparams, graph, test_w, ckpt.norm));
    }

    rows.emplace_back("persistence", evaluate_persistence(test_w, ckpt.norm));
    rows.emplace_back("historical-average",
                      evaluate_historical_average(norm, split.train_hi, test_w, ckpt.norm));

    write_metrics_csv(rows, args.out_dir + "/metrics.csv");
    for (const auto& [name, report] : rows)
        out << name << ": mae " << format_double(report.mae) << ", rmse "
            << format_double(report.rmse) << "\n";
}

bool cmd_gradcheck(const GradcheckArgs& args, std::ostream& out) {
    if (!(args.tol > 0.0)) throw ValidationError("gradcheck: tol must be positive");
    if (!(args.eps > 0.0)) throw ValidationError("gradcheck: eps must be positive");

    RunConfig cfg;
    if (args.config_path.empty()) {
        // desk-scale defaults: small enough that central differences over
        // every parameter stay fast
        cfg.data.grid_rows = 2;
        cfg.data.grid_cols = 2;
        cfg.data.extra_edges = 0;
        cfg.data.days = 1;
        cfg.data.step_minutes = 60;
        cfg.model.window = 4;
        cfg.model.horizon = 2;
        cfg.model.out_features = 1;
        cfg.model.spatial_dim = 4;
        cfg.model.model_dim = 4;
        cfg.model.external_embed_dim = 4;
        cfg.model.ff_dim = 8;
        cfg.model.gcn_layers = 2;
        cfg.model.encoder_blocks = 2;
        cfg.model.heads = 2;
        cfg.data.validate();
    } else {
        cfg = load_run_config(args.config_path);
    }
    if (args.seed) apply_seed(cfg, *args.seed);

    const ModelConfig mcfg = bind_model(cfg.model, cfg.data.node_count());
    const std::size_t count = ModelParams::init(mcfg, 0).param_count();
    if (count > 5000)
        throw ValidationError("gradcheck: model has " + std::to_string(count) +
                              " parameters; finite differences are limited to 5000");

    auto [graph, raw] = generate_synthetic(cfg.data);
    const std::size_t need = mcfg.window + mcfg.horizon;
    if (raw.steps < need)
        throw ValidationError("gradcheck: corpus yields " + std::to_string(raw.steps) +
                              " steps; window " + std::to_string(mcfg.window) + " + horizon " +
                              std::to_string(mcfg.horizon) + " need " + std::to_string(need));
    auto [norm, stats] = normalize(raw, 0, raw.steps);
    const auto windows =
        make_windows(norm, mcfg.window, mcfg.horizon, mcfg.out_features, 1, 0, need);
    const Window& w = windows.front();

    const GradCheckReport report =
        grad_check_model(mcfg, graph, {w.x, w.z}, w.y, cfg.seed, args.eps, args.tol);
    for (const GradCheckEntry& e : report.entries)
        out << e.name << ": max relative error " << format_double(e.max_rel_err) << " "
            << (e.pass ? "PASS" : "FAIL") << "\n";
    out << "gradcheck " << (report.pass ? "PASS" : "FAIL") << " (" << report.entries.size()
        << " parameter tensors, tol " << format_double(report.tol) << ")\n";
    return report.pass;
}

void cmd_forecast(const ForecastArgs& args, std::ostream& out) {
    const Checkpoint ckpt = load_checkpoint(args.checkpoint_path);
    const ModelConfig& mcfg = ckpt.params.cfg;
    if (mcfg.out_features != 1)
        throw ValidationError("forecast: checkpoint predicts " +
                              std::to_string(mcfg.out_features) +
                              " channels per node; the step,node_id,value format needs exactly 1");

    RawCorpus raw = ingest_csv(args.window_path, args.external_path, args.graph_path);
    Dataset ds = align_and_impute(raw, ckpt.step_minutes);
    check_graph_binding(raw.graph, ds.nodes, ckpt, "forecast");
    if (ds.steps != mcfg.window)
        throw ValidationError("forecast: window file covers " + std::to_string(ds.steps) +
                              " aligned steps but the model needs exactly " +
                              std::to_string(mcfg.window));
    double missing = 0.0;
    for (std::size_t i = 0; i < ds.imputed.size(); ++i) missing += ds.imputed.at(i);
    if (missing > 0.0)
        throw ValidationError("forecast: " + format_double(missing) +
                              " window entries were missing and had to be invented; a fully "
                              "observed window is required");

    const Dataset norm = apply_norm(ds, ckpt.norm);
    const Forecast fc = forward(ckpt.params, raw.graph, {norm.values, norm.externals});

    std::string csv = "step,node_id,value\n";
    for (std::size_t h = 0; h < fc.horizon; ++h)
        for (std::size_t i = 0; i < mcfg.nodes; ++i)
            csv += std::to_string(h + 1) + "," + std::to_string(i) + "," +
                   format_double(ckpt.norm.denorm(fc.values(h, i, 0), i, 0)) + "\n";

    if (args.out_path.empty()) {
        out << csv;
    } else {
        write_text(args.out_path, csv);
        out << "wrote " << fc.horizon << "x" << mcfg.nodes << " forecast rows to " << args.out_path
            << "\n";
    }
}

int run_command(const std::function<int()>& fn, std::ostream& err) {
    try {
        return fn();
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const InternalError& e) {
        err << "internal error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace traffic
