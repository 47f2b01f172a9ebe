#pragma once

// Command implementations behind the command-line tool. Every cmd_* function
// validates its full input before touching the filesystem and throws on
// failure; run_command translates exceptions into process exit codes.

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace traffic {

struct GenerateArgs {
    std::string config_path;  // empty: built-in defaults
    std::string out_dir;
    std::optional<std::uint64_t> seed;  // overrides the config seed
};

struct TrainArgs {
    std::string config_path;  // empty: built-in defaults
    std::string data_dir;     // expects traffic.csv, external.csv, graph.csv
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> ablate;  // any of: gnn, temporal, fusion
};

struct EvalArgs {
    std::string checkpoint_path;
    std::string data_dir;
    std::string out_dir;
};

struct GradcheckArgs {
    std::string config_path;  // empty: desk-scale defaults
    std::optional<std::uint64_t> seed;
    double tol = 1e-4;
    double eps = 1e-5;
};

struct ForecastArgs {
    std::string checkpoint_path;
    std::string graph_path;
    std::string window_path;    // traffic CSV covering exactly the model window
    std::string external_path;  // matching external CSV
    std::string out_path;       // empty: rows go to the output stream
};

// Writes traffic.csv, external.csv, graph.csv and the effective config.json.
void cmd_generate(const GenerateArgs& args, std::ostream& out);

// Trains on the corpus and writes checkpoint.json, history.csv, config.json.
void cmd_train(const TrainArgs& args, std::ostream& out);

// Writes metrics.csv with rows {hybrid, gnn_off, temporal_off, fusion_off,
// persistence, historical-average} scored on the test split.
void cmd_eval(const EvalArgs& args, std::ostream& out);

// Prints one line per parameter tensor; returns true iff all pass.
bool cmd_gradcheck(const GradcheckArgs& args, std::ostream& out);

// Emits the de-normalized forecast as `step,node_id,value` rows.
void cmd_forecast(const ForecastArgs& args, std::ostream& out);

// 0 on success, 1 for rejected input (ValidationError/IoError), 2 for broken
// internal invariants. The callback's own return value passes through.
int run_command(const std::function<int()>& fn, std::ostream& err);

}  // namespace traffic
