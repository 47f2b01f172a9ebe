#pragma once

// Run configuration: one JSON file describing the synthetic corpus, the
// chronological split, the model architecture, and the optimizer. A single
// top-level seed drives both data generation and training.

#include <cstdint>
#include <string>

#include "traffic/data.hpp"
#include "traffic/model.hpp"
#include "traffic/train.hpp"

namespace traffic {

struct RunConfig {
    SynthConfig data;
    double train_ratio = 0.7;
    double val_ratio = 0.1;
    double test_ratio = 0.2;
    std::size_t stride = 1;
    ModelConfig model;  // nodes/in_features/external_dim are filled in from the corpus
    TrainConfig train;
    std::uint64_t seed = 1;
};

// Parses and validates. Every key must be known; sections may be partial
// (missing fields keep their defaults).
RunConfig load_run_config(const std::string& path);

// Sets the top-level seed and pushes it into the data and train sections.
void apply_seed(RunConfig& cfg, std::uint64_t seed);

// The effective configuration, defaults included, as pretty-printed JSON.
std::string run_config_json(const RunConfig& cfg);

}  // namespace traffic
