#pragma once

// Model persistence. A checkpoint bundles everything forecasting on fresh
// data needs: the architecture, the learned weights, the scaling statistics,
// the data layout the model was trained for, and the fingerprint of the
// graph it is bound to.

#include <cstdint>
#include <string>

#include "traffic/data.hpp"
#include "traffic/model.hpp"
#include "traffic/train.hpp"

namespace traffic {

struct Checkpoint {
    std::uint64_t seed = 1;
    std::int64_t step_minutes = 5;
    double train_ratio = 0.7;
    double val_ratio = 0.1;
    double test_ratio = 0.2;
    std::size_t stride = 1;
    std::uint64_t graph_fingerprint = 0;
    TrainConfig train;
    NormStats norm;
    ModelParams params;  // params.cfg carries the architecture
};

// JSON with shortest-round-trip doubles; save/load is bit-exact.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace traffic
