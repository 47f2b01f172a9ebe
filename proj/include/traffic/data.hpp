#pragma once

// Corpus handling: synthetic generation, CSV ingestion, grid alignment with
// imputation, train-range normalization, windowing, and chronological splits.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "traffic/graph.hpp"
#include "traffic/tensor.hpp"

namespace traffic {

// Regular-grid corpus. Feature order: flow, speed, occupancy. External
// column order: temperature, rainfall, visibility, is_holiday, incident.
struct Dataset {
    static constexpr std::size_t kFeatures = 3;
    static constexpr std::size_t kExternals = 5;

    std::int64_t start_minutes = 0;
    std::int64_t step_minutes = 5;
    std::size_t steps = 0;  // L
    std::size_t nodes = 0;  // N
    Tensor values;     // L x N x 3
    Tensor externals;  // L x 5
    Tensor imputed;    // L x N x 3; 1.0 where no raw record backed the cell
    std::size_t collision_warnings = 0;  // distinct raw writes that landed on an occupied cell

    std::int64_t minutes_at(std::size_t step) const {
        return start_minutes + static_cast<std::int64_t>(step) * step_minutes;
    }
    std::size_t day_of(std::size_t step) const {
        return static_cast<std::size_t>((minutes_at(step) - start_minutes) / (24 * 60));
    }
};

struct SynthConfig {
    std::size_t grid_rows = 3;
    std::size_t grid_cols = 3;
    std::size_t extra_edges = 2;
    std::size_t days = 14;
    std::int64_t step_minutes = 5;
    std::string start = "2026-01-05T00:00";  // a Monday

    double base_flow_min = 80.0;   // per-node a_i drawn uniformly from this range
    double base_flow_max = 120.0;
    double amplitude_min = 20.0;   // per-node daily swing b_i
    double amplitude_max = 50.0;
    double weekend_scale = 0.7;
    double holiday_scale = 0.5;
    std::vector<std::size_t> holidays;  // day indices from the start date

    double noise_sigma = 5.0;
    double accident_rate = 0.02;  // probability per node per day
    std::size_t accident_duration_steps = 12;
    double accident_severity = 0.5;
    double rain_probability = 0.25;  // probability per day
    double rain_flow_scale = 0.8;

    double free_flow_speed = 60.0;
    double capacity = 200.0;
    double jam_constant = 8.0;
    std::uint64_t seed = 1;

    void validate() const;
    std::size_t node_count() const { return grid_rows * grid_cols; }
    std::size_t steps_per_day() const { return static_cast<std::size_t>(1440 / step_minutes); }
    std::size_t total_steps() const { return days * steps_per_day(); }
};

std::pair<RoadGraph, Dataset> generate_synthetic(const SynthConfig& cfg);

// Raw rows as they appear on disk; empty numeric fields become nullopt.
struct TrafficRecord {
    std::int64_t minutes = 0;
    std::size_t node = 0;
    std::optional<double> flow, speed, occupancy;
};

struct ExternalRecord {
    std::int64_t minutes = 0;
    std::array<double, Dataset::kExternals> values{};
};

struct RawCorpus {
    RoadGraph graph;
    std::vector<TrafficRecord> traffic;
    std::vector<ExternalRecord> externals;
};

RawCorpus ingest_csv(const std::string& traffic_path, const std::string& external_path,
                     const std::string& graph_path, std::optional<std::size_t> node_count = std::nullopt);

// Snaps records to the nearest grid step (later rows win on collision),
// fills gaps of up to 3 steps linearly, longer gaps by carrying the last
// value forward (leading gaps copy the first), and marks what it invented.
Dataset align_and_impute(const RawCorpus& corpus, std::int64_t step_minutes);

struct NormStats {
    Tensor mean, stdev;        // N x F
    Tensor ext_mean, ext_std;  // 5
    std::vector<bool> ext_is_flag;  // all train values in {0,1} -> left unscaled

    double norm(double v, std::size_t node, std::size_t feature) const;
    double denorm(double v, std::size_t node, std::size_t feature) const;
};

// z-scores per (node, feature) with statistics from [train_lo, train_hi) only.
std::pair<Dataset, NormStats> normalize(const Dataset& ds, std::size_t train_lo, std::size_t train_hi);

// Applies existing statistics to every step — used when a stored scaling
// must be reused on fresh data.
Dataset apply_norm(const Dataset& ds, const NormStats& stats);

struct Window {
    std::size_t start = 0;  // index of the first input step
    Tensor x;  // T x N x F
    Tensor z;  // T x M
    Tensor y;  // H x N x F_out (first F_out feature columns)
    Tensor w;  // H x N x F_out; 1 where the target entry is observed
};

// Windows fully inside [lo, hi); targets never cross the boundary.
std::vector<Window> make_windows(const Dataset& ds, std::size_t window_len, std::size_t horizon,
                                 std::size_t out_features, std::size_t stride, std::size_t lo,
                                 std::size_t hi);

struct SplitRanges {
    std::size_t train_hi = 0;  // train = [0, train_hi)
    std::size_t val_hi = 0;    // val   = [train_hi, val_hi)
    std::size_t steps = 0;     // test  = [val_hi, steps)
};

SplitRanges chronological_split(std::size_t steps, double train_ratio, double val_ratio, double test_ratio);

// Shortest representation that parses back to the identical double.
std::string format_double(double v);

void write_traffic_csv(const Dataset& ds, const std::string& path);
void write_external_csv(const Dataset& ds, const std::string& path);

}  // namespace traffic
