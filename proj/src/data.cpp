#include "traffic/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <utility>

#include "traffic/errors.hpp"
#include "traffic/timeutil.hpp"

namespace traffic {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMinutesPerDay = 1440.0;

double clip01(double v) { return std::min(1.0, std::max(0.0, v)); }

std::string location(const std::string& path, std::size_t line_no) {
    return path + ":" + std::to_string(line_no);
}

// getline with Windows line endings tolerated.
bool next_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t comma = line.find(',', pos);
        if (comma == std::string::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return out;
}

double parse_double_field(const std::string& s, const std::string& path, std::size_t line_no,
                          const char* name) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ValidationError(location(path, line_no) + ": field '" + name + "' is not a number: '" +
                              s + "'");
    if (!std::isfinite(v))
        throw ValidationError(location(path, line_no) + ": field '" + name + "' must be finite");
    return v;
}

std::size_t parse_index_field(const std::string& s, const std::string& path, std::size_t line_no,
                              const char* name) {
    unsigned long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ValidationError(location(path, line_no) + ": field '" + name +
                              "' is not a non-negative integer: '" + s + "'");
    return static_cast<std::size_t>(v);
}

// Nearest grid point; exact half-steps round up.
std::int64_t snap_to_grid(std::int64_t minutes, std::int64_t step) {
    std::int64_t shifted = minutes + step / 2;
    std::int64_t q = shifted >= 0 ? shifted / step : -((-shifted + step - 1) / step);
    return q * step;
}

constexpr std::size_t kMaxInterpGap = 3;

// Fills unobserved entries in place: gaps of up to kMaxInterpGap steps are
// linearly interpolated, longer ones carry the last observation forward, and
// a leading gap copies the first observation backwards. A series with no
// observations at all is left untouched (zeros).
void fill_gaps(std::vector<double>& v, const std::vector<char>& obs) {
    const std::size_t len = v.size();
    std::size_t first = len;
    for (std::size_t t = 0; t < len; ++t)
        if (obs[t]) {
            first = t;
            break;
        }
    if (first == len) return;
    for (std::size_t t = 0; t < first; ++t) v[t] = v[first];
    std::size_t prev = first;
    for (std::size_t t = first + 1; t < len; ++t) {
        if (!obs[t]) continue;
        const std::size_t gap = t - prev - 1;
        if (gap > 0 && gap <= kMaxInterpGap) {
            for (std::size_t k = 1; k <= gap; ++k)
                v[prev + k] =
                    v[prev] + (v[t] - v[prev]) * static_cast<double>(k) / static_cast<double>(t - prev);
        } else if (gap > kMaxInterpGap) {
            for (std::size_t k = 1; k <= gap; ++k) v[prev + k] = v[prev];
        }
        prev = t;
    }
    for (std::size_t t = prev + 1; t < len; ++t) v[t] = v[prev];
}

}  // namespace

void SynthConfig::validate() const {
    if (grid_rows == 0 || grid_cols == 0)
        throw ValidationError("synth: grid must have at least one node");
    if (days == 0) throw ValidationError("synth: days must be positive");
    if (step_minutes <= 0 || 1440 % step_minutes != 0)
        throw ValidationError("synth: step_minutes must be positive and divide 1440");
    if (base_flow_min < 0.0 || base_flow_max < base_flow_min)
        throw ValidationError("synth: base flow range is invalid");
    if (amplitude_min < 0.0 || amplitude_max < amplitude_min)
        throw ValidationError("synth: amplitude range is invalid");
    if (weekend_scale <= 0.0 || holiday_scale <= 0.0)
        throw ValidationError("synth: day-type scales must be positive");
    if (noise_sigma < 0.0) throw ValidationError("synth: noise_sigma must be non-negative");
    if (accident_rate < 0.0 || accident_rate > 1.0 || rain_probability < 0.0 ||
        rain_probability > 1.0)
        throw ValidationError("synth: event probabilities must lie in [0, 1]");
    if (accident_severity < 0.0 || accident_severity > 1.0)
        throw ValidationError("synth: accident_severity must lie in [0, 1]");
    if (accident_duration_steps == 0)
        throw ValidationError("synth: accident duration must be positive");
    if (rain_flow_scale <= 0.0) throw ValidationError("synth: rain_flow_scale must be positive");
    if (free_flow_speed <= 0.0 || capacity <= 0.0 || jam_constant <= 0.0)
        throw ValidationError("synth: speed, capacity and jam constants must be positive");
    for (std::size_t d : holidays)
        if (d >= days) throw ValidationError("synth: holiday day index out of range");
    parse_minutes(start);
}

std::pair<RoadGraph, Dataset> generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.node_count();
    const std::size_t spd = cfg.steps_per_day();
    const std::size_t total = cfg.total_steps();
    const std::int64_t start_min = parse_minutes(cfg.start);

    std::mt19937_64 rng(cfg.seed);

    // Lattice edges in both directions, then a fixed number of extra draws;
    // a draw that lands on a self-loop or an existing edge is dropped so the
    // stream of random numbers stays identical across runs.
    std::vector<Edge> edges;
    auto id = [&](std::size_t r, std::size_t c) { return r * cfg.grid_cols + c; };
    for (std::size_t r = 0; r < cfg.grid_rows; ++r)
        for (std::size_t c = 0; c < cfg.grid_cols; ++c) {
            if (c + 1 < cfg.grid_cols) {
                edges.push_back({id(r, c), id(r, c + 1)});
                edges.push_back({id(r, c + 1), id(r, c)});
            }
            if (r + 1 < cfg.grid_rows) {
                edges.push_back({id(r, c), id(r + 1, c)});
                edges.push_back({id(r + 1, c), id(r, c)});
            }
        }
    {
        std::uniform_int_distribution<std::size_t> node_dist(0, n - 1);
        auto has_edge = [&](std::size_t s, std::size_t d) {
            for (const Edge& e : edges)
                if (e.src == s && e.dst == d) return true;
            return false;
        };
        for (std::size_t k = 0; k < cfg.extra_edges; ++k) {
            const std::size_t s = node_dist(rng);
            const std::size_t d = node_dist(rng);
            if (s != d && !has_edge(s, d)) edges.push_back({s, d});
        }
    }
    RoadGraph graph = RoadGraph::build(n, edges);

    // Per-node demand profile: base level, daily swing, phase within the day.
    std::vector<double> base(n), amp(n), phase(n);
    {
        std::uniform_real_distribution<double> base_dist(cfg.base_flow_min, cfg.base_flow_max);
        std::uniform_real_distribution<double> amp_dist(cfg.amplitude_min, cfg.amplitude_max);
        std::uniform_real_distribution<double> phase_dist(0.0, kMinutesPerDay);
        for (std::size_t i = 0; i < n; ++i) {
            base[i] = base_dist(rng);
            amp[i] = amp_dist(rng);
            phase[i] = phase_dist(rng);
        }
    }

    // Day-level events: at most one rain spell per day, then one accident
    // draw per node per day.
    std::vector<double> rain_at(total, 0.0);
    std::vector<char> incident_at(total, 0);
    std::vector<double> flow_factor(total * n, 1.0);
    std::vector<double> speed_factor(total * n, 1.0);
    {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::uniform_int_distribution<std::size_t> start_dist(0, spd - 1);
        std::uniform_int_distribution<std::size_t> rain_len_dist(spd / 8 + 1, spd / 3 + 1);
        std::uniform_real_distribution<double> rain_mm_dist(2.0, 10.0);
        for (std::size_t d = 0; d < cfg.days; ++d) {
            if (unit(rng) < cfg.rain_probability) {
                const std::size_t s = d * spd + start_dist(rng);
                const std::size_t len = rain_len_dist(rng);
                const double mm = rain_mm_dist(rng);
                for (std::size_t t = s; t < std::min(s + len, total); ++t) rain_at[t] = mm;
            }
            for (std::size_t i = 0; i < n; ++i) {
                if (unit(rng) < cfg.accident_rate) {
                    const std::size_t s = d * spd + start_dist(rng);
                    for (std::size_t t = s; t < std::min(s + cfg.accident_duration_steps, total);
                         ++t) {
                        flow_factor[t * n + i] *= 1.0 - cfg.accident_severity / 2.0;
                        speed_factor[t * n + i] *= 1.0 - cfg.accident_severity;
                        incident_at[t] = 1;
                    }
                }
            }
        }
    }

    // Holidays override the weekend discount.
    std::vector<double> day_scale(cfg.days, 1.0);
    std::vector<char> is_holiday(cfg.days, 0);
    for (std::size_t d = 0; d < cfg.days; ++d) {
        is_holiday[d] = std::find(cfg.holidays.begin(), cfg.holidays.end(), d) != cfg.holidays.end();
        const int wd = weekday_of(start_min + static_cast<std::int64_t>(d) * 1440);
        day_scale[d] = is_holiday[d] ? cfg.holiday_scale : (wd >= 5 ? cfg.weekend_scale : 1.0);
    }

    Dataset ds;
    ds.start_minutes = start_min;
    ds.step_minutes = cfg.step_minutes;
    ds.steps = total;
    ds.nodes = n;
    ds.values = Tensor(Shape{total, n, Dataset::kFeatures});
    ds.externals = Tensor(Shape{total, Dataset::kExternals});
    ds.imputed = Tensor(Shape{total, n, Dataset::kFeatures});

    std::normal_distribution<double> noise(0.0, cfg.noise_sigma > 0.0 ? cfg.noise_sigma : 1.0);
    std::vector<double> demand(n), smoothed(n);
    for (std::size_t t = 0; t < total; ++t) {
        const double mod = static_cast<double>(minute_of_day(ds.minutes_at(t)));
        const std::size_t day = t / spd;
        for (std::size_t i = 0; i < n; ++i) {
            const double swing = amp[i] * std::sin(2.0 * kPi * (mod - phase[i]) / kMinutesPerDay);
            demand[i] = (base[i] + swing) * day_scale[day];
        }
        // One diffusion pass: a share of demand leaks in along incoming edges.
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            std::size_t cnt = 0;
            for (std::size_t j : graph.neighbors(i)) {
                if (j == i) continue;
                acc += demand[j];
                ++cnt;
            }
            smoothed[i] = cnt == 0 ? demand[i] : 0.7 * demand[i] + 0.3 * acc / static_cast<double>(cnt);
        }
        const double rain = rain_at[t];
        for (std::size_t i = 0; i < n; ++i) {
            double d = smoothed[i];
            if (rain > 0.0) d *= cfg.rain_flow_scale;
            const double eps = cfg.noise_sigma > 0.0 ? noise(rng) : 0.0;
            double flow = std::max(0.0, d + eps);
            double speed = cfg.free_flow_speed * (1.0 - 0.6 * clip01(flow / cfg.capacity));
            flow *= flow_factor[t * n + i];
            speed *= speed_factor[t * n + i];
            const double occ = clip01(flow / (std::max(speed, 1.0) * cfg.jam_constant));
            ds.values(t, i, 0) = flow;
            ds.values(t, i, 1) = speed;
            ds.values(t, i, 2) = occ;
        }
        ds.externals(t, 0) = 15.0 + 8.0 * std::sin(2.0 * kPi * (mod - 540.0) / kMinutesPerDay);
        ds.externals(t, 1) = rain;
        ds.externals(t, 2) = rain > 0.0 ? std::max(0.5, 10.0 - 0.8 * rain) : 10.0;
        ds.externals(t, 3) = is_holiday[day] ? 1.0 : 0.0;
        ds.externals(t, 4) = incident_at[t] ? 1.0 : 0.0;
    }
    return {std::move(graph), std::move(ds)};
}

RawCorpus ingest_csv(const std::string& traffic_path, const std::string& external_path,
                     const std::string& graph_path, std::optional<std::size_t> node_count) {
    RawCorpus corpus;
    corpus.graph = load_graph_csv(graph_path, node_count);
    const std::size_t n = corpus.graph.n();

    std::ifstream tf(traffic_path);
    if (!tf) throw IoError("cannot open traffic file: " + traffic_path);
    std::string line;
    std::size_t line_no = 1;
    if (!next_line(tf, line) || line != "timestamp,node_id,flow,speed,occupancy")
        throw ValidationError(traffic_path +
                              ":1: expected header 'timestamp,node_id,flow,speed,occupancy'");
    std::set<std::pair<std::int64_t, std::size_t>> seen;
    while (next_line(tf, line)) {
        ++line_no;
        const auto f = split_fields(line);
        if (f.size() != 5)
            throw ValidationError(location(traffic_path, line_no) + ": expected 5 fields, got " +
                                  std::to_string(f.size()));
        TrafficRecord rec;
        try {
            rec.minutes = parse_minutes(f[0]);
        } catch (const ValidationError& e) {
            throw ValidationError(location(traffic_path, line_no) + ": " + e.what());
        }
        rec.node = parse_index_field(f[1], traffic_path, line_no, "node_id");
        if (rec.node >= n)
            throw ValidationError(location(traffic_path, line_no) + ": node_id " +
                                  std::to_string(rec.node) + " not in graph (node count " +
                                  std::to_string(n) + ")");
        if (!f[2].empty()) {
            const double v = parse_double_field(f[2], traffic_path, line_no, "flow");
            if (v < 0.0)
                throw ValidationError(location(traffic_path, line_no) +
                                      ": flow must be non-negative, got " + f[2]);
            rec.flow = v;
        }
        if (!f[3].empty()) {
            const double v = parse_double_field(f[3], traffic_path, line_no, "speed");
            if (v < 0.0)
                throw ValidationError(location(traffic_path, line_no) +
                                      ": speed must be non-negative, got " + f[3]);
            rec.speed = v;
        }
        if (!f[4].empty()) {
            const double v = parse_double_field(f[4], traffic_path, line_no, "occupancy");
            if (v < 0.0 || v > 1.0)
                throw ValidationError(location(traffic_path, line_no) +
                                      ": occupancy must lie in [0, 1], got " + f[4]);
            rec.occupancy = v;
        }
        if (!seen.insert({rec.minutes, rec.node}).second)
            throw ValidationError(location(traffic_path, line_no) + ": duplicate record for node " +
                                  std::to_string(rec.node) + " at " + f[0]);
        corpus.traffic.push_back(rec);
    }

    std::ifstream ef(external_path);
    if (!ef) throw IoError("cannot open external file: " + external_path);
    line_no = 1;
    if (!next_line(ef, line) ||
        line != "timestamp,temperature,rainfall,visibility,is_holiday,incident")
        throw ValidationError(
            external_path +
            ":1: expected header 'timestamp,temperature,rainfall,visibility,is_holiday,incident'");
    std::set<std::int64_t> seen_ext;
    static const char* kExtNames[Dataset::kExternals] = {"temperature", "rainfall", "visibility",
                                                         "is_holiday", "incident"};
    while (next_line(ef, line)) {
        ++line_no;
        const auto f = split_fields(line);
        if (f.size() != 6)
            throw ValidationError(location(external_path, line_no) + ": expected 6 fields, got " +
                                  std::to_string(f.size()));
        ExternalRecord rec;
        try {
            rec.minutes = parse_minutes(f[0]);
        } catch (const ValidationError& e) {
            throw ValidationError(location(external_path, line_no) + ": " + e.what());
        }
        for (std::size_t k = 0; k < Dataset::kExternals; ++k)
            rec.values[k] = parse_double_field(f[k + 1], external_path, line_no, kExtNames[k]);
        if (!seen_ext.insert(rec.minutes).second)
            throw ValidationError(location(external_path, line_no) +
                                  ": duplicate external record at " + f[0]);
        corpus.externals.push_back(rec);
    }
    return corpus;
}

Dataset align_and_impute(const RawCorpus& corpus, std::int64_t step_minutes) {
    if (step_minutes <= 0) throw ValidationError("align: step_minutes must be positive");
    if (corpus.traffic.empty()) throw ValidationError("align: no traffic records to align");
    const std::size_t n = corpus.graph.n();

    std::int64_t lo = snap_to_grid(corpus.traffic.front().minutes, step_minutes);
    std::int64_t hi = lo;
    for (const TrafficRecord& r : corpus.traffic) {
        const std::int64_t s = snap_to_grid(r.minutes, step_minutes);
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    const std::size_t steps = static_cast<std::size_t>((hi - lo) / step_minutes) + 1;

    Dataset ds;
    ds.start_minutes = lo;
    ds.step_minutes = step_minutes;
    ds.steps = steps;
    ds.nodes = n;
    ds.values = Tensor(Shape{steps, n, Dataset::kFeatures});
    ds.externals = Tensor(Shape{steps, Dataset::kExternals});
    ds.imputed = Tensor(Shape{steps, n, Dataset::kFeatures});

    std::vector<char> obs(steps * n * Dataset::kFeatures, 0);
    auto put = [&](std::size_t t, std::size_t i, std::size_t f, double v) {
        const std::size_t idx = (t * n + i) * Dataset::kFeatures + f;
        if (obs[idx]) ++ds.collision_warnings;
        obs[idx] = 1;
        ds.values(t, i, f) = v;
    };
    for (const TrafficRecord& r : corpus.traffic) {
        const std::size_t t =
            static_cast<std::size_t>((snap_to_grid(r.minutes, step_minutes) - lo) / step_minutes);
        if (r.flow) put(t, r.node, 0, *r.flow);
        if (r.speed) put(t, r.node, 1, *r.speed);
        if (r.occupancy) put(t, r.node, 2, *r.occupancy);
    }

    std::vector<double> series(steps);
    std::vector<char> series_obs(steps);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t f = 0; f < Dataset::kFeatures; ++f) {
            for (std::size_t t = 0; t < steps; ++t) {
                series[t] = ds.values(t, i, f);
                series_obs[t] = obs[(t * n + i) * Dataset::kFeatures + f];
            }
            fill_gaps(series, series_obs);
            for (std::size_t t = 0; t < steps; ++t) {
                ds.values(t, i, f) = series[t];
                ds.imputed(t, i, f) = series_obs[t] ? 0.0 : 1.0;
            }
        }

    // External records outside the traffic span are dropped.
    std::vector<char> ext_obs(steps * Dataset::kExternals, 0);
    for (const ExternalRecord& r : corpus.externals) {
        const std::int64_t s = snap_to_grid(r.minutes, step_minutes);
        if (s < lo || s > hi) continue;
        const std::size_t t = static_cast<std::size_t>((s - lo) / step_minutes);
        for (std::size_t k = 0; k < Dataset::kExternals; ++k) {
            const std::size_t idx = t * Dataset::kExternals + k;
            if (ext_obs[idx]) ++ds.collision_warnings;
            ext_obs[idx] = 1;
            ds.externals(t, k) = r.values[k];
        }
    }
    for (std::size_t k = 0; k < Dataset::kExternals; ++k) {
        for (std::size_t t = 0; t < steps; ++t) {
            series[t] = ds.externals(t, k);
            series_obs[t] = ext_obs[t * Dataset::kExternals + k];
        }
        fill_gaps(series, series_obs);
        for (std::size_t t = 0; t < steps; ++t) ds.externals(t, k) = series[t];
    }
    return ds;
}

double NormStats::norm(double v, std::size_t node, std::size_t feature) const {
    return (v - mean(node, feature)) / stdev(node, feature);
}

double NormStats::denorm(double v, std::size_t node, std::size_t feature) const {
    return v * stdev(node, feature) + mean(node, feature);
}

std::pair<Dataset, NormStats> normalize(const Dataset& ds, std::size_t train_lo,
                                        std::size_t train_hi) {
    if (train_lo >= train_hi || train_hi > ds.steps)
        throw ValidationError("normalize: train range [" + std::to_string(train_lo) + ", " +
                              std::to_string(train_hi) + ") is empty or out of bounds");
    constexpr double kStdFloor = 1e-6;
    const std::size_t n = ds.nodes;
    const double cnt = static_cast<double>(train_hi - train_lo);

    NormStats st;
    st.mean = Tensor(Shape{n, Dataset::kFeatures});
    st.stdev = Tensor(Shape{n, Dataset::kFeatures});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t f = 0; f < Dataset::kFeatures; ++f) {
            double m = 0.0;
            for (std::size_t t = train_lo; t < train_hi; ++t) m += ds.values(t, i, f);
            m /= cnt;
            double var = 0.0;
            for (std::size_t t = train_lo; t < train_hi; ++t) {
                const double d = ds.values(t, i, f) - m;
                var += d * d;
            }
            var /= cnt;
            st.mean(i, f) = m;
            st.stdev(i, f) = std::max(std::sqrt(var), kStdFloor);
        }

    st.ext_mean = Tensor(Shape{Dataset::kExternals});
    st.ext_std = Tensor::full(Shape{Dataset::kExternals}, 1.0);
    st.ext_is_flag.assign(Dataset::kExternals, false);
    for (std::size_t k = 0; k < Dataset::kExternals; ++k) {
        bool flag = true;
        for (std::size_t t = train_lo; t < train_hi && flag; ++t) {
            const double v = ds.externals(t, k);
            flag = v == 0.0 || v == 1.0;
        }
        st.ext_is_flag[k] = flag;
        if (flag) continue;  // indicator columns pass through unscaled
        double m = 0.0;
        for (std::size_t t = train_lo; t < train_hi; ++t) m += ds.externals(t, k);
        m /= cnt;
        double var = 0.0;
        for (std::size_t t = train_lo; t < train_hi; ++t) {
            const double d = ds.externals(t, k) - m;
            var += d * d;
        }
        var /= cnt;
        st.ext_mean.at(k) = m;
        st.ext_std.at(k) = std::max(std::sqrt(var), kStdFloor);
    }

    return {apply_norm(ds, st), std::move(st)};
}

Dataset apply_norm(const Dataset& ds, const NormStats& stats) {
    if (stats.mean.shape() != Shape{ds.nodes, Dataset::kFeatures} ||
        !stats.mean.same_shape(stats.stdev))
        throw ShapeError("apply_norm: statistics shaped " + shape_str(stats.mean.shape()) +
                         " do not fit a corpus with " + std::to_string(ds.nodes) + " nodes");
    Dataset out = ds;
    for (std::size_t t = 0; t < ds.steps; ++t) {
        for (std::size_t i = 0; i < ds.nodes; ++i)
            for (std::size_t f = 0; f < Dataset::kFeatures; ++f)
                out.values(t, i, f) = stats.norm(ds.values(t, i, f), i, f);
        for (std::size_t k = 0; k < Dataset::kExternals; ++k)
            if (!stats.ext_is_flag[k])
                out.externals(t, k) =
                    (ds.externals(t, k) - stats.ext_mean.at(k)) / stats.ext_std.at(k);
    }
    return out;
}

std::vector<Window> make_windows(const Dataset& ds, std::size_t window_len, std::size_t horizon,
                                 std::size_t out_features, std::size_t stride, std::size_t lo,
                                 std::size_t hi) {
    if (window_len == 0 || horizon == 0)
        throw ValidationError("windows: window length and horizon must be positive");
    if (stride == 0) throw ValidationError("windows: stride must be positive");
    if (out_features == 0 || out_features > Dataset::kFeatures)
        throw ValidationError("windows: out_features must lie in [1, " +
                              std::to_string(Dataset::kFeatures) + "]");
    if (lo > hi || hi > ds.steps)
        throw ValidationError("windows: range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                              ") is out of bounds for " + std::to_string(ds.steps) + " steps");
    std::vector<Window> out;
    if (hi - lo < window_len + horizon) return out;
    const std::size_t n = ds.nodes;
    for (std::size_t s = lo; s + window_len + horizon <= hi; s += stride) {
        Window w;
        w.start = s;
        w.x = Tensor(Shape{window_len, n, Dataset::kFeatures});
        w.z = Tensor(Shape{window_len, Dataset::kExternals});
        w.y = Tensor(Shape{horizon, n, out_features});
        w.w = Tensor(Shape{horizon, n, out_features});
        for (std::size_t t = 0; t < window_len; ++t) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t f = 0; f < Dataset::kFeatures; ++f)
                    w.x(t, i, f) = ds.values(s + t, i, f);
            for (std::size_t k = 0; k < Dataset::kExternals; ++k)
                w.z(t, k) = ds.externals(s + t, k);
        }
        for (std::size_t h = 0; h < horizon; ++h)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < out_features; ++c) {
                    w.y(h, i, c) = ds.values(s + window_len + h, i, c);
                    w.w(h, i, c) = ds.imputed(s + window_len + h, i, c) > 0.5 ? 0.0 : 1.0;
                }
        out.push_back(std::move(w));
    }
    return out;
}

SplitRanges chronological_split(std::size_t steps, double train_ratio, double val_ratio,
                                double test_ratio) {
    if (train_ratio <= 0.0 || val_ratio <= 0.0 || test_ratio <= 0.0)
        throw ValidationError("split: all three ratios must be positive");
    if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9)
        throw ValidationError("split: ratios must sum to 1");
    SplitRanges sr;
    sr.steps = steps;
    sr.train_hi = static_cast<std::size_t>(std::floor(static_cast<double>(steps) * train_ratio));
    sr.val_hi = sr.train_hi +
                static_cast<std::size_t>(std::floor(static_cast<double>(steps) * val_ratio));
    if (sr.train_hi == 0 || sr.val_hi == sr.train_hi || sr.val_hi >= steps)
        throw ValidationError("split: a segment came out empty; need more steps or different ratios");
    return sr;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    if (res.ec != std::errc()) throw InternalError("format_double: buffer too small");
    return std::string(buf, res.ptr);
}

void write_traffic_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "timestamp,node_id,flow,speed,occupancy\n";
    for (std::size_t t = 0; t < ds.steps; ++t) {
        const std::string ts = format_minutes(ds.minutes_at(t));
        for (std::size_t i = 0; i < ds.nodes; ++i)
            out << ts << ',' << i << ',' << format_double(ds.values(t, i, 0)) << ','
                << format_double(ds.values(t, i, 1)) << ',' << format_double(ds.values(t, i, 2))
                << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

void write_external_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "timestamp,temperature,rainfall,visibility,is_holiday,incident\n";
    for (std::size_t t = 0; t < ds.steps; ++t) {
        out << format_minutes(ds.minutes_at(t));
        for (std::size_t k = 0; k < Dataset::kExternals; ++k)
            out << ',' << format_double(ds.externals(t, k));
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace traffic
