#include "traffic/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "traffic/errors.hpp"
#include "traffic/timeutil.hpp"

namespace traffic {

namespace {

std::vector<Window> observed_only(const std::vector<Window>& windows) {
    std::vector<Window> out;
    for (const Window& w : windows)
        if (sum(w.w) > 0.0) out.push_back(w);
    return out;
}

// Weighted squared error of one window under the current parameters.
double window_loss(const ModelParams& params, const RoadGraph& graph, const Window& w) {
    const Forecast f = forward(params, graph, {w.x, w.z});
    double acc = 0.0, total = 0.0;
    for (std::size_t i = 0; i < w.y.size(); ++i) {
        const double d = f.values.at(i) - w.y.at(i);
        acc += d * d * w.w.at(i);
        total += w.w.at(i);
    }
    if (total <= 0.0) throw ValidationError("dataset_loss: window has no observed target entries");
    return acc / total;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs == 0) throw ValidationError("train config: epochs must be at least 1");
    if (batch_size == 0) throw ValidationError("train config: batch_size must be at least 1");
    if (!(lr >= 0.0) || !std::isfinite(lr))
        throw ValidationError("train config: learning rate must be finite and non-negative");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw ValidationError("train config: betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw ValidationError("train config: epsilon must be positive");
}

AdamState make_adam_state(const ModelParams& params) {
    AdamState st;
    params.for_each([&](const std::string&, const Tensor& t) {
        st.m.emplace_back(t.shape());
        st.v.emplace_back(t.shape());
    });
    return st;
}

void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state,
               const TrainConfig& cfg) {
    ++state.step;
    const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    std::size_t idx = 0;
    params.for_each([&](const std::string& name, Tensor& t) {
        if (idx >= grads.size())
            throw ShapeError("adam: gradient list shorter than the parameter census");
        const Tensor& g = grads[idx];
        if (!g.same_shape(t))
            throw ShapeError("adam: gradient/parameter shape mismatch for " + name + ": " +
                             shape_str(g.shape()) + " vs " + shape_str(t.shape()));
        Tensor& m = state.m[idx];
        Tensor& v = state.v[idx];
        for (std::size_t i = 0; i < t.size(); ++i) {
            m.at(i) = cfg.beta1 * m.at(i) + (1.0 - cfg.beta1) * g.at(i);
            v.at(i) = cfg.beta2 * v.at(i) + (1.0 - cfg.beta2) * g.at(i) * g.at(i);
            const double mhat = m.at(i) / bias1;
            const double vhat = v.at(i) / bias2;
            t.at(i) -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        ++idx;
    });
    if (idx != grads.size()) throw ShapeError("adam: gradient list longer than the parameter census");
}

double dataset_loss(const ModelParams& params, const RoadGraph& graph,
                    const std::vector<Window>& windows) {
    if (windows.empty()) throw ValidationError("dataset_loss: no windows");
    double acc = 0.0;
    for (const Window& w : windows) acc += window_loss(params, graph, w);
    return acc / static_cast<double>(windows.size());
}

std::pair<ModelParams, TrainHistory> train_model(const ModelConfig& mcfg, const RoadGraph& graph,
                                                 const std::vector<Window>& train_windows,
                                                 const std::vector<Window>& val_windows,
                                                 const TrainConfig& tcfg) {
    mcfg.validate();
    tcfg.validate();
    const std::vector<Window> train = observed_only(train_windows);
    const std::vector<Window> val = observed_only(val_windows);
    if (train.empty()) throw ValidationError("train: no training windows with observed targets");
    if (val.empty()) throw ValidationError("train: no validation windows with observed targets");

    ModelParams params = ModelParams::init(mcfg, tcfg.seed);
    AdamState state = make_adam_state(params);
    std::mt19937_64 shuffle_rng(tcfg.seed);

    TrainHistory hist;
    ModelParams best = params;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Per-window losses are re-summed in window order so the reported epoch
    // loss does not depend on the shuffle.
    std::vector<double> loss_by_window(train.size(), 0.0);

    for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t lo = 0; lo < order.size(); lo += tcfg.batch_size) {
            const std::size_t hi = std::min(lo + tcfg.batch_size, order.size());
            ad::Tape tape;
            const LiftedModel lifted = lift_model(tape, params, true);
            ad::Value batch_loss;
            std::vector<std::pair<std::size_t, ad::Value>> per_window;
            for (std::size_t k = lo; k < hi; ++k) {
                const Window& w = train[order[k]];
                const ad::Value pred = forward_values(tape, lifted, graph, {w.x, w.z});
                const ad::Value l =
                    weighted_mse(tape, pred, target_to_matrix(w.y), target_to_matrix(w.w));
                per_window.emplace_back(order[k], l);
                batch_loss = batch_loss.valid() ? tape.add(batch_loss, l) : l;
            }
            batch_loss = tape.scale(batch_loss, 1.0 / static_cast<double>(hi - lo));
            const double lv = batch_loss.val().scalar_value();
            if (!std::isfinite(lv))
                throw InternalError("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                    ", batch " + std::to_string(lo / tcfg.batch_size + 1));
            tape.backward(batch_loss);
            std::vector<Tensor> grads;
            grads.reserve(lifted.named.size());
            for (const auto& [name, leaf] : lifted.named) grads.push_back(leaf.grad());
            for (const auto& [widx, l] : per_window) loss_by_window[widx] = l.val().scalar_value();
            adam_step(params, grads, state, tcfg);
        }
        const double train_loss =
            std::accumulate(loss_by_window.begin(), loss_by_window.end(), 0.0) /
            static_cast<double>(train.size());
        const double val_loss = dataset_loss(params, graph, val);
        if (!std::isfinite(val_loss))
            throw InternalError("train: non-finite validation loss at epoch " +
                                std::to_string(epoch + 1));
        const auto elapsed = std::chrono::steady_clock::now() - t0;
        hist.train_loss.push_back(train_loss);
        hist.val_loss.push_back(val_loss);
        hist.seconds.push_back(std::chrono::duration_cast<std::chrono::seconds>(elapsed).count());
        if (val_loss < best_val) {
            best_val = val_loss;
            best = params;
            hist.best_epoch = epoch;
            since_best = 0;
        } else {
            ++since_best;
            if (tcfg.patience > 0 && since_best >= tcfg.patience) break;
        }
    }
    return {std::move(best), std::move(hist)};
}

MetricReport metrics(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.size() != truth.size())
        throw ValidationError("metrics: length mismatch, " + std::to_string(pred.size()) + " vs " +
                              std::to_string(truth.size()));
    if (pred.empty()) throw ValidationError("metrics: empty inputs");
    const double n = static_cast<double>(pred.size());
    double abs_acc = 0.0, sq_acc = 0.0, truth_mean = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - truth[i];
        abs_acc += std::abs(e);
        sq_acc += e * e;
        truth_mean += truth[i];
    }
    truth_mean /= n;
    double ss_tot = 0.0;
    for (const double y : truth) {
        const double d = y - truth_mean;
        ss_tot += d * d;
    }
    MetricReport r;
    r.mae = abs_acc / n;
    r.mse = sq_acc / n;
    r.rmse = std::sqrt(r.mse);
    if (ss_tot > 0.0) r.r2 = 1.0 - sq_acc / ss_tot;
    return r;
}

GradCheckReport compare_gradients(const std::vector<std::string>& names,
                                  const std::vector<Tensor>& analytic,
                                  const std::vector<Tensor>& numeric, double tol) {
    if (names.size() != analytic.size() || names.size() != numeric.size())
        throw InternalError("compare_gradients: census sizes disagree");
    GradCheckReport report;
    report.tol = tol;
    report.pass = true;
    for (std::size_t i = 0; i < names.size(); ++i) {
        GradCheckEntry e;
        e.name = names[i];
        // Near-zero entries compare absolutely: central differences carry
        // ~1e-11 of cancellation noise, which would swamp a relative test
        // against a denominator much smaller than this floor.
        e.max_rel_err = ad::max_rel_err(analytic[i], numeric[i], 1e-6);
        e.pass = e.max_rel_err <= tol;
        report.pass = report.pass && e.pass;
        report.entries.push_back(std::move(e));
    }
    return report;
}

GradCheckReport grad_check_model(const ModelConfig& mcfg, const RoadGraph& graph,
                                 const ObservationWindow& window, const Tensor& target,
                                 std::uint64_t seed, double eps, double tol) {
    ModelParams params = ModelParams::init(mcfg, seed);
    const Tensor target_mat = target_to_matrix(target);
    const Tensor ones = Tensor::full(target_mat.shape(), 1.0);

    ad::Tape tape;
    const LiftedModel lifted = lift_model(tape, params, true);
    const ad::Value pred = forward_values(tape, lifted, graph, window);
    tape.backward(weighted_mse(tape, pred, target_mat, ones));

    std::vector<std::string> names;
    std::vector<Tensor> analytic;
    for (const auto& [name, leaf] : lifted.named) {
        names.push_back(name);
        analytic.push_back(leaf.grad());
    }

    std::vector<Tensor> numeric;
    params.for_each([&](const std::string&, Tensor& t) {
        Tensor g(t.shape());
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double keep = t.at(i);
            t.at(i) = keep + eps;
            const double up = predict_loss(params, graph, window, target);
            t.at(i) = keep - eps;
            const double down = predict_loss(params, graph, window, target);
            t.at(i) = keep;
            g.at(i) = (up - down) / (2.0 * eps);
        }
        numeric.push_back(std::move(g));
    });
    return compare_gradients(names, analytic, numeric, tol);
}

MetricReport evaluate_model(const ModelParams& params, const RoadGraph& graph,
                            const std::vector<Window>& windows, const NormStats& stats) {
    if (windows.empty()) throw ValidationError("evaluate: empty test split");
    std::vector<double> pred, truth;
    for (const Window& w : windows) {
        const Forecast f = forward(params, graph, {w.x, w.z});
        const Shape& s = w.y.shape();
        for (std::size_t h = 0; h < s[0]; ++h)
            for (std::size_t i = 0; i < s[1]; ++i)
                for (std::size_t c = 0; c < s[2]; ++c)
                    if (w.w(h, i, c) == 1.0) {
                        pred.push_back(stats.denorm(f.values(h, i, c), i, c));
                        truth.push_back(stats.denorm(w.y(h, i, c), i, c));
                    }
    }
    if (pred.empty()) throw ValidationError("evaluate: no observed target entries");
    return metrics(pred, truth);
}

MetricReport evaluate_persistence(const std::vector<Window>& windows, const NormStats& stats) {
    if (windows.empty()) throw ValidationError("evaluate: empty test split");
    std::vector<double> pred, truth;
    for (const Window& w : windows) {
        const std::size_t last = w.x.shape()[0] - 1;
        const Shape& s = w.y.shape();
        for (std::size_t h = 0; h < s[0]; ++h)
            for (std::size_t i = 0; i < s[1]; ++i)
                for (std::size_t c = 0; c < s[2]; ++c)
                    if (w.w(h, i, c) == 1.0) {
                        pred.push_back(stats.denorm(w.x(last, i, c), i, c));
                        truth.push_back(stats.denorm(w.y(h, i, c), i, c));
                    }
    }
    if (pred.empty()) throw ValidationError("evaluate: no observed target entries");
    return metrics(pred, truth);
}

MetricReport evaluate_historical_average(const Dataset& ds, std::size_t train_hi,
                                         const std::vector<Window>& windows,
                                         const NormStats& stats) {
    if (windows.empty()) throw ValidationError("evaluate: empty test split");
    if (train_hi == 0 || train_hi > ds.steps)
        throw ValidationError("evaluate: historical average needs a training range");
    const std::size_t channels = windows.front().y.shape()[2];
    const std::size_t n = ds.nodes;

    std::vector<double> minute_sum(n * channels * 1440, 0.0);
    std::vector<std::size_t> minute_cnt(n * channels * 1440, 0);
    std::vector<double> node_sum(n * channels, 0.0);
    for (std::size_t t = 0; t < train_hi; ++t) {
        const std::size_t key = static_cast<std::size_t>(minute_of_day(ds.minutes_at(t)));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < channels; ++c) {
                const double v = stats.denorm(ds.values(t, i, c), i, c);
                minute_sum[(i * channels + c) * 1440 + key] += v;
                ++minute_cnt[(i * channels + c) * 1440 + key];
                node_sum[i * channels + c] += v;
            }
    }

    std::vector<double> pred, truth;
    for (const Window& w : windows) {
        const std::size_t window_len = w.x.shape()[0];
        const Shape& s = w.y.shape();
        for (std::size_t h = 0; h < s[0]; ++h) {
            const std::size_t step = w.start + window_len + h;
            const std::size_t key = static_cast<std::size_t>(minute_of_day(ds.minutes_at(step)));
            for (std::size_t i = 0; i < s[1]; ++i)
                for (std::size_t c = 0; c < s[2]; ++c)
                    if (w.w(h, i, c) == 1.0) {
                        const std::size_t slot = (i * channels + c) * 1440 + key;
                        const double p = minute_cnt[slot] > 0
                                             ? minute_sum[slot] / static_cast<double>(minute_cnt[slot])
                                             : node_sum[i * channels + c] /
                                                   static_cast<double>(train_hi);
                        pred.push_back(p);
                        truth.push_back(stats.denorm(w.y(h, i, c), i, c));
                    }
        }
    }
    if (pred.empty()) throw ValidationError("evaluate: no observed target entries");
    return metrics(pred, truth);
}

void write_history_csv(const TrainHistory& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "epoch,train_loss,val_loss,seconds\n";
    for (std::size_t i = 0; i < history.train_loss.size(); ++i)
        out << (i + 1) << ',' << format_double(history.train_loss[i]) << ','
            << format_double(history.val_loss[i]) << ',' << history.seconds[i] << '\n';
    if (!out) throw IoError("write failed: " + path);
}

void write_metrics_csv(const std::vector<std::pair<std::string, MetricReport>>& rows,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "variant,mae,rmse,mse,r2\n";
    for (const auto& [name, r] : rows) {
        out << name << ',' << format_double(r.mae) << ',' << format_double(r.rmse) << ','
            << format_double(r.mse) << ',' << (r.r2 ? format_double(*r.r2) : "NA") << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace traffic
