#include "traffic/serve.hpp"

#include <cmath>
#include <utility>

#include "httplib.h"

#include "traffic/data.hpp"
#include "traffic/errors.hpp"
#include "traffic/timeutil.hpp"

namespace traffic {

using nlohmann::json;

// --- WindowBuffer ----------------------------------------------------------

WindowBuffer::WindowBuffer(std::size_t window, std::size_t nodes, std::size_t externals)
    : window_(window), nodes_(nodes), externals_(externals) {
    if (window_ == 0) throw ValidationError("window buffer needs a positive window");
}

std::size_t WindowBuffer::fill() const {
    std::lock_guard<std::mutex> lock(mu_);
    return entries_.size();
}

bool WindowBuffer::push(std::int64_t minutes, const Tensor& values, const Tensor& external) {
    if (values.rank() != 2 || values.shape()[0] != nodes_)
        throw ShapeError("window buffer: values must be " + std::to_string(nodes_) +
                         " x F, got " + shape_str(values.shape()));
    if (external.shape() != Shape{externals_})
        throw ShapeError("window buffer: external must hold " + std::to_string(externals_) +
                         " values, got " + shape_str(external.shape()));
    std::lock_guard<std::mutex> lock(mu_);
    if (!entries_.empty() && minutes <= entries_.back().minutes) return false;
    entries_.push_back({minutes, values, external});
    if (entries_.size() > window_) entries_.pop_front();
    return true;
}

bool WindowBuffer::snapshot(ObservationWindow& out, std::int64_t& anchor_minutes) const {
    std::lock_guard<std::mutex> lock(mu_);
    if (entries_.size() < window_) return false;
    const std::size_t feats = entries_.front().values.shape()[1];
    Tensor x(Shape{window_, nodes_, feats});
    Tensor z(Shape{window_, externals_});
    for (std::size_t t = 0; t < window_; ++t) {
        const Entry& e = entries_[t];
        for (std::size_t i = 0; i < nodes_; ++i)
            for (std::size_t f = 0; f < feats; ++f) x(t, i, f) = e.values(i, f);
        for (std::size_t k = 0; k < externals_; ++k) z(t, k) = e.external.at(k);
    }
    out = {std::move(x), std::move(z)};
    anchor_minutes = entries_.back().minutes;
    return true;
}

// --- ForecastService -------------------------------------------------------

namespace {

std::pair<int, json> reject(const std::string& reason) {
    return {400, json{{"accepted", false}, {"reason", reason}}};
}

}  // namespace

ForecastService::ForecastService(Checkpoint ckpt, RoadGraph graph)
    : ckpt_(std::move(ckpt)),
      graph_(std::move(graph)),
      buffer_(ckpt_.params.cfg.window, ckpt_.params.cfg.nodes, ckpt_.params.cfg.external_dim) {
    const ModelConfig& cfg = ckpt_.params.cfg;
    if (graph_.n() != cfg.nodes)
        throw ValidationError("service: graph has " + std::to_string(graph_.n()) +
                              " nodes but the checkpoint was trained with " +
                              std::to_string(cfg.nodes));
    if (graph_.fingerprint() != ckpt_.graph_fingerprint)
        throw ValidationError("service: graph fingerprint " +
                              std::to_string(graph_.fingerprint()) +
                              " does not match the checkpoint's " +
                              std::to_string(ckpt_.graph_fingerprint));
    if (cfg.out_features != 1)
        throw ValidationError("service: checkpoint predicts " +
                              std::to_string(cfg.out_features) +
                              " channels per node; serving needs exactly 1");
    if (cfg.in_features != Dataset::kFeatures || cfg.external_dim != Dataset::kExternals)
        throw ValidationError(
            "service: checkpoint does not use the standard flow/speed/occupancy + " +
            std::to_string(Dataset::kExternals) + "-column external schema");
}

std::pair<int, json> ForecastService::health() const {
    const std::size_t fill = buffer_.fill();
    return {200, json{{"status", fill == buffer_.window() ? "ready" : "warming"},
                      {"fill", fill},
                      {"window", buffer_.window()},
                      {"nodes", ckpt_.params.cfg.nodes}}};
}

std::pair<int, json> ForecastService::observe(const json& payload) {
    const ModelConfig& cfg = ckpt_.params.cfg;
    if (!payload.is_object()) return reject("payload must be an object");
    for (auto it = payload.begin(); it != payload.end(); ++it)
        if (it.key() != "timestamp" && it.key() != "records" && it.key() != "external")
            return reject("unknown field '" + it.key() + "'");
    for (const char* k : {"timestamp", "records", "external"})
        if (!payload.contains(k)) return reject(std::string("missing field '") + k + "'");

    if (!payload.at("timestamp").is_string()) return reject("timestamp must be a string");
    std::int64_t minutes = 0;
    try {
        minutes = parse_minutes(payload.at("timestamp").get<std::string>());
    } catch (const ValidationError& e) {
        return reject(e.what());
    }

    const json& ext = payload.at("external");
    if (!ext.is_array() || ext.size() != cfg.external_dim)
        return reject("external must hold " + std::to_string(cfg.external_dim) + " values");
    Tensor z(Shape{cfg.external_dim});
    for (std::size_t k = 0; k < cfg.external_dim; ++k) {
        if (!ext[k].is_number() || !std::isfinite(ext[k].get<double>()))
            return reject("external[" + std::to_string(k) + "] must be a finite number");
        z.at(k) = ext[k].get<double>();
    }

    const json& recs = payload.at("records");
    if (!recs.is_array()) return reject("records must be an array");
    Tensor x(Shape{cfg.nodes, cfg.in_features});
    std::vector<bool> seen(cfg.nodes, false);
    for (const json& rec : recs) {
        if (!rec.is_object()) return reject("records entries must be objects");
        for (auto it = rec.begin(); it != rec.end(); ++it)
            if (it.key() != "node_id" && it.key() != "flow" && it.key() != "speed" &&
                it.key() != "occupancy")
                return reject("record has unknown field '" + it.key() + "'");
        if (!rec.contains("node_id")) return reject("every record needs a node_id");
        const json& nid = rec.at("node_id");
        if (!(nid.is_number_unsigned() ||
              (nid.is_number_integer() && nid.get<std::int64_t>() >= 0)))
            return reject("node_id must be a non-negative integer");
        const std::size_t node = nid.get<std::size_t>();
        if (node >= cfg.nodes)
            return reject("node " + std::to_string(node) + " is outside the graph (" +
                          std::to_string(cfg.nodes) + " nodes)");
        if (seen[node]) return reject("node " + std::to_string(node) + " appears twice");
        seen[node] = true;

        double vals[3];
        const char* fields[3] = {"flow", "speed", "occupancy"};
        for (int f = 0; f < 3; ++f) {
            if (!rec.contains(fields[f]) || !rec.at(fields[f]).is_number() ||
                !std::isfinite(rec.at(fields[f]).get<double>()))
                return reject("node " + std::to_string(node) + ": " + fields[f] +
                              " must be a finite number");
            vals[f] = rec.at(fields[f]).get<double>();
        }
        if (vals[0] < 0.0) return reject("node " + std::to_string(node) + ": flow must be >= 0");
        if (vals[1] < 0.0) return reject("node " + std::to_string(node) + ": speed must be >= 0");
        if (vals[2] < 0.0 || vals[2] > 1.0)
            return reject("node " + std::to_string(node) + ": occupancy must be in [0, 1]");
        for (int f = 0; f < 3; ++f) x(node, static_cast<std::size_t>(f)) = vals[f];
    }
    for (std::size_t i = 0; i < cfg.nodes; ++i)
        if (!seen[i]) return reject("node " + std::to_string(i) + " is missing from records");

    for (std::size_t i = 0; i < cfg.nodes; ++i)
        for (std::size_t f = 0; f < cfg.in_features; ++f)
            x(i, f) = ckpt_.norm.norm(x(i, f), i, f);
    for (std::size_t k = 0; k < cfg.external_dim; ++k)
        if (!ckpt_.norm.ext_is_flag[k])
            z.at(k) = (z.at(k) - ckpt_.norm.ext_mean.at(k)) / ckpt_.norm.ext_std.at(k);

    if (!buffer_.push(minutes, x, z))
        return reject("timestamp " + format_minutes(minutes) +
                      " is not newer than the latest observation");
    return {200, json{{"accepted", true}}};
}

std::pair<int, json> ForecastService::forecast() const {
    ObservationWindow window;
    std::int64_t anchor = 0;
    if (!buffer_.snapshot(window, anchor))
        return {409, json{{"error", "warming"},
                          {"fill", buffer_.fill()},
                          {"window", buffer_.window()}}};

    const Forecast fc = forward(ckpt_.params, graph_, window);
    json values = json::array();
    for (std::size_t h = 0; h < fc.horizon; ++h) {
        json row = json::array();
        for (std::size_t i = 0; i < ckpt_.params.cfg.nodes; ++i)
            row.push_back(ckpt_.norm.denorm(fc.values(h, i, 0), i, 0));
        values.push_back(std::move(row));
    }
    return {200, json{{"anchor_timestamp", format_minutes(anchor)},
                      {"horizon", fc.horizon},
                      {"values", std::move(values)},
                      {"units", "flow"}}};
}

namespace {

void send(httplib::Response& res, std::pair<int, json> reply) {
    res.status = reply.first;
    res.set_content(reply.second.dump(), "application/json");
}

}  // namespace

void ForecastService::install(httplib::Server& server) {
    server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
        send(res, health());
    });
    server.Post("/observe", [this](const httplib::Request& req, httplib::Response& res) {
        json payload;
        try {
            payload = json::parse(req.body);
        } catch (const json::parse_error& e) {
            send(res, reject(std::string("not valid JSON: ") + e.what()));
            return;
        }
        send(res, observe(payload));
    });
    server.Get("/forecast", [this](const httplib::Request&, httplib::Response& res) {
        send(res, forecast());
    });
}

void run_service(Checkpoint ckpt, RoadGraph graph, const std::string& host, int port,
                 std::ostream& log) {
    ForecastService service(std::move(ckpt), std::move(graph));
    httplib::Server server;
    service.install(server);
    if (!server.bind_to_port(host, port))
        throw IoError("cannot bind " + host + ":" + std::to_string(port));
    log << "serving on " << host << ":" << port << "\n" << std::flush;
    server.listen_after_bind();
}

}  // namespace traffic
