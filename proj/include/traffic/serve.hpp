#pragma once

// Online inference: a sliding window of streamed observations plus a small
// request/response service answering /health, /observe and /forecast. The
// endpoint logic is callable directly so tests need no sockets.

#include <cstdint>
#include <deque>
#include <mutex>
#include <ostream>
#include <string>
#include <utility>

#include "json.hpp"

#include "traffic/checkpoint.hpp"
#include "traffic/graph.hpp"
#include "traffic/model.hpp"

namespace httplib {
class Server;
}

namespace traffic {

// Ring of the newest `window` steps. Rows arrive already normalized;
// timestamps must be strictly increasing and eviction is strictly FIFO.
class WindowBuffer {
public:
    WindowBuffer(std::size_t window, std::size_t nodes, std::size_t externals);

    std::size_t window() const { return window_; }
    std::size_t fill() const;

    // Appends one step; false (buffer untouched) when the timestamp is not
    // strictly newer than the latest held.
    bool push(std::int64_t minutes, const Tensor& values, const Tensor& external);

    // Copies the full window out; false while still warming.
    bool snapshot(ObservationWindow& out, std::int64_t& anchor_minutes) const;

private:
    struct Entry {
        std::int64_t minutes;
        Tensor values;    // N x F
        Tensor external;  // M
    };

    std::size_t window_, nodes_, externals_;
    mutable std::mutex mu_;
    std::deque<Entry> entries_;
};

// One checkpoint, one graph, one sliding window. Parameters are immutable
// for the service lifetime; observations apply under a lock and forecasts
// run on a consistent snapshot.
class ForecastService {
public:
    ForecastService(Checkpoint ckpt, RoadGraph graph);

    // Endpoint logic as (http status, response body).
    std::pair<int, nlohmann::json> health() const;
    std::pair<int, nlohmann::json> observe(const nlohmann::json& payload);
    std::pair<int, nlohmann::json> forecast() const;

    void install(httplib::Server& server);

private:
    Checkpoint ckpt_;
    RoadGraph graph_;
    WindowBuffer buffer_;
};

// Blocks. Throws IoError when the address cannot be bound.
void run_service(Checkpoint ckpt, RoadGraph graph, const std::string& host, int port,
                 std::ostream& log);

}  // namespace traffic
