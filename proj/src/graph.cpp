#include "traffic/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace traffic {

bool operator==(const Edge& a, const Edge& b) { return a.src == b.src && a.dst == b.dst; }

RoadGraph RoadGraph::build(std::size_t n, const std::vector<Edge>& edges) {
    if (n == 0) throw ValidationError("graph: node count must be at least 1");
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const Edge& e : edges) {
        if (e.src >= n || e.dst >= n) {
            throw ValidationError("graph: edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) +
                                  ") out of range for " + std::to_string(n) + " nodes");
        }
        if (!seen.insert({e.src, e.dst}).second) {
            throw ValidationError("graph: duplicate edge (" + std::to_string(e.src) + "," +
                                  std::to_string(e.dst) + ")");
        }
    }

    RoadGraph g;
    g.n_ = n;
    g.edges_ = edges;
    g.neighbors_.assign(n, {});
    std::vector<std::set<std::size_t>> nb(n);
    for (std::size_t i = 0; i < n; ++i) nb[i].insert(i);
    for (const Edge& e : edges) nb[e.dst].insert(e.src);
    for (std::size_t i = 0; i < n; ++i) g.neighbors_[i].assign(nb[i].begin(), nb[i].end());

    g.prop_ = Tensor({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        const double deg_i = static_cast<double>(g.neighbors_[i].size());
        for (std::size_t j : g.neighbors_[i]) {
            const double deg_j = static_cast<double>(g.neighbors_[j].size());
            g.prop_(i, j) = 1.0 / std::sqrt(deg_i * deg_j);
        }
    }
    return g;
}

double RoadGraph::coeff(std::size_t i, std::size_t j) const {
    if (i >= n_ || !std::binary_search(neighbors_[i].begin(), neighbors_[i].end(), j)) {
        throw ValidationError("graph: " + std::to_string(j) + " is not a neighbor of " + std::to_string(i));
    }
    return std::sqrt(static_cast<double>(neighbors_[i].size()) * static_cast<double>(neighbors_[j].size()));
}

std::uint64_t RoadGraph::fingerprint() const {
    std::vector<std::pair<std::size_t, std::size_t>> sorted;
    sorted.reserve(edges_.size());
    for (const Edge& e : edges_) sorted.emplace_back(e.src, e.dst);
    std::sort(sorted.begin(), sorted.end());

    std::uint64_t h = 14695981039346656037ULL;  // FNV-1a
    auto mix = [&h](std::uint64_t v) {
        for (int byte = 0; byte < 8; ++byte) {
            h ^= (v >> (byte * 8)) & 0xffULL;
            h *= 1099511628211ULL;
        }
    };
    mix(n_);
    for (const auto& [s, d] : sorted) {
        mix(s);
        mix(d);
    }
    return h;
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "tanh") return Activation::Tanh;
    if (s == "identity") return Activation::Identity;
    throw ValidationError("unknown activation '" + s + "' (expected relu, tanh, or identity)");
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    return "identity";
}

ad::Value apply_activation(ad::Tape& tape, ad::Value x, Activation act) {
    switch (act) {
        case Activation::Relu: return tape.relu(x);
        case Activation::Tanh: return tape.tanh(x);
        case Activation::Identity: return x;
    }
    return x;
}

ad::Value graph_conv(ad::Tape& tape, ad::Value h_in, ad::Value prop, ad::Value weight, ad::Value bias,
                     Activation act) {
    ad::Value mixed = tape.matmul(prop, tape.matmul(h_in, weight));
    return apply_activation(tape, tape.add_rows(mixed, bias), act);
}

Tensor graph_conv(const Tensor& h_in, const RoadGraph& graph, const GraphConvLayer& layer) {
    if (h_in.rank() != 2 || h_in.rows() != graph.n()) {
        throw ShapeError("graph_conv: input " + shape_str(h_in.shape()) + " does not cover " +
                         std::to_string(graph.n()) + " nodes");
    }
    ad::Tape tape;
    ad::Value out = graph_conv(tape, tape.constant(h_in), tape.constant(graph.propagation()),
                               tape.constant(layer.weight), tape.constant(layer.bias), layer.activation);
    return out.val();
}

Tensor gcn_stack(const Tensor& h_in, const RoadGraph& graph, const std::vector<GraphConvLayer>& layers) {
    Tensor h = h_in;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (h.cols() != layers[l].weight.rows()) {
            throw ShapeError("gcn_stack: layer " + std::to_string(l) + " expects " +
                             std::to_string(layers[l].weight.rows()) + " features, got " +
                             std::to_string(h.cols()));
        }
        h = graph_conv(h, graph, layers[l]);
    }
    return h;
}

RoadGraph load_graph_csv(const std::string& path, std::optional<std::size_t> node_count) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open graph file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path + ": empty graph file");
    if (line.size() && line.back() == '\r') line.pop_back();
    if (line != "src,dst") throw ValidationError(path + ": expected header 'src,dst', got '" + line + "'");

    std::vector<Edge> edges;
    std::size_t max_id = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.size() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string a, b;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b)) {
            throw ValidationError(path + ":" + std::to_string(line_no) + ": malformed edge line '" + line + "'");
        }
        Edge e;
        try {
            e.src = std::stoul(a);
            e.dst = std::stoul(b);
        } catch (const std::exception&) {
            throw ValidationError(path + ":" + std::to_string(line_no) + ": non-numeric node id in '" + line +
                                  "'");
        }
        max_id = std::max({max_id, e.src, e.dst});
        edges.push_back(e);
    }

    const std::size_t n = node_count ? *node_count : (edges.empty() ? 1 : max_id + 1);
    return RoadGraph::build(n, edges);
}

void save_graph_csv(const RoadGraph& graph, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write graph file: " + path);
    out << "src,dst\n";
    for (const Edge& e : graph.edges()) out << e.src << "," << e.dst << "\n";
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace traffic
