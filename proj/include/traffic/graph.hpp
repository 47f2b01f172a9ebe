#pragma once

// Road-network graph and graph convolution. Nodes aggregate from their
// in-neighbors plus themselves, scaled by symmetric-degree coefficients
// c_ij = sqrt(|N(i)|*|N(j)|); self-loops make every c_ij well-defined.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "traffic/autodiff.hpp"
#include "traffic/tensor.hpp"

namespace traffic {

struct Edge {
    std::size_t src = 0;
    std::size_t dst = 0;
};

bool operator==(const Edge& a, const Edge& b);

class RoadGraph {
public:
    static RoadGraph build(std::size_t n, const std::vector<Edge>& edges);

    std::size_t n() const { return n_; }
    const std::vector<Edge>& edges() const { return edges_; }

    // In-neighbors plus self, sorted ascending.
    const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_[i]; }

    // c_ij; j must be a member of neighbors(i).
    double coeff(std::size_t i, std::size_t j) const;

    // Dense N x N propagation matrix: (i, j) = 1/c_ij for j in N(i), else 0.
    const Tensor& propagation() const { return prop_; }

    // Stable identity of the topology (node count + sorted edge list),
    // used to refuse mixing checkpoints with mismatched graphs.
    std::uint64_t fingerprint() const;

private:
    std::size_t n_ = 0;
    std::vector<Edge> edges_;
    std::vector<std::vector<std::size_t>> neighbors_;
    Tensor prop_;
};

enum class Activation { Identity, Relu, Tanh };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

struct GraphConvLayer {
    Tensor weight;  // F_in x F_out
    Tensor bias;    // F_out
    Activation activation = Activation::Relu;
};

// One aggregation step: row i = act(sum_{j in N(i)} (1/c_ij) * (h_j * W) + bias).
Tensor graph_conv(const Tensor& h_in, const RoadGraph& graph, const GraphConvLayer& layer);
Tensor gcn_stack(const Tensor& h_in, const RoadGraph& graph, const std::vector<GraphConvLayer>& layers);

// Tape-level counterparts used inside the model forward pass; `prop` is the
// graph's propagation matrix lifted as a constant.
ad::Value apply_activation(ad::Tape& tape, ad::Value x, Activation act);
ad::Value graph_conv(ad::Tape& tape, ad::Value h_in, ad::Value prop, ad::Value weight, ad::Value bias,
                     Activation act);

// CSV with header `src,dst`; node count is max id + 1 unless overridden.
RoadGraph load_graph_csv(const std::string& path, std::optional<std::size_t> node_count = std::nullopt);
void save_graph_csv(const RoadGraph& graph, const std::string& path);

}  // namespace traffic
