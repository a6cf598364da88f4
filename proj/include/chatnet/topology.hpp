#pragma once

#include <compare>
#include <cstddef>
#include <string>
#include <vector>

namespace chatnet {

// 1-based (layer, index) address of a model node.
struct NodeRef {
    int layer = 1;
    int index = 1;

    auto operator<=>(const NodeRef&) const = default;

    std::string to_string() const;  // "layer.index"
    static NodeRef parse(const std::string& text);
};

// Layered leader/employee graph. Adjacent layers are fully connected and the
// last layer holds the single aggregation leader. Immutable once built.
class NetworkTopology {
public:
    static NetworkTopology build(std::vector<int> layer_widths, double dropout_rate);

    int depth() const { return static_cast<int>(widths_.size()); }
    int width(int layer) const;
    const std::vector<int>& layer_widths() const { return widths_; }
    double dropout_rate() const { return dropout_rate_; }

    std::size_t node_count() const { return nodes_.size(); }
    // Layer-major order: (1,1), (1,2), ..., (n,1).
    const std::vector<NodeRef>& nodes() const { return nodes_; }
    std::vector<NodeRef> layer(int layer) const;
    NodeRef aggregator() const { return {depth(), 1}; }

    bool contains(NodeRef node) const;
    std::size_t flat_index(NodeRef node) const;

    std::vector<NodeRef> leaders_of(NodeRef node) const;
    std::vector<NodeRef> employees_of(NodeRef node) const;

private:
    NetworkTopology(std::vector<int> widths, double rate);

    std::vector<int> widths_;
    double dropout_rate_;
    std::vector<NodeRef> nodes_;
    std::vector<std::size_t> layer_offset_;
};

inline NetworkTopology build_network(std::vector<int> layer_widths, double dropout_rate) {
    return NetworkTopology::build(std::move(layer_widths), dropout_rate);
}

} // namespace chatnet
