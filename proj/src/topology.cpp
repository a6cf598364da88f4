#include "chatnet/topology.hpp"

#include "chatnet/error.hpp"


namespace chatnet {

std::string NodeRef::to_string() const {
    return std::to_string(layer) + "." + std::to_string(index);
}

NodeRef NodeRef::parse(const std::string& text) {
    const auto dot = text.find('.');
    if (dot == std::string::npos) fail(Errc::invalid_node, "expected layer.index, got '" + text + "'");
    try {
        std::size_t used = 0;
        NodeRef ref{std::stoi(text.substr(0, dot), &used), 0};
        if (used != dot) throw std::invalid_argument(text);
        const std::string rest = text.substr(dot + 1);
        ref.index = std::stoi(rest, &used);
        if (used != rest.size()) throw std::invalid_argument(text);
        return ref;
    } catch (const std::logic_error&) {
        fail(Errc::invalid_node, "expected layer.index, got '" + text + "'");
    }
}

NetworkTopology NetworkTopology::build(std::vector<int> layer_widths, double dropout_rate) {
    if (layer_widths.size() < 2)
        fail(Errc::invalid_widths, "need at least two layers");
    for (int w : layer_widths)
        if (w < 1) fail(Errc::invalid_widths, "every layer width must be >= 1");
    if (layer_widths.back() != 1)
        fail(Errc::invalid_widths, "final aggregation layer must have width 1, got " +
                                       std::to_string(layer_widths.back()));
    if (!(dropout_rate >= 0.0 && dropout_rate <= 1.0))
        fail(Errc::invalid_rate, "dropout rate must lie in [0, 1]");
    return NetworkTopology(std::move(layer_widths), dropout_rate);
}

NetworkTopology::NetworkTopology(std::vector<int> widths, double rate)
    : widths_(std::move(widths)), dropout_rate_(rate) {
    layer_offset_.reserve(widths_.size());
    for (int l = 1; l <= depth(); ++l) {
        layer_offset_.push_back(nodes_.size());
        for (int j = 1; j <= widths_[l - 1]; ++j) nodes_.push_back({l, j});
    }
}

int NetworkTopology::width(int layer) const {
    if (layer < 1 || layer > depth()) fail(Errc::invalid_node, "layer out of range");
    return widths_[layer - 1];
}

std::vector<NodeRef> NetworkTopology::layer(int l) const {
    const int w = width(l);
    std::vector<NodeRef> out;
    out.reserve(w);
    for (int j = 1; j <= w; ++j) out.push_back({l, j});
    return out;
}

bool NetworkTopology::contains(NodeRef node) const {
    return node.layer >= 1 && node.layer <= depth() && node.index >= 1 &&
           node.index <= widths_[node.layer - 1];
}

std::size_t NetworkTopology::flat_index(NodeRef node) const {
    if (!contains(node)) fail(Errc::invalid_node, "node " + node.to_string() + " not in topology");
    return layer_offset_[node.layer - 1] + static_cast<std::size_t>(node.index - 1);
}

std::vector<NodeRef> NetworkTopology::leaders_of(NodeRef node) const {
    if (!contains(node)) fail(Errc::invalid_node, "node " + node.to_string() + " not in topology");
    if (node.layer == depth()) fail(Errc::no_leaders, "node " + node.to_string() + " is the aggregator");
    return layer(node.layer + 1);
}

std::vector<NodeRef> NetworkTopology::employees_of(NodeRef node) const {
    if (!contains(node)) fail(Errc::invalid_node, "node " + node.to_string() + " not in topology");
    if (node.layer == 1) fail(Errc::no_employees, "node " + node.to_string() + " is in the first layer");
    return layer(node.layer - 1);
}

} // namespace chatnet
