#pragma once

#include "chatnet/backend.hpp"
#include "chatnet/conversation.hpp"
#include "chatnet/journal.hpp"
#include "chatnet/rng.hpp"
#include "chatnet/topology.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace chatnet {

// A topology with one live session per node, stored layer-major.
class Network {
public:
    Network(NetworkTopology topology, std::vector<Session> sessions);

    const NetworkTopology& topology() const { return topology_; }
    Session& session(NodeRef node) { return sessions_[topology_.flat_index(node)]; }
    const Session& session(NodeRef node) const { return sessions_[topology_.flat_index(node)]; }
    std::span<Session> sessions() { return sessions_; }
    std::span<const Session> sessions() const { return sessions_; }

    std::vector<Transcript> snapshot() const;
    void restore(const std::vector<Transcript>& snapshot);

    // Transcript lengths, for rolling back an aborted pass.
    std::vector<std::size_t> marks() const;
    void rollback(const std::vector<std::size_t>& marks);

private:
    NetworkTopology topology_;
    std::vector<Session> sessions_;
};

enum class DropoutMode {
    resample,     // independent Bernoulli draws, redrawn until one sender survives
    allow_empty,  // independent Bernoulli draws, an empty mask is kept
    fixed_count,  // exactly ceil(rate * senders) senders (at least one), chosen uniformly
};

std::string_view dropout_mode_name(DropoutMode mode);
DropoutMode parse_dropout_mode(std::string_view name);

struct DropoutMask {
    NodeRef receiver;
    std::vector<std::pair<NodeRef, bool>> selections;  // employees of receiver, layer-major

    std::vector<NodeRef> selected() const;
    bool includes(NodeRef sender) const;
};

DropoutMask sample_dropout_mask(Rng& rng, NodeRef receiver, std::span<const NodeRef> senders, double rate,
                                DropoutMode mode = DropoutMode::resample);

struct NodeIO {
    NodeRef node;
    std::string input;
    std::string output;
    std::uint64_t seq = 0;
};

struct ForwardResult {
    std::string question;
    std::vector<NodeIO> per_node;     // layer-major, one entry per node
    std::vector<DropoutMask> masks;   // one per receiver in layers 2..n
    std::string final_output;

    const NodeIO& at(NodeRef node) const;
    const DropoutMask* mask_for(NodeRef receiver) const;
};

struct ForwardOptions {
    bool eval_mode = false;  // disables dropout
    DropoutMode dropout_mode = DropoutMode::resample;
    bool concurrent = true;  // fan out requests within a layer
    std::string kind = "forward";
};

// Layer 1 receives the question; every later node receives the question
// plus the outputs of its selected employees. Layers run strictly in order.
// On backend failure all transcripts are rolled back and the error rethrown.
ForwardResult forward_pass(Network& network, std::string_view question, Rng& rng,
                           const TemplateSet& templates, Journal& journal,
                           const ForwardOptions& options = {});

namespace detail {
// Issues one prompt per listed node, concurrently when allowed, and returns
// replies in the same order. Rethrows the first failure by index after all
// requests have finished.
std::vector<std::string> ask_layer(Network& network, std::span<const NodeRef> nodes,
                                   std::vector<std::string> prompts, bool concurrent);
} // namespace detail

} // namespace chatnet
