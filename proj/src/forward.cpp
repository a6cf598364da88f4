#include "chatnet/forward.hpp"

#include "chatnet/error.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <future>
#include <numeric>

namespace chatnet {

Network::Network(NetworkTopology topology, std::vector<Session> sessions)
    : topology_(std::move(topology)), sessions_(std::move(sessions)) {
    if (sessions_.size() != topology_.node_count())
        fail(Errc::precondition, "network needs one session per node (" + std::to_string(topology_.node_count()) +
                                     "), got " + std::to_string(sessions_.size()));
}

std::vector<Transcript> Network::snapshot() const {
    std::vector<Transcript> out;
    out.reserve(sessions_.size());
    for (const auto& s : sessions_) out.push_back(s.transcript());
    return out;
}

void Network::restore(const std::vector<Transcript>& snapshot) {
    require(snapshot.size() == sessions_.size(), "snapshot does not match network");
    for (std::size_t i = 0; i < sessions_.size(); ++i) sessions_[i].transcript() = snapshot[i];
}

std::vector<std::size_t> Network::marks() const {
    std::vector<std::size_t> out;
    out.reserve(sessions_.size());
    for (const auto& s : sessions_) out.push_back(s.transcript().size());
    return out;
}

void Network::rollback(const std::vector<std::size_t>& marks) {
    for (std::size_t i = 0; i < sessions_.size() && i < marks.size(); ++i)
        sessions_[i].transcript().truncate(marks[i]);
}

std::string_view dropout_mode_name(DropoutMode mode) {
    switch (mode) {
    case DropoutMode::resample: return "resample";
    case DropoutMode::allow_empty: return "allow_empty";
    case DropoutMode::fixed_count: return "fixed_count";
    }
    return "resample";
}

DropoutMode parse_dropout_mode(std::string_view name) {
    if (name == "resample") return DropoutMode::resample;
    if (name == "allow_empty") return DropoutMode::allow_empty;
    if (name == "fixed_count") return DropoutMode::fixed_count;
    fail(Errc::config_error, "unknown dropout mode '" + std::string(name) + "'");
}

std::vector<NodeRef> DropoutMask::selected() const {
    std::vector<NodeRef> out;
    for (const auto& [sender, on] : selections)
        if (on) out.push_back(sender);
    return out;
}

bool DropoutMask::includes(NodeRef sender) const {
    return std::any_of(selections.begin(), selections.end(),
                       [&](const auto& s) { return s.first == sender && s.second; });
}

DropoutMask sample_dropout_mask(Rng& rng, NodeRef receiver, std::span<const NodeRef> senders, double rate,
                                DropoutMode mode) {
    require(!senders.empty(), "dropout mask needs at least one sender");
    if (!(rate >= 0.0 && rate <= 1.0)) fail(Errc::invalid_rate, "dropout rate must lie in [0, 1]");

    DropoutMask mask{receiver, {}};
    mask.selections.reserve(senders.size());
    for (NodeRef s : senders) mask.selections.emplace_back(s, false);
    const std::size_t n = senders.size();

    switch (mode) {
    case DropoutMode::allow_empty:
        for (auto& sel : mask.selections) sel.second = rng.bernoulli(rate);
        break;
    case DropoutMode::resample:
        if (rate == 0.0) {
            // Every draw would be empty; conditioning leaves one uniform pick.
            mask.selections[rng.below(n)].second = true;
            break;
        }
        for (;;) {
            bool any = false;
            for (auto& sel : mask.selections) any |= (sel.second = rng.bernoulli(rate));
            if (any) break;
        }
        break;
    case DropoutMode::fixed_count: {
        const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n))),
                                               1, n);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = 0; i < k; ++i) {
            std::swap(order[i], order[i + rng.below(n - i)]);
            mask.selections[order[i]].second = true;
        }
        break;
    }
    }
    return mask;
}

const NodeIO& ForwardResult::at(NodeRef node) const {
    for (const auto& io : per_node)
        if (io.node == node) return io;
    fail(Errc::invalid_node, "node " + node.to_string() + " not in forward result");
}

const DropoutMask* ForwardResult::mask_for(NodeRef receiver) const {
    for (const auto& m : masks)
        if (m.receiver == receiver) return &m;
    return nullptr;
}

namespace detail {

std::vector<std::string> ask_layer(Network& network, std::span<const NodeRef> nodes,
                                   std::vector<std::string> prompts, bool concurrent) {
    std::vector<std::string> replies(nodes.size());
    std::vector<std::exception_ptr> errors(nodes.size());

    if (concurrent && nodes.size() > 1) {
        std::vector<std::future<void>> pending;
        pending.reserve(nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            pending.push_back(std::async(std::launch::async, [&, i] {
                try {
                    replies[i] = network.session(nodes[i]).ask(prompts[i]);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }));
        }
        for (auto& f : pending) f.get();
    } else {
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            try {
                replies[i] = network.session(nodes[i]).ask(prompts[i]);
            } catch (...) {
                errors[i] = std::current_exception();
                break;
            }
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return replies;
}

} // namespace detail

ForwardResult forward_pass(Network& network, std::string_view question, Rng& rng,
                           const TemplateSet& templates, Journal& journal, const ForwardOptions& options) {
    require(!question.empty(), "question must be non-empty");
    const auto& topo = network.topology();
    const auto marks = network.marks();

    ForwardResult result;
    result.question = std::string(question);
    result.per_node.resize(topo.node_count());

    try {
        for (int layer = 1; layer <= topo.depth(); ++layer) {
            const auto nodes = topo.layer(layer);
            std::vector<std::string> inputs;
            inputs.reserve(nodes.size());
            for (NodeRef node : nodes) {
                if (layer == 1) {
                    inputs.push_back(assemble_forward_input(question, {}, templates));
                    continue;
                }
                const auto senders = topo.employees_of(node);
                DropoutMask mask;
                if (options.eval_mode) {
                    mask.receiver = node;
                    for (NodeRef s : senders) mask.selections.emplace_back(s, true);
                } else {
                    mask = sample_dropout_mask(rng, node, senders, topo.dropout_rate(), options.dropout_mode);
                }
                std::vector<ReferencedOutput> refs;
                for (NodeRef sender : mask.selected())
                    refs.push_back({refs.size() + 1, result.per_node[topo.flat_index(sender)].output});
                inputs.push_back(assemble_forward_input(question, refs, templates));
                result.masks.push_back(std::move(mask));
            }

            auto outputs = detail::ask_layer(network, nodes, inputs, options.concurrent);

            // Barrier passed: record the whole layer in index order.
            for (std::size_t k = 0; k < nodes.size(); ++k) {
                auto& io = result.per_node[topo.flat_index(nodes[k])];
                io.node = nodes[k];
                io.input = std::move(inputs[k]);
                io.output = std::move(outputs[k]);
                io.seq = journal.record(network.session(nodes[k]).id(), options.kind, io.input, io.output);
            }
        }
    } catch (...) {
        network.rollback(marks);
        throw;
    }

    result.final_output = result.per_node.back().output;
    return result;
}

} // namespace chatnet
