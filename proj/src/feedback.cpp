#include "chatnet/feedback.hpp"

#include "chatnet/error.hpp"

namespace chatnet {

std::string_view judge_reason_name(JudgeReason reason) {
    switch (reason) {
    case JudgeReason::matched: return "matched";
    case JudgeReason::mismatched: return "mismatched";
    case JudgeReason::unparseable: return "unparseable";
    }
    return "unparseable";
}

CorrectnessJudgment judge_correct(std::string_view output, std::string_view answer,
                                  const AnswerExtractor& extract, NodeRef node) {
    CorrectnessJudgment j;
    j.node = node;
    auto found = extract ? extract(output) : std::nullopt;
    if (!found) return j;
    j.correct = *found == answer;
    j.reason = j.correct ? JudgeReason::matched : JudgeReason::mismatched;
    j.extracted_answer = std::move(found);
    return j;
}

std::string_view fan_in_name(FanIn mode) {
    switch (mode) {
    case FanIn::mirror_mask: return "mirror_mask";
    case FanIn::all_leaders: return "all_leaders";
    case FanIn::all_ancestors: return "all_ancestors";
    }
    return "mirror_mask";
}

FanIn parse_fan_in(std::string_view name) {
    if (name == "mirror_mask") return FanIn::mirror_mask;
    if (name == "all_leaders") return FanIn::all_leaders;
    if (name == "all_ancestors") return FanIn::all_ancestors;
    fail(Errc::config_error, "unknown feedback fan-in '" + std::string(name) + "'");
}

const NodeFeedback& FeedbackResult::at(NodeRef node) const {
    for (const auto& f : per_node)
        if (f.node == node) return f;
    fail(Errc::invalid_node, "node " + node.to_string() + " not in feedback result");
}

namespace {

std::vector<NodeRef> reflection_sources(const NetworkTopology& topo, const ForwardResult& forward, NodeRef node,
                                        FanIn mode) {
    std::vector<NodeRef> out;
    if (node.layer == topo.depth()) return out;
    switch (mode) {
    case FanIn::mirror_mask:
        for (NodeRef leader : topo.leaders_of(node)) {
            const DropoutMask* mask = forward.mask_for(leader);
            if (mask == nullptr || mask->includes(node)) out.push_back(leader);
        }
        break;
    case FanIn::all_leaders:
        out = topo.leaders_of(node);
        break;
    case FanIn::all_ancestors:
        for (int l = node.layer + 1; l <= topo.depth(); ++l)
            for (NodeRef n : topo.layer(l)) out.push_back(n);
        break;
    }
    return out;
}

} // namespace

FeedbackResult backward_pass(Network& network, std::string_view answer_text, const ForwardResult& forward,
                             const NodeJudge& judge, const TemplateSet& templates, Journal& journal,
                             const FeedbackOptions& options) {
    const auto& topo = network.topology();
    require(forward.per_node.size() == topo.node_count(), "forward result does not cover the topology");
    require(static_cast<bool>(judge), "backward pass needs a judge");

    std::vector<std::string> reflections(topo.node_count());
    FeedbackResult result;
    result.per_node.reserve(topo.node_count());
    const auto marks = network.marks();

    try {
        for (int layer = topo.depth(); layer >= 1; --layer) {
            const auto nodes = topo.layer(layer);
            std::vector<NodeFeedback> pending;
            std::vector<std::string> inputs;
            for (NodeRef node : nodes) {
                NodeFeedback fb;
                fb.node = node;
                fb.judgment = judge(node, forward.at(node).output);
                fb.judgment.node = node;
                std::vector<std::string> leader_text;
                if (!fb.judgment.correct) {
                    fb.heard_from = reflection_sources(topo, forward, node, options.fan_in);
                    for (NodeRef leader : fb.heard_from) leader_text.push_back(reflections[topo.flat_index(leader)]);
                }
                fb.input = assemble_feedback_input(answer_text, fb.judgment.correct, leader_text, templates);
                inputs.push_back(fb.input);
                pending.push_back(std::move(fb));
            }

            auto replies = detail::ask_layer(network, nodes, std::move(inputs), options.concurrent);

            for (std::size_t k = 0; k < nodes.size(); ++k) {
                auto& fb = pending[k];
                fb.reflection = std::move(replies[k]);
                fb.seq = journal.record(network.session(fb.node).id(), options.kind, fb.input, fb.reflection);
                reflections[topo.flat_index(fb.node)] = fb.reflection;
                result.per_node.push_back(std::move(fb));
            }
        }
    } catch (...) {
        network.rollback(marks);
        throw;
    }
    return result;
}

} // namespace chatnet
