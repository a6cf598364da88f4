#pragma once

#include "chatnet/forward.hpp"

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace chatnet {

enum class JudgeReason { matched, mismatched, unparseable };

std::string_view judge_reason_name(JudgeReason reason);

struct CorrectnessJudgment {
    NodeRef node;
    std::optional<std::string> extracted_answer;
    bool correct = false;
    JudgeReason reason = JudgeReason::unparseable;
};

using AnswerExtractor = std::function<std::optional<std::string>(std::string_view)>;

// Unparseable output counts as incorrect.
CorrectnessJudgment judge_correct(std::string_view output, std::string_view answer,
                                  const AnswerExtractor& extract, NodeRef node = {});

// Which leaders' reflections reach an incorrect employee.
enum class FanIn {
    mirror_mask,    // leaders whose forward mask selected this employee
    all_leaders,    // every node in the next layer
    all_ancestors,  // every node in all higher layers
};

std::string_view fan_in_name(FanIn mode);
FanIn parse_fan_in(std::string_view name);

struct NodeFeedback {
    NodeRef node;
    CorrectnessJudgment judgment;
    std::vector<NodeRef> heard_from;  // leaders whose reflections were included
    std::string input;
    std::string reflection;
    std::uint64_t seq = 0;
};

struct FeedbackResult {
    std::vector<NodeFeedback> per_node;  // processing order: layer n down to 1

    const NodeFeedback& at(NodeRef node) const;
};

using NodeJudge = std::function<CorrectnessJudgment(NodeRef, std::string_view output)>;

struct FeedbackOptions {
    FanIn fan_in = FanIn::mirror_mask;
    bool concurrent = true;
    std::string kind = "feedback";
};

// Top-down feedback. Each node is judged on its forward output; correct
// nodes get answer + right prompt, incorrect nodes get answer + wrong
// prompt + the reflections their leaders produced earlier in this pass.
// Layers are processed from the aggregator downwards.
FeedbackResult backward_pass(Network& network, std::string_view answer_text, const ForwardResult& forward,
                             const NodeJudge& judge, const TemplateSet& templates, Journal& journal,
                             const FeedbackOptions& options = {});

} // namespace chatnet
