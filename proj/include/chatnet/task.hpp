#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chatnet {

struct TaskSample {
    std::string question;     // what the first layer receives
    std::string answer;       // ground-truth key compared by the matcher
    std::string answer_text;  // how the answer is stated in feedback turns
};

// Task-supplied extraction of answers from free-form model text.
struct AnswerMatcher {
    std::function<std::optional<std::string>(std::string_view)> extract;
    std::function<std::vector<std::optional<std::string>>(std::string_view, std::size_t)> extract_batch;
    // All test questions collected into a single prompt.
    std::function<std::string(std::span<const TaskSample>)> batch_question;
};

} // namespace chatnet
