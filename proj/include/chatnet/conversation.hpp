#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace chatnet {

enum class Role { system, user, assistant };

std::string_view role_name(Role role) noexcept;

struct Message {
    Role role = Role::user;
    std::string text;
    std::size_t turn_index = 0;

    bool operator==(const Message&) const = default;
};

// Append-only dialogue history of one model session. After an optional
// leading system message, turns alternate user -> assistant.
class Transcript {
public:
    Transcript() = default;
    explicit Transcript(std::string owner) : owner_(std::move(owner)) {}

    const std::string& owner() const { return owner_; }
    const std::vector<Message>& messages() const { return messages_; }
    std::size_t size() const { return messages_.size(); }
    bool empty() const { return messages_.empty(); }

    // Throws AlternationViolation when the role breaks alternation, and
    // also for empty user/assistant text.
    void append(Role role, std::string text);

    bool awaiting_reply() const { return !messages_.empty() && messages_.back().role == Role::user; }
    const Message* last(Role role) const;

    // Drops every message at position >= size. Used to roll back a failed
    // pass and to restore an evaluation snapshot.
    void truncate(std::size_t size);

    // System message plus the last `keep_pairs` exchanges; the pending user
    // turn (if any) is always kept. nullopt keeps everything.
    std::vector<Message> window(std::optional<std::size_t> keep_pairs) const;

    std::uint64_t digest() const;

private:
    std::string owner_;
    std::vector<Message> messages_;
};

using Bindings = std::map<std::string, std::string, std::less<>>;

// Text with named {placeholders}. "{{" and "}}" are literal braces.
// Placeholders must come from a fixed vocabulary; anything else is rejected
// at construction, and rendering fails if a used placeholder is unbound.
class PromptTemplate {
public:
    PromptTemplate() = default;
    PromptTemplate(std::string name, std::string body);

    const std::string& name() const { return name_; }
    const std::string& body() const { return body_; }
    const std::vector<std::string>& placeholders() const { return placeholders_; }

    std::string render(const Bindings& bindings) const;

    static const std::vector<std::string_view>& vocabulary();

private:
    struct Piece {
        bool is_placeholder = false;
        std::string text;
    };

    std::string name_;
    std::string body_;
    std::vector<Piece> pieces_;
    std::vector<std::string> placeholders_;
};

// The prompts used to build forward and feedback inputs.
struct TemplateSet {
    std::string name;
    PromptTemplate forward_header;   // {question} {count_phrase} {referenced_outputs}
    PromptTemplate reference_block;  // {ordinal} {output}
    PromptTemplate answer_block;     // {answer}
    PromptTemplate right_prompt;
    PromptTemplate wrong_prompt;
    PromptTemplate leader_block;     // {output}
    std::string separator = "\n";

    // Terse wording as used in recorded dialogues. This is the default.
    static TemplateSet transcript();
    // Longer, more explanatory wrong prompt.
    static TemplateSet narrative();
    static TemplateSet preset(std::string_view name);
};

std::string ordinal_word(std::size_t n);     // 1 -> "first", 11 -> "11th"
std::string cardinal_word(std::size_t n);    // 3 -> "three", 12 -> "12"
std::string count_phrase(std::size_t n);     // 1 -> "is one response", 3 -> "are three responses"

// Concatenation of prompt blocks: blocks joined by the separator.
std::string concat_blocks(std::span<const std::string> blocks, std::string_view separator);

struct ReferencedOutput {
    std::size_t ordinal = 0;  // 1-based, consecutive
    std::string text;
};

// Input of a node given the question and its (surviving) employees'
// outputs. With no references this is the question itself.
std::string assemble_forward_input(std::string_view question,
                                   std::span<const ReferencedOutput> referenced,
                                   const TemplateSet& templates);

// Input of a node in the feedback pass: answer block, then the right or
// wrong prompt, then (wrong only) each leader output in its own block.
std::string assemble_feedback_input(std::string_view answer, bool was_correct,
                                    std::span<const std::string> leader_outputs,
                                    const TemplateSet& templates);

} // namespace chatnet
