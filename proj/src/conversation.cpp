#include "chatnet/conversation.hpp"

#include "chatnet/error.hpp"
#include "chatnet/rng.hpp"

#include <algorithm>
#include <array>

namespace chatnet {

std::string_view role_name(Role role) noexcept {
    switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    }
    return "user";
}

void Transcript::append(Role role, std::string text) {
    const Role* prev = messages_.empty() ? nullptr : &messages_.back().role;
    bool ok = false;
    switch (role) {
    case Role::system: ok = prev == nullptr; break;
    case Role::user: ok = prev == nullptr || *prev != Role::user; break;
    case Role::assistant: ok = prev != nullptr && *prev == Role::user; break;
    }
    if (!ok) {
        fail(Errc::alternation_violation,
             std::string(role_name(role)) + " turn after " +
                 (prev ? std::string(role_name(*prev)) : std::string("nothing")) +
                 (owner_.empty() ? "" : " in " + owner_));
    }
    if (role != Role::system && text.empty())
        fail(Errc::alternation_violation, "empty " + std::string(role_name(role)) + " text");
    messages_.push_back({role, std::move(text), messages_.size()});
}

const Message* Transcript::last(Role role) const {
    for (auto it = messages_.rbegin(); it != messages_.rend(); ++it)
        if (it->role == role) return &*it;
    return nullptr;
}

void Transcript::truncate(std::size_t size) {
    if (size < messages_.size()) messages_.resize(size);
}

std::vector<Message> Transcript::window(std::optional<std::size_t> keep_pairs) const {
    if (!keep_pairs) return messages_;
    std::vector<Message> out;
    std::size_t begin = 0;
    if (!messages_.empty() && messages_.front().role == Role::system) {
        out.push_back(messages_.front());
        begin = 1;
    }
    std::size_t end = messages_.size();
    std::size_t pending = awaiting_reply() ? 1 : 0;
    const std::size_t keep = std::min(end - begin, *keep_pairs * 2 + pending);
    out.insert(out.end(), messages_.begin() + static_cast<std::ptrdiff_t>(end - keep), messages_.end());
    return out;
}

std::uint64_t Transcript::digest() const {
    std::uint64_t h = fnv1a(owner_);
    for (const auto& m : messages_) {
        h = mix64(h ^ static_cast<std::uint64_t>(m.role));
        h = mix64(h ^ fnv1a(m.text));
    }
    return h;
}

// ---------------------------------------------------------------------------
// PromptTemplate

const std::vector<std::string_view>& PromptTemplate::vocabulary() {
    static const std::vector<std::string_view> names = {
        "question", "answer", "referenced_outputs", "ordinal", "output", "count_phrase",
    };
    return names;
}

PromptTemplate::PromptTemplate(std::string name, std::string body)
    : name_(std::move(name)), body_(std::move(body)) {
    std::string literal;
    for (std::size_t i = 0; i < body_.size(); ++i) {
        const char c = body_[i];
        if (c == '{' && i + 1 < body_.size() && body_[i + 1] == '{') {
            literal += '{';
            ++i;
        } else if (c == '}' && i + 1 < body_.size() && body_[i + 1] == '}') {
            literal += '}';
            ++i;
        } else if (c == '{') {
            const auto close = body_.find('}', i);
            if (close == std::string::npos)
                fail(Errc::template_error, "unterminated placeholder in template '" + name_ + "'");
            std::string key = body_.substr(i + 1, close - i - 1);
            const auto& vocab = vocabulary();
            if (std::find(vocab.begin(), vocab.end(), key) == vocab.end())
                fail(Errc::template_error, "unknown placeholder {" + key + "} in template '" + name_ + "'");
            if (!literal.empty()) pieces_.push_back({false, std::move(literal)});
            literal.clear();
            if (std::find(placeholders_.begin(), placeholders_.end(), key) == placeholders_.end())
                placeholders_.push_back(key);
            pieces_.push_back({true, std::move(key)});
            i = close;
        } else if (c == '}') {
            fail(Errc::template_error, "stray '}' in template '" + name_ + "'");
        } else {
            literal += c;
        }
    }
    if (!literal.empty()) pieces_.push_back({false, std::move(literal)});
}

std::string PromptTemplate::render(const Bindings& bindings) const {
    std::string out;
    for (const auto& piece : pieces_) {
        if (!piece.is_placeholder) {
            out += piece.text;
            continue;
        }
        auto it = bindings.find(piece.text);
        if (it == bindings.end())
            fail(Errc::template_error, "unbound placeholder {" + piece.text + "} in template '" + name_ + "'");
        out += it->second;
    }
    return out;
}

TemplateSet TemplateSet::transcript() {
    return TemplateSet{
        "transcript",
        {"forward_header",
         "You need to guess ({question}), and here {count_phrase} for your reference:\n{referenced_outputs}"},
        {"reference_block", "The {ordinal} person: {output}"},
        {"answer_block", "The correct answer is {answer}."},
        {"right_prompt", "You guessed it right, remember your reasoning and wait for the next input."},
        {"wrong_prompt",
         "You guessed wrong. Please speculate a possible reason and update your classification criteria."},
        {"leader_block", "Here is one person's thinking for your reference:\n{output}"},
        "\n",
    };
}

TemplateSet TemplateSet::narrative() {
    TemplateSet t = transcript();
    t.name = "narrative";
    t.wrong_prompt = {"wrong_prompt",
                      "You guessed it wrong. Please speculate a possible reason why the answer is this "
                      "and update your thinking."};
    return t;
}

TemplateSet TemplateSet::preset(std::string_view name) {
    if (name == "transcript") return transcript();
    if (name == "narrative") return narrative();
    fail(Errc::template_error, "unknown template preset '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

std::string ordinal_word(std::size_t n) {
    static constexpr std::array<const char*, 11> words = {
        "zeroth", "first", "second", "third", "fourth", "fifth",
        "sixth", "seventh", "eighth", "ninth", "tenth",
    };
    if (n < words.size()) return words[n];
    const char* suffix = "th";
    if (n % 100 < 11 || n % 100 > 13) {
        switch (n % 10) {
        case 1: suffix = "st"; break;
        case 2: suffix = "nd"; break;
        case 3: suffix = "rd"; break;
        default: break;
        }
    }
    return std::to_string(n) + suffix;
}

std::string cardinal_word(std::size_t n) {
    static constexpr std::array<const char*, 11> words = {
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    };
    return n < words.size() ? words[n] : std::to_string(n);
}

std::string count_phrase(std::size_t n) {
    return n == 1 ? "is one response" : "are " + cardinal_word(n) + " responses";
}

std::string concat_blocks(std::span<const std::string> blocks, std::string_view separator) {
    std::string out;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (i) out += separator;
        out += blocks[i];
    }
    return out;
}

std::string assemble_forward_input(std::string_view question,
                                   std::span<const ReferencedOutput> referenced,
                                   const TemplateSet& templates) {
    if (referenced.empty()) return std::string(question);
    std::vector<std::string> blocks;
    blocks.reserve(referenced.size());
    for (std::size_t i = 0; i < referenced.size(); ++i) {
        if (referenced[i].ordinal != i + 1)
            fail(Errc::precondition, "reference ordinals must be consecutive from 1");
        blocks.push_back(templates.reference_block.render(
            {{"ordinal", ordinal_word(referenced[i].ordinal)}, {"output", referenced[i].text}}));
    }
    return templates.forward_header.render({
        {"question", std::string(question)},
        {"count_phrase", count_phrase(referenced.size())},
        {"referenced_outputs", concat_blocks(blocks, templates.separator)},
    });
}

std::string assemble_feedback_input(std::string_view answer, bool was_correct,
                                    std::span<const std::string> leader_outputs,
                                    const TemplateSet& templates) {
    if (was_correct && !leader_outputs.empty())
        fail(Errc::invalid_combination, "a correct node receives no leader outputs");
    std::vector<std::string> blocks;
    blocks.push_back(templates.answer_block.render({{"answer", std::string(answer)}}));
    blocks.push_back((was_correct ? templates.right_prompt : templates.wrong_prompt).render({}));
    for (const auto& out : leader_outputs)
        blocks.push_back(templates.leader_block.render({{"output", out}}));
    return concat_blocks(blocks, templates.separator);
}

} // namespace chatnet
