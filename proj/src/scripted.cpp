#include "backend_impl.hpp"
#include "chatnet/dmc.hpp"
#include "chatnet/error.hpp"
#include "chatnet/rng.hpp"
#include "chatnet/sentiment.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <regex>
#include <sstream>

namespace chatnet::detail {
namespace {

constexpr std::string_view acknowledgement = "Understood. I will keep this in mind for the next input.";

// A user turn split into the part written by the orchestrator and the
// referenced outputs of other people ("The first person: ...").
struct SplitPrompt {
    std::string header;
    std::vector<std::string> blocks;
};

SplitPrompt split_references(std::string_view text) {
    static const std::regex person_re(R"(^The \S+ person: ?(.*)$)");
    SplitPrompt out;
    std::istringstream in{std::string(text)};
    bool in_block = false;
    for (std::string line; std::getline(in, line);) {
        std::smatch m;
        if (std::regex_match(line, m, person_re)) {
            out.blocks.push_back(m[1].str());
            in_block = true;
        } else if (in_block) {
            out.blocks.back() += "\n" + line;
        } else {
            if (!out.header.empty()) out.header += "\n";
            out.header += line;
        }
    }
    return out;
}

std::vector<std::string> lines_of(std::string_view text) {
    std::vector<std::string> out;
    std::istringstream in{std::string(text)};
    for (std::string line; std::getline(in, line);)
        if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(line);
    return out;
}

// Text after the last ": " on a line, where rewrite prompts put the sentence.
std::string sentence_part(const std::string& line) {
    const auto colon = line.rfind(": ");
    return colon == std::string::npos ? line : line.substr(colon + 2);
}

bool contains_icase(std::string_view haystack, std::string_view needle) {
    auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(), [](char a, char b) {
        return std::tolower(static_cast<unsigned char>(a)) == std::tolower(static_cast<unsigned char>(b));
    });
    return it != haystack.end();
}

std::string single_verdict(int category) {
    return "Based on my guess, this data point belongs to " + dmc::category_phrase(category) + ".";
}

std::string classify_reply(const std::vector<std::vector<int>>& vectors, const std::function<int(const std::vector<int>&)>& pick) {
    if (vectors.empty()) return std::string(acknowledgement);
    if (vectors.size() == 1) return single_verdict(pick(vectors.front()));
    std::string out;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (i) out += "\n";
        out += std::to_string(i + 1) + ": category " + std::to_string(pick(vectors[i]));
    }
    return out;
}

int argmax_of(const std::vector<int>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin()) + 1;
}

class ScriptedBackend final : public ChatBackend {
public:
    explicit ScriptedBackend(const ScriptedSettings& settings) : policy_(settings.policy), rng_(settings.seed) {
        if (auto* replay = std::get_if<policy::ReplayList>(&policy_))
            queue_.assign(replay->replies.begin(), replay->replies.end());
    }

    HealthReport probe() override { return {true, std::chrono::duration<double>(0), "scripted"}; }

protected:
    std::string complete(const Transcript& transcript) override {
        const Message* user = transcript.last(Role::user);
        const Message* previous = transcript.last(Role::assistant);
        const std::string_view prompt = user->text;
        const std::string_view prior = previous ? std::string_view(previous->text) : std::string_view{};
        return std::visit([&](auto& p) { return respond(p, prompt, prior); }, policy_);
    }

private:
    std::string respond(const policy::ArgmaxClassifier&, std::string_view prompt, std::string_view) {
        return classify_reply(dmc::find_vectors(split_references(prompt).header), argmax_of);
    }

    std::string respond(const policy::FixedDimClassifier& p, std::string_view prompt, std::string_view) {
        return classify_reply(dmc::find_vectors(split_references(prompt).header),
                              [&](const std::vector<int>&) { return p.category; });
    }

    std::string respond(const policy::NoisyClassifier& p, std::string_view prompt, std::string_view) {
        return classify_reply(dmc::find_vectors(split_references(prompt).header), [&](const std::vector<int>& v) {
            const int truth = argmax_of(v);
            const int dims = static_cast<int>(v.size());
            if (!rng_.bernoulli(p.error_rate)) return truth;
            const int wrong = static_cast<int>(rng_.below(static_cast<std::uint64_t>(dims - 1))) + 1;
            return wrong >= truth ? wrong + 1 : wrong;
        });
    }

    std::string respond(const policy::MajorityAggregator&, std::string_view prompt, std::string_view) {
        const SplitPrompt split = split_references(prompt);
        const auto vectors = dmc::find_vectors(split.header);
        if (vectors.empty() || split.blocks.empty()) return std::string(acknowledgement);
        const int dims = static_cast<int>(vectors.front().size());
        const std::size_t n = vectors.size();

        std::vector<std::vector<std::optional<int>>> ballots;
        for (const auto& block : split.blocks)
            ballots.push_back(n == 1 ? std::vector<std::optional<int>>{dmc::parse_category(block, dims)}
                                     : dmc::parse_batch(block, n, dims));
        std::vector<std::optional<int>> decided(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<std::optional<int>> votes;
            for (const auto& b : ballots) votes.push_back(b[i]);
            decided[i] = dmc::majority_vote(votes);
        }
        constexpr std::string_view undecided = "I cannot decide based on these responses.";
        if (n == 1) {
            if (!decided.front()) return std::string(undecided);
            return "Taking all the responses into account, I would lean towards classifying it into " +
                   dmc::category_phrase(*decided.front()) + ".";
        }
        std::string reply = dmc::batch_reply(decided);
        return reply.empty() ? std::string(undecided) : reply;
    }

    std::string respond(const policy::ReplayList&, std::string_view, std::string_view) {
        if (queue_.empty()) fail(Errc::replay_exhausted, "replay list has no replies left");
        std::string reply = std::move(queue_.front());
        queue_.pop_front();
        return reply;
    }

    std::string respond(const policy::LexiconRewriter& p, std::string_view prompt, std::string_view prior) {
        int level = p.level;
        if (p.jitter > 0) level += rng_.between(-p.jitter, p.jitter);
        return rewrite(prompt, prior, std::clamp(level, 0, sentiment::max_level));
    }

    std::string respond(const policy::LexiconAggregator&, std::string_view prompt, std::string_view prior) {
        const SplitPrompt split = split_references(prompt);
        std::optional<std::string> best;
        int best_level = -1;
        for (const auto& block : split.blocks) {
            const auto first_line = lines_of(block);
            if (first_line.empty() || !sentiment::lexicon_polarity(first_line.front())) continue;
            const int level = sentiment::intensity(first_line.front());
            if (level > best_level) {
                best = first_line.front();
                best_level = level;
            }
        }
        if (best) return *best;
        return rewrite(prompt, prior, 3);
    }

    std::string respond(const policy::LexiconJudge&, std::string_view prompt, std::string_view) {
        const auto [first, second] = judge_slots(prompt);
        if (!first || !second) return "I am unable to compare these sentences.";
        const int a = sentiment::intensity(*first);
        const int b = sentiment::intensity(*second);
        if (a == b) return "Tie because both sentences express the same degree of feeling.";
        const bool a_wins = a > b;
        const std::string& winner = a_wins ? *first : *second;
        const std::string& loser = a_wins ? *second : *first;
        const auto polarity = sentiment::lexicon_polarity(winner);
        const std::string feeling =
            polarity ? std::string(sentiment::polarity_name(*polarity)) + " feeling" : std::string("feeling");
        return std::string(a_wins ? "A" : "B") + " is better because \"" +
               sentiment::emotive_phrase(winner).value_or(winner) + "\" implies a stronger degree of " + feeling +
               " compared to \"" + sentiment::emotive_phrase(loser).value_or(loser) + "\".";
    }

    std::string respond(const policy::FirstSlotJudge&, std::string_view, std::string_view) {
        return "A is better because it is listed first.";
    }

    static std::pair<std::optional<std::string>, std::optional<std::string>> judge_slots(std::string_view prompt) {
        std::optional<std::string> a, b;
        for (const auto& line : lines_of(prompt)) {
            if (line.rfind("A: ", 0) == 0) a = line.substr(3);
            if (line.rfind("B: ", 0) == 0) b = line.substr(3);
        }
        return {a, b};
    }

    // Reverses the sentence in the prompt, or, when asked to intensify,
    // strengthens the most intense sentence on offer by one step.
    static std::string rewrite(std::string_view prompt, std::string_view prior, int level) {
        const SplitPrompt split = split_references(prompt);
        if (contains_icase(prompt, "more emotionally intense")) {
            std::vector<std::string> candidates;
            for (const auto& line : lines_of(prompt)) candidates.push_back(sentence_part(line));
            if (!prior.empty()) candidates.emplace_back(prior);
            std::optional<std::string> best;
            int best_level = -1;
            for (const auto& c : candidates) {
                if (!sentiment::lexicon_polarity(c)) continue;
                const int lv = sentiment::intensity(c);
                if (lv > best_level) {
                    best = c;
                    best_level = lv;
                }
            }
            if (best) return *sentiment::intensify_with_lexicon(*best);
            return "I could not find a sentence to intensify.";
        }
        for (const auto& line : lines_of(split.header))
            if (auto reversed = sentiment::reverse_with_lexicon(sentence_part(line), level)) return *reversed;
        return std::string(acknowledgement);
    }

    ScriptedPolicy policy_;
    Rng rng_;
    std::deque<std::string> queue_;
};

} // namespace

std::unique_ptr<ChatBackend> make_scripted_backend(const ScriptedSettings& settings) {
    return std::make_unique<ScriptedBackend>(settings);
}

} // namespace chatnet::detail
