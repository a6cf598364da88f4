#pragma once

// Sentiment reversal: rewrite a sentence with the opposite polarity, then
// make the rewrite more intense. Candidates from two systems are compared
// pairwise by a judge model.

#include "chatnet/backend.hpp"
#include "chatnet/forward.hpp"
#include "chatnet/journal.hpp"
#include "chatnet/rng.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace chatnet::sentiment {

enum class Polarity { positive, negative };

std::string_view polarity_name(Polarity p);
Polarity parse_polarity(std::string_view name);
Polarity opposite(Polarity p);

struct SentimentSample {
    std::string sentence;
    Polarity sentiment = Polarity::positive;
};

// "sentence<TAB>sentiment" per line; blank lines and '#' comments skipped.
std::vector<SentimentSample> read_dataset(std::istream& in);
void write_dataset(std::ostream& out, std::span<const SentimentSample> samples);
// Throws DatasetNotFound when the file does not exist.
std::vector<SentimentSample> load_dataset(const std::filesystem::path& path);

// --- Lexicon -------------------------------------------------------------
//
// A fixed antonym table plus intensifier ladders. Used by the scripted
// rewriter and judge, and to build the bundled dataset.

inline constexpr int max_level = 5;

// Strength of the strongest intensifier in the sentence (0 when none).
int intensity(std::string_view sentence);

// Swaps the sentence's last lexicon adjective for its antonym, replacing
// any intensifiers in front of it with the ladder phrase for `level`.
// nullopt when the sentence holds no lexicon adjective.
std::optional<std::string> reverse_with_lexicon(std::string_view sentence, int level);

// Raises the intensifier in front of the last lexicon adjective by `steps`
// ladder levels (capped at max_level).
std::optional<std::string> intensify_with_lexicon(std::string_view sentence, int steps = 1);

// Polarity of the last lexicon adjective in the sentence.
std::optional<Polarity> lexicon_polarity(std::string_view sentence);

// The intensifiers plus the last lexicon adjective, e.g. "excruciatingly dull".
std::optional<std::string> emotive_phrase(std::string_view sentence);

// Sentences built from the lexicon: one positive and one negative per
// antonym pair, `count` in total (alternating polarity).
std::vector<SentimentSample> lexicon_dataset(std::size_t count);

// --- Prompts -------------------------------------------------------------

inline constexpr std::string_view intensify_instruction =
    "Make the emotionally reversed sentences more emotionally intense";

std::string reverse_prompt(const SentimentSample& sample);
std::string intensify_prompt(std::string_view prior_output);
std::string judge_prompt(std::string_view first, std::string_view second);

// Forward header suited to rewrites plus feedback wording for intensify.
TemplateSet templates();

// --- Systems -------------------------------------------------------------

// Either one dialogue model or a layered network. Remembers its last
// output so that intensify can follow reverse_sentiment.
class ReversalSystem {
public:
    static ReversalSystem single(Session session);
    static ReversalSystem network(Network network, TemplateSet wording = templates(), ForwardOptions options = {});

    bool is_network() const { return std::holds_alternative<Network>(impl_); }
    Network& as_network() { return std::get<Network>(impl_); }
    Session& as_single() { return std::get<Session>(impl_); }

    const std::optional<std::string>& last_output() const { return last_output_; }
    const std::optional<ForwardResult>& last_forward() const { return last_forward_; }

    // Drops every turn after the initial system prompts so the next sample
    // starts from a clean history.
    void reset();

    std::string reverse(const SentimentSample& sample, Journal& journal);
    std::string intensify(Journal& journal);

private:
    ReversalSystem(std::variant<Session, Network> impl, TemplateSet wording, ForwardOptions options);

    std::variant<Session, Network> impl_;
    TemplateSet templates_;
    ForwardOptions options_;
    std::vector<std::size_t> initial_marks_;
    std::optional<std::string> last_output_;
    std::optional<ForwardResult> last_forward_;
};

std::string reverse_sentiment(ReversalSystem& system, const SentimentSample& sample, Journal& journal);
// Throws Precondition when no reverse_sentiment preceded it.
std::string intensify(ReversalSystem& system, Journal& journal);

// --- Judging -------------------------------------------------------------

enum class Winner { a, b, tie };

std::string_view winner_name(Winner w);
Winner parse_winner(std::string_view name);

struct JudgeVerdict {
    Winner winner = Winner::tie;
    std::string rationale;
    bool a_first = true;  // sentence_a was shown in slot A
    std::string reply;
};

// Reads "A is better ...", "B is better ..." or "Tie ..." from a judge reply
// and maps the slot back to the candidate.
JudgeVerdict parse_verdict(std::string_view reply, bool a_first);

// Asks the judge in a fresh one-turn conversation. Position order is drawn
// from `rng`. Never throws on odd replies; backend errors propagate.
JudgeVerdict judge_pair(ChatBackend& judge, std::string_view sentence_a, std::string_view sentence_b, Rng& rng,
                        Journal* journal = nullptr, std::string_view session = "judge");

struct Tally {
    int win = 0;   // candidate a judged better
    int loss = 0;  // candidate b judged better
    int tie = 0;

    int total() const { return win + loss + tie; }
    bool operator==(const Tally&) const = default;
};

Tally tally(std::span<const JudgeVerdict> verdicts);

} // namespace chatnet::sentiment
