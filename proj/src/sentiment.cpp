#include "chatnet/sentiment.hpp"

#include "chatnet/error.hpp"
#include "chatnet/feedback.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <regex>

namespace chatnet::sentiment {

std::string_view polarity_name(Polarity p) {
    return p == Polarity::positive ? "positive" : "negative";
}

Polarity parse_polarity(std::string_view name) {
    if (name == "positive") return Polarity::positive;
    if (name == "negative") return Polarity::negative;
    fail(Errc::io_error, "unknown sentiment '" + std::string(name) + "'");
}

Polarity opposite(Polarity p) {
    return p == Polarity::positive ? Polarity::negative : Polarity::positive;
}

std::vector<SentimentSample> read_dataset(std::istream& in) {
    std::vector<SentimentSample> out;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto tab = line.rfind('\t');
        if (tab == std::string::npos || tab == 0)
            fail(Errc::io_error, "sentiment dataset line " + std::to_string(line_no) + " lacks a sentence<TAB>label pair");
        out.push_back({line.substr(0, tab), parse_polarity(line.substr(tab + 1))});
    }
    return out;
}

void write_dataset(std::ostream& out, std::span<const SentimentSample> samples) {
    for (const auto& s : samples) out << s.sentence << '\t' << polarity_name(s.sentiment) << '\n';
}

std::vector<SentimentSample> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::dataset_not_found, "sentiment dataset not found: " + path.string());
    auto samples = read_dataset(in);
    if (samples.empty()) fail(Errc::io_error, "sentiment dataset is empty: " + path.string());
    return samples;
}

namespace {

struct AntonymPair {
    std::string_view positive;
    std::string_view negative;
};

constexpr std::array<AntonymPair, 30> antonyms{{
    {"interesting", "dull"},     {"satisfying", "unfulfilling"}, {"delightful", "dreadful"},
    {"beautiful", "ugly"},       {"exciting", "boring"},         {"pleasant", "unpleasant"},
    {"wonderful", "awful"},      {"friendly", "hostile"},        {"generous", "stingy"},
    {"brilliant", "mediocre"},   {"joyful", "miserable"},        {"comfortable", "uncomfortable"},
    {"helpful", "useless"},      {"fascinating", "tedious"},     {"charming", "repulsive"},
    {"peaceful", "chaotic"},     {"delicious", "disgusting"},    {"inspiring", "depressing"},
    {"reliable", "unreliable"},  {"cheerful", "gloomy"},         {"elegant", "clumsy"},
    {"thrilling", "monotonous"}, {"kind", "cruel"},              {"fresh", "stale"},
    {"spacious", "cramped"},     {"warm", "cold"},               {"graceful", "awkward"},
    {"successful", "disastrous"}, {"refreshing", "draining"},    {"rewarding", "pointless"},
}};

constexpr std::array<std::string_view, 30> nouns{
    "movie",   "journey",    "book",       "meal",    "concert",     "hotel",   "team",   "city",
    "lecture", "garden",     "museum",     "game",    "song",        "teacher", "street", "festival",
    "restaurant", "trip",    "show",       "office",  "park",        "novel",   "party",  "class",
    "apartment", "weekend",  "performance", "project", "village",    "cafe",
};

using Ladder = std::array<std::string_view, max_level + 1>;
constexpr Ladder negative_ladder{"", "quite", "very", "incredibly", "excruciatingly", "soul-crushingly and utterly"};
constexpr Ladder positive_ladder{"", "quite", "very", "incredibly", "breathtakingly", "dazzlingly and utterly"};

const std::map<std::string, int, std::less<>>& intensifier_ranks() {
    static const std::map<std::string, int, std::less<>> ranks = {
        {"quite", 1},          {"fairly", 1},          {"rather", 1},      {"very", 2},
        {"really", 2},         {"truly", 2},           {"incredibly", 3},  {"extremely", 3},
        {"completely", 3},     {"utterly", 3},         {"deeply", 3},      {"absolutely", 3},
        {"excruciatingly", 4}, {"breathtakingly", 4},  {"soul-crushingly", 5}, {"dazzlingly", 5},
    };
    return ranks;
}

struct LexiconEntry {
    Polarity polarity;
    std::string_view antonym;
};

const std::map<std::string, LexiconEntry, std::less<>>& lexicon() {
    static const auto table = [] {
        std::map<std::string, LexiconEntry, std::less<>> t;
        for (const auto& p : antonyms) {
            t.emplace(std::string(p.positive), LexiconEntry{Polarity::positive, p.negative});
            t.emplace(std::string(p.negative), LexiconEntry{Polarity::negative, p.positive});
        }
        return t;
    }();
    return table;
}

struct Token {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::string lower;
};

std::vector<Token> tokenize(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    auto is_word = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '-' || c == '\''; };
    while (i < s.size()) {
        if (!is_word(s[i])) {
            ++i;
            continue;
        }
        Token t;
        t.begin = i;
        while (i < s.size() && is_word(s[i])) {
            t.lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[i]))));
            ++i;
        }
        t.end = i;
        out.push_back(std::move(t));
    }
    return out;
}

int rank_of(std::string_view word) {
    const auto& ranks = intensifier_ranks();
    auto it = ranks.find(word);
    return it == ranks.end() ? 0 : it->second;
}

// Last lexicon adjective and the run of intensifiers directly before it.
struct Analysis {
    std::size_t modifier_begin = 0;
    std::size_t adjective_begin = 0;
    std::size_t adjective_end = 0;
    std::string adjective;
    LexiconEntry entry{Polarity::positive, ""};
    int level = 0;
};

std::optional<Analysis> analyze(std::string_view sentence) {
    const auto tokens = tokenize(sentence);
    const auto& lex = lexicon();
    for (std::size_t k = tokens.size(); k-- > 0;) {
        auto it = lex.find(tokens[k].lower);
        if (it == lex.end()) continue;
        Analysis a;
        a.adjective_begin = tokens[k].begin;
        a.adjective_end = tokens[k].end;
        a.adjective = tokens[k].lower;
        a.entry = it->second;
        a.modifier_begin = a.adjective_begin;
        std::size_t j = k;
        while (j > 0 && (rank_of(tokens[j - 1].lower) > 0 || tokens[j - 1].lower == "and")) {
            --j;
            a.level = std::max(a.level, rank_of(tokens[j].lower));
        }
        while (j < k && tokens[j].lower == "and") ++j;
        if (j < k) a.modifier_begin = tokens[j].begin;
        return a;
    }
    return std::nullopt;
}

std::string rebuild(std::string_view sentence, const Analysis& a, Polarity polarity, std::string_view adjective,
                    int level) {
    const Ladder& ladder = polarity == Polarity::positive ? positive_ladder : negative_ladder;
    std::string word(adjective);
    if (std::isupper(static_cast<unsigned char>(sentence[a.adjective_begin])) && !word.empty())
        word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
    std::string out(sentence.substr(0, a.modifier_begin));
    const auto phrase = ladder[static_cast<std::size_t>(std::clamp(level, 0, max_level))];
    if (!phrase.empty()) {
        std::string p(phrase);
        if (a.modifier_begin == 0) p[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(p[0])));
        out += p + " ";
        if (a.modifier_begin == 0) word[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(word[0])));
    }
    out += word;
    out += sentence.substr(a.adjective_end);
    return out;
}

} // namespace

int intensity(std::string_view sentence) {
    int best = 0;
    for (const auto& t : tokenize(sentence)) best = std::max(best, rank_of(t.lower));
    return best;
}

std::optional<std::string> reverse_with_lexicon(std::string_view sentence, int level) {
    auto a = analyze(sentence);
    if (!a) return std::nullopt;
    return rebuild(sentence, *a, opposite(a->entry.polarity), a->entry.antonym, level);
}

std::optional<std::string> intensify_with_lexicon(std::string_view sentence, int steps) {
    auto a = analyze(sentence);
    if (!a) return std::nullopt;
    return rebuild(sentence, *a, a->entry.polarity, a->adjective, std::min(a->level + steps, max_level));
}

std::optional<Polarity> lexicon_polarity(std::string_view sentence) {
    auto a = analyze(sentence);
    if (!a) return std::nullopt;
    return a->entry.polarity;
}

std::optional<std::string> emotive_phrase(std::string_view sentence) {
    auto a = analyze(sentence);
    if (!a) return std::nullopt;
    return std::string(sentence.substr(a->modifier_begin, a->adjective_end - a->modifier_begin));
}

std::vector<SentimentSample> lexicon_dataset(std::size_t count) {
    std::vector<SentimentSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t k = (i / 2) % antonyms.size();
        if (i % 2 == 0) {
            out.push_back({"This " + std::string(nouns[k]) + " is " + std::string(antonyms[k].positive) + ".",
                           Polarity::positive});
        } else {
            const auto noun = nouns[(k + 7) % nouns.size()];
            out.push_back({"The " + std::string(noun) + " was " + std::string(antonyms[k].negative) + ".",
                           Polarity::negative});
        }
    }
    return out;
}

std::string reverse_prompt(const SentimentSample& sample) {
    return "Rewrite the following sentence by reversing its sentiment (" + std::string(polarity_name(sample.sentiment)) +
           " to " + std::string(polarity_name(opposite(sample.sentiment))) + "): " + sample.sentence;
}

std::string intensify_prompt(std::string_view prior_output) {
    return std::string(intensify_instruction) + ": " + std::string(prior_output);
}

std::string judge_prompt(std::string_view first, std::string_view second) {
    return "Which of the following two sentences expresses the more intense emotion? Answer \"A is better\", "
           "\"B is better\" or \"Tie\", followed by \"because\" and your reason.\nA: " +
           std::string(first) + "\nB: " + std::string(second);
}

TemplateSet templates() {
    TemplateSet t = TemplateSet::transcript();
    t.name = "sentiment";
    t.forward_header = PromptTemplate("forward_header", "{question}\nHere {count_phrase} for your reference:\n{referenced_outputs}");
    t.answer_block = PromptTemplate("answer_block", "Your previous sentence: {answer}");
    t.right_prompt = PromptTemplate("right_prompt", "Keep this sentence as it is.");
    t.wrong_prompt = PromptTemplate("wrong_prompt", std::string(intensify_instruction) + ".");
    return t;
}

ReversalSystem::ReversalSystem(std::variant<Session, Network> impl, TemplateSet wording, ForwardOptions options)
    : impl_(std::move(impl)), templates_(std::move(wording)), options_(std::move(options)) {
    if (auto* n = std::get_if<Network>(&impl_))
        initial_marks_ = n->marks();
    else
        initial_marks_ = {std::get<Session>(impl_).transcript().size()};
}

ReversalSystem ReversalSystem::single(Session session) {
    return ReversalSystem(std::move(session), templates(), {});
}

ReversalSystem ReversalSystem::network(Network network, TemplateSet wording, ForwardOptions options) {
    return ReversalSystem(std::move(network), std::move(wording), std::move(options));
}

void ReversalSystem::reset() {
    if (auto* n = std::get_if<Network>(&impl_))
        n->rollback(initial_marks_);
    else
        std::get<Session>(impl_).transcript().truncate(initial_marks_.front());
    last_output_.reset();
    last_forward_.reset();
}

std::string ReversalSystem::reverse(const SentimentSample& sample, Journal& journal) {
    require(!sample.sentence.empty(), "sentiment sample needs a sentence");
    const std::string prompt = reverse_prompt(sample);
    if (auto* n = std::get_if<Network>(&impl_)) {
        ForwardOptions fwd = options_;
        fwd.eval_mode = true;
        Rng unused(0);
        auto result = forward_pass(*n, prompt, unused, templates_, journal, fwd);
        last_output_ = result.final_output;
        last_forward_ = std::move(result);
    } else {
        auto& s = std::get<Session>(impl_);
        const std::string reply = s.ask(prompt);
        journal.record(s.id(), "reverse", prompt, reply);
        last_output_ = reply;
    }
    return *last_output_;
}

std::string ReversalSystem::intensify(Journal& journal) {
    if (!last_output_) fail(Errc::precondition, "intensify needs a prior reverse_sentiment on the same system");
    const std::string prior = *last_output_;
    const std::string prompt = intensify_prompt(prior);
    const TemplateSet& t = templates_;
    if (auto* n = std::get_if<Network>(&impl_)) {
        NodeJudge revise_all = [](NodeRef node, std::string_view) {
            CorrectnessJudgment j;
            j.node = node;
            j.reason = JudgeReason::mismatched;
            return j;
        };
        FeedbackOptions fb;
        fb.concurrent = options_.concurrent;
        backward_pass(*n, prior, *last_forward_, revise_all, t, journal, fb);
        ForwardOptions fwd = options_;
        fwd.eval_mode = true;
        Rng unused(0);
        auto result = forward_pass(*n, prompt, unused, t, journal, fwd);
        last_output_ = result.final_output;
        last_forward_ = std::move(result);
    } else {
        auto& s = std::get<Session>(impl_);
        const std::string reply = s.ask(prompt);
        journal.record(s.id(), "refine", prompt, reply);
        last_output_ = reply;
    }
    return *last_output_;
}

std::string reverse_sentiment(ReversalSystem& system, const SentimentSample& sample, Journal& journal) {
    return system.reverse(sample, journal);
}

std::string intensify(ReversalSystem& system, Journal& journal) {
    return system.intensify(journal);
}

std::string_view winner_name(Winner w) {
    switch (w) {
    case Winner::a: return "a";
    case Winner::b: return "b";
    case Winner::tie: return "tie";
    }
    return "tie";
}

Winner parse_winner(std::string_view name) {
    if (name == "a") return Winner::a;
    if (name == "b") return Winner::b;
    if (name == "tie") return Winner::tie;
    fail(Errc::io_error, "unknown verdict '" + std::string(name) + "'");
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

} // namespace

JudgeVerdict parse_verdict(std::string_view reply, bool a_first) {
    static const std::regex slot_re(R"(\b(?:sentence\s+)?([ab])\s+is\s+(?:better|more\s+intense|stronger)\b)",
                                    std::regex::icase);
    static const std::regex tie_re(R"(\b(?:tie|draw)\b|\bequally\s+intense\b)", std::regex::icase);
    static const std::regex because_re(R"(\bbecause\b)", std::regex::icase);

    JudgeVerdict v;
    v.a_first = a_first;
    v.reply = std::string(reply);
    const std::string text(reply);

    // Whichever statement comes first decides the verdict.
    std::smatch slot, tie;
    const bool has_slot = std::regex_search(text, slot, slot_re);
    const bool has_tie = std::regex_search(text, tie, tie_re);
    if (has_slot && (!has_tie || slot.position(0) < tie.position(0))) {
        const bool slot_a = std::tolower(static_cast<unsigned char>(slot[1].str()[0])) == 'a';
        v.winner = slot_a == a_first ? Winner::a : Winner::b;
    } else if (has_tie) {
        v.winner = Winner::tie;
    } else {
        v.winner = Winner::tie;
        v.rationale = "unparseable";
        return v;
    }
    std::smatch because;
    if (std::regex_search(text, because, because_re))
        v.rationale = trim(text.substr(static_cast<std::size_t>(because.position(0) + because.length(0))));
    if (v.rationale.empty()) v.rationale = trim(text);
    return v;
}

JudgeVerdict judge_pair(ChatBackend& judge, std::string_view sentence_a, std::string_view sentence_b, Rng& rng,
                        Journal* journal, std::string_view session) {
    require(!sentence_a.empty() && !sentence_b.empty(), "judge needs two non-empty sentences");
    const bool a_first = rng.bernoulli(0.5);
    const std::string prompt =
        a_first ? judge_prompt(sentence_a, sentence_b) : judge_prompt(sentence_b, sentence_a);
    Transcript t{std::string(session)};
    t.append(Role::user, prompt);
    const std::string reply = judge.send(t);
    if (journal) journal->record(std::string(session), "judge", prompt, reply);
    return parse_verdict(reply, a_first);
}

Tally tally(std::span<const JudgeVerdict> verdicts) {
    Tally t;
    for (const auto& v : verdicts) {
        switch (v.winner) {
        case Winner::a: ++t.win; break;
        case Winner::b: ++t.loss; break;
        case Winner::tie: ++t.tie; break;
        }
    }
    return t;
}

} // namespace chatnet::sentiment
