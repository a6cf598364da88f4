#include "chatnet/dmc.hpp"

#include "chatnet/error.hpp"
#include "chatnet/rng.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <map>
#include <ostream>
#include <regex>
#include <sstream>

namespace chatnet::dmc {

int oracle_label(std::span<const int> components) {
    require(components.size() >= 2, "a vector needs at least two components");
    std::size_t best = 0;
    bool shared = false;
    for (std::size_t i = 1; i < components.size(); ++i) {
        if (components[i] > components[best]) {
            best = i;
            shared = false;
        } else if (components[i] == components[best]) {
            shared = true;
        }
    }
    if (shared) fail(Errc::ambiguous_max, "maximum of (" + format_components(components) + ") is not unique");
    return static_cast<int>(best) + 1;
}

std::vector<DigitalVector> generate_dataset(std::size_t count, int dims, ValueRange range, std::uint64_t seed,
                                            std::optional<int> max_gap) {
    require(count >= 1, "dataset count must be >= 1");
    require(dims >= 2, "vectors need at least two dimensions");
    if (range.high <= range.low)
        fail(Errc::range_too_narrow, "range [" + std::to_string(range.low) + ", " + std::to_string(range.high) +
                                         "] admits no unique maximum");
    if (max_gap && *max_gap < 1) fail(Errc::range_too_narrow, "max gap must be >= 1");

    std::vector<int> labels(count);
    for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(dims)) + 1;
    Rng label_rng(derive_seed(seed, "dmc/labels"));
    for (std::size_t i = count; i > 1; --i) std::swap(labels[i - 1], labels[label_rng.below(i)]);

    Rng rng(derive_seed(seed, "dmc/vectors"));
    std::vector<DigitalVector> out;
    out.reserve(count);
    constexpr int max_attempts = 1'000'000;
    for (int label : labels) {
        DigitalVector v;
        v.components.resize(static_cast<std::size_t>(dims));
        bool done = false;
        for (int attempt = 0; attempt < max_attempts && !done; ++attempt) {
            for (int& c : v.components) c = rng.between(range.low, range.high);
            auto sorted = v.components;
            std::sort(sorted.begin(), sorted.end(), std::greater<>());
            const int gap = sorted[0] - sorted[1];
            if (gap == 0 || (max_gap && gap > *max_gap)) continue;
            // Moving the maximum to the target slot keeps the draw uniform
            // over vectors whose argmax is that slot.
            auto top = std::max_element(v.components.begin(), v.components.end());
            std::iter_swap(top, v.components.begin() + (label - 1));
            done = true;
        }
        if (!done) fail(Errc::range_too_narrow, "could not sample a vector satisfying the gap constraint");
        v.label = label;
        out.push_back(std::move(v));
    }
    return out;
}

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

int word_value(const std::string& w) {
    static const std::map<std::string, int, std::less<>> words = {
        {"first", 1},   {"second", 2},  {"third", 3}, {"fourth", 4}, {"fifth", 5},
        {"sixth", 6},   {"seventh", 7}, {"eighth", 8}, {"ninth", 9}, {"tenth", 10},
        {"one", 1},     {"two", 2},     {"three", 3}, {"four", 4},   {"five", 5},
        {"six", 6},     {"seven", 7},   {"eight", 8}, {"nine", 9},   {"ten", 10},
    };
    if (auto it = words.find(w); it != words.end()) return it->second;
    // "2nd", "3rd", "11th"
    std::size_t digits = 0;
    while (digits < w.size() && std::isdigit(static_cast<unsigned char>(w[digits]))) ++digits;
    if (digits == 0 || digits > 6) return 0;
    return std::stoi(w.substr(0, digits));
}

const std::regex& ordinal_category_re() {
    static const std::regex re(
        R"(\b(first|second|third|fourth|fifth|sixth|seventh|eighth|ninth|tenth|\d+(?:st|nd|rd|th))\s+(?:category|class)\b)");
    return re;
}

const std::regex& category_number_re() {
    static const std::regex re(
        R"(\b(?:category|class)\s*(?:#|no\.|number|:)?\s*(\d+|one|two|three|four|five|six|seven|eight|nine|ten)\b)");
    return re;
}

const std::regex& trailing_number_re() {
    static const std::regex re(R"((^|[^\d,\s])\s*(\d+)\s*[.!)]*\s*$)");
    return re;
}

} // namespace

std::optional<int> parse_category(std::string_view text, int dims) {
    const std::string s = lower(text);
    std::ptrdiff_t best_pos = -1;
    int best_value = 0;
    auto consider = [&](std::ptrdiff_t pos, int value) {
        if (value < 1 || value > dims) return;
        if (pos >= best_pos) {
            best_pos = pos;
            best_value = value;
        }
    };
    for (auto it = std::sregex_iterator(s.begin(), s.end(), ordinal_category_re()); it != std::sregex_iterator(); ++it)
        consider(it->position(0), word_value((*it)[1].str()));
    for (auto it = std::sregex_iterator(s.begin(), s.end(), category_number_re()); it != std::sregex_iterator(); ++it)
        consider(it->position(0), word_value((*it)[1].str()));
    std::smatch tail;
    if (std::regex_search(s, tail, trailing_number_re()) && tail[2].length() <= 6)
        consider(tail.position(2), std::stoi(tail[2].str()));
    if (best_pos < 0) return std::nullopt;
    return best_value;
}

std::vector<std::optional<int>> parse_batch(std::string_view text, std::size_t n, int dims) {
    require(n >= 1, "batch size must be >= 1");
    static const std::regex item_re(R"(^\s*[-*]?\s*(?:vector|item|no\.|#)?\s*(\d+)\s*[:.)\]-]\s*(.*)$)",
                                    std::regex::icase);
    std::vector<std::optional<int>> out(n);
    std::vector<std::string> lines;
    {
        std::istringstream in{std::string(text)};
        for (std::string line; std::getline(in, line);) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(std::move(line));
        }
    }
    bool enumerated = false;
    for (const auto& line : lines) {
        std::smatch m;
        if (!std::regex_match(line, m, item_re) || m[1].length() > 6) continue;
        enumerated = true;
        const auto idx = static_cast<std::size_t>(std::stoul(m[1].str()));
        if (idx < 1 || idx > n || out[idx - 1]) continue;
        out[idx - 1] = parse_category(m[2].str(), dims);
    }
    if (!enumerated) {
        std::size_t pos = 0;
        for (const auto& line : lines) {
            if (pos >= n) break;
            if (line.find_first_not_of(" \t") == std::string::npos) continue;
            out[pos++] = parse_category(line, dims);
        }
    }
    return out;
}

std::optional<int> majority_vote(std::span<const std::optional<int>> votes) {
    std::map<int, std::pair<std::size_t, std::size_t>> tally;  // value -> (count, first voter)
    for (std::size_t i = 0; i < votes.size(); ++i) {
        if (!votes[i]) continue;
        auto [it, inserted] = tally.try_emplace(*votes[i], 0, i);
        ++it->second.first;
    }
    std::optional<int> best;
    std::size_t best_count = 0, best_first = 0;
    for (const auto& [value, stats] : tally) {
        const auto [count, first] = stats;
        if (!best || count > best_count || (count == best_count && first < best_first)) {
            best = value;
            best_count = count;
            best_first = first;
        }
    }
    return best;
}

std::string format_components(std::span<const int> components) {
    std::string out;
    for (std::size_t i = 0; i < components.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(components[i]);
    }
    return out;
}

std::vector<std::vector<int>> find_vectors(std::string_view text) {
    static const std::regex re(R"(-?\d+(?:[ \t]*,[ \t]*-?\d+)+)");
    std::vector<std::vector<int>> out;
    const std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
        std::vector<int> v;
        std::istringstream in(it->str());
        for (std::string field; std::getline(in, field, ',');) {
            try {
                v.push_back(std::stoi(field));
            } catch (const std::logic_error&) {
                v.clear();
                break;
            }
        }
        if (v.size() >= 2) out.push_back(std::move(v));
    }
    return out;
}

std::string category_phrase(int category) {
    return "the " + ordinal_word(static_cast<std::size_t>(category)) + " category";
}

namespace {
constexpr std::string_view batch_preamble =
    "Classify each of the following vectors. Reply with one line per vector in the form "
    "\"<index>: category <N>\".";
}

std::string batch_question(std::span<const DigitalVector> vectors) {
    std::string out(batch_preamble);
    for (std::size_t i = 0; i < vectors.size(); ++i)
        out += "\n" + std::to_string(i + 1) + ": " + format_components(vectors[i].components);
    return out;
}

std::string batch_question(std::span<const TaskSample> samples) {
    std::string out(batch_preamble);
    for (std::size_t i = 0; i < samples.size(); ++i)
        out += "\n" + std::to_string(i + 1) + ": " + samples[i].question;
    return out;
}

std::string batch_reply(std::span<const std::optional<int>> labels) {
    std::string out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i]) continue;
        if (!out.empty()) out += "\n";
        out += std::to_string(i + 1) + ": category " + std::to_string(*labels[i]);
    }
    return out;
}

TaskSample to_sample(const DigitalVector& v) {
    return {format_components(v.components), std::to_string(v.label), category_phrase(v.label)};
}

std::vector<TaskSample> to_samples(std::span<const DigitalVector> vectors) {
    std::vector<TaskSample> out;
    out.reserve(vectors.size());
    for (const auto& v : vectors) out.push_back(to_sample(v));
    return out;
}

AnswerMatcher matcher(int dims) {
    AnswerMatcher m;
    m.extract = [dims](std::string_view text) -> std::optional<std::string> {
        if (auto c = parse_category(text, dims)) return std::to_string(*c);
        return std::nullopt;
    };
    m.extract_batch = [dims](std::string_view text, std::size_t n) {
        std::vector<std::optional<std::string>> out;
        for (const auto& c : parse_batch(text, n, dims))
            out.push_back(c ? std::optional<std::string>(std::to_string(*c)) : std::nullopt);
        return out;
    };
    m.batch_question = [](std::span<const TaskSample> samples) { return batch_question(samples); };
    return m;
}

void write_dataset(std::ostream& out, std::span<const DigitalVector> vectors) {
    for (const auto& v : vectors) {
        for (int c : v.components) out << c << ',';
        out << v.label << '\n';
    }
}

std::vector<DigitalVector> read_dataset(std::istream& in) {
    std::vector<DigitalVector> out;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#')
            continue;
        std::vector<int> fields;
        std::istringstream ls(line);
        try {
            for (std::string f; std::getline(ls, f, ',');) fields.push_back(std::stoi(f));
        } catch (const std::logic_error&) {
            fail(Errc::io_error, "dataset line " + std::to_string(line_no) + " is not a list of integers");
        }
        if (fields.size() < 3) fail(Errc::io_error, "dataset line " + std::to_string(line_no) + " is too short");
        DigitalVector v;
        v.label = fields.back();
        fields.pop_back();
        v.components = std::move(fields);
        if (oracle_label(v.components) != v.label)
            fail(Errc::io_error, "dataset line " + std::to_string(line_no) + " has a label that disagrees with argmax");
        out.push_back(std::move(v));
    }
    return out;
}

std::string_view baseline_name(BaselineKind kind) {
    switch (kind) {
    case BaselineKind::no_feedback: return "no_feedback";
    case BaselineKind::refine: return "refine";
    case BaselineKind::ensemble: return "ensemble";
    }
    return "no_feedback";
}

BaselineKind parse_baseline(std::string_view name) {
    if (name == "no_feedback") return BaselineKind::no_feedback;
    if (name == "refine") return BaselineKind::refine;
    if (name == "ensemble") return BaselineKind::ensemble;
    fail(Errc::config_error, "unknown baseline '" + std::string(name) + "'");
}

BaselineRun run_baseline(BaselineKind kind, std::span<const DigitalVector> train, std::span<const DigitalVector> test,
                         const SessionFactory& sessions, const TrainingSchedule& schedule, Journal& journal,
                         int dims) {
    require(!train.empty() && !test.empty(), "baseline needs training and test vectors");
    require(train.size() >= schedule.samples_needed(), "training stream too short for the schedule");

    const std::size_t member_count = kind == BaselineKind::ensemble ? 3 : 1;
    std::vector<Session> members;
    members.reserve(member_count);
    for (std::size_t k = 1; k <= member_count; ++k)
        members.push_back(sessions(std::string(baseline_name(kind)) + "/" + std::to_string(k)));

    const std::string test_prompt = batch_question(test);
    BaselineRun run;
    run.kind = kind;
    std::size_t consumed = 0;
    for (std::size_t stage = 1;; ++stage) {
        for (std::size_t i = 0; i < schedule.samples_per_stage; ++i) {
            const DigitalVector& v = train[consumed + i];
            const std::string prompt =
                "(" + format_components(v.components) + ") belongs to " + category_phrase(v.label) + ".";
            for (auto& member : members) {
                const std::string reply = member.ask(prompt);
                journal.record(member.id(), "train", prompt, reply);
                if (kind != BaselineKind::refine) continue;
                if (parse_category(reply, dims) == v.label) continue;
                const std::string refined = member.ask(std::string(refine_instruction));
                journal.record(member.id(), "refine", std::string(refine_instruction), refined);
                ++run.refine_turns;
            }
        }
        consumed += schedule.samples_per_stage;

        StageMetrics m;
        m.stage = stage;
        m.samples_consumed = consumed;
        std::vector<std::vector<std::optional<int>>> predictions;
        for (auto& member : members) {
            const std::size_t mark = member.transcript().size();
            const std::string reply = member.ask(test_prompt);
            member.transcript().truncate(mark);
            journal.record(member.id(), "eval", test_prompt, reply);
            predictions.push_back(parse_batch(reply, test.size(), dims));
        }
        auto score = [&](const std::vector<std::optional<int>>& p) {
            std::size_t hits = 0;
            for (std::size_t i = 0; i < test.size(); ++i)
                if (p[i] == test[i].label) ++hits;
            return static_cast<double>(hits) / static_cast<double>(test.size());
        };
        double sum = 0.0;
        for (std::size_t k = 0; k < members.size(); ++k) {
            const double acc = score(predictions[k]);
            m.per_node_accuracy[NodeRef{1, static_cast<int>(k) + 1}] = acc;
            sum += acc;
        }
        m.member_mean = sum / static_cast<double>(members.size());
        if (kind == BaselineKind::ensemble) {
            std::vector<std::optional<int>> voted(test.size());
            for (std::size_t i = 0; i < test.size(); ++i) {
                std::vector<std::optional<int>> ballot;
                for (const auto& p : predictions) ballot.push_back(p[i]);
                voted[i] = majority_vote(ballot);
            }
            m.accuracy = score(voted);
        } else {
            m.accuracy = m.per_node_accuracy.begin()->second;
        }
        m.timestamp = journal.tick();
        run.stages.push_back(std::move(m));
        if (early_stop_check(run.stages, schedule)) break;
    }
    run.complete = true;
    return run;
}

} // namespace chatnet::dmc
