// chatnet command-line entry point.

#include "chatnet/config.hpp"
#include "chatnet/dmc.hpp"
#include "chatnet/error.hpp"
#include "chatnet/experiment.hpp"
#include "chatnet/sentiment.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace chatnet;

namespace {

struct RunOptions {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<int> repeats;
    std::optional<std::string> output_dir;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
    cmd->add_option("-c,--config", o.config, "Run configuration file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--set", o.sets, "Override a config key, e.g. --set schedule.patience=2")->take_all();
    cmd->add_option("--seed", o.seed, "Master seed");
    cmd->add_option("--repeats", o.repeats, "Number of seeded repeats");
    cmd->add_option("-o,--output-dir", o.output_dir, "Directory for run outputs");
}

RunConfig load(const RunOptions& o) {
    std::vector<std::string> overrides = o.sets;
    if (o.seed) overrides.push_back("seed=" + std::to_string(*o.seed));
    if (o.repeats) overrides.push_back("repeats=" + std::to_string(*o.repeats));
    if (o.output_dir) overrides.push_back("output_dir=" + toml::format_value({*o.output_dir}));
    return load_config(o.config, overrides);
}

fs::path resolve_dataset(const std::string& configured, const std::string& config_file) {
    fs::path p(configured);
    if (p.is_relative() && !fs::exists(p)) {
        const fs::path beside = fs::path(config_file).parent_path() / p;
        if (fs::exists(beside)) return beside;
    }
    return p;
}

int gen_dmc(std::size_t count, int dims, int low, int high, std::uint64_t seed, int max_gap, const std::string& out) {
    const auto data = dmc::generate_dataset(count, dims, {low, high}, seed,
                                            max_gap > 0 ? std::optional<int>(max_gap) : std::nullopt);
    if (out.empty() || out == "-") {
        dmc::write_dataset(std::cout, data);
        return exit_code::ok;
    }
    std::ofstream f(out);
    if (!f) fail(Errc::io_error, "cannot write " + out);
    dmc::write_dataset(f, data);
    return exit_code::ok;
}

// Sentences from the lexicon, or from the configured default backend.
int gen_sentiment(std::size_t count, const std::string& config_file, const std::string& out) {
    std::vector<sentiment::SentimentSample> samples;
    if (config_file.empty()) {
        samples = sentiment::lexicon_dataset(count);
    } else {
        const RunConfig cfg = load_config(config_file);
        for (std::size_t i = 0; i < count; ++i) {
            const auto polarity = i % 2 == 0 ? sentiment::Polarity::positive : sentiment::Polarity::negative;
            const std::string id = "generator/" + std::to_string(i + 1);
            Session session(id, make_backend(cfg.resolve(cfg.backend_for(std::string_view("default")), id, cfg.seed)));
            std::string reply = session.ask("Write one short, emotionally biased sentence with a clearly " +
                                            std::string(sentiment::polarity_name(polarity)) +
                                            " sentiment. Reply with the sentence only.");
            reply = reply.substr(0, reply.find('\n'));
            samples.push_back({reply, polarity});
        }
    }
    if (out.empty() || out == "-") {
        sentiment::write_dataset(std::cout, samples);
        return exit_code::ok;
    }
    std::ofstream f(out);
    if (!f) fail(Errc::io_error, "cannot write " + out);
    sentiment::write_dataset(f, samples);
    return exit_code::ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"chatnet: layered networks of dialogue models with language feedback"};
    app.require_subcommand(1);
    CommandIO io{std::cout, std::cerr};

    RunOptions dmc_opts;
    auto* run_dmc = app.add_subcommand("run-dmc", "Train and evaluate on digital mode classification");
    add_run_options(run_dmc, dmc_opts);

    RunOptions sent_opts;
    std::string dataset;
    auto* run_sent = app.add_subcommand("run-sentiment", "Run the sentiment reversal protocol");
    add_run_options(run_sent, sent_opts);
    run_sent->add_option("--dataset", dataset, "Sentence file (overrides sentiment.dataset)");

    auto* gen = app.add_subcommand("gen-data", "Generate a dataset");
    gen->require_subcommand(1);
    std::size_t dmc_count = 30;
    int dims = 3, low = 1, high = 99, max_gap = 0;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    auto* gen_dmc_cmd = gen->add_subcommand("dmc", "Integer vectors labelled by their argmax");
    gen_dmc_cmd->add_option("--count", dmc_count, "Number of vectors");
    gen_dmc_cmd->add_option("--dims", dims, "Vector length");
    gen_dmc_cmd->add_option("--low", low, "Smallest component value");
    gen_dmc_cmd->add_option("--high", high, "Largest component value");
    gen_dmc_cmd->add_option("--seed", gen_seed, "Seed");
    gen_dmc_cmd->add_option("--max-gap", max_gap, "Largest allowed max-to-runner-up gap (0: any)");
    gen_dmc_cmd->add_option("-o,--out", gen_out, "Output file (default stdout)");
    std::size_t sent_count = 60;
    std::string gen_config;
    auto* gen_sent_cmd = gen->add_subcommand("sentiment", "Sentences with a polarity label");
    gen_sent_cmd->add_option("--count", sent_count, "Number of sentences");
    gen_sent_cmd->add_option("-c,--config", gen_config, "Generate with the config's default backend instead of the lexicon")
        ->check(CLI::ExistingFile);
    gen_sent_cmd->add_option("-o,--out", gen_out, "Output file (default stdout)");

    std::string replay_dir;
    auto* replay = app.add_subcommand("replay", "Re-execute a recorded run and check it byte for byte");
    replay->add_option("run_dir", replay_dir, "Run directory or record file")->required();

    std::vector<std::string> report_dirs;
    std::string report_out;
    auto* report = app.add_subcommand("report", "Summarise one or more runs");
    report->add_option("run_dirs", report_dirs, "Run directories (or parents of run-N directories)");
    report->add_option("-o,--out-dir", report_out, "Also write the tables here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_code::ok : exit_code::usage;
    }

    try {
        if (*run_dmc) return cmd_run_dmc(load(dmc_opts), io);
        if (*run_sent) {
            const RunConfig cfg = load(sent_opts);
            const fs::path path = dataset.empty() ? resolve_dataset(cfg.sentiment.dataset, sent_opts.config) : fs::path(dataset);
            return cmd_run_sentiment(cfg, path, io);
        }
        if (*gen_dmc_cmd) return gen_dmc(dmc_count, dims, low, high, gen_seed, max_gap, gen_out);
        if (*gen_sent_cmd) return gen_sentiment(sent_count, gen_config, gen_out);
        if (*replay) return cmd_replay(replay_dir, io);
        if (*report) {
            std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
            return cmd_report(dirs, report_out.empty() ? std::nullopt : std::optional<fs::path>(report_out), io);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code::failure;
    }
    return exit_code::usage;
}
