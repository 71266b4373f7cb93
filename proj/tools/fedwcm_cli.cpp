#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedwcm/fedwcm.hpp"

namespace {

struct CommonFlags {
    long long seed = -1;  // -1 keeps the config's seed
    std::string out;
    std::size_t threads = 1;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--seed", flags.seed, "Override the config's base seed");
    cmd->add_option("--out", flags.out, "Override the config's output directory");
    cmd->add_option("--threads", flags.threads, "Worker threads for independent runs")
        ->check(CLI::Range(std::size_t{1}, std::size_t{64}));
}

fedwcm::ExperimentConfig load_with_overrides(const std::string& path,
                                             const CommonFlags& flags) {
    fedwcm::ExperimentConfig cfg = fedwcm::load_config(path);
    if (flags.seed >= 0) cfg.seed = static_cast<std::uint64_t>(flags.seed);
    if (!flags.out.empty()) cfg.out_dir = flags.out;
    return cfg;
}

int cmd_run(const std::string& config_path, const CommonFlags& flags, bool verbose) {
    const fedwcm::ExperimentConfig cfg = load_with_overrides(config_path, flags);
    const fedwcm::ExperimentReport report =
        fedwcm::run_experiment(cfg, /*write_files=*/true, flags.threads);
    for (const auto& s : report.summaries) {
        std::printf("%-9s mean_final_acc=%.4f std=%.4f mean_min_recall=%.4f",
                    fedwcm::algorithm_name(s.algorithm), s.mean_final_accuracy,
                    s.std_final_accuracy, s.mean_min_recall);
        if (s.collapsed_trials > 0) std::printf(" collapsed=%zu", s.collapsed_trials);
        if (s.failed_trials > 0) std::printf(" failed=%zu", s.failed_trials);
        std::printf("\n");
    }
    if (verbose) {
        for (const auto& run : report.runs) {
            if (run.failed) {
                std::printf("%s trial %zu failed: %s\n",
                            fedwcm::algorithm_name(run.algorithm), run.trial,
                            run.error.c_str());
            }
        }
    }
    std::printf("artifacts: %s\n", cfg.out_dir.c_str());
    bool any_failed = false;
    for (const auto& run : report.runs) any_failed |= run.failed;
    return any_failed ? 1 : 0;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& csv_out) {
    std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
    const fedwcm::ComparisonTable table = fedwcm::compare_dirs(paths);
    std::cout << fedwcm::format_comparison_text(table);
    if (!csv_out.empty()) {
        std::ofstream out(csv_out);
        if (!out) throw fedwcm::IoError("compare: cannot write " + csv_out);
        out << fedwcm::format_comparison_csv(table);
        std::printf("csv: %s\n", csv_out.c_str());
    }
    return 0;
}

int cmd_partition_stats(const std::string& config_path, const CommonFlags& flags) {
    const fedwcm::ExperimentConfig cfg = load_with_overrides(config_path, flags);
    const fedwcm::TrialData td = fedwcm::make_trial_data(cfg, 0);

    const fedwcm::ClassDistribution global = fedwcm::global_distribution(td.shards);
    const fedwcm::ClassDistribution target =
        fedwcm::ClassDistribution::uniform(global.num_classes());
    const fedwcm::ScoreTable scores = fedwcm::score_clients(td.shards, global, target);
    const double temperature = fedwcm::compute_temperature(global, target, cfg.run.t0);

    std::printf("samples=%zu classes=%d clients=%zu\n", td.train.size(), cfg.num_classes,
                td.shards.size());
    std::printf("global counts:");
    for (long long c : global.counts) std::printf(" %lld", c);
    std::printf("\ntemperature=%.6g mean_score=%.6g\n", temperature, scores.mean_score);
    for (const auto& shard : td.shards) {
        std::printf("client %-3zu n=%-5zu score=%.6g\n", shard.client_id, shard.size(),
                    scores.scores[shard.client_id]);
    }
    if (!flags.out.empty()) {
        std::filesystem::create_directories(flags.out);
        const auto csv_path = std::filesystem::path(flags.out) / "partition.csv";
        std::ofstream out(csv_path);
        if (!out) throw fedwcm::IoError("partition-stats: cannot write " + csv_path.string());
        fedwcm::write_partition_csv(out, td.shards);
        std::printf("csv: %s\n", csv_path.c_str());
    }
    return 0;
}

int cmd_he_demo(const std::string& config_path, const CommonFlags& flags,
                std::size_t key_bits) {
    const fedwcm::ExperimentConfig cfg = load_with_overrides(config_path, flags);
    const fedwcm::TrialData td = fedwcm::make_trial_data(cfg, 0);

    const fedwcm::ProtocolResult result =
        fedwcm::run_protocol(td.shards, key_bits, cfg.seed);
    const fedwcm::ClassDistribution plain = fedwcm::global_distribution(td.shards);

    bool exact = result.distribution.counts == plain.counts;
    std::printf("decrypted counts:");
    for (long long c : result.distribution.counts) std::printf(" %lld", c);
    std::printf("\nmatches plaintext aggregation: %s\n", exact ? "yes" : "NO");
    std::cout << result.report.to_json() << '\n';
    if (!flags.out.empty()) {
        std::filesystem::create_directories(flags.out);
        const auto path = std::filesystem::path(flags.out) / "he_report.json";
        std::ofstream out(path);
        if (!out) throw fedwcm::IoError("he-demo: cannot write " + path.string());
        out << result.report.to_json() << '\n';
        std::printf("report: %s\n", path.c_str());
    }
    return exact ? 0 : 1;
}

void print_error_json(const std::string& kind, const std::string& message) {
    nlohmann::json err{{"error", kind}, {"message", message}};
    std::cerr << err.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated learning simulator with weighted adaptive momentum"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string config_path;
    bool verbose = false;

    CLI::App* run = app.add_subcommand("run", "Run the experiment described by a config file");
    run->add_option("config", config_path, "Experiment config file")->required();
    run->add_flag("--verbose", verbose, "Print per-run failure details");
    add_common(run, flags);

    std::vector<std::string> compare_dirs;
    std::string compare_csv;
    CLI::App* compare = app.add_subcommand("compare", "Tabulate finished run directories");
    compare->add_option("dirs", compare_dirs, "Run directories (each with summary.json)")
        ->required()
        ->expected(-2);
    compare->add_option("--csv", compare_csv, "Also write the table as CSV");

    CLI::App* pstats =
        app.add_subcommand("partition-stats", "Show client shard sizes and scores");
    pstats->add_option("config", config_path, "Experiment config file")->required();
    add_common(pstats, flags);

    std::size_t key_bits = 512;
    CLI::App* hedemo =
        app.add_subcommand("he-demo", "Run the encrypted distribution-gathering protocol");
    hedemo->add_option("config", config_path, "Experiment config file")->required();
    hedemo->add_option("--key-bits", key_bits, "Modulus size in bits")
        ->check(CLI::Range(std::size_t{128}, std::size_t{4096}));
    add_common(hedemo, flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, flags, verbose);
        if (compare->parsed()) return cmd_compare(compare_dirs, compare_csv);
        if (pstats->parsed()) return cmd_partition_stats(config_path, flags);
        if (hedemo->parsed()) return cmd_he_demo(config_path, flags, key_bits);
    } catch (const fedwcm::ConfigError& e) {
        print_error_json("config", e.what());
        return 2;
    } catch (const fedwcm::IoError& e) {
        print_error_json("io", e.what());
        return 3;
    } catch (const fedwcm::Error& e) {
        print_error_json("runtime", e.what());
        return 4;
    } catch (const std::exception& e) {
        print_error_json("internal", e.what());
        return 5;
    }
    return 0;
}
