#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fedwcm/config.hpp"
#include "fedwcm/data.hpp"
#include "fedwcm/errors.hpp"
#include "fedwcm/federation.hpp"
#include "fedwcm/metrics.hpp"
#include "fedwcm/mlp.hpp"
#include "fedwcm/partition.hpp"
#include "fedwcm/rng.hpp"
#include "fedwcm/scoring.hpp"

namespace fedwcm {

inline constexpr std::size_t kHiddenWidths[] = {64, 32};

// Everything one trial shares across algorithms: the long-tailed training
// data, a balanced test set doubling as the concentration probe, and the
// client shards.
struct TrialData {
    Dataset train;
    Dataset test;
    std::vector<ClientShard> shards;
    std::uint64_t trial_seed = 0;
};

inline TrialData make_trial_data(const ExperimentConfig& cfg, std::size_t trial) {
    TrialData td;
    td.trial_seed = cfg.seed + trial;
    const Dataset balanced = synth_dataset(cfg.num_classes, cfg.per_class, cfg.dim,
                                           mix_seed({td.trial_seed, 0x64617461ULL}));
    const ClassDistribution tail =
        longtail_counts(class_distribution_of(balanced), cfg.imbalance);
    td.train = subset_by_counts(balanced, tail.counts);
    td.test = synth_dataset(cfg.num_classes, cfg.test_per_class, cfg.dim,
                            mix_seed({td.trial_seed, 0x74657374ULL}));
    PartitionSpec ps = cfg.partition;
    ps.seed = mix_seed({td.trial_seed, 0x70617274ULL});
    td.shards = partition(td.train, ps);
    return td;
}

struct TrainingResult {
    FederationState state;
    std::vector<RoundRecord> records;
};

// One full training run: R rounds of the chosen algorithm with per-round
// evaluation and concentration diagnostics.
inline TrainingResult run_training(const TrialData& td, RunConfig run) {
    run.seed = td.trial_seed;
    run.validate();
    MlpSpec spec;
    spec.input_dim = td.train.dim();
    spec.hidden.assign(std::begin(kHiddenWidths), std::end(kHiddenWidths));
    spec.num_classes = static_cast<std::size_t>(td.train.num_classes);

    const FederationContext ctx = make_context(td.train, td.shards, run);
    TrainingResult out;
    out.state = initial_state(init_mlp(spec, mix_seed({td.trial_seed, 0x6d6f64656cULL})));
    out.records.reserve(run.rounds);
    for (std::size_t r = 0; r < run.rounds; ++r) {
        const RoundTrace trace = run_round(out.state, ctx, run);
        const EvalResult eval = evaluate(out.state.model, td.test);
        const ConcentrationResult conc = neuron_concentration(out.state.model, td.test);
        RoundRecord rec;
        rec.round = trace.round;
        rec.test_accuracy = eval.accuracy;
        rec.per_class_accuracy = eval.per_class_recall;
        rec.min_class_recall = eval.min_recall;
        rec.alpha_used = trace.alpha_used;
        rec.mean_concentration = conc.mean;
        rec.concentration_per_layer = conc.per_layer;
        rec.weight_entropy = weight_entropy(trace.weights);
        out.records.push_back(std::move(rec));
    }
    return out;
}

struct RunResult {
    Algorithm algorithm = Algorithm::kFedWCM;
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    double final_accuracy = 0.0;
    double final_min_recall = 0.0;
    bool collapsed = false;
    std::vector<RoundRecord> records;
};

struct AlgorithmSummary {
    Algorithm algorithm = Algorithm::kFedWCM;
    std::vector<double> final_accuracies;  // successful trials only, trial order
    double mean_final_accuracy = 0.0;
    double std_final_accuracy = 0.0;
    double mean_min_recall = 0.0;
    std::size_t collapsed_trials = 0;
    std::size_t failed_trials = 0;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<RunResult> runs;  // algorithm-major, trial-minor order
    std::vector<AlgorithmSummary> summaries;
};

inline double collapse_threshold(int num_classes) {
    return 1.5 / static_cast<double>(num_classes);
}

namespace detail {

inline AlgorithmSummary summarize(Algorithm alg, std::span<const RunResult> runs) {
    AlgorithmSummary s;
    s.algorithm = alg;
    double recall_sum = 0.0;
    for (const auto& run : runs) {
        if (run.algorithm != alg) continue;
        if (run.failed) {
            s.failed_trials++;
            continue;
        }
        s.final_accuracies.push_back(run.final_accuracy);
        recall_sum += run.final_min_recall;
        if (run.collapsed) s.collapsed_trials++;
    }
    if (s.final_accuracies.empty()) return s;
    const auto n = static_cast<double>(s.final_accuracies.size());
    for (double a : s.final_accuracies) s.mean_final_accuracy += a;
    s.mean_final_accuracy /= n;
    for (double a : s.final_accuracies) {
        const double d = a - s.mean_final_accuracy;
        s.std_final_accuracy += d * d;
    }
    s.std_final_accuracy = std::sqrt(s.std_final_accuracy / n);
    s.mean_min_recall = recall_sum / n;
    return s;
}

}  // namespace detail

inline nlohmann::json summary_json(const ExperimentReport& report) {
    const auto& cfg = report.config;
    nlohmann::json algs = nlohmann::json::array();
    for (const auto& s : report.summaries) {
        nlohmann::json trials = nlohmann::json::array();
        for (const auto& run : report.runs) {
            if (run.algorithm != s.algorithm) continue;
            nlohmann::json t{{"trial", run.trial}, {"seed", run.seed}, {"failed", run.failed}};
            if (run.failed) {
                t["error"] = run.error;
            } else {
                t["final_accuracy"] = run.final_accuracy;
                t["final_min_recall"] = run.final_min_recall;
                t["collapsed"] = run.collapsed;
            }
            trials.push_back(std::move(t));
        }
        algs.push_back({{"name", algorithm_name(s.algorithm)},
                        {"mean_final_accuracy", s.mean_final_accuracy},
                        {"std_final_accuracy", s.std_final_accuracy},
                        {"mean_min_recall", s.mean_min_recall},
                        {"collapsed_trials", s.collapsed_trials},
                        {"failed_trials", s.failed_trials},
                        {"trials", std::move(trials)}});
    }
    return nlohmann::json{{"classes", cfg.num_classes},
                          {"imbalance", cfg.imbalance},
                          {"beta", cfg.partition.beta},
                          {"clients", cfg.partition.num_clients},
                          {"rounds", cfg.run.rounds},
                          {"trials", cfg.trials},
                          {"seed", cfg.seed},
                          {"collapse_threshold", collapse_threshold(cfg.num_classes)},
                          {"algorithms", std::move(algs)}};
}

// Runs every algorithm x trial combination. A failing run is recorded and the
// remaining runs continue. Artifacts land under cfg.out_dir when write_files
// is set: the resolved config, one CSV per run, and summary.json.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, bool write_files = true,
                                       std::size_t threads = 1) {
    cfg.validate();
    ExperimentReport report;
    report.config = cfg;
    report.runs.resize(cfg.algorithms.size() * cfg.trials);

    const std::filesystem::path out_dir(cfg.out_dir);
    if (write_files) {
        std::filesystem::create_directories(out_dir);
        std::ofstream cfg_out(out_dir / "config.txt");
        if (!cfg_out) throw IoError("run_experiment: cannot write " + cfg.out_dir);
        cfg_out << echo_config(cfg);
    }

    // Trial data is deterministic per trial and shared by all algorithms.
    std::vector<TrialData> trial_data;
    trial_data.reserve(cfg.trials);
    for (std::size_t t = 0; t < cfg.trials; ++t) trial_data.push_back(make_trial_data(cfg, t));

    const auto run_one = [&](std::size_t flat) {
        const std::size_t a = flat / cfg.trials;
        const std::size_t t = flat % cfg.trials;
        RunResult& rr = report.runs[flat];
        rr.algorithm = cfg.algorithms[a];
        rr.trial = t;
        rr.seed = trial_data[t].trial_seed;
        try {
            RunConfig run = cfg.run;
            run.algorithm = rr.algorithm;
            TrainingResult result = run_training(trial_data[t], run);
            rr.records = std::move(result.records);
            const RoundRecord& last = rr.records.back();
            rr.final_accuracy = last.test_accuracy;
            rr.final_min_recall = last.min_class_recall;
            rr.collapsed = rr.final_accuracy < collapse_threshold(cfg.num_classes);
        } catch (const std::exception& e) {
            rr.failed = true;
            rr.error = e.what();
        }
    };

    if (threads <= 1) {
        for (std::size_t flat = 0; flat < report.runs.size(); ++flat) run_one(flat);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        const std::size_t workers = std::min(threads, report.runs.size());
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                while (true) {
                    const std::size_t flat = next.fetch_add(1);
                    if (flat >= report.runs.size()) return;
                    run_one(flat);
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    for (Algorithm alg : cfg.algorithms) {
        report.summaries.push_back(detail::summarize(alg, report.runs));
    }

    if (write_files) {
        for (const auto& run : report.runs) {
            if (run.failed) continue;
            const std::string name = std::string(algorithm_name(run.algorithm)) + "_trial" +
                                     std::to_string(run.trial) + ".csv";
            emit_csv(run.records, static_cast<std::size_t>(cfg.num_classes),
                     std::size(kHiddenWidths), out_dir / name);
        }
        std::ofstream sum_out(out_dir / "summary.json");
        if (!sum_out) throw IoError("run_experiment: cannot write summary.json");
        sum_out << summary_json(report).dump(2) << '\n';
    }
    return report;
}

}  // namespace fedwcm
