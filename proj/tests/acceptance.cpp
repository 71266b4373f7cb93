#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fedwcm/fedwcm.hpp"

using namespace fedwcm;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int g_failed = 0;

std::string strf(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

void criterion(int id, const char* title, const std::function<Outcome()>& body) {
    const auto start = Clock::now();
    Outcome out;
    try {
        out = body();
    } catch (const std::exception& e) {
        out = {false, strf("unexpected exception: %s", e.what())};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    std::printf("[%d] %s %s: %s (%.1f s)\n", id, out.pass ? "PASS" : "FAIL", title,
                out.detail.c_str(), secs);
    std::fflush(stdout);
    if (!out.pass) ++g_failed;
}

std::size_t workers() {
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

const char* yn(bool b) { return b ? "yes" : "NO"; }

// ---- criterion 1 -----------------------------------------------------------

Tensor2 random_batch(std::size_t rows, std::size_t cols, RandomEngine& rng) {
    Tensor2 t(rows, cols);
    for (double& v : t.data()) v = rng.uniform(-1.0, 1.0);
    return t;
}

std::vector<int> random_labels(std::size_t n, std::size_t classes, RandomEngine& rng) {
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng.uniform_index(classes));
    return y;
}

double max_grad_relative_error(const MlpSpec& spec, std::uint64_t seed) {
    RandomEngine rng(seed);
    ModelParams model = init_mlp(spec, rng.next_u64());
    const std::size_t batch = 1 + rng.uniform_index(8);
    const Tensor2 bx = random_batch(batch, spec.input_dim, rng);
    const std::vector<int> by = random_labels(batch, spec.num_classes, rng);

    const Gradient analytic = loss_and_grad(model, bx, by).grad;

    constexpr double kStep = 1e-5;
    double worst = 0.0;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto probe = [&](Tensor2& param, const Tensor2& grad) {
            for (std::size_t i = 0; i < param.size(); ++i) {
                const double saved = param.data()[i];
                param.data()[i] = saved + kStep;
                const double up = loss_and_grad(model, bx, by).loss;
                param.data()[i] = saved - kStep;
                const double down = loss_and_grad(model, bx, by).loss;
                param.data()[i] = saved;
                const double numeric = (up - down) / (2.0 * kStep);
                const double denom = std::max({std::abs(numeric), std::abs(grad.data()[i]), 1e-8});
                worst = std::max(worst, std::abs(numeric - grad.data()[i]) / denom);
            }
        };
        probe(model.layers[l].weight, analytic.layers[l].weight);
        probe(model.layers[l].bias, analytic.layers[l].bias);
    }
    return worst;
}

Outcome check_gradients() {
    const std::vector<MlpSpec> specs{
        {2, {}, 2}, {3, {5}, 3}, {4, {8, 4}, 3}, {6, {10}, 5}, {2, {4, 4}, 2}};
    int instances = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        for (std::uint64_t rep = 1; rep <= 4; ++rep) {
            worst = std::max(worst, max_grad_relative_error(specs[i], 1000 * (i + 1) + rep));
            ++instances;
        }
    }
    return {instances >= 20 && worst < 1e-4,
            strf("%d instances, max relative error %.2e (budget 1e-4)", instances, worst)};
}

// ---- criterion 2 -----------------------------------------------------------

struct Toy {
    Dataset data;
    std::vector<ClientShard> shards;
};

Toy make_skew_toy() {
    Toy toy;
    toy.data = synth_dataset(3, 8, 2, 21);
    toy.shards.resize(3);
    toy.shards[0] = ClientShard{0, {0, 1, 2, 3, 4, 5}, {6, 0, 0}};
    toy.shards[1] = ClientShard{1, {8, 9, 10, 11, 12, 13}, {0, 6, 0}};
    toy.shards[2] = ClientShard{2, {6, 7, 16, 17, 18, 19}, {2, 0, 4}};
    return toy;
}

Toy make_even_toy() {
    Toy toy;
    toy.data = synth_dataset(2, 6, 2, 31);
    toy.shards.resize(3);
    for (std::size_t k = 0; k < 3; ++k) {
        toy.shards[k] = ClientShard{k, {2 * k, 2 * k + 1, 6 + 2 * k, 7 + 2 * k}, {2, 2}};
    }
    return toy;
}

RunConfig toy_config(Algorithm alg) {
    RunConfig cfg;
    cfg.algorithm = alg;
    cfg.eta_l = 0.1;
    cfg.eta_g = 1.0;
    cfg.rounds = 2;
    cfg.local_epochs = 2;
    cfg.batch_size = 4;
    cfg.sample_rate = 0.5;
    cfg.seed = 77;
    return cfg;
}

Outcome check_degenerations() {
    const Toy skew = make_skew_toy();
    RunConfig forced = toy_config(Algorithm::kFedWCM);
    forced.force_uniform_weights = true;
    forced.forced_alpha = 0.1;
    RunConfig fixed = toy_config(Algorithm::kFedCM);
    fixed.fixed_alpha = 0.1;
    const FederationContext ctx_forced = make_context(skew.data, skew.shards, forced);
    const FederationContext ctx_fixed = make_context(skew.data, skew.shards, fixed);
    const ModelParams skew_model = init_mlp(MlpSpec{2, {4}, 3}, 5);
    FederationState fa = initial_state(skew_model);
    FederationState fb = initial_state(skew_model);
    bool ablated_exact = true;
    for (int round = 0; round < 2; ++round) {
        run_round(fa, ctx_forced, forced);
        run_round(fb, ctx_fixed, fixed);
        ablated_exact = ablated_exact && fa.model == fb.model && fa.momentum == fb.momentum;
    }

    const Toy even = make_even_toy();
    RunConfig wide = toy_config(Algorithm::kFedWCMX);
    wide.batch_size = 2;
    wide.sample_rate = 1.0;
    RunConfig base = wide;
    base.algorithm = Algorithm::kFedWCM;
    const FederationContext ctx_wide = make_context(even.data, even.shards, wide);
    const FederationContext ctx_base = make_context(even.data, even.shards, base);
    const ModelParams even_model = init_mlp(MlpSpec{2, {4}, 2}, 5);
    FederationState xa = initial_state(even_model);
    FederationState xb = initial_state(even_model);
    bool volume_exact = true;
    for (int round = 0; round < 2; ++round) {
        const RoundTrace ta = run_round(xa, ctx_wide, wide);
        const RoundTrace tb = run_round(xb, ctx_base, base);
        volume_exact = volume_exact && ta.weights == tb.weights && xa.model == xb.model &&
                       xa.momentum == xb.momentum;
    }

    RunConfig avg_cfg = toy_config(Algorithm::kFedCM);
    avg_cfg.fixed_alpha = 1.0;
    avg_cfg.batch_size = 2;
    avg_cfg.local_epochs = 3;
    avg_cfg.sample_rate = 1.0;
    avg_cfg.seed = 13;
    const long long B = batch_steps(4, avg_cfg);
    avg_cfg.eta_g = avg_cfg.eta_l * static_cast<double>(B);
    const FederationContext ctx_avg = make_context(even.data, even.shards, avg_cfg);
    FederationState state = initial_state(init_mlp(MlpSpec{2, {4}, 2}, 5));
    double worst_gap = 0.0;
    for (int round = 0; round < 2; ++round) {
        Gradient mean_delta = zeros_like(state.model);
        for (std::size_t id = 0; id < even.shards.size(); ++id) {
            const auto upd =
                local_train(state.model, state.momentum, 1.0, even.shards[id], even.data,
                            avg_cfg, mix_seed({avg_cfg.seed, state.round, id + 1}), avg_cfg.eta_l);
            axpy_in_place(1.0 / 3.0, upd->delta, mean_delta);
        }
        ModelParams averaged = state.model;
        apply_update(averaged, mean_delta, -1.0);
        run_round(state, ctx_avg, avg_cfg);
        const double gap = l2_norm(model_difference(state.model, averaged)) / l2_norm(averaged);
        worst_gap = std::max(worst_gap, gap);
    }
    const bool averaging_close = worst_gap <= 1e-10;

    return {ablated_exact && volume_exact && averaging_close,
            strf("ablated==fixed-momentum bitwise: %s; equal-shard reweighting inert: %s; "
                 "matched-rate averaging gap %.1e (budget 1e-10)",
                 yn(ablated_exact), yn(volume_exact), worst_gap)};
}

// ---- criterion 3 -----------------------------------------------------------

Outcome check_hand_oracles() {
    const ClassDistribution global = ClassDistribution::from_counts({6, 3, 1});
    const ClassDistribution target = ClassDistribution::uniform(3);
    const std::vector<long long> lone{10, 0, 0};
    const std::vector<long long> spread{2, 2, 2};
    const bool scores_ok = client_score(lone, global, target) == 4.0 / 15.0 &&
                           client_score(spread, global, target) == 16.0 / 90.0;

    const std::vector<double> pair{0.0, std::log(2.0)};
    const WeightVector wv = softmax_weights(pair, 1.0);
    const bool weights_ok = wv.weights[0] == 1.0 / 3.0 && wv.weights[1] == 2.0 / 3.0;

    ScoreTable mid;
    mid.scores = {0.3};
    mid.mean_score = 0.3;
    const std::vector<std::size_t> first{0};
    const MomentumValue mv = adaptive_alpha(mid, first, std::log(2.0), 1);
    const bool alpha_ok = mv.alpha == 0.55 && mv.q_ratio == 1.0;

    ScoreTable cold;
    cold.scores = {0.0, 0.6};
    cold.mean_score = 0.3;
    const bool floor_ok = adaptive_alpha(cold, first, 5.0, 2).alpha == 0.1;
    ScoreTable hot;
    hot.scores = {100.0, 0.001};
    hot.mean_score = 50.0005;
    const bool ceil_ok = adaptive_alpha(hot, first, 1000.0, 2).alpha == 0.99;

    return {scores_ok && weights_ok && alpha_ok && floor_ok && ceil_ok,
            strf("scores 4/15, 16/90 exact: %s; weights (1/3, 2/3) exact: %s; "
                 "alpha 0.55 exact: %s; clamps 0.1/0.99: %s",
                 yn(scores_ok), yn(weights_ok), yn(alpha_ok), yn(floor_ok && ceil_ok))};
}

// ---- criterion 4 -----------------------------------------------------------

template <typename S>
concept ExposesDecryption = requires(const S& server, const CipherVector& v) {
    server.decrypt(v);
};

Outcome check_encrypted_aggregation() {
    constexpr bool blind = !ExposesDecryption<AggregationServer> &&
                           !std::is_constructible_v<AggregationServer, const PrivateKey&> &&
                           !std::is_constructible_v<AggregationServer, const KeyPair&>;
    static_assert(blind);

    RandomEngine rng(0xACCE5504);
    int exact = 0;
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t classes = rep < 25 ? 10 : 100;
        const std::size_t clients = 2 + rng.uniform_index(7);
        std::vector<ClientShard> shards(clients);
        for (std::size_t k = 0; k < clients; ++k) {
            shards[k].client_id = k;
            shards[k].class_counts.resize(classes);
            for (auto& c : shards[k].class_counts) {
                c = static_cast<long long>(rng.uniform_index(100000));
            }
        }
        const ProtocolResult result = run_protocol(shards, 512, 7000 + rep);
        if (result.distribution.counts == global_distribution(shards).counts) ++exact;
    }
    return {exact == 50 && blind,
            strf("%d/50 shard sets integer-exact at 512-bit keys; server key-blind by "
                 "construction: %s",
                 exact, yn(blind))};
}

// ---- criteria 5-8 ----------------------------------------------------------

ExperimentConfig scenario(double imbalance, std::vector<Algorithm> algorithms) {
    ExperimentConfig cfg;
    cfg.num_classes = 10;
    cfg.per_class = 200;
    cfg.dim = 2;
    cfg.test_per_class = 100;
    cfg.imbalance = imbalance;
    cfg.partition.num_clients = 20;
    cfg.partition.beta = 0.1;
    cfg.run.eta_l = 0.1;
    cfg.run.eta_g = 1.0;
    cfg.run.rounds = 200;
    cfg.run.local_epochs = 5;
    cfg.run.batch_size = 50;
    cfg.run.sample_rate = 0.5;
    cfg.run.fixed_alpha = 0.1;
    cfg.run.t0 = 1.0;
    cfg.algorithms = std::move(algorithms);
    cfg.trials = 3;
    cfg.seed = 1;
    cfg.out_dir = "unused";
    return cfg;
}

const AlgorithmSummary& summary_of(const ExperimentReport& report, Algorithm alg) {
    for (const auto& s : report.summaries) {
        if (s.algorithm == alg) return s;
    }
    throw InputError("acceptance: missing summary");
}

std::vector<const RunResult*> runs_of(const ExperimentReport& report, Algorithm alg) {
    std::vector<const RunResult*> out;
    for (const auto& run : report.runs) {
        if (run.algorithm == alg) out.push_back(&run);
    }
    return out;
}

Outcome check_momentum_collapse(const ExperimentReport& report) {
    const auto cm = runs_of(report, Algorithm::kFedCM);
    const auto avg = runs_of(report, Algorithm::kFedAvg);
    int below = 0;
    for (std::size_t t = 0; t < cm.size(); ++t) {
        if (!cm[t]->failed && !avg[t]->failed &&
            cm[t]->final_accuracy < avg[t]->final_accuracy) {
            ++below;
        }
    }

    double max_drop = 0.0;
    double best_jump = -1.0;
    bool co_occurring = false;
    for (const RunResult* run : cm) {
        if (run->failed) continue;
        const auto& rec = run->records;
        for (std::size_t r = 1; r < rec.size(); ++r) {
            const double drop = rec[r - 1].test_accuracy - rec[r].test_accuracy;
            max_drop = std::max(max_drop, drop);
            if (drop <= 0.15) continue;
            const std::size_t lo = r > 5 ? r - 5 : 1;
            const std::size_t hi = std::min(rec.size() - 1, r + 5);
            for (std::size_t j = lo; j <= hi; ++j) {
                const double jump =
                    rec[j].mean_concentration - rec[j - 1].mean_concentration;
                best_jump = std::max(best_jump, jump);
                if (jump > 0.1) co_occurring = true;
            }
        }
    }

    std::string jump_note = best_jump < 0.0
                                ? strf("no accuracy drop above 15 points (max %.1f)", 100 * max_drop)
                                : strf("max drop %.1f points, best nearby concentration jump %+.3f",
                                       100 * max_drop, best_jump);
    return {below >= 2 && co_occurring,
            strf("fixed momentum below plain averaging in %d/3 trials; %s", below,
                 jump_note.c_str())};
}

Outcome check_weighting_superiority(const ExperimentReport& report) {
    const auto& wcm = summary_of(report, Algorithm::kFedWCM);
    const auto& cm = summary_of(report, Algorithm::kFedCM);
    const auto& avg = summary_of(report, Algorithm::kFedAvg);
    const bool acc_ok = wcm.mean_final_accuracy >= cm.mean_final_accuracy &&
                        wcm.mean_final_accuracy >= avg.mean_final_accuracy;
    const bool recall_ok = wcm.mean_min_recall > cm.mean_min_recall;
    return {acc_ok && recall_ok,
            strf("mean accuracy wcm %.4f vs cm %.4f vs avg %.4f; mean min-recall wcm %.4f vs "
                 "cm %.4f",
                 wcm.mean_final_accuracy, cm.mean_final_accuracy, avg.mean_final_accuracy,
                 wcm.mean_min_recall, cm.mean_min_recall)};
}

Outcome check_balanced_safety(const ExperimentReport& report) {
    const auto& wcm = summary_of(report, Algorithm::kFedWCM);
    const auto& cm = summary_of(report, Algorithm::kFedCM);
    const double gap = std::abs(wcm.mean_final_accuracy - cm.mean_final_accuracy);
    return {gap <= 0.03, strf("balanced-data mean accuracy wcm %.4f vs cm %.4f, gap %.4f "
                              "(budget 0.03)",
                              wcm.mean_final_accuracy, cm.mean_final_accuracy, gap)};
}

Outcome check_imbalance_trend(const ExperimentReport& r1, const ExperimentReport& r01,
                              const ExperimentReport& r001) {
    const double m1 = summary_of(r1, Algorithm::kFedWCM).mean_final_accuracy;
    const double m01 = summary_of(r01, Algorithm::kFedWCM).mean_final_accuracy;
    const double m001 = summary_of(r001, Algorithm::kFedWCM).mean_final_accuracy;
    const bool monotone = m1 >= m01 && m01 >= m001;

    std::size_t wcm_bad = 0;
    for (const ExperimentReport* rep : {&r1, &r01, &r001}) {
        const auto& s = summary_of(*rep, Algorithm::kFedWCM);
        wcm_bad += s.collapsed_trials + s.failed_trials;
    }
    const std::size_t cm_collapsed = summary_of(r001, Algorithm::kFedCM).collapsed_trials;

    return {monotone && wcm_bad == 0 && cm_collapsed >= 1,
            strf("wcm mean accuracy %.4f / %.4f / %.4f over sharpening tails; wcm collapsed or "
                 "failed runs %zu; fixed-momentum collapses at the sharpest tail %zu/3",
                 m1, m01, m001, wcm_bad, cm_collapsed)};
}

// ---- criterion 9 -----------------------------------------------------------

Outcome check_weighting_lemma() {
    RandomEngine rng(2024);
    int violations = 0;
    double worst_excess = -1e300;
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 2 + rng.uniform_index(9);
        const std::size_t dim = 3 + rng.uniform_index(6);

        std::vector<double> scores(n);
        for (auto& s : scores) s = rng.uniform(0.0, 2.0);
        std::sort(scores.begin(), scores.end(), std::greater<>());
        const WeightVector wv = softmax_weights(scores, rng.uniform(0.05, 2.0));

        std::vector<double> magnitudes(n);
        for (auto& m : magnitudes) m = rng.uniform(0.0, 3.0);
        std::sort(magnitudes.begin(), magnitudes.end());

        std::vector<double> direction(dim);
        double norm = 0.0;
        for (auto& u : direction) {
            u = rng.normal();
            norm += u * u;
        }
        norm = std::sqrt(norm);
        for (auto& u : direction) u /= norm;

        std::vector<double> reference(dim);
        for (auto& g : reference) g = rng.normal();

        std::vector<double> weighted(dim, 0.0);
        std::vector<double> unweighted(dim, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t j = 0; j < dim; ++j) {
                const double gk = reference[j] + magnitudes[k] * direction[j];
                weighted[j] += wv.weights[k] * gk;
                unweighted[j] += gk / static_cast<double>(n);
            }
        }
        double dist_w = 0.0;
        double dist_u = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            dist_w += (weighted[j] - reference[j]) * (weighted[j] - reference[j]);
            dist_u += (unweighted[j] - reference[j]) * (unweighted[j] - reference[j]);
        }
        dist_w = std::sqrt(dist_w);
        dist_u = std::sqrt(dist_u);
        worst_excess = std::max(worst_excess, dist_w - dist_u);
        if (dist_w > dist_u + 1e-12) ++violations;
    }
    return {violations == 0,
            strf("100 instances, %d violations, max(weighted - unweighted distance) %.2e",
                 violations, worst_excess)};
}

}  // namespace

int main() {
    criterion(1, "analytic gradients match central finite differences", check_gradients);
    criterion(2, "reduction identities across the algorithm family", check_degenerations);
    criterion(3, "hand-computed score, weight, and momentum-mix values", check_hand_oracles);
    criterion(4, "encrypted count aggregation is exact and key-blind",
              check_encrypted_aggregation);

    std::optional<ExperimentReport> tail;
    criterion(5, "fixed momentum destabilizes training on a long tail", [&] {
        tail = run_experiment(
            scenario(0.05, {Algorithm::kFedAvg, Algorithm::kFedCM, Algorithm::kFedWCM}), false,
            workers());
        return check_momentum_collapse(*tail);
    });
    criterion(6, "adaptive weighting recovers mean accuracy and tail recall", [&] {
        if (!tail) return Outcome{false, "long-tail scenario unavailable"};
        return check_weighting_superiority(*tail);
    });

    std::optional<ExperimentReport> grid1;
    std::optional<ExperimentReport> grid01;
    std::optional<ExperimentReport> grid001;
    criterion(7, "adaptive weighting is benign on balanced data", [&] {
        grid1 = run_experiment(scenario(1.0, {Algorithm::kFedCM, Algorithm::kFedWCM}), false,
                               workers());
        return check_balanced_safety(*grid1);
    });
    criterion(8, "graceful degradation as the tail sharpens", [&] {
        if (!grid1) return Outcome{false, "balanced scenario unavailable"};
        grid01 = run_experiment(scenario(0.1, {Algorithm::kFedCM, Algorithm::kFedWCM}), false,
                                workers());
        grid001 = run_experiment(scenario(0.01, {Algorithm::kFedCM, Algorithm::kFedWCM}), false,
                                 workers());
        return check_imbalance_trend(*grid1, *grid01, *grid001);
    });

    criterion(9, "scarcity weighting never drifts farther than the plain average",
              check_weighting_lemma);

    std::printf("%d of 9 criteria failed\n", g_failed);
    return g_failed;
}
