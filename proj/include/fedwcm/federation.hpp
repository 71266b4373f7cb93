#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fedwcm/data.hpp"
#include "fedwcm/errors.hpp"
#include "fedwcm/mlp.hpp"
#include "fedwcm/params.hpp"
#include "fedwcm/partition.hpp"
#include "fedwcm/rng.hpp"
#include "fedwcm/scoring.hpp"

namespace fedwcm {

enum class Algorithm {
    kFedAvg,   // alpha = 1, uniform weights
    kFedCM,    // fixed alpha, uniform weights
    kFedWCM,   // score-softmax weights, adaptive alpha
    kFedWCMX,  // FedWCM plus volume reweighting and per-client lr rescaling
};

inline const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::kFedAvg: return "fedavg";
        case Algorithm::kFedCM: return "fedcm";
        case Algorithm::kFedWCM: return "fedwcm";
        case Algorithm::kFedWCMX: return "fedwcm-x";
    }
    throw InputError("algorithm_name: unknown algorithm tag");
}

inline Algorithm algorithm_from_name(const std::string& name) {
    if (name == "fedavg") return Algorithm::kFedAvg;
    if (name == "fedcm") return Algorithm::kFedCM;
    if (name == "fedwcm") return Algorithm::kFedWCM;
    if (name == "fedwcm-x" || name == "fedwcm_x") return Algorithm::kFedWCMX;
    throw InputError("unknown algorithm '" + name +
                     "' (expected fedavg, fedcm, fedwcm, or fedwcm-x)");
}

struct RunConfig {
    Algorithm algorithm = Algorithm::kFedWCM;
    double eta_l = 0.1;          // local learning rate
    double eta_g = 1.0;          // global learning rate
    std::size_t rounds = 200;
    std::size_t local_epochs = 5;
    std::size_t batch_size = 50;
    double sample_rate = 0.1;    // fraction of clients per round
    std::uint64_t seed = 0;
    double fixed_alpha = 0.1;    // momentum used by FedCM
    double t0 = 1.0;             // temperature numerator
    long long standard_batches = 0;  // B-hat; 0 resolves from the mean shard

    // Ablation switches. Forcing both reduces the adaptive path to FedCM.
    bool force_uniform_weights = false;
    double forced_alpha = -1.0;  // < 0 means no override

    void validate() const {
        std::vector<std::string> bad;
        if (!(eta_l > 0.0)) bad.push_back("eta_l must be positive");
        if (!(eta_g >= 0.0)) bad.push_back("eta_g must be nonnegative");
        if (rounds == 0) bad.push_back("rounds must be positive");
        if (local_epochs == 0) bad.push_back("local_epochs must be positive");
        if (batch_size == 0) bad.push_back("batch_size must be positive");
        if (!(sample_rate > 0.0) || sample_rate > 1.0) {
            bad.push_back("sample_rate must be in (0, 1]");
        }
        if (!(fixed_alpha > 0.0) || fixed_alpha > 1.0) {
            bad.push_back("fixed_alpha must be in (0, 1]");
        }
        if (!(t0 > 0.0)) bad.push_back("t0 must be positive");
        if (standard_batches < 0) bad.push_back("standard_batches must be nonnegative");
        if (!bad.empty()) throw ConfigError(bad);
    }
};

struct FederationState {
    std::size_t round = 0;
    ModelParams model;
    Gradient momentum;  // gradient-direction units, zero at round 0
    double alpha = 0.1;
};

inline FederationState initial_state(ModelParams model) {
    FederationState s;
    s.momentum = zeros_like(model);
    s.model = std::move(model);
    s.alpha = 0.1;
    return s;
}

struct ClientUpdate {
    std::size_t client_id = 0;
    Gradient delta;               // x_final - x_start, parameter units
    long long batches_run = 0;    // B_k
    std::vector<double> epoch_loss;
};

// Bundles the round-invariant inputs: the dataset, its shards, the one-time
// score table, and the resolved batch references.
struct FederationContext {
    const Dataset* data = nullptr;
    const std::vector<ClientShard>* shards = nullptr;
    ScoreTable score_table;
    ClassDistribution global;
    ClassDistribution target;
    double temperature = 0.0;
    long long standard_batches = 0;
};

inline long long batch_steps(std::size_t shard_size, const RunConfig& cfg) {
    if (shard_size == 0) return 0;
    const auto per_epoch = (shard_size + cfg.batch_size - 1) / cfg.batch_size;
    return static_cast<long long>(cfg.local_epochs * per_epoch);
}

inline FederationContext make_context(const Dataset& data,
                                      const std::vector<ClientShard>& shards,
                                      const RunConfig& cfg) {
    cfg.validate();
    if (shards.empty()) throw InputError("make_context: no shards");
    FederationContext ctx;
    ctx.data = &data;
    ctx.shards = &shards;
    ctx.global = global_distribution(shards);
    ctx.target = ClassDistribution::uniform(ctx.global.num_classes());
    ctx.score_table = score_clients(shards, ctx.global, ctx.target);
    ctx.temperature = compute_temperature(ctx.global, ctx.target, cfg.t0);
    if (cfg.standard_batches > 0) {
        ctx.standard_batches = cfg.standard_batches;
    } else {
        const std::size_t mean_shard =
            (data.size() + shards.size() - 1) / shards.size();
        ctx.standard_batches = batch_steps(mean_shard, cfg);
    }
    return ctx;
}

// One client's pass over its shard: local_epochs epochs of shuffled batches,
// each step moving against alpha * grad + (1 - alpha) * momentum. Returns the
// parameter drift x_final - x_start, or nothing for an empty shard.
inline std::optional<ClientUpdate> local_train(const ModelParams& start,
                                               const Gradient& momentum, double alpha,
                                               const ClientShard& shard,
                                               const Dataset& data, const RunConfig& cfg,
                                               std::uint64_t seed, double eta_l) {
    if (!(alpha > 0.0) || alpha > 1.0) throw InputError("local_train: alpha must be in (0, 1]");
    if (!(eta_l > 0.0)) throw InputError("local_train: eta_l must be positive");
    if (shard.indices.empty()) return std::nullopt;

    RandomEngine rng(seed);
    ModelParams model = start;
    std::vector<std::size_t> order(shard.indices.begin(), shard.indices.end());

    ClientUpdate update;
    update.client_id = shard.client_id;
    update.epoch_loss.reserve(cfg.local_epochs);

    const std::size_t dim = data.dim();
    for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - at);
            Tensor2 bx(n, dim);
            std::vector<int> by(n);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t row = order[at + i];
                by[i] = data.labels[row];
                for (std::size_t j = 0; j < dim; ++j) bx(i, j) = data.features(row, j);
            }
            LossGrad lg = loss_and_grad(model, bx, by);
            Gradient step = std::move(lg.grad);
            scale_in_place(step, alpha);
            axpy_in_place(1.0 - alpha, momentum, step);
            apply_update(model, step, eta_l);
            loss_sum += lg.loss;
            steps++;
            update.batches_run++;
        }
        update.epoch_loss.push_back(loss_sum / static_cast<double>(steps));
    }
    if (!all_finite(model)) {
        throw NumericError("local_train: client " + std::to_string(shard.client_id) +
                           " diverged to non-finite parameters");
    }
    update.delta = model_difference(model, start);
    return update;
}

// Server reduction. Client drifts enter as x_final - x_start; the momentum is
// kept in descent-gradient units, so each drift is negated while normalizing:
//   Delta_{r+1} = sum_k w_k * (x_start - x_final_k) / (eta_l * B_k)
// FedWCM-X normalizes every client by the shared reference B-hat instead.
inline Gradient aggregate(std::span<const ClientUpdate> updates,
                          std::span<const double> weights, const RunConfig& cfg,
                          long long standard_batches) {
    if (updates.empty()) throw InputError("aggregate: no client updates");
    if (updates.size() != weights.size()) {
        throw InputError("aggregate: weight/update count mismatch");
    }
    Gradient next = zeros_like(updates.front().delta);
    for (std::size_t k = 0; k < updates.size(); ++k) {
        const long long norm = cfg.algorithm == Algorithm::kFedWCMX
                                   ? standard_batches
                                   : updates[k].batches_run;
        if (norm <= 0) throw InputError("aggregate: batch normalizer must be positive");
        const double coef = -weights[k] / (cfg.eta_l * static_cast<double>(norm));
        axpy_in_place(coef, updates[k].delta, next);
    }
    return next;
}

inline void global_step(FederationState& state, Gradient next_momentum,
                        const RunConfig& cfg) {
    detail::require_congruent(state.model, next_momentum, "global_step");
    apply_update(state.model, next_momentum, cfg.eta_g);
    state.momentum = std::move(next_momentum);
    state.round++;
}

// The scoring log line plus everything the metrics layer wants per round.
struct RoundTrace {
    std::size_t round = 0;
    std::vector<std::size_t> sampled;
    std::vector<double> weights;
    double alpha_used = 1.0;
    double alpha_next = 1.0;
    double q_ratio = 0.0;
    double temperature = 0.0;
    double mean_local_loss = 0.0;
};

inline std::string format_round_log(const RoundTrace& t) {
    const auto [lo, hi] = std::minmax_element(t.weights.begin(), t.weights.end());
    std::ostringstream os;
    os << "round=" << t.round << " T=" << t.temperature << " q=" << t.q_ratio
       << " alpha_next=" << t.alpha_next << " w_min=" << *lo << " w_max=" << *hi;
    return os.str();
}

namespace detail {

inline std::vector<double> uniform_weights(std::size_t n) {
    return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

}  // namespace detail

// One communication round: sample clients, train them locally, reduce, step.
inline RoundTrace run_round(FederationState& state, const FederationContext& ctx,
                            const RunConfig& cfg) {
    const auto& shards = *ctx.shards;
    const std::size_t K = shards.size();
    const auto sample_count = static_cast<std::size_t>(
        std::ceil(cfg.sample_rate * static_cast<double>(K)));

    RoundTrace trace;
    trace.round = state.round;
    trace.temperature = ctx.temperature;

    RandomEngine sampler(mix_seed({cfg.seed, state.round}));
    trace.sampled = sampler.sample_without_replacement(K, std::min(sample_count, K));

    const bool adaptive = cfg.algorithm == Algorithm::kFedWCM ||
                          cfg.algorithm == Algorithm::kFedWCMX;
    double alpha = cfg.fixed_alpha;
    if (cfg.algorithm == Algorithm::kFedAvg) alpha = 1.0;
    if (adaptive) alpha = cfg.forced_alpha > 0.0 ? cfg.forced_alpha : state.alpha;
    trace.alpha_used = alpha;

    // Aggregation weights over the sampled clients, in sampled order.
    if (adaptive && !cfg.force_uniform_weights) {
        std::vector<double> round_scores;
        round_scores.reserve(trace.sampled.size());
        for (std::size_t id : trace.sampled) {
            round_scores.push_back(ctx.score_table.scores[id]);
        }
        trace.weights = softmax_weights(round_scores, ctx.temperature).weights;
    } else {
        trace.weights = detail::uniform_weights(trace.sampled.size());
    }
    if (cfg.algorithm == Algorithm::kFedWCMX) {
        double volume_total = 0.0;
        for (std::size_t k = 0; k < trace.sampled.size(); ++k) {
            trace.weights[k] *= static_cast<double>(shards[trace.sampled[k]].size());
            volume_total += trace.weights[k];
        }
        for (double& w : trace.weights) w /= volume_total;
    }

    std::vector<ClientUpdate> updates;
    std::vector<double> used_weights;
    double loss_sum = 0.0;
    for (std::size_t k = 0; k < trace.sampled.size(); ++k) {
        const std::size_t id = trace.sampled[k];
        double eta_l = cfg.eta_l;
        if (cfg.algorithm == Algorithm::kFedWCMX) {
            const long long own = batch_steps(shards[id].size(), cfg);
            if (own > 0) {
                eta_l = cfg.eta_l * (static_cast<double>(ctx.standard_batches) /
                                     static_cast<double>(own));
            }
        }
        auto update = local_train(state.model, state.momentum, alpha, shards[id],
                                  *ctx.data, cfg, mix_seed({cfg.seed, state.round, id + 1}),
                                  eta_l);
        if (!update) continue;
        loss_sum += update->epoch_loss.back();
        updates.push_back(std::move(*update));
        used_weights.push_back(trace.weights[k]);
    }
    if (updates.empty()) throw InputError("run_round: every sampled client was empty");
    trace.mean_local_loss = loss_sum / static_cast<double>(updates.size());

    // Alpha for the next round comes from this round's sample.
    trace.alpha_next = alpha;
    trace.q_ratio = 1.0;
    if (adaptive) {
        MomentumValue mv =
            adaptive_alpha(ctx.score_table, trace.sampled, ctx.temperature, K);
        trace.q_ratio = mv.q_ratio;
        if (cfg.forced_alpha > 0.0) {
            trace.alpha_next = cfg.forced_alpha;
        } else {
            trace.alpha_next = mv.alpha;
            state.alpha = mv.alpha;
        }
    }

    Gradient next = aggregate(updates, used_weights, cfg, ctx.standard_batches);
    global_step(state, std::move(next), cfg);
    return trace;
}

}  // namespace fedwcm
