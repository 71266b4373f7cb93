#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "fedwcm/data.hpp"
#include "fedwcm/errors.hpp"
#include "fedwcm/partition.hpp"

namespace fedwcm {

// Per-client scarcity scores, computed once before the round loop.
struct ScoreTable {
    std::vector<double> scores;
    double mean_score = 0.0;
};

// Softmax aggregation weights for one round's sampled clients.
struct WeightVector {
    std::vector<double> weights;
    double temperature = 0.0;
};

struct MomentumValue {
    double alpha = 0.1;
    double q_ratio = 0.0;
};

// Count-weighted mean absolute deviation between the pooled and the target
// distribution, restricted to the classes this shard actually holds:
//   s_k = sum_c |target_c - global_c| * n_{k,c} / sum_c n_{k,c}
inline double client_score(std::span<const long long> shard_counts,
                           const ClassDistribution& global,
                           const ClassDistribution& target) {
    const std::size_t C = shard_counts.size();
    if (C != global.num_classes() || C != target.num_classes()) {
        throw DimensionError("client_score: class count mismatch");
    }
    long long shard_total = 0;
    double weighted = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        if (shard_counts[c] < 0) throw InputError("client_score: negative count");
        shard_total += shard_counts[c];
        weighted += std::abs(target.proportions[c] - global.proportions[c]) *
                    static_cast<double>(shard_counts[c]);
    }
    if (shard_total == 0) throw InputError("client_score: empty shard has no score");
    return weighted / static_cast<double>(shard_total);
}

inline ScoreTable score_clients(std::span<const ClientShard> shards,
                                const ClassDistribution& global,
                                const ClassDistribution& target) {
    if (shards.empty()) throw InputError("score_clients: no shards");
    ScoreTable table;
    table.scores.reserve(shards.size());
    for (const auto& shard : shards) {
        table.scores.push_back(client_score(shard.class_counts, global, target));
    }
    table.mean_score = std::accumulate(table.scores.begin(), table.scores.end(), 0.0) /
                       static_cast<double>(table.scores.size());
    return table;
}

// Temperature shrinks as the pooled distribution drifts from the target, which
// sharpens the softmax exactly when weighting matters most:
//   T = t0 / (C * sum_c |target_c - global_c| + eps)
inline double compute_temperature(const ClassDistribution& global,
                                  const ClassDistribution& target, double t0 = 1.0) {
    if (!(t0 > 0.0)) throw InputError("compute_temperature: t0 must be positive");
    if (global.num_classes() != target.num_classes()) {
        throw DimensionError("compute_temperature: class count mismatch");
    }
    constexpr double kEps = 1e-8;
    double discrepancy = 0.0;
    for (std::size_t c = 0; c < global.num_classes(); ++c) {
        discrepancy += std::abs(target.proportions[c] - global.proportions[c]);
    }
    return t0 / (static_cast<double>(global.num_classes()) * discrepancy + kEps);
}

// Stabilized softmax over the round's scores: w_k = exp(s_k / T) / sum_j exp(s_j / T).
inline WeightVector softmax_weights(std::span<const double> round_scores, double temperature) {
    if (round_scores.empty()) throw InputError("softmax_weights: no scores");
    if (!(temperature > 0.0)) throw InputError("softmax_weights: temperature must be positive");
    WeightVector wv;
    wv.temperature = temperature;
    const double top = *std::max_element(round_scores.begin(), round_scores.end());
    wv.weights.reserve(round_scores.size());
    double total = 0.0;
    for (double s : round_scores) {
        const double e = std::exp((s - top) / temperature);
        wv.weights.push_back(e);
        total += e;
    }
    for (double& w : wv.weights) w /= total;
    return wv;
}

// Adaptive momentum: alpha = 0.1 + 0.9 * (1 - exp(-|T|/K)) * q_r, clamped to
// [0.1, 0.99], where q_r compares the sampled clients' mean score against the
// population mean. A zero population mean (balanced data) pins alpha at the base.
inline MomentumValue adaptive_alpha(const ScoreTable& table,
                                    std::span<const std::size_t> sampled,
                                    double temperature, std::size_t total_clients) {
    if (sampled.empty()) throw InputError("adaptive_alpha: no sampled clients");
    if (total_clients == 0) throw InputError("adaptive_alpha: client count must be positive");
    MomentumValue mv;
    if (table.mean_score == 0.0) {
        mv.q_ratio = 1.0;
        mv.alpha = 0.1;
        return mv;
    }
    double round_mean = 0.0;
    for (std::size_t id : sampled) {
        if (id >= table.scores.size()) throw InputError("adaptive_alpha: client id out of range");
        round_mean += table.scores[id];
    }
    round_mean /= static_cast<double>(sampled.size());
    mv.q_ratio = round_mean / table.mean_score;
    const double gate =
        1.0 - std::exp(-std::abs(temperature) / static_cast<double>(total_clients));
    mv.alpha = std::clamp(0.1 + 0.9 * gate * mv.q_ratio, 0.1, 0.99);
    return mv;
}

// Shannon entropy of an aggregation weight vector, a collapse-onset indicator.
inline double weight_entropy(std::span<const double> weights) {
    double h = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw InputError("weight_entropy: negative weight");
        if (w > 0.0) h -= w * std::log(w);
    }
    return h;
}

}  // namespace fedwcm
