#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fedwcm/data.hpp"
#include "fedwcm/errors.hpp"
#include "fedwcm/rng.hpp"

namespace fedwcm {

enum class PartitionMode {
    kEqualQuantity,  // every client holds N/K samples (+-1), label mix skewed
    kQuantitySkew,   // both shard size and label mix skewed
};

struct PartitionSpec {
    std::size_t num_clients = 10;
    double beta = 0.5;  // Dirichlet concentration, smaller = more skew
    PartitionMode mode = PartitionMode::kEqualQuantity;
    std::uint64_t seed = 0;
};

struct ClientShard {
    std::size_t client_id = 0;
    std::vector<std::size_t> indices;     // rows into the source dataset
    std::vector<long long> class_counts;  // length num_classes

    std::size_t size() const { return indices.size(); }
};

namespace detail {

// Split `total` into parts proportional to `weights` using largest-remainder
// rounding. Ties go to the lower index.
inline std::vector<long long> apportion(long long total, std::span<const double> weights) {
    const std::size_t n = weights.size();
    double weight_sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw InputError("apportion: weights must be nonnegative");
        weight_sum += w;
    }
    if (!(weight_sum > 0.0)) throw InputError("apportion: weights sum to zero");
    std::vector<long long> parts(n, 0);
    std::vector<std::pair<double, std::size_t>> remainders(n);
    long long assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double exact = static_cast<double>(total) * weights[i] / weight_sum;
        parts[i] = static_cast<long long>(exact);
        assigned += parts[i];
        remainders[i] = {exact - static_cast<double>(parts[i]), i};
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (long long r = 0; r < total - assigned; ++r) {
        parts[remainders[static_cast<std::size_t>(r) % n].second]++;
    }
    return parts;
}

}  // namespace detail

// Dirichlet label-skew partition. Returns one shard per client with counts per
// class and sample indices drawn from per-class pools in dataset order.
inline std::vector<ClientShard> partition(const Dataset& data, const PartitionSpec& spec) {
    if (spec.num_clients == 0) throw InputError("partition: need at least one client");
    if (!(spec.beta > 0.0)) throw InputError("partition: beta must be positive");
    if (data.size() < spec.num_clients) {
        throw InputError("partition: fewer samples than clients");
    }

    const auto C = static_cast<std::size_t>(data.num_classes);
    const std::size_t K = spec.num_clients;
    RandomEngine rng(spec.seed);

    std::vector<long long> supply(C, 0);
    for (int y : data.labels) supply[static_cast<std::size_t>(y)]++;

    std::vector<std::vector<long long>> counts(K, std::vector<long long>(C, 0));

    if (spec.mode == PartitionMode::kEqualQuantity) {
        // Per-client target sizes, N/K rounded to +-1 via largest remainder.
        const std::vector<double> even(K, 1.0);
        std::vector<long long> targets =
            detail::apportion(static_cast<long long>(data.size()), even);

        std::vector<long long> remaining = supply;
        for (std::size_t k = 0; k < K; ++k) {
            std::vector<double> mix = rng.dirichlet(spec.beta, C);
            std::vector<long long> want = detail::apportion(targets[k], mix);
            long long got = 0;
            for (std::size_t c = 0; c < C; ++c) {
                counts[k][c] = std::min(want[c], remaining[c]);
                got += counts[k][c];
            }
            // Clipping against supply can leave a deficit; fill it from the
            // classes with the most stock left.
            long long deficit = targets[k] - got;
            while (deficit > 0) {
                std::size_t best = C;
                long long best_left = 0;
                for (std::size_t c = 0; c < C; ++c) {
                    const long long left = remaining[c] - counts[k][c];
                    if (left > best_left) {
                        best_left = left;
                        best = c;
                    }
                }
                if (best == C) throw NumericError("partition: supply exhausted");
                const long long take = std::min(deficit, best_left);
                counts[k][best] += take;
                deficit -= take;
            }
            for (std::size_t c = 0; c < C; ++c) remaining[c] -= counts[k][c];
        }
    } else {
        // Split every class pool across clients with its own Dirichlet draw.
        for (std::size_t c = 0; c < C; ++c) {
            std::vector<double> split = rng.dirichlet(spec.beta, K);
            std::vector<long long> parts = detail::apportion(supply[c], split);
            for (std::size_t k = 0; k < K; ++k) counts[k][c] = parts[k];
        }
        // Every client must end up with at least one sample; donate from the
        // largest shard when a client came up empty.
        for (std::size_t k = 0; k < K; ++k) {
            long long size_k = std::accumulate(counts[k].begin(), counts[k].end(), 0LL);
            if (size_k > 0) continue;
            std::size_t donor = K;
            long long donor_size = 1;  // donor must keep one sample itself
            for (std::size_t j = 0; j < K; ++j) {
                const long long s = std::accumulate(counts[j].begin(), counts[j].end(), 0LL);
                if (s > donor_size) {
                    donor_size = s;
                    donor = j;
                }
            }
            if (donor == K) throw NumericError("partition: no donor shard available");
            const std::size_t cls = static_cast<std::size_t>(
                std::max_element(counts[donor].begin(), counts[donor].end()) -
                counts[donor].begin());
            counts[donor][cls]--;
            counts[k][cls]++;
        }
    }

    // Materialize index lists from per-class pools in dataset order.
    std::vector<std::vector<std::size_t>> pools(C);
    for (std::size_t i = 0; i < data.size(); ++i) {
        pools[static_cast<std::size_t>(data.labels[i])].push_back(i);
    }
    std::vector<std::size_t> cursor(C, 0);
    std::vector<ClientShard> shards(K);
    for (std::size_t k = 0; k < K; ++k) {
        shards[k].client_id = k;
        shards[k].class_counts = counts[k];
        for (std::size_t c = 0; c < C; ++c) {
            for (long long t = 0; t < counts[k][c]; ++t) {
                shards[k].indices.push_back(pools[c][cursor[c]++]);
            }
        }
    }
    return shards;
}

// Pooled class counts over a set of shards (pass all ids for the full view, or
// just the sampled ids for a participating round).
inline ClassDistribution global_distribution(std::span<const ClientShard> shards,
                                             std::span<const std::size_t> client_ids) {
    if (shards.empty()) throw InputError("global_distribution: no shards");
    if (client_ids.empty()) throw InputError("global_distribution: no clients selected");
    std::vector<long long> counts(shards.front().class_counts.size(), 0);
    for (std::size_t id : client_ids) {
        if (id >= shards.size()) throw InputError("global_distribution: client id out of range");
        const auto& shard = shards[id];
        if (shard.class_counts.size() != counts.size()) {
            throw DimensionError("global_distribution: inconsistent class counts");
        }
        for (std::size_t c = 0; c < counts.size(); ++c) counts[c] += shard.class_counts[c];
    }
    return ClassDistribution::from_counts(std::move(counts));
}

inline ClassDistribution global_distribution(std::span<const ClientShard> shards) {
    std::vector<std::size_t> all(shards.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return global_distribution(shards, all);
}

// One row per (client, class) pair.
inline void write_partition_csv(std::ostream& out, std::span<const ClientShard> shards) {
    out << "client,class,count\n";
    for (const auto& shard : shards) {
        for (std::size_t c = 0; c < shard.class_counts.size(); ++c) {
            out << shard.client_id << ',' << c << ',' << shard.class_counts[c] << '\n';
        }
    }
    if (!out) throw IoError("write_partition_csv: stream write failed");
}

}  // namespace fedwcm
