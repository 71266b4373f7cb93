#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fedwcm/errors.hpp"
#include "fedwcm/rng.hpp"
#include "fedwcm/tensor.hpp"

namespace fedwcm {

struct Dataset {
    Tensor2 features;         // N x dim
    std::vector<int> labels;  // values in [0, num_classes)
    int num_classes = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols(); }
};

// Per-class sample counts with normalized proportions.
struct ClassDistribution {
    std::vector<long long> counts;
    std::vector<double> proportions;

    std::size_t num_classes() const { return counts.size(); }
    long long total() const {
        return std::accumulate(counts.begin(), counts.end(), 0LL);
    }

    static ClassDistribution from_counts(std::vector<long long> counts) {
        ClassDistribution d;
        long long total = 0;
        for (long long c : counts) {
            if (c < 0) throw InputError("class counts must be nonnegative");
            total += c;
        }
        if (total == 0) throw InputError("class distribution has no samples");
        d.proportions.resize(counts.size());
        for (std::size_t i = 0; i < counts.size(); ++i) {
            d.proportions[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
        }
        d.counts = std::move(counts);
        return d;
    }

    // Uniform target over C classes (the default target of the scoring rule).
    static ClassDistribution uniform(std::size_t num_classes) {
        return from_counts(std::vector<long long>(num_classes, 1));
    }
};

inline ClassDistribution class_distribution_of(const Dataset& data) {
    std::vector<long long> counts(static_cast<std::size_t>(data.num_classes), 0);
    for (int y : data.labels) counts[static_cast<std::size_t>(y)]++;
    return ClassDistribution::from_counts(std::move(counts));
}

// Synthetic Gaussian-blob classification data. Class means sit on a scaled
// simplex when the feature dimension allows (dim >= C), otherwise on a circle
// in the first two dimensions. Samples are grouped by class.
inline Dataset synth_dataset(int num_classes, std::size_t per_class, std::size_t dim,
                             std::uint64_t seed, double radius = 4.0, double sigma = 1.0,
                             double offset = 0.0) {
    if (num_classes < 2) throw InputError("synth_dataset: need at least 2 classes");
    if (per_class == 0 || dim == 0) throw InputError("synth_dataset: empty shape");
    if (!(radius > 0.0) || !(sigma > 0.0)) {
        throw InputError("synth_dataset: radius and sigma must be positive");
    }
    if (!std::isfinite(offset)) throw InputError("synth_dataset: offset must be finite");

    const auto C = static_cast<std::size_t>(num_classes);
    std::vector<std::vector<double>> means(C, std::vector<double>(dim, 0.0));
    if (dim >= C) {
        for (std::size_t c = 0; c < C; ++c) means[c][c] = radius;
    } else {
        if (dim < 2) throw InputError("synth_dataset: dim must be >= 2 when dim < num_classes");
        for (std::size_t c = 0; c < C; ++c) {
            const double angle = 2.0 * M_PI * static_cast<double>(c) / static_cast<double>(C);
            means[c][0] = radius * std::cos(angle);
            means[c][1] = radius * std::sin(angle);
        }
    }

    RandomEngine rng(seed);
    Dataset data;
    data.num_classes = num_classes;
    data.features = Tensor2(C * per_class, dim);
    data.labels.resize(C * per_class);
    std::size_t row = 0;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t i = 0; i < per_class; ++i, ++row) {
            data.labels[row] = static_cast<int>(c);
            for (std::size_t j = 0; j < dim; ++j) {
                data.features(row, j) = offset + means[c][j] + sigma * rng.normal();
            }
        }
    }
    return data;
}

// Exponential long-tail schedule: n_c = round(n_1 * IF^((c-1)/(C-1))), so the
// head/tail ratio lands at 1/IF up to rounding.
inline ClassDistribution longtail_counts(const ClassDistribution& balanced,
                                         double imbalance_factor) {
    if (!(imbalance_factor > 0.0) || imbalance_factor > 1.0) {
        throw InputError("longtail_counts: imbalance factor must be in (0, 1]");
    }
    const std::size_t C = balanced.num_classes();
    if (C == 0) throw InputError("longtail_counts: empty distribution");
    const long long head = balanced.counts.front();
    for (long long c : balanced.counts) {
        if (c != head) throw InputError("longtail_counts: input must be balanced");
    }
    if (C == 1) {
        if (imbalance_factor < 1.0) throw InputError("longtail_counts: C=1 with IF<1 is invalid");
        return balanced;
    }
    std::vector<long long> counts(C);
    for (std::size_t c = 0; c < C; ++c) {
        const double exponent = static_cast<double>(c) / static_cast<double>(C - 1);
        counts[c] = std::llround(static_cast<double>(head) * std::pow(imbalance_factor, exponent));
    }
    return ClassDistribution::from_counts(std::move(counts));
}

// Keep the first counts[c] samples of each class, preserving dataset order.
inline Dataset subset_by_counts(const Dataset& data, std::span<const long long> counts) {
    if (counts.size() != static_cast<std::size_t>(data.num_classes)) {
        throw DimensionError("subset_by_counts: count vector length mismatch");
    }
    std::vector<long long> taken(counts.size(), 0);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto y = static_cast<std::size_t>(data.labels[i]);
        if (taken[y] < counts[y]) {
            taken[y]++;
            keep.push_back(i);
        }
    }
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (taken[c] < counts[c]) {
            throw InputError("subset_by_counts: class " + std::to_string(c) +
                             " has only " + std::to_string(taken[c]) + " of " +
                             std::to_string(counts[c]) + " requested samples");
        }
    }
    Dataset out;
    out.num_classes = data.num_classes;
    out.features = Tensor2(keep.size(), data.dim());
    out.labels.resize(keep.size());
    for (std::size_t r = 0; r < keep.size(); ++r) {
        out.labels[r] = data.labels[keep[r]];
        for (std::size_t j = 0; j < data.dim(); ++j) {
            out.features(r, j) = data.features(keep[r], j);
        }
    }
    return out;
}

}  // namespace fedwcm
