#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fedwcm/data.hpp"
#include "fedwcm/errors.hpp"
#include "fedwcm/mlp.hpp"

namespace fedwcm {

struct EvalResult {
    double accuracy = 0.0;
    std::vector<double> per_class_recall;  // NaN for classes absent from the test set
    std::vector<long long> class_counts;
    double min_recall = 0.0;  // over classes present in the test set
};

// Argmax-of-logits accuracy with per-class recalls. Ties break toward the
// lowest class index.
inline EvalResult evaluate(const ModelParams& model, const Dataset& test) {
    if (test.size() == 0) throw InputError("evaluate: empty test set");
    const Tensor2 logits = forward(model, test.features);
    const auto C = static_cast<std::size_t>(test.num_classes);
    if (logits.cols() != C) throw DimensionError("evaluate: model emits wrong class count");

    EvalResult r;
    r.class_counts.assign(C, 0);
    std::vector<long long> hits(C, 0);
    for (std::size_t i = 0; i < test.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < C; ++c) {
            if (logits(i, c) > logits(i, best)) best = c;
        }
        const auto y = static_cast<std::size_t>(test.labels[i]);
        r.class_counts[y]++;
        if (best == y) hits[y]++;
    }

    r.per_class_recall.assign(C, std::numeric_limits<double>::quiet_NaN());
    r.min_recall = 1.0;
    long long hit_total = 0;
    for (std::size_t c = 0; c < C; ++c) {
        hit_total += hits[c];
        if (r.class_counts[c] == 0) continue;
        r.per_class_recall[c] =
            static_cast<double>(hits[c]) / static_cast<double>(r.class_counts[c]);
        r.min_recall = std::min(r.min_recall, r.per_class_recall[c]);
    }
    r.accuracy = static_cast<double>(hit_total) / static_cast<double>(test.size());

    // Accuracy must equal the count-weighted mean of the recalls.
    double weighted = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        if (r.class_counts[c] > 0) {
            weighted += r.per_class_recall[c] * static_cast<double>(r.class_counts[c]);
        }
    }
    weighted /= static_cast<double>(test.size());
    if (std::abs(weighted - r.accuracy) > 1e-12) {
        throw NumericError("evaluate: recall/accuracy consistency check failed");
    }
    return r;
}

struct ConcentrationResult {
    std::vector<double> per_layer;
    double mean = 0.0;
};

// Per-neuron class selectivity from a neurons-by-classes matrix of mean
// activations: max over classes divided by the sum, floored at the uniform
// value 1/C (a dead neuron tells us nothing about selectivity).
inline std::vector<double> concentration_from_means(const Tensor2& class_means) {
    const std::size_t C = class_means.cols();
    if (C == 0) throw InputError("concentration_from_means: no classes");
    constexpr double kEps = 1e-12;
    const double floor_value = 1.0 / static_cast<double>(C);
    std::vector<double> out(class_means.rows());
    for (std::size_t j = 0; j < class_means.rows(); ++j) {
        double top = 0.0;
        double total = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            const double a = class_means(j, c);
            if (a < 0.0) throw InputError("concentration_from_means: negative activation");
            top = std::max(top, a);
            total += a;
        }
        out[j] = total == 0.0 ? floor_value
                              : std::clamp(top / (total + kEps), floor_value, 1.0);
    }
    return out;
}

// Mean post-ReLU activation per (neuron, class) for every hidden layer.
inline std::vector<Tensor2> class_mean_activations(const ModelParams& model,
                                                   const Dataset& probe) {
    if (probe.size() == 0) throw InputError("class_mean_activations: empty probe");
    const auto C = static_cast<std::size_t>(probe.num_classes);
    std::vector<long long> counts(C, 0);
    for (int y : probe.labels) counts[static_cast<std::size_t>(y)]++;
    for (std::size_t c = 0; c < C; ++c) {
        if (counts[c] == 0) {
            throw InputError("class_mean_activations: probe missing class " + std::to_string(c));
        }
    }
    const std::vector<Tensor2> acts = hidden_activations(model, probe.features);
    std::vector<Tensor2> means;
    means.reserve(acts.size());
    for (const Tensor2& layer : acts) {
        Tensor2 m(layer.cols(), C);
        for (std::size_t i = 0; i < layer.rows(); ++i) {
            const auto y = static_cast<std::size_t>(probe.labels[i]);
            for (std::size_t j = 0; j < layer.cols(); ++j) m(j, y) += layer(i, j);
        }
        for (std::size_t j = 0; j < layer.cols(); ++j) {
            for (std::size_t c = 0; c < C; ++c) m(j, c) /= static_cast<double>(counts[c]);
        }
        means.push_back(std::move(m));
    }
    return means;
}

inline ConcentrationResult neuron_concentration(const ModelParams& model,
                                                const Dataset& probe) {
    ConcentrationResult r;
    for (const Tensor2& means : class_mean_activations(model, probe)) {
        const std::vector<double> per_neuron = concentration_from_means(means);
        double layer_sum = 0.0;
        for (double v : per_neuron) layer_sum += v;
        r.per_layer.push_back(layer_sum / static_cast<double>(per_neuron.size()));
    }
    if (r.per_layer.empty()) throw InputError("neuron_concentration: model has no hidden layers");
    double total = 0.0;
    for (double v : r.per_layer) total += v;
    r.mean = total / static_cast<double>(r.per_layer.size());
    return r;
}

struct RoundRecord {
    std::size_t round = 0;
    double test_accuracy = 0.0;
    std::vector<double> per_class_accuracy;
    double min_class_recall = 0.0;
    double alpha_used = 0.0;
    double mean_concentration = 0.0;
    std::vector<double> concentration_per_layer;
    double weight_entropy = 0.0;
};

namespace detail {

inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline std::string csv_header(std::size_t num_classes, std::size_t num_layers) {
    std::string h = "round,acc";
    for (std::size_t c = 0; c < num_classes; ++c) h += ",acc_class_" + std::to_string(c);
    h += ",min_recall,alpha,concentration_mean";
    for (std::size_t l = 0; l < num_layers; ++l) {
        h += ",concentration_layer_" + std::to_string(l);
    }
    h += ",weight_entropy";
    return h;
}

inline void emit_csv(std::span<const RoundRecord> records, std::size_t num_classes,
                     std::size_t num_layers, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("emit_csv: cannot open " + path.string());
    out << csv_header(num_classes, num_layers) << '\n';
    for (const auto& r : records) {
        if (r.per_class_accuracy.size() != num_classes ||
            r.concentration_per_layer.size() != num_layers) {
            throw DimensionError("emit_csv: record width mismatch");
        }
        out << r.round << ',' << detail::fmt_g17(r.test_accuracy);
        for (double v : r.per_class_accuracy) out << ',' << detail::fmt_g17(v);
        out << ',' << detail::fmt_g17(r.min_class_recall);
        out << ',' << detail::fmt_g17(r.alpha_used);
        out << ',' << detail::fmt_g17(r.mean_concentration);
        for (double v : r.concentration_per_layer) out << ',' << detail::fmt_g17(v);
        out << ',' << detail::fmt_g17(r.weight_entropy) << '\n';
    }
    if (!out) throw IoError("emit_csv: write failed for " + path.string());
}

}  // namespace fedwcm
