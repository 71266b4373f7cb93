#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "fedwcm/errors.hpp"
#include "fedwcm/tensor.hpp"

namespace fedwcm {

// One fully-connected layer: weight is (in x out), bias is (1 x out).
struct DenseLayer {
    Tensor2 weight;
    Tensor2 bias;

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Flat ordered collection of layer tensors. Together with Gradient below it
// forms the vector space the aggregation rules operate on; the two types are
// kept distinct because they carry different units (parameters vs updates).
struct ModelParams {
    std::vector<DenseLayer> layers;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct Gradient {
    std::vector<DenseLayer> layers;

    friend bool operator==(const Gradient&, const Gradient&) = default;
};

namespace detail {

template <typename P, typename Q>
void require_congruent(const P& a, const Q& b, const char* op) {
    if (a.layers.size() != b.layers.size()) {
        throw DimensionError(std::string(op) + ": layer count mismatch");
    }
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        a.layers[i].weight.require_same_shape(b.layers[i].weight, op);
        a.layers[i].bias.require_same_shape(b.layers[i].bias, op);
    }
}

}  // namespace detail

template <typename P>
std::size_t param_count(const P& p) {
    std::size_t n = 0;
    for (const auto& layer : p.layers) n += layer.weight.size() + layer.bias.size();
    return n;
}

// y += a * x, elementwise over all layers.
template <typename P>
void axpy_in_place(double a, const P& x, P& y) {
    detail::require_congruent(x, y, "axpy");
    for (std::size_t i = 0; i < y.layers.size(); ++i) {
        y.layers[i].weight.add_scaled(x.layers[i].weight, a);
        y.layers[i].bias.add_scaled(x.layers[i].bias, a);
    }
}

// Returns a*x + y.
template <typename P>
P axpy(double a, const P& x, P y) {
    axpy_in_place(a, x, y);
    return y;
}

template <typename P>
void scale_in_place(P& p, double a) {
    for (auto& layer : p.layers) {
        layer.weight.scale(a);
        layer.bias.scale(a);
    }
}

template <typename P>
Gradient zeros_like(const P& m) {
    Gradient g;
    g.layers.reserve(m.layers.size());
    for (const auto& layer : m.layers) {
        g.layers.push_back({Tensor2(layer.weight.rows(), layer.weight.cols()),
                            Tensor2(layer.bias.rows(), layer.bias.cols())});
    }
    return g;
}

// a - b, expressed in update units.
inline Gradient model_difference(const ModelParams& a, const ModelParams& b) {
    detail::require_congruent(a, b, "model_difference");
    Gradient g;
    g.layers.reserve(a.layers.size());
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        DenseLayer d = a.layers[i];
        d.weight.add_scaled(b.layers[i].weight, -1.0);
        d.bias.add_scaled(b.layers[i].bias, -1.0);
        g.layers.push_back(std::move(d));
    }
    return g;
}

// m -= eta * g
inline void apply_update(ModelParams& m, const Gradient& g, double eta) {
    detail::require_congruent(m, g, "apply_update");
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        m.layers[i].weight.add_scaled(g.layers[i].weight, -eta);
        m.layers[i].bias.add_scaled(g.layers[i].bias, -eta);
    }
}

template <typename P>
bool all_finite(const P& p) {
    for (const auto& layer : p.layers) {
        if (!layer.weight.all_finite() || !layer.bias.all_finite()) return false;
    }
    return true;
}

template <typename P>
double l2_norm(const P& p) {
    double s = 0.0;
    for (const auto& layer : p.layers) {
        for (double v : layer.weight.data()) s += v * v;
        for (double v : layer.bias.data()) s += v * v;
    }
    return std::sqrt(s);
}

// --- checkpoint format -------------------------------------------------
// Header: u32 layer count, then per layer four u32 values
// (weight rows, weight cols, bias rows, bias cols). Body: all tensor data as
// 64-bit floats, weight then bias per layer. Everything little-endian.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline void put_f64(std::ostream& os, double d) {
    std::uint64_t v;
    static_assert(sizeof(v) == sizeof(d));
    std::memcpy(&v, &d, sizeof(v));
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double d;
    std::memcpy(&d, &v, sizeof(d));
    return d;
}

inline void put_tensor(std::ostream& os, const Tensor2& t) {
    for (double v : t.data()) put_f64(os, v);
}

inline Tensor2 get_tensor(std::istream& is, std::uint32_t rows, std::uint32_t cols) {
    Tensor2 t(rows, cols);
    for (double& v : t.data()) v = get_f64(is);
    return t;
}

}  // namespace detail

inline void save_model(const ModelParams& m, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("save_model: cannot open " + path.string());
    detail::put_u32(os, static_cast<std::uint32_t>(m.layers.size()));
    for (const auto& layer : m.layers) {
        detail::put_u32(os, static_cast<std::uint32_t>(layer.weight.rows()));
        detail::put_u32(os, static_cast<std::uint32_t>(layer.weight.cols()));
        detail::put_u32(os, static_cast<std::uint32_t>(layer.bias.rows()));
        detail::put_u32(os, static_cast<std::uint32_t>(layer.bias.cols()));
    }
    for (const auto& layer : m.layers) {
        detail::put_tensor(os, layer.weight);
        detail::put_tensor(os, layer.bias);
    }
    if (!os) throw IoError("save_model: write failed for " + path.string());
}

inline ModelParams load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_model: cannot open " + path.string());
    const std::uint32_t count = detail::get_u32(is);
    std::vector<std::array<std::uint32_t, 4>> shapes(count);
    for (auto& s : shapes) {
        for (auto& v : s) v = detail::get_u32(is);
    }
    ModelParams m;
    m.layers.reserve(count);
    for (const auto& s : shapes) {
        DenseLayer layer;
        layer.weight = detail::get_tensor(is, s[0], s[1]);
        layer.bias = detail::get_tensor(is, s[2], s[3]);
        m.layers.push_back(std::move(layer));
    }
    if (!is) throw IoError("load_model: truncated file " + path.string());
    return m;
}

}  // namespace fedwcm
