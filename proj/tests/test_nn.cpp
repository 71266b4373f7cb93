#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fedwcm/mlp.hpp"
#include "fedwcm/params.hpp"
#include "fedwcm/rng.hpp"
#include "fedwcm/tensor.hpp"

using namespace fedwcm;

namespace {

Tensor2 random_batch(std::size_t rows, std::size_t cols, RandomEngine& rng, double scale = 1.0) {
    Tensor2 t(rows, cols);
    for (double& v : t.data()) v = scale * rng.uniform(-1.0, 1.0);
    return t;
}

std::vector<int> random_labels(std::size_t n, std::size_t classes, RandomEngine& rng) {
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng.uniform_index(classes));
    return y;
}

// Central finite differences over every parameter of the model.
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

}  // namespace

TEST_CASE("initialization shapes, bounds, and determinism") {
    const MlpSpec spec{16, {64, 32}, 10};
    const ModelParams m = init_mlp(spec, 3);
    REQUIRE(m.layers.size() == 3);
    REQUIRE(m.layers[0].weight.rows() == 16);
    REQUIRE(m.layers[0].weight.cols() == 64);
    REQUIRE(m.layers[1].weight.rows() == 64);
    REQUIRE(m.layers[1].weight.cols() == 32);
    REQUIRE(m.layers[2].weight.rows() == 32);
    REQUIRE(m.layers[2].weight.cols() == 10);

    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(m.layers[l].weight.rows()));
        for (double w : m.layers[l].weight.data()) {
            REQUIRE(std::abs(w) <= bound);
        }
        for (double b : m.layers[l].bias.data()) REQUIRE(b == 0.0);
        REQUIRE(m.layers[l].bias.rows() == 1);
        REQUIRE(m.layers[l].bias.cols() == m.layers[l].weight.cols());
    }

    REQUIRE(init_mlp(spec, 3) == m);
    REQUIRE_FALSE(init_mlp(spec, 4) == m);
    REQUIRE_THROWS_AS(init_mlp(MlpSpec{0, {}, 2}, 1), InputError);
    REQUIRE_THROWS_AS(init_mlp(MlpSpec{4, {}, 1}, 1), InputError);
}

TEST_CASE("forward of a zero-weight model is all-zero logits") {
    MlpSpec spec{3, {4}, 2};
    ModelParams m = init_mlp(spec, 1);
    for (auto& layer : m.layers) {
        layer.weight.fill(0.0);
        layer.bias.fill(0.0);
    }
    RandomEngine rng(2);
    const Tensor2 logits = forward(m, random_batch(5, 3, rng));
    REQUIRE(logits.rows() == 5);
    REQUIRE(logits.cols() == 2);
    for (double v : logits.data()) REQUIRE(v == 0.0);
}

TEST_CASE("forward of an identity layer returns its input") {
    ModelParams m;
    Tensor2 eye(3, 3);
    for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
    m.layers.push_back({eye, Tensor2(1, 3)});

    const Tensor2 x = Tensor2::from_rows({{1.0, -2.0, 3.0}, {0.5, 0.0, -1.0}});
    const Tensor2 out = forward(m, x);
    REQUIRE(out == x);
}

TEST_CASE("forward matches a hand matrix multiply") {
    ModelParams m;
    m.layers.push_back({Tensor2::from_rows({{1.0, 2.0}, {3.0, 4.0}}),
                        Tensor2::from_rows({{0.5, -0.5}})});
    const Tensor2 x = Tensor2::from_rows({{1.0, 1.0}});
    const Tensor2 out = forward(m, x);
    REQUIRE(out(0, 0) == 4.5);
    REQUIRE(out(0, 1) == 5.5);

    REQUIRE_THROWS_AS(forward(m, Tensor2(1, 3)), DimensionError);
}

TEST_CASE("hidden ReLU clips and hidden_activations exposes every layer") {
    ModelParams m;
    m.layers.push_back({Tensor2::from_rows({{1.0}, {0.0}}), Tensor2::from_rows({{0.0}})});
    m.layers.push_back({Tensor2::from_rows({{1.0}}), Tensor2::from_rows({{0.0}})});

    const Tensor2 x = Tensor2::from_rows({{-3.0, 0.0}, {2.0, 0.0}});
    const auto acts = hidden_activations(m, x);
    REQUIRE(acts.size() == 1);
    REQUIRE(acts[0](0, 0) == 0.0);
    REQUIRE(acts[0](1, 0) == 2.0);

    const Tensor2 logits = forward(m, x);
    REQUIRE(logits(0, 0) == 0.0);
    REQUIRE(logits(1, 0) == 2.0);
}

TEST_CASE("uniform logits give loss ln C") {
    MlpSpec spec{4, {}, 5};
    ModelParams m = init_mlp(spec, 1);
    m.layers[0].weight.fill(0.0);

    RandomEngine rng(3);
    const Tensor2 bx = random_batch(6, 4, rng);
    const std::vector<int> by = random_labels(6, 5, rng);
    const LossGrad lg = loss_and_grad(m, bx, by);
    REQUIRE(lg.loss == Catch::Approx(std::log(5.0)).margin(1e-12));
}

TEST_CASE("confident correct prediction drives loss to zero") {
    ModelParams m;
    m.layers.push_back({Tensor2(2, 2), Tensor2::from_rows({{50.0, -50.0}})});
    const Tensor2 bx = Tensor2::from_rows({{0.0, 0.0}});
    const std::vector<int> by{0};
    REQUIRE(loss_and_grad(m, bx, by).loss < 1e-6);
}

TEST_CASE("label validation") {
    MlpSpec spec{2, {}, 3};
    const ModelParams m = init_mlp(spec, 1);
    const Tensor2 bx = Tensor2::from_rows({{1.0, 2.0}});
    REQUIRE_THROWS_AS(loss_and_grad(m, bx, std::vector<int>{3}), InputError);
    REQUIRE_THROWS_AS(loss_and_grad(m, bx, std::vector<int>{-1}), InputError);
    REQUIRE_THROWS_AS(loss_and_grad(m, bx, std::vector<int>{0, 1}), DimensionError);
    REQUIRE_THROWS_AS(loss_and_grad(m, Tensor2(0, 2), std::vector<int>{}), InputError);
}

TEST_CASE("analytic gradient matches central finite differences") {
    const MlpSpec specs[] = {
        {3, {5}, 2}, {4, {6, 3}, 3}, {2, {}, 4}, {5, {4}, 3}, {6, {8, 4}, 4},
    };
    int instances = 0;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        for (const MlpSpec& spec : specs) {
            const double err = max_grad_relative_error(spec, seed * 97 + instances);
            INFO("spec " << spec.input_dim << " seed " << seed << " err " << err);
            REQUIRE(err < 1e-4);
            instances++;
        }
    }
    REQUIRE(instances >= 20);
}

TEST_CASE("large inputs stay finite through the stabilized softmax") {
    MlpSpec spec{4, {8}, 3};
    const ModelParams m = init_mlp(spec, 9);
    RandomEngine rng(10);
    const Tensor2 bx = random_batch(8, 4, rng, 1e3);
    const std::vector<int> by = random_labels(8, 3, rng);
    const LossGrad lg = loss_and_grad(m, bx, by);
    REQUIRE(std::isfinite(lg.loss));
    REQUIRE(all_finite(lg.grad));
    REQUIRE(forward(m, bx).all_finite());
}

TEST_CASE("loss and gradient are deterministic for fixed inputs") {
    MlpSpec spec{3, {4}, 2};
    const ModelParams m = init_mlp(spec, 21);
    RandomEngine rng(22);
    const Tensor2 bx = random_batch(5, 3, rng);
    const std::vector<int> by = random_labels(5, 2, rng);
    const LossGrad a = loss_and_grad(m, bx, by);
    const LossGrad b = loss_and_grad(m, bx, by);
    REQUIRE(a.loss == b.loss);
    REQUIRE(a.grad == b.grad);
}
