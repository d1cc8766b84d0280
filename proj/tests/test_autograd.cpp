#include <cmath>
#include <random>

#include "doctest.h"
#include "sdvit/errors.hpp"
#include "sdvit/grad_check.hpp"
#include "sdvit/losses.hpp"
#include "sdvit/ops.hpp"
#include "sdvit/optim.hpp"
#include "test_util.hpp"

using namespace sdvit;
using sdvit::testing::random_tensor;
using sdvit::testing::weighted_sum;

namespace {

Tensor row(std::vector<float> v) {
  const std::size_t n = v.size();
  return Tensor({1, n}, std::move(v));
}

// Random probability rows with strictly positive entries.
Tensor random_distribution(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Tensor t = random_tensor({rows, cols}, seed, 0.05f, 1.0f);
  auto d = t.data();
  for (std::size_t r = 0; r < rows; ++r) {
    float s = 0.0f;
    for (std::size_t c = 0; c < cols; ++c) s += d[r * cols + c];
    for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] /= s;
  }
  return t;
}

constexpr float kEps = 1e-3f;
constexpr float kOpTol = 1e-2f;

}  // namespace

TEST_CASE("softmax examples") {
  auto p = softmax(row({0.0f, 0.0f}));
  CHECK(p.data()[0] == doctest::Approx(0.5f));
  CHECK(p.data()[1] == doctest::Approx(0.5f));

  p = softmax(row({std::log(1.0f), std::log(3.0f)}));
  CHECK(p.data()[0] == doctest::Approx(0.25f).epsilon(1e-6));
  CHECK(p.data()[1] == doctest::Approx(0.75f).epsilon(1e-6));

  p = softmax(row({2.0f, 0.0f}), 1000.0f);
  CHECK(std::abs(p.data()[0] - 0.5f) < 1e-3f);
  CHECK(std::abs(p.data()[1] - 0.5f) < 1e-3f);
}

TEST_CASE("softmax rows sum to one, including large magnitudes") {
  Tensor x = random_tensor({16, 8}, 3, -1e4f, 1e4f);
  Tensor p = softmax(x);
  for (std::size_t r = 0; r < 16; ++r) {
    float s = 0.0f;
    for (std::size_t c = 0; c < 8; ++c) s += p.data()[r * 8 + c];
    CHECK(std::abs(s - 1.0f) <= 1e-6f);
  }
}

TEST_CASE("softmax errors") {
  CHECK_THROWS_AS(softmax(row({1.0f, 2.0f}), 0.0f), InvalidArgument);
  CHECK_THROWS_AS(softmax(row({1.0f, 2.0f}), -1.0f), InvalidArgument);
  CHECK_THROWS_AS(softmax(row({1.0f, NAN})), NumericError);
}

TEST_CASE("cross entropy examples") {
  const int zero[] = {0};
  CHECK(cross_entropy(row({0.0f, 0.0f}), zero).item() == doctest::Approx(std::log(2.0f)));
  CHECK(cross_entropy(row({10.0f, -10.0f}), zero).item() < 1e-4f);

  Tensor logits = random_tensor({5, 4}, 11, -3.0f, 3.0f);
  const int labels[] = {0, 3, 1, 2, 3};
  Tensor hard = cross_entropy(logits, labels);
  Tensor soft = cross_entropy(logits, one_hot(labels, 4));
  CHECK(hard.item() == soft.item());  // bitwise
}

TEST_CASE("cross entropy errors") {
  const int bad[] = {2};
  CHECK_THROWS_AS(cross_entropy(row({0.0f, 0.0f}), bad), InvalidArgument);
  const int neg[] = {-1};
  CHECK_THROWS_AS(cross_entropy(row({0.0f, 0.0f}), neg), InvalidArgument);
  CHECK_THROWS_AS(cross_entropy(row({0.0f, 0.0f}), row({0.7f, 0.7f})), InvalidArgument);
}

TEST_CASE("kl divergence examples and properties") {
  Tensor p = random_distribution(4, 6, 5);
  CHECK(std::abs(kl_divergence(p, p).item()) <= 1e-6f);
  CHECK(kl_divergence(row({1.0f, 0.0f}), row({0.5f, 0.5f})).item() == doctest::Approx(std::log(2.0f)));
  CHECK_THROWS_AS(kl_divergence(p, random_distribution(4, 5, 1)), InvalidArgument);

  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Tensor a = random_distribution(1, 5, 2 * seed + 100);
    Tensor b = random_distribution(1, 5, 2 * seed + 101);
    REQUIRE(kl_divergence(a, b).item() >= -1e-6f);
  }
}

TEST_CASE("cosine distance examples") {
  Tensor a = random_tensor({3, 5}, 2);
  CHECK(std::abs(cosine_distance_loss(a, a).item()) <= 1e-6f);
  CHECK(cosine_distance_loss(row({1.0f, 0.0f}), row({0.0f, 1.0f})).item() == doctest::Approx(1.0f));
  CHECK(cosine_distance_loss(row({1.0f, 0.0f}), row({-1.0f, 0.0f})).item() == doctest::Approx(2.0f));
  CHECK_THROWS_AS(cosine_distance_loss(row({0.0f, 0.0f}), row({0.0f, 1.0f})), NumericError);
}

TEST_CASE("mse examples") {
  Tensor a = random_tensor({3, 4}, 8);
  CHECK(mse_loss(a, a).item() == 0.0f);
  CHECK(mse_loss(row({1.0f, 1.0f}), row({0.0f, 0.0f})).item() == doctest::Approx(1.0f));
  Tensor b = random_tensor({3, 4}, 9);
  CHECK(mse_loss(scale(a, 3.0f), scale(b, 3.0f)).item() == doctest::Approx(9.0f * mse_loss(a, b).item()));
  CHECK_THROWS_AS(mse_loss(a, random_tensor({4, 3}, 1)), InvalidArgument);
}

TEST_CASE("backward basics") {
  Tensor x = random_tensor({2, 3}, 4).set_requires_grad(true);
  sum(x).backward();
  for (float g : x.grad()) CHECK(g == 1.0f);

  Tensor y = Tensor({2}, {2.0f, 3.0f}, true);
  sum(mul(y, y)).backward();
  CHECK(y.grad()[0] == doctest::Approx(4.0f));
  CHECK(y.grad()[1] == doctest::Approx(6.0f));
}

TEST_CASE("backward accumulates over fan-out") {
  Tensor x = Tensor({1}, {1.5f}, true);
  Tensor y = add(scale(x, 2.0f), mul(x, x));  // 2x + x^2
  y.backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0f + 3.0f));
}

TEST_CASE("backward errors") {
  Tensor x = random_tensor({2, 2}, 1).set_requires_grad(true);
  CHECK_THROWS_AS(scale(x, 2.0f).backward(), InvalidArgument);
  Tensor loss = sum(mul(x, x));
  loss.backward();
  CHECK_THROWS_AS(loss.backward(), StateError);
}

TEST_CASE("no-grad guard builds no graph") {
  Tensor x = random_tensor({2, 2}, 1).set_requires_grad(true);
  NoGradGuard guard;
  Tensor y = sum(mul(x, x));
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("grad_check: elementwise and structural ops") {
  Tensor a = random_tensor({3, 4}, 21);
  Tensor b = random_tensor({3, 4}, 22);
  Tensor bias = random_tensor({4}, 23);
  CHECK(grad_check([](const auto& in) { return weighted_sum(add(in[0], in[1])); }, {a, b}, kEps) < kOpTol);
  CHECK(grad_check([](const auto& in) { return weighted_sum(sub(in[0], in[1])); }, {a, b}, kEps) < kOpTol);
  CHECK(grad_check([](const auto& in) { return weighted_sum(mul(in[0], in[1])); }, {a, b}, kEps) < kOpTol);
  CHECK(grad_check([](const auto& in) { return weighted_sum(scale(in[0], -1.7f)); }, {a}, kEps) < kOpTol);
  CHECK(grad_check([](const auto& in) { return weighted_sum(add_broadcast(in[0], in[1])); }, {a, bias}, kEps) <
        kOpTol);
  CHECK(grad_check([](const auto& in) { return mean(in[0]); }, {a}, kEps) < kOpTol);
  CHECK(grad_check([](const auto& in) { return weighted_sum(reshape(in[0], {4, 3})); }, {a}, kEps) < kOpTol);
}

TEST_CASE("grad_check: matmul, linear, gelu, layer_norm") {
  Tensor a = random_tensor({3, 4}, 31);
  Tensor b = random_tensor({4, 5}, 32);
  Tensor x = random_tensor({2, 3, 4}, 33);
  Tensor bias = random_tensor({5}, 34);
  Tensor gamma = random_tensor({4}, 35, 0.5f, 1.5f);
  Tensor beta = random_tensor({4}, 36);
  CHECK(grad_check([](const auto& in) { return weighted_sum(matmul(in[0], in[1])); }, {a, b}, kEps) < kOpTol);
  CHECK(grad_check([](const auto& in) { return weighted_sum(linear(in[0], in[1], in[2])); }, {x, b, bias}, kEps) <
        kOpTol);
  // GELU's slope and LayerNorm's row-centred input grads pass through zero,
  // so these are checked along random directions.
  CHECK(directional_grad_check([](const auto& in) { return weighted_sum(gelu(in[0])); },
                               {random_tensor({3, 4}, 37, -2, 2)}, kEps, 8, 1) < kOpTol);
  CHECK(directional_grad_check([](const auto& in) { return weighted_sum(layer_norm(in[0], in[1], in[2])); },
                               {x, gamma, beta}, kEps, 8, 2) < kOpTol);
}

TEST_CASE("grad_check: softmax family and token ops") {
  Tensor z = random_tensor({3, 5}, 41, -2.0f, 2.0f);
  // Softmax-family grads sum to zero per row; checked along random directions.
  CHECK(directional_grad_check([](const auto& in) { return weighted_sum(softmax(in[0], 1.0f)); }, {z}, kEps, 8, 3) <
        kOpTol);
  CHECK(directional_grad_check([](const auto& in) { return weighted_sum(softmax(in[0], 2.5f)); }, {z}, kEps, 8, 4) <
        kOpTol);
  CHECK(directional_grad_check([](const auto& in) { return weighted_sum(log_softmax(in[0], 1.5f)); }, {z}, kEps, 8,
                               5) < kOpTol);

  Tensor cls = random_tensor({4}, 42);
  Tensor patches = random_tensor({2, 3, 4}, 43);
  CHECK(grad_check([](const auto& in) { return weighted_sum(prepend_token(in[0], in[1])); }, {cls, patches},
                   kEps) < kOpTol);
  CHECK(grad_check([](const auto& in) { return weighted_sum(select_token(in[0], 1)); }, {patches}, kEps) < kOpTol);
}

TEST_CASE("grad_check: multi-head attention") {
  Tensor q = random_tensor({2, 3, 4}, 51);
  Tensor k = random_tensor({2, 3, 4}, 52);
  Tensor v = random_tensor({2, 3, 4}, 53);
  auto f = [](const std::vector<Tensor>& in) {
    return weighted_sum(multi_head_attention(in[0], in[1], in[2], 2).output);
  };
  CHECK(grad_check(f, {q, k, v}, kEps) < kOpTol);

  auto att = multi_head_attention(q, k, v, 2).weights;
  auto w = att.data();
  for (std::size_t r = 0; r < 2 * 2 * 3; ++r) {
    float s = 0.0f;
    for (std::size_t c = 0; c < 3; ++c) s += w[r * 3 + c];
    CHECK(std::abs(s - 1.0f) <= 1e-5f);
  }
}

TEST_CASE("grad_check: dropout with a replayed mask") {
  Tensor x = random_tensor({4, 6}, 61);
  auto f = [](const std::vector<Tensor>& in) {
    std::mt19937_64 rng(5);
    return weighted_sum(dropout(in[0], 0.3f, rng));
  };
  CHECK(grad_check(f, {x}, kEps) < kOpTol);
}

TEST_CASE("grad_check: losses") {
  Tensor target = random_tensor({2, 4}, 71);
  CHECK(grad_check([&](const auto& in) { return mse_loss(in[0], target); }, {random_tensor({2, 4}, 72)}, kEps) <
        1e-3f);

  const int labels[] = {1, 3};
  Tensor logits = random_tensor({2, 4}, 73, -2.0f, 2.0f);
  CHECK(grad_check([&](const auto& in) { return cross_entropy(in[0], labels); }, {logits}, kEps) < 1e-2f);
  Tensor soft = random_distribution(2, 4, 74);
  CHECK(directional_grad_check([&](const auto& in) { return cross_entropy(in[0], soft, 2.0f); }, {logits}, kEps, 8,
                               6) < 1e-2f);

  Tensor upper = random_distribution(2, 4, 75);
  CHECK(grad_check([&](const auto& in) { return kl_divergence(upper, softmax(in[0])); }, {logits}, kEps) < kOpTol);
  CHECK(grad_check([](const auto& in) { return kl_divergence(in[0], in[1]); },
                   {random_distribution(2, 4, 76), random_distribution(2, 4, 77)}, kEps) < kOpTol);

  CHECK(grad_check([](const auto& in) { return cosine_distance_loss(in[0], in[1]); },
                   {random_tensor({3, 5}, 78), random_tensor({3, 5}, 79)}, kEps) < kOpTol);
}

TEST_CASE("grad_check rejects bad eps") {
  Tensor x = random_tensor({2}, 1);
  CHECK_THROWS_AS(grad_check([](const auto& in) { return sum(in[0]); }, {x}, 0.0f), InvalidArgument);
  CHECK_THROWS_AS(grad_check([](const auto& in) { return sum(in[0]); }, {x}, 0.2f), InvalidArgument);
}

TEST_CASE("adamw examples") {
  OptimState state;
  state.hyper.learning_rate = 0.1f;

  Tensor p = Tensor({1}, {0.0f}, true);
  std::vector<Tensor> params{p};
  p.impl()->grad_buffer()[0] = 0.0f;
  adamw_step(params, state);
  CHECK(p.data()[0] == 0.0f);
  CHECK(state.step_count == 1);

  OptimState fresh;
  fresh.hyper.learning_rate = 0.1f;
  Tensor q = Tensor({1}, {0.0f}, true);
  std::vector<Tensor> qs{q};
  q.impl()->grad_buffer()[0] = 1.0f;
  adamw_step(qs, fresh);
  CHECK(std::abs(q.data()[0] + 0.1f) <= 1e-6f);
}

TEST_CASE("adamw minimizes a scalar quadratic") {
  OptimState state;
  state.hyper.learning_rate = 0.05f;
  Tensor p = Tensor({1}, {0.0f}, true);
  std::vector<Tensor> params{p};
  for (int step = 0; step < 200; ++step) {
    zero_grads(params);
    Tensor d = add_broadcast(p, Tensor({1}, {-3.0f}));
    sum(mul(d, d)).backward();
    adamw_step(params, state);
  }
  CHECK(std::abs(p.data()[0] - 3.0f) < 0.1f);
  CHECK(state.step_count == 200);
}

TEST_CASE("adamw is deterministic and requires grads") {
  auto run = [] {
    OptimState state;
    state.hyper.learning_rate = 0.01f;
    state.hyper.weight_decay = 0.1f;
    Tensor p = random_tensor({8}, 5).set_requires_grad(true);
    std::vector<Tensor> params{p};
    for (int i = 0; i < 10; ++i) {
      zero_grads(params);
      weighted_sum(mul(p, p)).backward();
      adamw_step(params, state);
    }
    return p;
  };
  CHECK(sdvit::testing::bitwise_equal(run(), run()));

  OptimState state;
  std::vector<Tensor> params{Tensor({2}, 0.0f, true)};
  CHECK_THROWS_AS(adamw_step(params, state), StateError);
}

TEST_CASE("gradient clipping bounds the update norm") {
  OptimState state;
  state.hyper.learning_rate = 0.1f;
  state.hyper.max_grad_norm = 1.0f;
  Tensor p = Tensor({2}, {0.0f, 0.0f}, true);
  std::vector<Tensor> params{p};
  p.impl()->grad_buffer() = {300.0f, 400.0f};
  adamw_step(params, state);
  // Adam normalizes per element, so the first step is still -lr * sign(g).
  CHECK(p.data()[0] == doctest::Approx(-0.1f));
  CHECK(p.data()[1] == doctest::Approx(-0.1f));
}
