#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "lobit/distill.hpp"
#include "lobit/rng.hpp"

using namespace lobit;

namespace {

std::vector<float> random_logits(Rng& rng, size_t v, double scale = 2.0) {
  std::vector<float> z(v);
  for (float& x : z) x = float(rng.next_gaussian() * scale);
  return z;
}

TokenDist random_dist(Rng& rng, size_t v) {
  const auto z = random_logits(rng, v);
  return softmax_dist(z);
}

// Central finite differences of a loss with respect to the logits, divided
// by the step the float storage actually realized.
template <typename Loss>
std::vector<double> fd_grad(Loss loss, const TokenDist& teacher,
                            std::vector<float> logits, double h = 1e-4) {
  std::vector<double> g(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) {
    const float keep = logits[i];
    logits[i] = float(double(keep) + h);
    const double up = loss(teacher, logits).loss;
    const double x_up = double(logits[i]);
    logits[i] = float(double(keep) - h);
    const double down = loss(teacher, logits).loss;
    const double x_down = double(logits[i]);
    logits[i] = keep;
    g[i] = (up - down) / (x_up - x_down);
  }
  return g;
}

void check_grad(const std::vector<double>& analytic, const std::vector<double>& fd) {
  for (size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(1e-3, std::fabs(fd[i]));
    REQUIRE(std::fabs(analytic[i] - fd[i]) / denom < 1e-4);
  }
}

}  // namespace

TEST_CASE("token dist: validates normalization and sign") {
  REQUIRE_THROWS_AS(TokenDist({0.5f, 0.6f}), std::invalid_argument);
  REQUIRE_THROWS_AS(TokenDist({1.5f, -0.5f}), std::invalid_argument);
  REQUIRE_THROWS_AS(TokenDist(std::vector<float>{}), std::invalid_argument);
  REQUIRE_NOTHROW(TokenDist({0.25f, 0.75f}));
}

TEST_CASE("forward_kl: zero at the fixed point") {
  const std::vector<float> logits{0.3f, -1.0f, 2.0f, 0.0f};
  const TokenDist teacher = softmax_dist(logits);
  const KlResult r = forward_kl(teacher, logits);
  REQUIRE(r.loss >= 0.0);
  REQUIRE(r.loss < 1e-6);
  for (double g : r.grad) REQUIRE(std::fabs(g) < 1e-6);
}

TEST_CASE("forward_kl: one-hot teacher against uniform logits is ln 2") {
  const TokenDist teacher(std::vector<float>{1.0f, 0.0f});
  const KlResult r = forward_kl(teacher, std::vector<float>{0.0f, 0.0f});
  REQUIRE_THAT(r.loss, Catch::Matchers::WithinAbs(0.6931471806, 1e-9));
}

TEST_CASE("kl losses: pinned numeric anchors") {
  // independently recomputed at high precision before pinning
  const TokenDist teacher(std::vector<float>{0.9f, 0.1f});
  const std::vector<float> logits{0.0f, 0.0f};  // student = [0.5, 0.5]
  REQUIRE_THAT(forward_kl(teacher, logits).loss,
               Catch::Matchers::WithinAbs(0.368064207, 1e-5));
  REQUIRE_THAT(reverse_kl(teacher, logits).loss,
               Catch::Matchers::WithinAbs(0.510825624, 1e-5));
  REQUIRE_THAT(adaptive_kl(teacher, logits).loss,
               Catch::Matchers::WithinAbs(0.382340349, 1e-5));
}

TEST_CASE("kl losses: analytic gradients match finite differences") {
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const TokenDist teacher = random_dist(rng, 8);
    const auto logits = random_logits(rng, 8);
    {
      const KlResult r = forward_kl(teacher, logits);
      check_grad(r.grad, fd_grad(forward_kl, teacher, logits));
      REQUIRE(r.loss >= 0.0);
    }
    {
      const KlResult r = reverse_kl(teacher, logits);
      check_grad(r.grad, fd_grad(reverse_kl, teacher, logits));
      REQUIRE(r.loss >= 0.0);
    }
    {
      const KlResult r = adaptive_kl(teacher, logits);
      check_grad(r.grad, fd_grad(adaptive_kl, teacher, logits));
      REQUIRE(r.loss >= 0.0);
    }
  }
}

TEST_CASE("adaptive_kl: one-hot teacher reduces to forward kl") {
  const TokenDist teacher(std::vector<float>{0.0f, 1.0f, 0.0f});
  const std::vector<float> logits{0.5f, -0.5f, 1.0f};
  const KlResult ada = adaptive_kl(teacher, logits);
  const KlResult fkl = forward_kl(teacher, logits);
  REQUIRE(ada.loss == fkl.loss);
  REQUIRE(ada.grad == fkl.grad);
}

TEST_CASE("adaptive_kl: uniform teacher weights fkl by 1/V") {
  const TokenDist teacher(std::vector<float>(4, 0.25f));
  const std::vector<float> logits{1.0f, 0.0f, -1.0f, 0.5f};
  const KlResult ada = adaptive_kl(teacher, logits);
  const KlResult fkl = forward_kl(teacher, logits);
  const KlResult rkl = reverse_kl(teacher, logits);
  REQUIRE_THAT(ada.loss, Catch::Matchers::WithinRel(0.25 * fkl.loss + 0.75 * rkl.loss, 1e-12));
}

TEST_CASE("adaptive_kl: bounded by its components") {
  Rng rng(103);
  for (int trial = 0; trial < 200; ++trial) {
    const TokenDist teacher = random_dist(rng, 8);
    const auto logits = random_logits(rng, 8);
    const double f = forward_kl(teacher, logits).loss;
    const double r = reverse_kl(teacher, logits).loss;
    const double a = adaptive_kl(teacher, logits).loss;
    REQUIRE(a >= std::min(f, r) - 1e-12);
    REQUIRE(a <= std::max(f, r) + 1e-12);
  }
}

TEST_CASE("kl losses: reject shape mismatch") {
  const TokenDist teacher(std::vector<float>{0.5f, 0.5f});
  const std::vector<float> logits{0.0f, 0.0f, 0.0f};
  REQUIRE_THROWS_AS(forward_kl(teacher, logits), std::invalid_argument);
  REQUIRE_THROWS_AS(reverse_kl(teacher, logits), std::invalid_argument);
  REQUIRE_THROWS_AS(adaptive_kl(teacher, logits), std::invalid_argument);
}

TEST_CASE("chimera_mixture: identity, idempotence, arithmetic") {
  const TokenDist p1(std::vector<float>{1.0f, 0.0f});
  const TokenDist p2(std::vector<float>{0.0f, 1.0f});

  const TokenDist single = chimera_mixture(std::vector{p1}, std::vector{2.5f});
  REQUIRE(single.probs() == p1.probs());

  const TokenDist same = chimera_mixture(std::vector{p1, p1}, std::vector{0.3f, 0.7f});
  REQUIRE_THAT(same[0], Catch::Matchers::WithinAbs(1.0, 1e-7));

  const TokenDist mix = chimera_mixture(std::vector{p1, p2}, std::vector{1.0f, 3.0f});
  REQUIRE_THAT(mix[0], Catch::Matchers::WithinAbs(0.25, 1e-7));
  REQUIRE_THAT(mix[1], Catch::Matchers::WithinAbs(0.75, 1e-7));
}

TEST_CASE("chimera_mixture: permutation equivariance and normalization") {
  Rng rng(105);
  for (int trial = 0; trial < 100; ++trial) {
    const TokenDist a = random_dist(rng, 8);
    const TokenDist b = random_dist(rng, 8);
    const TokenDist c = random_dist(rng, 8);
    const float w1 = float(rng.next_unit()), w2 = float(rng.next_unit()),
                w3 = float(rng.next_unit() + 0.1);
    const TokenDist m1 = chimera_mixture(std::vector{a, b, c}, std::vector{w1, w2, w3});
    const TokenDist m2 = chimera_mixture(std::vector{c, a, b}, std::vector{w3, w1, w2});
    double sum = 0.0;
    for (size_t v = 0; v < 8; ++v) {
      REQUIRE_THAT(m1[v], Catch::Matchers::WithinAbs(m2[v], 1e-7));
      sum += m1[v];
    }
    REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-6));
  }
}

TEST_CASE("chimera_mixture: rejects empty and all-zero weights") {
  const TokenDist p(std::vector<float>{0.5f, 0.5f});
  REQUIRE_THROWS_AS(chimera_mixture(std::vector<TokenDist>{}, std::vector<float>{}),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(chimera_mixture(std::vector{p, p}, std::vector{0.0f, 0.0f}),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(chimera_mixture(std::vector{p, p}, std::vector{1.0f, -1.0f}),
                    std::invalid_argument);
}

TEST_CASE("fake_quant_weights: exact level points are fixed points") {
  // values already on the seq2 grid at scale 1
  const Matrix w(1, 8, {1.5f, 0.5f, -0.5f, -1.5f, 0.5f, 1.5f, -0.5f, 0.5f});
  const auto fq = fake_quant_weights(w, {Codec::Seq2, 8, ScaleMode::AbsMax});
  REQUIRE(fq.weights == w);
  for (uint8_t m : fq.ste_mask) REQUIRE(m == 1);
}

TEST_CASE("fake_quant_weights: large outliers are masked out") {
  std::vector<float> data(8, 0.5f);
  data[3] = 10.0f;
  const Matrix w(1, 8, std::move(data));
  // absmax scale = 10/1.5; clip bound = s * 2.0 = 13.3 keeps everything, so
  // force the documented case with a fixed unit scale via a grid search that
  // clips: mse grid picks a small scale, leaving |10| > s*2.
  const auto fq = fake_quant_weights(w, {Codec::Seq2, 8, ScaleMode::MseGrid});
  REQUIRE(fq.ste_mask[3] == 0);
  for (size_t i = 0; i < 8; ++i) {
    if (i != 3) REQUIRE(fq.ste_mask[i] == 1);
  }
}

TEST_CASE("fake_quant_weights: sherry zero fraction is 0.25") {
  Rng rng(107);
  const Matrix w = gaussian_matrix(rng, 8, 64, 1.0f);
  const auto fq = fake_quant_weights(w, {Codec::Sherry125, 32, ScaleMode::MseGrid});
  size_t zeros = 0;
  for (float v : fq.weights.data()) {
    if (v == 0.0f) ++zeros;
  }
  REQUIRE(double(zeros) / double(w.size()) == 0.25);
}

TEST_CASE("fake_quant_weights: mask rule follows the clip bound") {
  Rng rng(109);
  const Matrix w = gaussian_matrix(rng, 4, 32, 1.0f);
  const QuantSpec spec{Codec::Seq2, 16, ScaleMode::AbsMax};
  const auto fq = fake_quant_weights(w, spec);
  const QuantizedTensor qt = quantize_tensor(w, spec);
  for (size_t r = 0; r < 4; ++r) {
    for (size_t c = 0; c < 32; ++c) {
      const float s = qt.scales[r * 2 + c / 16];
      const bool inside = std::fabs(w.at(r, c)) <= s * 2.0f;  // level_max + 0.5
      REQUIRE(fq.ste_mask[r * 32 + c] == (inside ? 1 : 0));
    }
  }
}
