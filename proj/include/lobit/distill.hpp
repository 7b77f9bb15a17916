#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "lobit/calib.hpp"
#include "lobit/matrix.hpp"

namespace lobit {

// Probability vector over a token vocabulary; normalized within 1e-6.
class TokenDist {
 public:
  explicit TokenDist(std::vector<float> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) {
      throw std::invalid_argument("TokenDist: empty distribution");
    }
    double sum = 0.0;
    for (float p : probs_) {
      if (!(p >= 0.0f) || !std::isfinite(p)) {
        throw std::invalid_argument("TokenDist: probabilities must be nonnegative");
      }
      sum += double(p);
    }
    if (std::fabs(sum - 1.0) > 1e-6) {
      throw std::invalid_argument("TokenDist: probabilities must sum to 1");
    }
  }

  const std::vector<float>& probs() const { return probs_; }
  size_t size() const { return probs_.size(); }
  float operator[](size_t i) const { return probs_[i]; }

 private:
  std::vector<float> probs_;
};

namespace detail {

inline std::vector<double> softmax(std::span<const float> logits) {
  double max_z = -std::numeric_limits<double>::infinity();
  for (float z : logits) {
    if (!std::isfinite(z)) {
      throw std::invalid_argument("softmax: non-finite logit");
    }
    max_z = std::max(max_z, double(z));
  }
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(double(logits[i]) - max_z);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

inline constexpr double kProbFloor = 1e-12;

}  // namespace detail

inline TokenDist softmax_dist(std::span<const float> logits) {
  const auto p = detail::softmax(logits);
  std::vector<float> out(p.begin(), p.end());
  return TokenDist(std::move(out));
}

// Loss plus its analytic gradient with respect to the student logits.
struct KlResult {
  double loss = 0.0;
  std::vector<double> grad;
};

// D(p_T || p_S) with p_S = softmax(logits). Mode-covering: the student is
// pulled to put mass wherever the teacher does. grad = p_S - p_T.
inline KlResult forward_kl(const TokenDist& teacher, std::span<const float> student_logits) {
  if (teacher.size() != student_logits.size()) {
    throw std::invalid_argument("forward_kl: shape mismatch");
  }
  const auto ps = detail::softmax(student_logits);
  KlResult out;
  out.grad.resize(ps.size());
  for (size_t v = 0; v < ps.size(); ++v) {
    const double pt = teacher[v];
    if (pt > 0.0) {
      out.loss += pt * std::log(pt / std::max(ps[v], detail::kProbFloor));
    }
    out.grad[v] = ps[v] - pt;
  }
  out.loss = std::max(out.loss, 0.0);
  return out;
}

// D(p_S || p_T). Mode-seeking: the student concentrates on teacher modes.
// grad = p_S * (log(p_S/p_T) - loss).
inline KlResult reverse_kl(const TokenDist& teacher, std::span<const float> student_logits) {
  if (teacher.size() != student_logits.size()) {
    throw std::invalid_argument("reverse_kl: shape mismatch");
  }
  const auto ps = detail::softmax(student_logits);
  std::vector<double> log_ratio(ps.size());
  KlResult out;
  for (size_t v = 0; v < ps.size(); ++v) {
    log_ratio[v] = std::log(std::max(ps[v], detail::kProbFloor)) -
                   std::log(std::max(double(teacher[v]), detail::kProbFloor));
    out.loss += ps[v] * log_ratio[v];
  }
  out.grad.resize(ps.size());
  for (size_t v = 0; v < ps.size(); ++v) {
    out.grad[v] = ps[v] * (log_ratio[v] - out.loss);
  }
  out.loss = std::max(out.loss, 0.0);
  return out;
}

// Convex blend weighted by the teacher's confidence (top-token probability):
// a peaked teacher pushes toward forward KL, a flat one toward reverse KL.
inline KlResult adaptive_kl(const TokenDist& teacher, std::span<const float> student_logits) {
  const auto fkl = forward_kl(teacher, student_logits);
  const auto rkl = reverse_kl(teacher, student_logits);
  const double c = double(*std::max_element(teacher.probs().begin(), teacher.probs().end()));
  KlResult out;
  out.loss = c * fkl.loss + (1.0 - c) * rkl.loss;
  out.grad.resize(fkl.grad.size());
  for (size_t v = 0; v < out.grad.size(); ++v) {
    out.grad[v] = c * fkl.grad[v] + (1.0 - c) * rkl.grad[v];
  }
  return out;
}

// Fuses multiple reference distributions into one teacher signal by a
// normalized weighted average.
inline TokenDist chimera_mixture(std::span<const TokenDist> refs,
                                 std::span<const float> weights) {
  if (refs.empty() || refs.size() != weights.size()) {
    throw std::invalid_argument("chimera_mixture: need one weight per reference");
  }
  double wsum = 0.0;
  for (float w : weights) {
    if (!(w >= 0.0f) || !std::isfinite(w)) {
      throw std::invalid_argument("chimera_mixture: weights must be nonnegative");
    }
    wsum += double(w);
  }
  if (wsum == 0.0) {
    throw std::invalid_argument("chimera_mixture: weights must not all be zero");
  }
  const size_t vocab = refs[0].size();
  std::vector<double> acc(vocab, 0.0);
  for (size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].size() != vocab) {
      throw std::invalid_argument("chimera_mixture: vocabulary size mismatch");
    }
    for (size_t v = 0; v < vocab; ++v) {
      acc[v] += double(weights[i]) / wsum * double(refs[i][v]);
    }
  }
  std::vector<float> out(vocab);
  for (size_t v = 0; v < vocab; ++v) out[v] = float(acc[v]);
  return TokenDist(std::move(out));
}

// Straight-through fake quantization: the forward pass sees the
// quantize-dequantize round trip of the current weights; the backward
// contract is grad(W) = grad(Wq) masked to 0 outside the clip range
// |w| <= s * (level_max + 0.5).
struct FakeQuantResult {
  Matrix weights;                 // dequantize(quantize(W, spec))
  std::vector<uint8_t> ste_mask;  // row-major, 1 = gradient passes
};

inline FakeQuantResult fake_quant_weights(const Matrix& w, const QuantSpec& spec) {
  validate_spec(spec, uint32_t(w.cols()));
  if (spec.codec == Codec::F32Raw) {
    return {w, std::vector<uint8_t>(w.size(), 1)};
  }
  const QuantizedTensor qt = quantize_tensor(w, spec);
  FakeQuantResult out{dequantize_tensor(qt), std::vector<uint8_t>(w.size(), 0)};
  const float level_max = codec_level_max(spec.codec);
  const uint32_t groups_per_row = uint32_t(w.cols()) / spec.group_size;
  for (size_t r = 0; r < w.rows(); ++r) {
    for (size_t c = 0; c < w.cols(); ++c) {
      const float s = qt.scales[r * groups_per_row + c / spec.group_size];
      out.ste_mask[r * w.cols() + c] =
          std::fabs(w.at(r, c)) <= s * (level_max + 0.5f) ? 1 : 0;
    }
  }
  return out;
}

}  // namespace lobit
