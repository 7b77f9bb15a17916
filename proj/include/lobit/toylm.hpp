#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lobit/calib.hpp"
#include "lobit/distill.hpp"
#include "lobit/matrix.hpp"
#include "lobit/rng.hpp"

namespace lobit {

// Synthetic order-1 Markov corpus: per-state transition rows are
// softmax(2 * N(0,1)), the first token of each sequence is uniform.
struct CorpusSpec {
  uint32_t vocab = 32;
  uint32_t seq_len = 64;
  uint32_t train_sequences = 512;
  uint32_t eval_sequences = 128;

  bool operator==(const CorpusSpec&) const = default;
};

struct Corpus {
  CorpusSpec spec;
  std::vector<uint8_t> train;  // train_sequences * seq_len tokens, row-major
  std::vector<uint8_t> eval;
};

inline Corpus make_markov_corpus(const CorpusSpec& spec, Rng& rng) {
  if (spec.vocab < 2 || spec.vocab > 256 || spec.seq_len < 2 ||
      spec.train_sequences == 0 || spec.eval_sequences == 0) {
    throw std::invalid_argument("make_markov_corpus: invalid corpus spec");
  }
  const uint32_t v = spec.vocab;
  std::vector<double> transitions(size_t(v) * v);
  for (uint32_t s = 0; s < v; ++s) {
    double max_z = -std::numeric_limits<double>::infinity();
    std::vector<double> z(v);
    for (uint32_t t = 0; t < v; ++t) {
      z[t] = 2.0 * rng.next_gaussian();
      max_z = std::max(max_z, z[t]);
    }
    double sum = 0.0;
    for (uint32_t t = 0; t < v; ++t) {
      z[t] = std::exp(z[t] - max_z);
      sum += z[t];
    }
    for (uint32_t t = 0; t < v; ++t) transitions[size_t(s) * v + t] = z[t] / sum;
  }

  auto sample_row = [&](const double* probs) {
    const double u = rng.next_unit();
    double cdf = 0.0;
    for (uint32_t t = 0; t + 1 < v; ++t) {
      cdf += probs[t];
      if (u < cdf) return uint8_t(t);
    }
    return uint8_t(v - 1);
  };
  auto sample_sequences = [&](uint32_t count) {
    std::vector<uint8_t> seqs(size_t(count) * spec.seq_len);
    for (uint32_t i = 0; i < count; ++i) {
      uint8_t state = uint8_t(rng.next_below(v));
      seqs[size_t(i) * spec.seq_len] = state;
      for (uint32_t t = 1; t < spec.seq_len; ++t) {
        state = sample_row(&transitions[size_t(state) * v]);
        seqs[size_t(i) * spec.seq_len + t] = state;
      }
    }
    return seqs;
  };

  Corpus corpus;
  corpus.spec = spec;
  corpus.train = sample_sequences(spec.train_sequences);
  corpus.eval = sample_sequences(spec.eval_sequences);
  return corpus;
}

enum class KlMode : uint8_t { Fkl = 0, Rkl = 1, Adaptive = 2 };

inline const char* kl_mode_name(KlMode m) {
  switch (m) {
    case KlMode::Fkl: return "fkl";
    case KlMode::Rkl: return "rkl";
    case KlMode::Adaptive: return "adaptive";
  }
  throw std::invalid_argument("kl_mode_name: unknown mode");
}

// Training recipe: plain SGD, fixed batch size, fake quantization of both
// linear layers (flattened row-major, groups of 32, MSE-grid scales).
struct QatConfig {
  uint64_t seed = 0;
  int steps = 2000;
  int batch = 16;
  float learning_rate = 0.05f;
  float lambda = 1.0f;  // distillation weight
  Codec codec = Codec::Seq2;
  KlMode kl_mode = KlMode::Adaptive;
  CorpusSpec corpus{};
};

inline void validate_config(const QatConfig& cfg) {
  if (cfg.steps < 0) throw std::invalid_argument("QatConfig: steps must be >= 0");
  if (cfg.batch < 1) throw std::invalid_argument("QatConfig: batch must be >= 1");
  if (!(cfg.learning_rate > 0.0f)) {
    throw std::invalid_argument("QatConfig: learning rate must be positive");
  }
  if (!(cfg.lambda >= 0.0f)) throw std::invalid_argument("QatConfig: lambda must be >= 0");
  if (cfg.codec != Codec::Seq2 && cfg.codec != Codec::Sherry125) {
    throw std::invalid_argument("QatConfig: fake-quant codec must be seq2 or sherry125");
  }
}

// One-hidden-layer softmax language model over the previous token:
// logits = W2 * tanh(W1 * embed[prev] + b1) + b2. All parameters float32.
struct ToyLM {
  static constexpr uint32_t kVocab = 32;
  static constexpr uint32_t kEmbed = 16;
  static constexpr uint32_t kHidden = 32;

  std::vector<float> embed = std::vector<float>(kVocab * kEmbed, 0.0f);
  std::vector<float> w1 = std::vector<float>(kHidden * kEmbed, 0.0f);
  std::vector<float> b1 = std::vector<float>(kHidden, 0.0f);
  std::vector<float> w2 = std::vector<float>(kVocab * kHidden, 0.0f);
  std::vector<float> b2 = std::vector<float>(kVocab, 0.0f);

  // Near-uniform initial predictions (tiny output weights) with a healthy
  // forward signal scale so SGD converges within the default step budget.
  static ToyLM init(Rng& rng) {
    ToyLM m;
    for (float& v : m.embed) v = float(rng.next_gaussian());
    const double w1_scale = 1.0 / std::sqrt(double(kEmbed));
    for (float& v : m.w1) v = float(rng.next_gaussian() * w1_scale);
    for (float& v : m.w2) v = float(rng.next_gaussian() * 0.01);
    return m;
  }
};

namespace detail {

// Forward pass with substitutable linear-layer weights (the QAT loop passes
// the fake-quantized copies).
inline void toylm_forward(const ToyLM& m, const float* w1, const float* w2,
                          uint8_t prev, float* hidden, float* logits) {
  const float* e = m.embed.data() + size_t(prev) * ToyLM::kEmbed;
  for (uint32_t h = 0; h < ToyLM::kHidden; ++h) {
    double acc = m.b1[h];
    const float* w1_row = w1 + size_t(h) * ToyLM::kEmbed;
    for (uint32_t j = 0; j < ToyLM::kEmbed; ++j) acc += double(w1_row[j]) * double(e[j]);
    hidden[h] = float(std::tanh(acc));
  }
  for (uint32_t v = 0; v < ToyLM::kVocab; ++v) {
    double acc = m.b2[v];
    const float* w2_row = w2 + size_t(v) * ToyLM::kHidden;
    for (uint32_t h = 0; h < ToyLM::kHidden; ++h) acc += double(w2_row[h]) * double(hidden[h]);
    logits[v] = float(acc);
  }
}

inline double eval_nll(const ToyLM& m, const float* w1, const float* w2,
                       std::span<const uint8_t> seqs, uint32_t seq_len) {
  float hidden[ToyLM::kHidden];
  float logits[ToyLM::kVocab];
  double nll = 0.0;
  size_t tokens = 0;
  for (size_t s = 0; s + seq_len <= seqs.size(); s += seq_len) {
    for (uint32_t t = 1; t < seq_len; ++t) {
      toylm_forward(m, w1, w2, seqs[s + t - 1], hidden, logits);
      const auto p = softmax(std::span<const float>(logits, ToyLM::kVocab));
      nll += -std::log(std::max(p[seqs[s + t]], kProbFloor));
      ++tokens;
    }
  }
  return nll / double(tokens);
}

struct Grads {
  std::vector<double> embed, w1, b1, w2, b2;
  explicit Grads(const ToyLM& m)
      : embed(m.embed.size()), w1(m.w1.size()), b1(m.b1.size()),
        w2(m.w2.size()), b2(m.b2.size()) {}
  void zero() {
    std::fill(embed.begin(), embed.end(), 0.0);
    std::fill(w1.begin(), w1.end(), 0.0);
    std::fill(b1.begin(), b1.end(), 0.0);
    std::fill(w2.begin(), w2.end(), 0.0);
    std::fill(b2.begin(), b2.end(), 0.0);
  }
};

inline QuantSpec qat_fake_quant_spec(Codec codec) {
  return QuantSpec{codec, 32, ScaleMode::MseGrid};
}

// Flattened single-row view so group boundaries are independent of the
// layer's column count (SHERRY needs 32-weight groups; W1 has 16 columns).
inline FakeQuantResult fake_quant_flat(const std::vector<float>& w, Codec codec) {
  const Matrix flat(1, w.size(), w);
  return fake_quant_weights(flat, qat_fake_quant_spec(codec));
}

// One SGD step over a batch of sequences. When fake-quantized weights are
// supplied, gradients flow straight through to the master weights under the
// clip masks. Returns the mean token loss.
inline double sgd_step(ToyLM& m, const Corpus& corpus, Rng& rng, const QatConfig& cfg,
                       const ToyLM* teacher, const float* w1_fwd, const float* w2_fwd,
                       const uint8_t* mask1, const uint8_t* mask2, Grads& grads) {
  constexpr uint32_t kV = ToyLM::kVocab;
  constexpr uint32_t kH = ToyLM::kHidden;
  constexpr uint32_t kE = ToyLM::kEmbed;
  const uint32_t seq_len = corpus.spec.seq_len;
  const size_t tokens = size_t(cfg.batch) * (seq_len - 1);

  grads.zero();
  float hidden[kH], logits[kV], t_hidden[kH], t_logits[kV];
  double dz[kV], dh[kH];
  double batch_loss = 0.0;

  for (int b = 0; b < cfg.batch; ++b) {
    const uint32_t seq = rng.next_below(corpus.spec.train_sequences);
    const uint8_t* s = corpus.train.data() + size_t(seq) * seq_len;
    for (uint32_t t = 1; t < seq_len; ++t) {
      const uint8_t prev = s[t - 1];
      const uint8_t next = s[t];
      toylm_forward(m, w1_fwd, w2_fwd, prev, hidden, logits);
      const auto ps = softmax(std::span<const float>(logits, kV));

      batch_loss += -std::log(std::max(ps[next], kProbFloor));
      for (uint32_t v = 0; v < kV; ++v) dz[v] = ps[v];
      dz[next] -= 1.0;

      if (teacher != nullptr && cfg.lambda > 0.0f) {
        toylm_forward(*teacher, teacher->w1.data(), teacher->w2.data(), prev,
                      t_hidden, t_logits);
        const TokenDist pt = softmax_dist(std::span<const float>(t_logits, kV));
        KlResult kl;
        switch (cfg.kl_mode) {
          case KlMode::Fkl: kl = forward_kl(pt, std::span<const float>(logits, kV)); break;
          case KlMode::Rkl: kl = reverse_kl(pt, std::span<const float>(logits, kV)); break;
          case KlMode::Adaptive: kl = adaptive_kl(pt, std::span<const float>(logits, kV)); break;
        }
        batch_loss += double(cfg.lambda) * kl.loss;
        for (uint32_t v = 0; v < kV; ++v) dz[v] += double(cfg.lambda) * kl.grad[v];
      }

      for (uint32_t v = 0; v < kV; ++v) {
        grads.b2[v] += dz[v];
        double* w2_grad = grads.w2.data() + size_t(v) * kH;
        for (uint32_t h = 0; h < kH; ++h) w2_grad[h] += dz[v] * double(hidden[h]);
      }
      for (uint32_t h = 0; h < kH; ++h) {
        double acc = 0.0;
        for (uint32_t v = 0; v < kV; ++v) acc += dz[v] * double(w2_fwd[size_t(v) * kH + h]);
        dh[h] = acc * (1.0 - double(hidden[h]) * double(hidden[h]));
      }
      const float* e = m.embed.data() + size_t(prev) * kE;
      double* e_grad = grads.embed.data() + size_t(prev) * kE;
      for (uint32_t h = 0; h < kH; ++h) {
        grads.b1[h] += dh[h];
        double* w1_grad = grads.w1.data() + size_t(h) * kE;
        const float* w1_row = w1_fwd + size_t(h) * kE;
        for (uint32_t j = 0; j < kE; ++j) {
          w1_grad[j] += dh[h] * double(e[j]);
          e_grad[j] += dh[h] * double(w1_row[j]);
        }
      }
    }
  }

  const double lr = double(cfg.learning_rate) / double(tokens);
  for (size_t i = 0; i < m.embed.size(); ++i) m.embed[i] = float(m.embed[i] - lr * grads.embed[i]);
  for (size_t i = 0; i < m.w1.size(); ++i) {
    if (mask1 == nullptr || mask1[i]) m.w1[i] = float(m.w1[i] - lr * grads.w1[i]);
  }
  for (size_t i = 0; i < m.b1.size(); ++i) m.b1[i] = float(m.b1[i] - lr * grads.b1[i]);
  for (size_t i = 0; i < m.w2.size(); ++i) {
    if (mask2 == nullptr || mask2[i]) m.w2[i] = float(m.w2[i] - lr * grads.w2[i]);
  }
  for (size_t i = 0; i < m.b2.size(); ++i) m.b2[i] = float(m.b2[i] - lr * grads.b2[i]);
  return batch_loss / double(tokens);
}

}  // namespace detail

// exp(mean token negative log-likelihood), natural log, over full sequences.
inline double perplexity(const ToyLM& m, std::span<const uint8_t> seqs, uint32_t seq_len) {
  if (seqs.empty() || seq_len < 2 || seqs.size() % seq_len != 0) {
    throw std::invalid_argument("perplexity: corpus must be non-empty whole sequences");
  }
  return std::exp(detail::eval_nll(m, m.w1.data(), m.w2.data(), seqs, seq_len));
}

// Full-precision teacher: cross-entropy SGD on the seeded corpus.
inline ToyLM train_teacher(const QatConfig& cfg) {
  validate_config(cfg);
  if (cfg.corpus.vocab != ToyLM::kVocab) {
    throw std::invalid_argument("train_teacher: corpus vocab must match model");
  }
  Rng rng(cfg.seed);
  const Corpus corpus = make_markov_corpus(cfg.corpus, rng);
  ToyLM m = ToyLM::init(rng);
  detail::Grads grads(m);
  for (int step = 0; step < cfg.steps; ++step) {
    detail::sgd_step(m, corpus, rng, cfg, nullptr, m.w1.data(), m.w2.data(), nullptr,
                     nullptr, grads);
  }
  return m;
}

struct QatReport {
  double teacher_ppl = 0.0;
  double ptq_ppl = 0.0;  // quantized teacher, no training
  double qat_ppl = 0.0;  // quantization-aware trained student
  bool qat_beats_ptq = false;
};

// Distillation QAT: student starts from the teacher, every step re-quantizes
// both linear layers for the forward pass, and the loss is
// CE + lambda * KL(teacher || student) averaged over batch tokens.
inline std::pair<ToyLM, QatReport> train_student_qat(const QatConfig& cfg,
                                                     const ToyLM& teacher) {
  validate_config(cfg);
  if (cfg.corpus.vocab != ToyLM::kVocab) {
    throw std::invalid_argument("train_student_qat: corpus vocab must match model");
  }
  Rng rng(cfg.seed);
  const Corpus corpus = make_markov_corpus(cfg.corpus, rng);

  QatReport report;
  report.teacher_ppl = perplexity(teacher, corpus.eval, cfg.corpus.seq_len);

  ToyLM ptq = teacher;
  ptq.w1 = detail::fake_quant_flat(teacher.w1, cfg.codec).weights.data();
  ptq.w2 = detail::fake_quant_flat(teacher.w2, cfg.codec).weights.data();
  report.ptq_ppl = perplexity(ptq, corpus.eval, cfg.corpus.seq_len);

  ToyLM student = teacher;
  detail::Grads grads(student);
  for (int step = 0; step < cfg.steps; ++step) {
    const auto fq1 = detail::fake_quant_flat(student.w1, cfg.codec);
    const auto fq2 = detail::fake_quant_flat(student.w2, cfg.codec);
    detail::sgd_step(student, corpus, rng, cfg, &teacher,
                     fq1.weights.data().data(), fq2.weights.data().data(),
                     fq1.ste_mask.data(), fq2.ste_mask.data(), grads);
  }

  ToyLM deployed = student;
  deployed.w1 = detail::fake_quant_flat(student.w1, cfg.codec).weights.data();
  deployed.w2 = detail::fake_quant_flat(student.w2, cfg.codec).weights.data();
  report.qat_ppl = perplexity(deployed, corpus.eval, cfg.corpus.seq_len);
  report.qat_beats_ptq = report.qat_ppl <= report.ptq_ppl;
  return {std::move(deployed), report};
}

// Add-one-smoothed unigram perplexity of the eval split under train counts;
// the baseline any trained model must beat.
inline double unigram_perplexity(const Corpus& corpus) {
  const uint32_t v = corpus.spec.vocab;
  std::vector<double> counts(v, 1.0);
  for (uint8_t t : corpus.train) counts[t] += 1.0;
  double total = 0.0;
  for (double c : counts) total += c;
  double nll = 0.0;
  size_t tokens = 0;
  const uint32_t seq_len = corpus.spec.seq_len;
  for (size_t s = 0; s + seq_len <= corpus.eval.size(); s += seq_len) {
    for (uint32_t t = 1; t < seq_len; ++t) {
      nll += -std::log(counts[corpus.eval[s + t]] / total);
      ++tokens;
    }
  }
  return std::exp(nll / double(tokens));
}

}  // namespace lobit
