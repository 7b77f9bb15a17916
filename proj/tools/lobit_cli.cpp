// lobit command-line front end.
//
// Subcommands: quantize, dequantize, verify, inspect, bench, qat-demo, gen.
// Every human-readable table is paired with one machine-readable key=value
// line per record. Exit codes: 0 success, 1 usage, 2 format/IO error,
// 3 verification or property failure.

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lobit/lobit.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFormat = 2;
constexpr int kExitVerify = 3;

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw lobit::FormatError("cannot open '" + path + "' for reading");
  }
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw lobit::FormatError("read failed for '" + path + "'");
  }
  return bytes;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw lobit::FormatError("cannot open '" + path + "' for writing");
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) {
    throw lobit::FormatError("write failed for '" + path + "'");
  }
}

lobit::Codec parse_codec(const std::string& name) {
  for (lobit::Codec c : {lobit::Codec::F32Raw, lobit::Codec::Sherry125,
                         lobit::Codec::Seq2, lobit::Codec::Int4, lobit::Codec::Int8}) {
    if (name == lobit::codec_name(c)) return c;
  }
  throw CLI::ValidationError("--codec", "unknown codec '" + name + "'");
}

lobit::ScaleMode parse_scale_mode(const std::string& name) {
  if (name == "absmax") return lobit::ScaleMode::AbsMax;
  if (name == "mse") return lobit::ScaleMode::MseGrid;
  throw CLI::ValidationError("--scale-mode", "unknown scale mode '" + name + "'");
}

lobit::KlMode parse_kl_mode(const std::string& name) {
  if (name == "fkl") return lobit::KlMode::Fkl;
  if (name == "rkl") return lobit::KlMode::Rkl;
  if (name == "adaptive") return lobit::KlMode::Adaptive;
  throw CLI::ValidationError("--kl-mode", "unknown kl mode '" + name + "'");
}

void print_metrics_header() {
  std::printf("%-16s %-10s %-12s %6s %12s %12s %10s %10s %8s\n", "tensor", "codec",
              "shape", "group", "mse", "max_abs", "sqnr_db", "zero_frac", "bits/w");
}

void print_metrics_row(const std::string& name, const lobit::QuantizedTensor& qt,
                       const lobit::ErrorMetrics& m) {
  char shape[32];
  std::snprintf(shape, sizeof shape, "%ux%u", qt.rows, qt.cols);
  const uint32_t group = qt.spec.codec == lobit::Codec::F32Raw ? 0 : qt.spec.group_size;
  std::printf("%-16s %-10s %-12s %6u %12.6g %12.6g %10.4g %10.6g %8.4g\n", name.c_str(),
              lobit::codec_name(qt.spec.codec), shape, group, m.mse, m.max_abs,
              m.sqnr_db, m.zero_fraction, m.bits_per_weight);
  std::printf(
      "tensor=%s codec=%s rows=%u cols=%u group_size=%u mse=%.9g max_abs=%.9g "
      "sqnr_db=%.9g zero_fraction=%.9g bits_per_weight=%.9g\n",
      name.c_str(), lobit::codec_name(qt.spec.codec), qt.rows, qt.cols, group, m.mse,
      m.max_abs, m.sqnr_db, m.zero_fraction, m.bits_per_weight);
}

int cmd_quantize(const std::string& input, const std::string& output,
                 const std::string& codec, uint32_t group_size,
                 const std::string& scale_mode) {
  lobit::QuantSpec spec;
  spec.codec = parse_codec(codec);
  spec.group_size = spec.codec == lobit::Codec::F32Raw ? 0 : group_size;
  spec.scale_mode = parse_scale_mode(scale_mode);

  const auto tensors = lobit::read_rwf(read_file(input));
  std::vector<lobit::NamedQuantizedTensor> quantized;
  quantized.reserve(tensors.size());
  print_metrics_header();
  for (const auto& [name, m] : tensors) {
    lobit::QuantizedTensor qt = lobit::quantize_tensor(m, spec);
    print_metrics_row(name, qt, lobit::error_report(m, qt));
    quantized.emplace_back(name, std::move(qt));
  }
  write_file(output, lobit::write_tqf(quantized));
  return kExitOk;
}

int cmd_dequantize(const std::string& input, const std::string& output) {
  const auto tensors = lobit::read_tqf(read_file(input));
  std::vector<lobit::NamedMatrix> dense;
  dense.reserve(tensors.size());
  for (const auto& [name, qt] : tensors) {
    dense.emplace_back(name, lobit::dequantize_tensor(qt));
  }
  write_file(output, lobit::write_rwf(dense));
  std::printf("dequantized %zu tensors to %s\n", dense.size(), output.c_str());
  return kExitOk;
}

int cmd_verify(const std::string& input, const std::string& against, double max_mse,
               bool has_max_mse) {
  const auto quantized = lobit::read_tqf(read_file(input));
  const auto reference = lobit::read_rwf(read_file(against));
  if (quantized.size() != reference.size()) {
    throw lobit::FormatError("tensor count mismatch: " + std::to_string(quantized.size()) +
                             " quantized vs " + std::to_string(reference.size()) +
                             " reference");
  }

  bool ok = true;
  print_metrics_header();
  for (size_t i = 0; i < quantized.size(); ++i) {
    const auto& [qname, qt] = quantized[i];
    const auto& [rname, ref] = reference[i];
    if (qname != rname) {
      throw lobit::FormatError("tensor name mismatch at index " + std::to_string(i) +
                               ": '" + qname + "' vs '" + rname + "'");
    }
    if (qt.rows != ref.rows() || qt.cols != ref.cols()) {
      throw lobit::FormatError("tensor '" + qname + "': shape mismatch");
    }
    const lobit::ErrorMetrics m = lobit::error_report(ref, qt);
    print_metrics_row(qname, qt, m);

    bool tensor_ok = true;
    if (has_max_mse && m.mse > max_mse) {
      std::printf("FAIL %s: mse %.9g exceeds --max-mse %.9g\n", qname.c_str(), m.mse,
                  max_mse);
      tensor_ok = false;
    }
    if (qt.spec.codec == lobit::Codec::Sherry125) {
      if (m.zero_fraction != 0.25) {
        std::printf("FAIL %s: zero_fraction %.9g != 0.25\n", qname.c_str(),
                    m.zero_fraction);
        tensor_ok = false;
      }
      const lobit::Matrix deq = lobit::dequantize_tensor(qt);
      for (size_t r = 0; tensor_ok && r < deq.rows(); ++r) {
        for (size_t c = 0; tensor_ok && c + 4 <= deq.cols(); c += 4) {
          int zeros = 0;
          for (size_t k = 0; k < 4; ++k) {
            if (deq.at(r, c + k) == 0.0f) ++zeros;
          }
          if (zeros != 1) {
            std::printf("FAIL %s: block (%zu, %zu) has %d zeros, want 1\n", qname.c_str(),
                        r, c, zeros);
            tensor_ok = false;
          }
        }
      }
    }
    ok = ok && tensor_ok;
  }
  std::printf("verify=%s tensors=%zu\n", ok ? "pass" : "fail", quantized.size());
  return ok ? kExitOk : kExitVerify;
}

int cmd_inspect(const std::string& path) {
  std::fputs(lobit::inspect(read_file(path)).c_str(), stdout);
  return kExitOk;
}

int cmd_bench(const std::string& input, int iters, uint64_t seed) {
  const auto tensors = lobit::read_tqf(read_file(input));
  lobit::Rng rng(seed);
  std::printf("%-16s %-10s %14s %18s %18s %22s\n", "tensor", "codec", "ns_per_matvec",
              "code_bytes_touched", "weights_per_sec", "bytes_per_weight");
  for (const auto& [name, qt] : tensors) {
    const lobit::BenchReport r = lobit::bench_matvec(qt, iters, rng);
    std::printf("%-16s %-10s %14.0f %18" PRIu64 " %18.4g %22.6g\n", name.c_str(),
                lobit::codec_name(qt.spec.codec), r.ns_per_matvec, r.code_bytes_touched,
                r.weights_per_second, r.bytes_per_weight_touched);
    std::printf(
        "tensor=%s codec=%s iters=%d ns_per_matvec=%.9g code_bytes_touched=%" PRIu64
        " weights_per_second=%.9g bytes_per_weight_touched=%.9g\n",
        name.c_str(), lobit::codec_name(qt.spec.codec), iters, r.ns_per_matvec,
        r.code_bytes_touched, r.weights_per_second, r.bytes_per_weight_touched);
  }
  return kExitOk;
}

int cmd_qat_demo(uint64_t seed, int steps, const std::string& codec,
                 const std::string& kl_mode, float lambda) {
  lobit::QatConfig cfg;
  cfg.seed = seed;
  cfg.steps = steps;
  cfg.lambda = lambda;
  cfg.codec = parse_codec(codec);
  cfg.kl_mode = parse_kl_mode(kl_mode);

  const lobit::ToyLM teacher = lobit::train_teacher(cfg);
  const auto [student, report] = lobit::train_student_qat(cfg, teacher);
  (void)student;

  std::printf("%-22s %12s\n", "model", "eval_ppl");
  std::printf("%-22s %12.6f\n", "teacher (fp32)", report.teacher_ppl);
  std::printf("%-22s %12.6f\n", "ptq student", report.ptq_ppl);
  std::printf("%-22s %12.6f\n", "qat student", report.qat_ppl);
  std::printf("qat <= ptq: %s\n", report.qat_beats_ptq ? "pass" : "fail");
  std::printf(
      "seed=%" PRIu64 " steps=%d codec=%s kl_mode=%s lambda=%.9g teacher_ppl=%.9g "
      "ptq_ppl=%.9g qat_ppl=%.9g qat_beats_ptq=%d\n",
      seed, steps, lobit::codec_name(cfg.codec), lobit::kl_mode_name(cfg.kl_mode),
      double(lambda), report.teacher_ppl, report.ptq_ppl, report.qat_ppl,
      int(report.qat_beats_ptq));
  return report.qat_beats_ptq ? kExitOk : kExitVerify;
}

int cmd_gen(const std::string& output, uint32_t rows, uint32_t cols, uint32_t tensors,
            uint64_t seed, float sigma) {
  lobit::Rng rng(seed);
  std::vector<lobit::NamedMatrix> out;
  out.reserve(tensors);
  for (uint32_t i = 0; i < tensors; ++i) {
    out.emplace_back("w" + std::to_string(i), lobit::gaussian_matrix(rng, rows, cols, sigma));
  }
  write_file(output, lobit::write_rwf(out));
  std::printf("wrote %u %ux%u gaussian tensors to %s\n", tensors, rows, cols,
              output.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ultra-low-bit weight quantization toolkit"};
  app.require_subcommand(1);

  std::string input, output, against, path;
  std::string codec = "sherry125";
  std::string qat_codec = "seq2";
  std::string scale_mode = "mse";
  std::string kl_mode = "adaptive";
  uint32_t group_size = 128;
  uint64_t seed = 0;
  int iters = 100;
  int steps = 2000;
  float lambda = 1.0f;
  double max_mse = 0.0;
  uint32_t rows = 128, cols = 128, tensors = 1;
  float sigma = 1.0f;

  auto* quantize = app.add_subcommand("quantize", "quantize an RWF file into a TQF file");
  quantize->add_option("--input", input, "input RWF path")->required();
  quantize->add_option("--output", output, "output TQF path")->required();
  quantize->add_option("--codec", codec, "f32raw|sherry125|seq2|int4|int8");
  quantize->add_option("--group-size", group_size, "weights per scale group");
  quantize->add_option("--scale-mode", scale_mode, "absmax|mse");

  auto* dequantize = app.add_subcommand("dequantize", "reconstruct dense weights from a TQF file");
  dequantize->add_option("--input", input, "input TQF path")->required();
  dequantize->add_option("--output", output, "output RWF path")->required();

  auto* verify = app.add_subcommand("verify", "check a TQF file against its RWF source");
  verify->add_option("--input", input, "input TQF path")->required();
  verify->add_option("--against", against, "reference RWF path")->required();
  auto* max_mse_opt = verify->add_option("--max-mse", max_mse, "fail any tensor above this mse");

  auto* inspect = app.add_subcommand("inspect", "summarize an RWF or TQF file");
  inspect->add_option("path", path, "file to inspect")->required();

  auto* bench = app.add_subcommand("bench", "time packed matvec on each tensor");
  bench->add_option("--input", input, "input TQF path")->required();
  bench->add_option("--iters", iters, "matvec repetitions per tensor");
  bench->add_option("--seed", seed, "input vector seed");

  auto* qat = app.add_subcommand("qat-demo", "train teacher, PTQ and QAT students; report perplexities");
  qat->add_option("--seed", seed, "corpus and training seed");
  qat->add_option("--steps", steps, "SGD steps for teacher and student");
  qat->add_option("--codec", qat_codec, "seq2|sherry125");
  qat->add_option("--kl-mode", kl_mode, "fkl|rkl|adaptive");
  qat->add_option("--lambda", lambda, "distillation loss weight");

  auto* gen = app.add_subcommand("gen", "write a synthetic gaussian RWF file");
  gen->add_option("--output", output, "output RWF path")->required();
  gen->add_option("--rows", rows, "tensor rows");
  gen->add_option("--cols", cols, "tensor cols");
  gen->add_option("--tensors", tensors, "tensor count");
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--sigma", sigma, "gaussian standard deviation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (quantize->parsed()) return cmd_quantize(input, output, codec, group_size, scale_mode);
    if (dequantize->parsed()) return cmd_dequantize(input, output);
    if (verify->parsed()) return cmd_verify(input, against, max_mse, max_mse_opt->count() > 0);
    if (inspect->parsed()) return cmd_inspect(path);
    if (bench->parsed()) return cmd_bench(input, iters, seed);
    if (qat->parsed()) return cmd_qat_demo(seed, steps, qat_codec, kl_mode, lambda);
    if (gen->parsed()) return cmd_gen(output, rows, cols, tensors, seed, sigma);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const lobit::FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitFormat;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFormat;
  }
  return kExitUsage;
}
