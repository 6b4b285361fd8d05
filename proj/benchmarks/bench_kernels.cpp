// Compares sentence-NLL throughput of the serial double-precision reference,
// the production kernels on one thread, and the production kernels across the
// OpenMP batch loop, and checks that the routes agree.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "lookuplm/model.hpp"
#include "lookuplm/reference_model.hpp"
#include "lookuplm/rng.hpp"

using namespace lookuplm;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::vector<std::vector<int>> random_sentences(const ModelConfig& cfg, int count, int max_words,
                                               UniformRng& rng) {
  std::vector<std::vector<int>> out;
  for (int i = 0; i < count; ++i) {
    std::vector<int> seq = {kBosId};
    const int words = 3 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(max_words)));
    for (int w = 0; w < words; ++w) {
      seq.push_back(kNumReservedIds +
                    static_cast<int>(rng.next_below(
                        static_cast<std::uint64_t>(cfg.vocab_size - kNumReservedIds))));
    }
    seq.push_back(kEosId);
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 64;
  cfg.input_dim = 32;
  cfg.vocab_size = 2000;
  cfg.order = 4;
  cfg.table_rows = 4096;
  cfg.table_dim = 32;
  cfg.injection = Injection::kEveryLayer;
  int sentences = 400;
  if (argc > 1) sentences = std::stoi(argv[1]);
  if (argc > 2) cfg.hidden = std::stoi(argv[2]);
  if (argc > 3) cfg.vocab_size = std::stoi(argv[3]);

  const DenseParams params = DenseParams::init(cfg, 7);
  std::vector<EmbeddingTable> tables;
  for (int s = 0; s < cfg.injected_layers(); ++s) {
    tables.push_back(EmbeddingTable::create(cfg.table_rows,
                                            static_cast<std::uint32_t>(cfg.table_dim), 0.05f,
                                            100 + static_cast<std::uint64_t>(s)));
  }
  const TableSetView view{&cfg, tables};

  UniformRng rng(42);
  const auto seqs = random_sentences(cfg, sentences, 12, rng);
  std::int64_t tokens = 0;
  for (const auto& s : seqs) tokens += static_cast<std::int64_t>(s.size()) - 1;

  // Serial reference, double precision.
  const DenseParamsT<double> ref_params = to_double(params);
  const BasicTableSetT<double> ref_tables = to_double_tables(cfg, tables);
  double t0 = now_seconds();
  double ref_nll = 0.0;
  for (const auto& seq : seqs) {
    ref_nll += reference::total_nll(ref_params, cfg, ref_tables, seq);
  }
  const double ref_time = now_seconds() - t0;

  // Production kernels, one thread; per-sentence sums so the reduction
  // grouping matches the parallel run exactly.
  std::vector<double> serial_sentence(seqs.size(), 0.0);
  t0 = now_seconds();
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    double sum = 0.0;
    for (double x : sequence_nll(params, cfg, view, seqs[i])) sum += x;
    serial_sentence[i] = sum;
  }
  const double serial_time = now_seconds() - t0;
  double serial_nll = 0.0;
  for (double x : serial_sentence) serial_nll += x;

  // Production kernels, OpenMP over sentences, reduced in input order.
  std::vector<double> per_sentence(seqs.size(), 0.0);
  t0 = now_seconds();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(seqs.size()); ++i) {
    double sum = 0.0;
    for (double x : sequence_nll(params, cfg, view, seqs[static_cast<std::size_t>(i)])) sum += x;
    per_sentence[static_cast<std::size_t>(i)] = sum;
  }
  const double parallel_time = now_seconds() - t0;
  double parallel_nll = 0.0;
  for (double x : per_sentence) parallel_nll += x;

  std::printf("threads=%d sentences=%d tokens=%lld hidden=%d vocab=%lld\n",
              omp_get_max_threads(), sentences, static_cast<long long>(tokens), cfg.hidden,
              static_cast<long long>(cfg.vocab_size));
  std::printf("%-22s %10.3fs %12.0f tok/s\n", "reference (serial f64)", ref_time,
              tokens / ref_time);
  std::printf("%-22s %10.3fs %12.0f tok/s  speedup %.2fx\n", "production (serial)", serial_time,
              tokens / serial_time, ref_time / serial_time);
  std::printf("%-22s %10.3fs %12.0f tok/s  speedup %.2fx\n", "production (openmp)",
              parallel_time, tokens / parallel_time, ref_time / parallel_time);
  std::printf("total nll: reference=%.6f serial=%.6f parallel=%.6f\n", ref_nll, serial_nll,
              parallel_nll);

  const double drift = std::abs(ref_nll - serial_nll) / std::abs(ref_nll);
  const bool parallel_matches = serial_nll == parallel_nll;
  std::printf("reference drift=%.2e parallel_bitwise_match=%s\n", drift,
              parallel_matches ? "yes" : "no");
  return drift < 1e-4 && parallel_matches ? 0 : 1;
}
