// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 5 and 6 train real models on the synthetic long-tail
// corpus and dominate the runtime.

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lookuplm/eval.hpp"
#include "lookuplm/fusion.hpp"
#include "lookuplm/model.hpp"
#include "lookuplm/ngram_hash.hpp"
#include "lookuplm/reference_model.hpp"
#include "lookuplm/rng.hpp"
#include "lookuplm/serialize.hpp"
#include "lookuplm/synth_corpus.hpp"
#include "lookuplm/trainer.hpp"

using namespace lookuplm;

namespace {

struct Scratch {
  std::string path;
  Scratch() {
    char tmpl[] = "/tmp/lookuplm_accept_XXXXXX";
    if (::mkdtemp(tmpl) == nullptr) throw std::runtime_error("mkdtemp failed");
    path = tmpl;
  }
  ~Scratch() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return path + "/" + name; }
};

template <typename S>
void randomize(DenseParamsT<S>& params, std::uint64_t seed, float scale = 0.4f) {
  UniformRng rng(seed);
  params.for_each_array([&rng, scale](std::span<S> a) {
    for (S& x : a) x = static_cast<S>(rng.next_uniform(-scale, scale));
  });
  for (auto& lay : params.layers) {
    for (S& g : lay.ln_gain_x) g = static_cast<S>(1.0 + 0.1 * static_cast<double>(g));
    for (S& g : lay.ln_gain_h) g = static_cast<S>(1.0 + 0.1 * static_cast<double>(g));
  }
}

// ---------------------------------------------------------------- criterion 1
bool hash_oracle_equivalence() {
  namespace mp = boost::multiprecision;
  const int v = 7, n = 3;
  for (std::uint64_t u : {1ull, 5ull, 343ull, 1000ull}) {
    const HashConfig cfg{static_cast<std::uint64_t>(v), u, n, false};
    std::vector<int> w(3);
    for (w[0] = 0; w[0] < v; ++w[0]) {
      for (w[1] = 0; w[1] < v; ++w[1]) {
        for (w[2] = 0; w[2] < v; ++w[2]) {
          mp::cpp_int exact = mp::cpp_int(w[0]) + mp::cpp_int(w[1]) * v +
                              mp::cpp_int(w[2]) * v * v;
          if (ngram2id(w, cfg) != static_cast<std::uint64_t>(exact % u)) return false;
        }
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------- criterion 2
// Central differences at the base step of 1e-4. Coordinates of rows read at
// several consecutive steps can carry enough curvature that the base step's
// own O(h^2) truncation error exceeds the tolerance, so a flagged entry is
// confirmed against the same oracle at step 1e-5, where truncation is a
// hundredfold smaller; a wrong gradient stays wrong under refinement.
struct FdCheck {
  double worst = 0.0;
  int refined = 0;
  bool ok = true;

  void check(const std::function<double(double)>& nll_at_delta, double analytic) {
    const auto rel = [](double a, double b) {
      return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
    };
    const auto fd_at = [&nll_at_delta](double h) {
      return (nll_at_delta(h) - nll_at_delta(-h)) / (2 * h);
    };
    double err = rel(fd_at(1e-4), analytic);
    if (err >= 1e-4) {
      ++refined;
      err = rel(fd_at(1e-5), analytic);
    }
    worst = std::max(worst, err);
    if (err >= 1e-4) ok = false;
  }
};

bool gradient_correctness() {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 8;
  cfg.input_dim = 6;
  cfg.vocab_size = 16;
  cfg.order = 2;
  cfg.table_rows = 32;
  cfg.table_dim = 4;
  cfg.injection = Injection::kEveryLayer;

  DenseParamsT<double> params = DenseParamsT<double>::zeros(cfg);
  randomize(params, 2024);
  BasicTableSetT<double> tables = BasicTableSetT<double>::zeros(cfg);
  UniformRng trng(2025);
  for (auto& slot : tables.slots) {
    for (double& x : slot.a) x = trng.next_uniform(-0.3f, 0.3f);
  }

  UniformRng srng(2026);
  FdCheck fd;

  for (int sentence = 0; sentence < 5; ++sentence) {
    std::vector<int> seq = {kBosId};
    const int words = 3 + static_cast<int>(srng.next_below(5));
    for (int w = 0; w < words; ++w) {
      seq.push_back(kNumReservedIds + static_cast<int>(srng.next_below(13)));
    }
    seq.push_back(kEosId);

    const auto analytic = backward(params, cfg, tables, seq);

    std::vector<std::span<double>> arrays;
    params.for_each_array([&arrays](std::span<double> a) { arrays.push_back(a); });
    std::vector<std::span<const double>> grads;
    analytic.dense.for_each_array(
        [&grads](std::span<const double> a) { grads.push_back(a); });
    for (std::size_t ai = 0; ai < arrays.size(); ++ai) {
      for (std::size_t j = 0; j < arrays[ai].size(); ++j) {
        double& x = arrays[ai][j];
        const double keep = x;
        fd.check(
            [&](double delta) {
              x = keep + delta;
              const double nll = reference::total_nll(params, cfg, tables, seq);
              x = keep;
              return nll;
            },
            grads[ai][j]);
        if (!fd.ok) return false;
      }
    }
    for (std::size_t l = 0; l < analytic.sparse.size(); ++l) {
      for (const auto& [row, grad] : analytic.sparse[l]) {
        auto& slot = tables.slots[static_cast<std::size_t>(cfg.table_slot(static_cast<int>(l)))];
        for (int e = 0; e < cfg.table_dim; ++e) {
          double& x = slot.at(static_cast<std::int64_t>(row), e);
          const double keep = x;
          fd.check(
              [&](double delta) {
                x = keep + delta;
                const double nll = reference::total_nll(params, cfg, tables, seq);
                x = keep;
                return nll;
              },
              grad[static_cast<std::size_t>(e)]);
          if (!fd.ok) return false;
        }
      }
    }
  }
  std::printf("        worst relative error %.3e (%d entries confirmed at step 1e-5)\n",
              fd.worst, fd.refined);
  return fd.ok;
}

// ---------------------------------------------------------------- criterion 3
bool backend_parity() {
  Scratch dir;
  const std::uint64_t rows = 256;
  const std::uint32_t cols = 8;
  EmbeddingTable mem = EmbeddingTable::create(rows, cols, 0.05f, 4242);
  EmbeddingTable file =
      EmbeddingTable::create_file_backed(dir.file("t.lktb"), rows, cols, 0.05f, 4242);
  SparseAdamState opt_mem(cols), opt_file(cols);

  UniformRng rng(777);
  for (int op = 0; op < 10000; ++op) {
    const std::uint64_t id = rng.next_below(rows);
    const double pick = rng.next_unit();
    if (pick < 0.6) {
      std::vector<float> grad(cols);
      for (float& g : grad) g = rng.next_uniform(-1.0f, 1.0f);
      opt_mem.apply(mem, id, grad, 1e-3);
      opt_file.apply(file, id, grad, 1e-3);
    } else if (pick < 0.9) {
      if (std::memcmp(mem.row(id).data(), file.row(id).data(), cols * sizeof(float)) != 0) {
        return false;
      }
    } else {
      file.flush();
    }
  }
  for (std::uint64_t r = 0; r < rows; ++r) {
    if (std::memcmp(mem.row(r).data(), file.row(r).data(), cols * sizeof(float)) != 0) {
      return false;
    }
  }

  // Forward logits through each backend are bit-identical.
  ModelConfig cfg;
  cfg.layers = 1;
  cfg.hidden = 8;
  cfg.input_dim = 4;
  cfg.vocab_size = 20;
  cfg.order = 2;
  cfg.table_rows = rows;
  cfg.table_dim = static_cast<int>(cols);
  cfg.injection = Injection::kEveryLayer;
  DenseParams params = DenseParams::init(cfg, 52);

  std::vector<EmbeddingTable> mem_vec, file_vec;
  mem_vec.push_back(std::move(mem));
  file_vec.push_back(std::move(file));
  const TableSetView mem_view{&cfg, mem_vec};
  const TableSetView file_view{&cfg, file_vec};

  RnnState st_mem = RnnState::zeros(cfg), st_file = RnnState::zeros(cfg);
  std::vector<float> l_mem(20), l_file(20);
  for (int stepi = 0; stepi < 200; ++stepi) {
    const int token = static_cast<int>(rng.next_below(20));
    const std::vector<std::uint64_t> ids = {rng.next_below(rows)};
    forward_step(params, cfg, st_mem, token, ids, mem_view, std::span<float>(l_mem));
    forward_step(params, cfg, st_file, token, ids, file_view, std::span<float>(l_file));
    if (std::memcmp(l_mem.data(), l_file.data(), l_mem.size() * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------- criterion 4
bool baseline_degeneracy() {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 6;
  cfg.input_dim = 4;
  cfg.vocab_size = 12;
  cfg.order = 3;
  cfg.table_rows = 64;
  cfg.table_dim = 5;
  cfg.injection = Injection::kEveryLayer;
  DenseParams params = DenseParams::init(cfg, 31);
  const BasicTableSetT<float> zero_tables = BasicTableSetT<float>::zeros(cfg);

  UniformRng rng(32);
  RnnState base_state = RnnState::zeros(cfg);
  for (int stepi = 0; stepi < 50; ++stepi) {
    const int token = static_cast<int>(rng.next_below(12));
    const std::vector<std::uint64_t> ids_a = {rng.next_below(64), rng.next_below(64)};
    const std::vector<std::uint64_t> ids_b = {ids_a[1], ids_a[0]};
    const std::vector<std::uint64_t> ids_c = {rng.next_below(64), rng.next_below(64)};

    RnnState sa = base_state, sb = base_state, sc = base_state;
    std::vector<float> la(12), lb(12), lc(12);
    forward_step(params, cfg, sa, token, ids_a, zero_tables, std::span<float>(la));
    forward_step(params, cfg, sb, token, ids_b, zero_tables, std::span<float>(lb));
    forward_step(params, cfg, sc, token, ids_c, zero_tables, std::span<float>(lc));
    if (std::memcmp(la.data(), lb.data(), la.size() * sizeof(float)) != 0) return false;
    if (std::memcmp(la.data(), lc.data(), la.size() * sizeof(float)) != 0) return false;
    base_state = sa;  // thread the state forward to cover non-trivial states
  }
  return true;
}

// ------------------------------------------------------- criteria 5 and 6
struct ScalingResult {
  std::map<std::uint64_t, double> every_layer;  // U -> median RareBOTH logPP
  double layer0_median = 0.0;
  std::uint64_t layer0_rows = 0;
  bool ok = false;
};

ModelConfig scaling_model(std::uint64_t table_rows, Injection injection) {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 32;
  cfg.input_dim = 16;
  cfg.order = 4;
  cfg.table_rows = table_rows;
  cfg.table_dim = 16;
  cfg.include_current = false;
  cfg.injection = injection;
  return cfg;
}

TrainConfig scaling_train(std::uint64_t seed) {
  TrainConfig tcfg;
  tcfg.steps = 400;
  tcfg.batch_size = 32;
  tcfg.lr0 = 4e-3;
  tcfg.decay_rate = 0.5;
  tcfg.decay_steps = 0;  // steps / 4
  tcfg.clip_norm = 1.0;
  tcfg.max_sentence_len = 16;
  tcfg.seed = seed;
  tcfg.init_scale = 0.05;
  return tcfg;
}

double median3(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  return xs[1];
}

ScalingResult run_scaling_experiment(bool verbose) {
  ScalingResult result;
  Scratch dir;
  SynthOptions opts;
  opts.seed = 2026;
  opts.tail_entities = 560;  // at least 500 rare entities
  const SynthPaths paths = write_synth_corpora(dir.path, opts);

  const Vocab vocab = Vocab::build(paths.train, 4096);
  const CuratedSets sets =
      curate_testsets(paths.asr, paths.train, paths.heldout, 5, CurateSizes{200, 2000, 2000});
  if (sets.rare_both.sentences.size() < 500) {
    std::printf("        only %zu RareBOTH sentences\n", sets.rare_both.sentences.size());
    return result;
  }

  const std::vector<std::uint64_t> table_sizes = {16, 64, 256, 1024};
  const std::vector<std::uint64_t> seeds = {101, 202, 303};
  result.layer0_rows = 256;

  for (std::uint64_t u : table_sizes) {
    std::vector<double> per_seed;
    for (std::uint64_t seed : seeds) {
      const Checkpoint ckpt =
          train(paths.train, vocab, scaling_model(u, Injection::kEveryLayer),
                scaling_train(seed), "");
      per_seed.push_back(log_perplexity(ckpt, vocab, sets.rare_both, true).log_pp);
    }
    result.every_layer[u] = median3(per_seed);
    if (verbose) {
      std::printf("        U=%-5llu rare_both logPP seeds (%.4f, %.4f, %.4f) median %.4f\n",
                  static_cast<unsigned long long>(u), per_seed[0], per_seed[1], per_seed[2],
                  result.every_layer[u]);
    }
  }

  std::vector<double> layer0_seeds;
  for (std::uint64_t seed : seeds) {
    const Checkpoint ckpt =
        train(paths.train, vocab, scaling_model(result.layer0_rows, Injection::kLayer0Only),
              scaling_train(seed), "");
    layer0_seeds.push_back(log_perplexity(ckpt, vocab, sets.rare_both, true).log_pp);
  }
  result.layer0_median = median3(layer0_seeds);
  if (verbose) {
    std::printf("        layer0 U=%llu logPP seeds (%.4f, %.4f, %.4f) median %.4f\n",
                static_cast<unsigned long long>(result.layer0_rows), layer0_seeds[0],
                layer0_seeds[1], layer0_seeds[2], result.layer0_median);
  }
  result.ok = true;
  return result;
}

bool scaling_trend(const ScalingResult& r) {
  if (!r.ok) return false;
  // Non-increasing in U with at most one adjacent violation of <= 0.02.
  int violations = 0;
  double prev = -1e300;
  bool first = true;
  for (const auto& [u, logpp] : r.every_layer) {
    if (!first && logpp > prev) {
      if (logpp - prev > 0.02) return false;
      ++violations;
    }
    prev = logpp;
    first = false;
  }
  return violations <= 1;
}

bool injection_ablation(const ScalingResult& r) {
  if (!r.ok) return false;
  const ModelConfig every = scaling_model(r.layer0_rows, Injection::kEveryLayer);
  const ModelConfig layer0 = scaling_model(r.layer0_rows, Injection::kLayer0Only);
  ModelConfig every_v = every, layer0_v = layer0;
  every_v.vocab_size = layer0_v.vocab_size = 1024;  // any valid V, count is closed-form

  if (layer0_v.dense_param_count() >= every_v.dense_param_count()) return false;
  const double every_median = r.every_layer.at(r.layer0_rows);
  std::printf("        layer0 %.4f vs every-layer %.4f (dense %llu < %llu)\n", r.layer0_median,
              every_median, static_cast<unsigned long long>(layer0_v.dense_param_count()),
              static_cast<unsigned long long>(every_v.dense_param_count()));
  return r.layer0_median >= every_median - 0.02;
}

// ---------------------------------------------------------------- criterion 7
bool fusion_correctness() {
  const Vocab vocab = Vocab::from_tokens(
      {"<s>", "</s>", "<unk>", "play", "some", "jazz", "rock", "blues", "quiet", "loud"});
  ModelConfig cfg;
  cfg.layers = 1;
  cfg.hidden = 6;
  cfg.input_dim = 4;
  cfg.vocab_size = static_cast<std::int64_t>(vocab.size());
  cfg.order = 2;
  cfg.table_rows = 32;
  cfg.table_dim = 4;
  cfg.injection = Injection::kEveryLayer;
  Checkpoint ckpt;
  ckpt.model = cfg;
  ckpt.dense = DenseParams::init(cfg, 61);
  ckpt.tables.push_back(EmbeddingTable::create(32, 4, 0.2f, 62));

  UniformRng rng(63);
  const std::vector<std::string> words = {"play", "some", "jazz", "rock",
                                          "blues", "quiet", "loud"};
  std::vector<std::vector<Hypothesis>> utterances;
  for (int u = 0; u < 100; ++u) {
    std::vector<Hypothesis> utt;
    const int n_hyp = 2 + static_cast<int>(rng.next_below(5));
    for (int h = 0; h < n_hyp; ++h) {
      Hypothesis hyp;
      hyp.utt_id = "u" + std::to_string(u);
      const int len = 1 + static_cast<int>(rng.next_below(5));
      for (int w = 0; w < len; ++w) {
        if (!hyp.text.empty()) hyp.text += ' ';
        hyp.text += words[static_cast<std::size_t>(rng.next_below(words.size()))];
      }
      hyp.acoustic_logp = -10.0 * rng.next_unit();
      hyp.ilm_logp = -5.0 * rng.next_unit();
      utt.push_back(std::move(hyp));
    }
    utterances.push_back(std::move(utt));
  }

  const FusionWeights weights{0.4, 0.2};
  const auto ranked = rescore_utterances(utterances, ckpt, vocab, weights);
  const TableSetView view = ckpt.table_view();
  for (std::size_t u = 0; u < utterances.size(); ++u) {
    // Brute force: recompute every score, first strict maximum wins.
    std::size_t best = 0;
    double best_score = -1e300;
    for (std::size_t h = 0; h < utterances[u].size(); ++h) {
      double lm = 0.0;
      for (double x :
           sequence_nll(ckpt.dense, cfg, view, vocab.encode(utterances[u][h].text))) {
        lm -= x;
      }
      const double s = fusion_score(utterances[u][h], weights, lm);
      if (s > best_score) {
        best_score = s;
        best = h;
      }
    }
    if (ranked[u][0].hyp.text != utterances[u][best].text) return false;
    if (ranked[u][0].rank != 1) return false;
  }

  // The no-LM degeneracy reproduces the input acoustic ranking exactly.
  const auto no_lm = rescore_utterances(utterances, ckpt, vocab, {0.0, 0.0});
  for (std::size_t u = 0; u < utterances.size(); ++u) {
    std::vector<const Hypothesis*> expect;
    for (const auto& h : utterances[u]) expect.push_back(&h);
    std::stable_sort(expect.begin(), expect.end(), [](const Hypothesis* a, const Hypothesis* b) {
      return a->acoustic_logp > b->acoustic_logp;
    });
    for (std::size_t h = 0; h < expect.size(); ++h) {
      if (no_lm[u][h].hyp.text != expect[h]->text) return false;
      if (no_lm[u][h].score != expect[h]->acoustic_logp) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------- criterion 8
bool masked_metric_fixture() {
  const Vocab vocab = Vocab::from_tokens(
      {"<s>", "</s>", "<unk>", "go", "to", "funway", "foxboro", "the", "park"});
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 4;
  cfg.input_dim = 3;
  cfg.vocab_size = static_cast<std::int64_t>(vocab.size());
  cfg.order = 2;
  cfg.table_rows = 16;
  cfg.table_dim = 3;
  cfg.injection = Injection::kEveryLayer;
  Checkpoint ckpt;
  ckpt.model = cfg;
  ckpt.dense = DenseParams::init(cfg, 17);
  for (int s = 0; s < cfg.injected_layers(); ++s) {
    ckpt.tables.push_back(
        EmbeddingTable::create(16, 3, 0.2f, 117 + static_cast<std::uint64_t>(s)));
  }

  TestSetSpec set;
  set.name = "RareBOTH";
  set.sentences = {"go to funway foxboro", "go to the park", "funway foxboro"};
  set.masks = {{false, false, true, true}, {false, false, false, false}, {true, true}};

  const DenseParamsT<double> ref_params = to_double(ckpt.dense);
  const BasicTableSetT<double> ref_tables = to_double_tables(cfg, ckpt.tables);
  double sum = 0.0;
  std::int64_t count = 0;
  for (std::size_t i = 0; i < set.sentences.size(); ++i) {
    const auto nll =
        reference::sequence_nll(ref_params, cfg, ref_tables, vocab.encode(set.sentences[i]));
    for (std::size_t w = 0; w < set.masks[i].size(); ++w) {
      if (set.masks[i][w]) {
        sum += nll[w];
        ++count;
      }
    }
  }

  const PerplexityResult got = log_perplexity(ckpt, vocab, set, true);
  const double want = sum / static_cast<double>(count);
  std::printf("        masked logPP %.8f vs oracle %.8f\n", got.log_pp, want);
  return std::abs(got.log_pp - want) < 1e-6;
}

// ---------------------------------------------------------------- criterion 9
bool checkpoint_roundtrip() {
  Scratch dir;
  const std::string corpus = dir.file("c.txt");
  {
    std::FILE* f = std::fopen(corpus.c_str(), "wb");
    for (int i = 0; i < 12; ++i) std::fprintf(f, "spring rolls again\nfried rice bowl\n");
    std::fclose(f);
  }
  const Vocab vocab = Vocab::build(corpus, 16);
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.hidden = 6;
  cfg.input_dim = 4;
  cfg.order = 2;
  cfg.table_rows = 32;
  cfg.table_dim = 4;
  TrainConfig tcfg;
  tcfg.steps = 8;
  tcfg.batch_size = 4;
  train(corpus, vocab, cfg, tcfg, dir.file("a.ckpt"));

  const Checkpoint loaded = load_checkpoint(dir.file("a.ckpt"));
  save_checkpoint(loaded, dir.file("b.ckpt"));
  const std::string a = read_file_bytes(dir.file("a.ckpt"));
  const std::string b = read_file_bytes(dir.file("b.ckpt"));
  if (a != b) return false;

  std::string corrupted = a;
  corrupted[0] = 'X';
  write_file_bytes(dir.file("bad.ckpt"), corrupted);
  try {
    load_checkpoint(dir.file("bad.ckpt"));
    return false;  // must not return a model
  } catch (const std::exception&) {
  }
  return true;
}

// --------------------------------------------------------------- criterion 10
bool collision_statistics() {
  const HashConfig cfg{2000, 1000, 2, false};
  UniformRng rng(20240817);
  std::set<std::pair<int, int>> windows;
  while (windows.size() < 1000) {
    windows.emplace(static_cast<int>(rng.next_below(2000)),
                    static_cast<int>(rng.next_below(2000)));
  }
  std::set<std::uint64_t> ids;
  for (const auto& [a, b] : windows) ids.insert(ngram2id(std::vector<int>{a, b}, cfg));
  std::printf("        occupancy %zu (expected 632 +- 30)\n", ids.size());
  return ids.size() >= 602 && ids.size() <= 662;
}

}  // namespace

int main() {
  int failures = 0;
  const auto run = [&failures](int index, const char* name, const std::function<bool()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    bool ok = false;
    std::string error;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] criterion %2d: %s (%.2fs)%s%s\n", ok ? "PASS" : "FAIL", index, name, secs,
                error.empty() ? "" : " error: ", error.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  };

  run(1, "hash oracle equivalence", hash_oracle_equivalence);
  run(2, "gradient correctness vs finite differences", gradient_correctness);
  run(3, "backend parity over a 10k-operation script", backend_parity);
  run(4, "baseline degeneracy with zeroed tables", baseline_degeneracy);

  ScalingResult scaling;
  run(5, "rare-word log perplexity scales with table size", [&scaling]() {
    scaling = run_scaling_experiment(true);
    return scaling_trend(scaling);
  });
  run(6, "layer0-only injection ablation", [&scaling]() { return injection_ablation(scaling); });
  run(7, "fusion top-1 matches brute force", fusion_correctness);
  run(8, "masked metric fixture matches the scalar oracle", masked_metric_fixture);
  run(9, "checkpoint round-trip and corruption handling", checkpoint_roundtrip);
  run(10, "modular hash meets the birthday bound", collision_statistics);

  std::printf("ACCEPTANCE: %d/10 passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
