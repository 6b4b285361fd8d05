#include "lookuplm/trainer.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace lookuplm {

void TrainConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("train: steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (lr0 <= 0) throw std::invalid_argument("train: lr0 must be positive");
  if (decay_rate <= 0 || decay_rate > 1) {
    throw std::invalid_argument("train: decay_rate must be in (0, 1]");
  }
  if (decay_steps < 0) throw std::invalid_argument("train: decay_steps must be >= 0");
  if (clip_norm <= 0) throw std::invalid_argument("train: clip_norm must be positive");
  if (max_sentence_len < 1) throw std::invalid_argument("train: max_sentence_len must be >= 1");
  if (init_scale < 0) throw std::invalid_argument("train: init_scale must be >= 0");
}

std::int64_t TrainConfig::effective_decay_steps() const {
  if (decay_steps > 0) return decay_steps;
  return std::max<std::int64_t>(1, steps / 4);
}

double lr_at_step(const TrainConfig& cfg, std::int64_t t) {
  if (t < 0) throw std::invalid_argument("step index must be >= 0");
  const double exponent =
      static_cast<double>(t) / static_cast<double>(cfg.effective_decay_steps());
  return cfg.lr0 * std::pow(cfg.decay_rate, exponent);
}

void dense_adam_update(DenseParams& params, const DenseParams& grads, DenseAdamState& state,
                       double lr, const AdamHyper& hyper) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));

  // Walk the parameter, gradient, and moment arrays in lockstep.
  std::vector<std::span<float>> p_arrays, m_arrays, v_arrays;
  std::vector<std::span<const float>> g_arrays;
  params.for_each_array([&](std::span<float> a) { p_arrays.push_back(a); });
  grads.for_each_array([&](std::span<const float> a) { g_arrays.push_back(a); });
  state.m.for_each_array([&](std::span<float> a) { m_arrays.push_back(a); });
  state.v.for_each_array([&](std::span<float> a) { v_arrays.push_back(a); });

  for (std::size_t i = 0; i < p_arrays.size(); ++i) {
    auto p = p_arrays[i];
    auto g = g_arrays[i];
    auto m = m_arrays[i];
    auto v = v_arrays[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      const double mj = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * gj;
      const double vj = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      p[j] = static_cast<float>(p[j] - lr * (mj / bc1) / (std::sqrt(vj / bc2) + hyper.eps));
    }
  }
}

double dense_grad_norm(const DenseParams& grads) {
  double sq = 0.0;
  grads.for_each_array([&sq](std::span<const float> a) {
    for (float g : a) sq += static_cast<double>(g) * static_cast<double>(g);
  });
  return std::sqrt(sq);
}

double clip_dense_grads(DenseParams& grads, double clip_norm) {
  const double norm = dense_grad_norm(grads);
  if (norm > clip_norm && norm > 0.0) {
    const float factor = static_cast<float>(clip_norm / norm);
    grads.for_each_array([factor](std::span<float> a) {
      for (float& g : a) g *= factor;
    });
  }
  return norm;
}

std::uint64_t Checkpoint::stored_dense_count() const { return dense.count(); }

std::uint64_t Checkpoint::stored_sparse_count() const {
  std::uint64_t n = 0;
  for (const auto& t : tables) n += t.rows() * t.cols();
  return n;
}

namespace {

// Per-thread gradient accumulation; merged in thread order after the batch.
struct GradAccum {
  bool used = false;
  DenseParams dense;
  SparseGradsT<float> sparse;
  double nll = 0.0;
  std::int64_t tokens = 0;

  void merge_result(const BackwardResultT<float>& r) {
    nll += r.total_nll;
    tokens += r.predicted_tokens;
    std::vector<std::span<float>> dst;
    dense.for_each_array([&dst](std::span<float> a) { dst.push_back(a); });
    std::size_t i = 0;
    r.dense.for_each_array([&](std::span<const float> a) {
      for (std::size_t j = 0; j < a.size(); ++j) dst[i][j] += a[j];
      ++i;
    });
    for (std::size_t l = 0; l < r.sparse.size(); ++l) {
      for (const auto& [row, g] : r.sparse[l]) {
        auto& acc = sparse[l][row];
        if (acc.empty()) acc.assign(g.size(), 0.0f);
        for (std::size_t j = 0; j < g.size(); ++j) acc[j] += g[j];
      }
    }
  }
};

std::vector<std::vector<int>> encode_corpus(const std::string& corpus_path, const Vocab& vocab,
                                            int max_sentence_len) {
  std::vector<std::vector<int>> sequences;
  for (const std::string& line : read_lines(corpus_path)) {
    std::vector<int> seq = vocab.encode(line);
    const std::size_t max_len = static_cast<std::size_t>(max_sentence_len) + 2;
    if (seq.size() > max_len) {
      seq.resize(max_len - 1);
      seq.push_back(kEosId);
    }
    sequences.push_back(std::move(seq));
  }
  if (sequences.empty()) throw std::runtime_error("training corpus is empty: " + corpus_path);
  return sequences;
}

}  // namespace

Checkpoint train(const std::string& corpus_path, const Vocab& vocab,
                 const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                 const std::string& out_path) {
  ModelConfig cfg = model_cfg;
  cfg.vocab_size = static_cast<std::int64_t>(vocab.size());
  cfg.validate();
  train_cfg.validate();

  const std::vector<std::vector<int>> sequences =
      encode_corpus(corpus_path, vocab, train_cfg.max_sentence_len);

  Checkpoint ckpt;
  ckpt.model = cfg;
  ckpt.dense = DenseParams::init(cfg, UniformRng::derive(train_cfg.seed, 0));
  for (int s = 0; s < cfg.injected_layers(); ++s) {
    ckpt.tables.push_back(EmbeddingTable::create(
        cfg.table_rows, static_cast<std::uint32_t>(cfg.table_dim),
        static_cast<float>(train_cfg.init_scale),
        UniformRng::derive(train_cfg.seed, 1 + static_cast<std::uint64_t>(s))));
    ckpt.sparse_opt.emplace_back(static_cast<std::uint32_t>(cfg.table_dim),
                                 train_cfg.adam_hyper());
  }
  ckpt.has_optimizer = true;
  ckpt.dense_opt.m = DenseParams::zeros(cfg);
  ckpt.dense_opt.v = DenseParams::zeros(cfg);

  UniformRng shuffle_rng(UniformRng::derive(train_cfg.seed, 1000));
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle_in_place(order, shuffle_rng);
  std::size_t cursor = 0;
  auto next_sentence = [&]() -> const std::vector<int>& {
    if (cursor == order.size()) {
      shuffle_in_place(order, shuffle_rng);
      cursor = 0;
    }
    return sequences[order[cursor++]];
  };

  const int nthreads = omp_get_max_threads();
  for (std::int64_t step = 0; step < train_cfg.steps; ++step) {
    std::vector<const std::vector<int>*> batch(static_cast<std::size_t>(train_cfg.batch_size));
    for (auto& s : batch) s = &next_sentence();

    std::vector<GradAccum> accums(static_cast<std::size_t>(nthreads));
    std::string error;

    const TableSetView view = ckpt.table_view();
#pragma omp parallel for schedule(static)
    for (int b = 0; b < train_cfg.batch_size; ++b) {
      GradAccum& acc = accums[static_cast<std::size_t>(omp_get_thread_num())];
      try {
        if (!acc.used) {
          acc.dense = DenseParams::zeros(cfg);
          acc.sparse.resize(static_cast<std::size_t>(cfg.layers));
          acc.used = true;
        }
        acc.merge_result(backward(ckpt.dense, cfg, view, *batch[static_cast<std::size_t>(b)]));
      } catch (const std::exception& e) {
#pragma omp critical
        if (error.empty()) error = e.what();
      }
    }
    if (!error.empty()) {
      throw std::runtime_error("training failed at step " + std::to_string(step) + ": " + error);
    }

    // Deterministic merge in thread order.
    DenseParams grads = DenseParams::zeros(cfg);
    SparseGradsT<float> sparse(static_cast<std::size_t>(cfg.layers));
    double batch_nll = 0.0;
    std::int64_t batch_tokens = 0;
    std::vector<std::span<float>> dst;
    grads.for_each_array([&dst](std::span<float> a) { dst.push_back(a); });
    for (const GradAccum& acc : accums) {
      if (!acc.used) continue;
      batch_nll += acc.nll;
      batch_tokens += acc.tokens;
      std::size_t i = 0;
      acc.dense.for_each_array([&](std::span<const float> a) {
        for (std::size_t j = 0; j < a.size(); ++j) dst[i][j] += a[j];
        ++i;
      });
      for (std::size_t l = 0; l < acc.sparse.size(); ++l) {
        for (const auto& [row, g] : acc.sparse[l]) {
          auto& out = sparse[l][row];
          if (out.empty()) out.assign(g.size(), 0.0f);
          for (std::size_t j = 0; j < g.size(); ++j) out[j] += g[j];
        }
      }
    }

    const double mean_nll = batch_nll / static_cast<double>(batch_tokens);
    if (!std::isfinite(mean_nll)) {
      throw std::runtime_error("non-finite loss at step " + std::to_string(step));
    }

    // Loss is the batch NLL normalized by predicted tokens.
    const float inv_tokens = static_cast<float>(1.0 / static_cast<double>(batch_tokens));
    grads.for_each_array([inv_tokens](std::span<float> a) {
      for (float& g : a) g *= inv_tokens;
    });
    for (auto& layer_map : sparse) {
      for (auto& [row, g] : layer_map) {
        for (float& x : g) x *= inv_tokens;
      }
    }

    clip_dense_grads(grads, train_cfg.clip_norm);
    const double lr = lr_at_step(train_cfg, step);
    dense_adam_update(ckpt.dense, grads, ckpt.dense_opt, lr, train_cfg.adam_hyper());
    for (int l = 0; l < cfg.layers; ++l) {
      if (!cfg.layer_injected(l)) continue;
      const int slot = cfg.table_slot(l);
      auto& opt = ckpt.sparse_opt[static_cast<std::size_t>(slot)];
      auto& table = ckpt.tables[static_cast<std::size_t>(slot)];
      for (const auto& [row, g] : sparse[static_cast<std::size_t>(l)]) {
        opt.apply(table, row, g, lr);
      }
    }

    std::fprintf(stderr, "step=%lld lr=%.8g mean_nll=%.6f\n",
                 static_cast<long long>(step), lr, mean_nll);
  }

  ckpt.global_step = train_cfg.steps;
  if (!out_path.empty()) save_checkpoint(ckpt, out_path);
  return ckpt;
}

}  // namespace lookuplm
