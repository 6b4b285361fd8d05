#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lookuplm/embedding_table.hpp"
#include "lookuplm/ngram_hash.hpp"
#include "lookuplm/rng.hpp"

namespace lookuplm {

// Variance guard for the gate-preactivation norms.
inline constexpr double kLayerNormEps = 1e-6;

enum class Injection { kNone, kLayer0Only, kEveryLayer };

Injection injection_from_string(const std::string& s);
std::string injection_to_string(Injection injection);

struct ModelConfig {
  int layers = 2;                 // L
  int hidden = 512;               // H
  int input_dim = 96;             // D_in
  std::int64_t vocab_size = 0;    // V
  int order = 4;                  // n
  std::uint64_t table_rows = 0;   // U
  int table_dim = 2048;           // E_n
  bool include_current = false;
  Injection injection = Injection::kEveryLayer;

  void validate() const;

  bool layer_injected(int layer) const {
    switch (injection) {
      case Injection::kEveryLayer: return true;
      case Injection::kLayer0Only: return layer == 0;
      case Injection::kNone: return false;
    }
    return false;
  }

  // Number of embedding tables (one per injected layer).
  int injected_layers() const {
    switch (injection) {
      case Injection::kEveryLayer: return layers;
      case Injection::kLayer0Only: return 1;
      case Injection::kNone: return 0;
    }
    return 0;
  }

  // Table slot feeding a given layer.
  int table_slot(int layer) const {
    if (!layer_injected(layer)) throw std::logic_error("layer receives no injection");
    return injection == Injection::kEveryLayer ? layer : 0;
  }

  int layer_input_dim(int layer) const {
    const int below = layer == 0 ? input_dim : hidden;
    return below + (layer_injected(layer) ? table_dim : 0);
  }

  HashConfig hash_config() const {
    return HashConfig{static_cast<std::uint64_t>(vocab_size), table_rows, order,
                      include_current};
  }

  // Closed-form parameter accounting. Dense covers everything touched every
  // step; sparse is the embedding-table rows only.
  std::uint64_t dense_param_count() const;
  std::uint64_t sparse_param_count() const;
};

template <typename S>
struct MatrixT {
  std::int64_t rows = 0, cols = 0;
  std::vector<S> a;

  MatrixT() = default;
  MatrixT(std::int64_t r, std::int64_t c)
      : rows(r), cols(c), a(static_cast<std::size_t>(r) * static_cast<std::size_t>(c)) {}

  std::span<S> row(std::int64_t r) {
    return {a.data() + r * cols, static_cast<std::size_t>(cols)};
  }
  std::span<const S> row(std::int64_t r) const {
    return {a.data() + r * cols, static_cast<std::size_t>(cols)};
  }
  S& at(std::int64_t r, std::int64_t c) { return a[static_cast<std::size_t>(r * cols + c)]; }
  S at(std::int64_t r, std::int64_t c) const {
    return a[static_cast<std::size_t>(r * cols + c)];
  }
};

// out[r] = sum_c w[r,c] * x[c], accumulated in 64-bit. Four partial sums in a
// fixed grouping keep the reduction vectorizable and bit-reproducible.
template <typename S>
void matvec(const MatrixT<S>& w, std::span<const S> x, std::span<S> out) {
  const std::int64_t n = w.cols;
  const S* xp = x.data();
  for (std::int64_t r = 0; r < w.rows; ++r) {
    const S* wr = w.a.data() + r * w.cols;
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::int64_t c = 0;
    for (; c + 4 <= n; c += 4) {
      a0 += static_cast<double>(wr[c]) * static_cast<double>(xp[c]);
      a1 += static_cast<double>(wr[c + 1]) * static_cast<double>(xp[c + 1]);
      a2 += static_cast<double>(wr[c + 2]) * static_cast<double>(xp[c + 2]);
      a3 += static_cast<double>(wr[c + 3]) * static_cast<double>(xp[c + 3]);
    }
    for (; c < n; ++c) a0 += static_cast<double>(wr[c]) * static_cast<double>(xp[c]);
    out[static_cast<std::size_t>(r)] = static_cast<S>((a0 + a2) + (a1 + a3));
  }
}

// out[c] += sum_r w[r,c] * g[r], accumulated in 64-bit. Row-major traversal
// with a per-thread accumulation buffer.
template <typename S>
void matvec_transpose_add(const MatrixT<S>& w, std::span<const S> g, std::span<S> out) {
  thread_local std::vector<double> acc;
  acc.assign(static_cast<std::size_t>(w.cols), 0.0);
  for (std::int64_t r = 0; r < w.rows; ++r) {
    const double gr = static_cast<double>(g[static_cast<std::size_t>(r)]);
    if (gr == 0.0) continue;
    const S* wr = w.a.data() + r * w.cols;
    for (std::int64_t c = 0; c < w.cols; ++c) acc[static_cast<std::size_t>(c)] += gr * wr[c];
  }
  for (std::int64_t c = 0; c < w.cols; ++c) {
    out[static_cast<std::size_t>(c)] += static_cast<S>(acc[static_cast<std::size_t>(c)]);
  }
}

// dw[r,c] += g[r] * x[c].
template <typename S>
void add_outer(MatrixT<S>& dw, std::span<const S> g, std::span<const S> x) {
  for (std::int64_t r = 0; r < dw.rows; ++r) {
    S* wr = dw.a.data() + r * dw.cols;
    const S gr = g[static_cast<std::size_t>(r)];
    for (std::int64_t c = 0; c < dw.cols; ++c) wr[c] += gr * x[static_cast<std::size_t>(c)];
  }
}

// (x - mean) / sqrt(var + eps) * gain + bias with population variance.
// An empty bias span means no additive term.
template <typename S>
void layer_norm(std::span<const S> x, std::span<const S> gain, std::span<const S> bias,
                double eps, std::span<S> out) {
  const std::size_t n = x.size();
  if (gain.size() != n || out.size() != n || (!bias.empty() && bias.size() != n)) {
    throw std::invalid_argument("layer_norm operand lengths differ");
  }
  double mean = 0.0;
  for (std::size_t j = 0; j < n; ++j) mean += static_cast<double>(x[j]);
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double d = static_cast<double>(x[j]) - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double inv_std = 1.0 / std::sqrt(var + eps);
  for (std::size_t j = 0; j < n; ++j) {
    double y = (static_cast<double>(x[j]) - mean) * inv_std * static_cast<double>(gain[j]);
    if (!bias.empty()) y += static_cast<double>(bias[j]);
    out[j] = static_cast<S>(y);
  }
}

template <typename S>
struct LstmLayerT {
  MatrixT<S> w_x;              // (4H) x layer_input_dim
  MatrixT<S> w_h;              // (4H) x H
  std::vector<S> bias;         // 4H, shared additive bias for the gate norms
  std::vector<S> ln_gain_x;    // 4H, per-gate norm gain on the input branch
  std::vector<S> ln_gain_h;    // 4H, per-gate norm gain on the recurrent branch
};

// All step-dense weights. Gradients reuse the same structure.
template <typename S>
struct DenseParamsT {
  MatrixT<S> input_embedding;  // V x D_in
  std::vector<LstmLayerT<S>> layers;
  MatrixT<S> softmax_w;        // V x H
  std::vector<S> softmax_b;    // V

  static DenseParamsT zeros(const ModelConfig& cfg) {
    cfg.validate();
    DenseParamsT p;
    p.input_embedding = MatrixT<S>(cfg.vocab_size, cfg.input_dim);
    p.layers.resize(static_cast<std::size_t>(cfg.layers));
    for (int l = 0; l < cfg.layers; ++l) {
      auto& lay = p.layers[static_cast<std::size_t>(l)];
      lay.w_x = MatrixT<S>(4 * cfg.hidden, cfg.layer_input_dim(l));
      lay.w_h = MatrixT<S>(4 * cfg.hidden, cfg.hidden);
      lay.bias.assign(static_cast<std::size_t>(4 * cfg.hidden), S(0));
      lay.ln_gain_x.assign(static_cast<std::size_t>(4 * cfg.hidden), S(0));
      lay.ln_gain_h.assign(static_cast<std::size_t>(4 * cfg.hidden), S(0));
    }
    p.softmax_w = MatrixT<S>(cfg.vocab_size, cfg.hidden);
    p.softmax_b.assign(static_cast<std::size_t>(cfg.vocab_size), S(0));
    return p;
  }

  // Weight matrices uniform(+-1/sqrt(fan_in)), input embedding uniform(+-0.05),
  // norm gains 1, biases 0. Draw order is fixed; identical seeds give
  // bit-identical parameters.
  static DenseParamsT init(const ModelConfig& cfg, std::uint64_t seed) {
    DenseParamsT p = zeros(cfg);
    UniformRng rng(seed);
    auto fill_matrix = [&rng](MatrixT<S>& m) {
      const float s = 1.0f / std::sqrt(static_cast<float>(m.cols));
      for (S& w : m.a) w = static_cast<S>(rng.next_uniform(-s, s));
    };
    for (S& w : p.input_embedding.a) w = static_cast<S>(rng.next_uniform(-0.05f, 0.05f));
    for (auto& lay : p.layers) {
      fill_matrix(lay.w_x);
      fill_matrix(lay.w_h);
      for (S& g : lay.ln_gain_x) g = S(1);
      for (S& g : lay.ln_gain_h) g = S(1);
    }
    fill_matrix(p.softmax_w);
    return p;
  }

  // Visits every parameter array in the declared (serialization) order.
  template <typename Fn>
  void for_each_array(Fn&& fn) {
    fn(std::span<S>(input_embedding.a));
    for (auto& lay : layers) {
      fn(std::span<S>(lay.w_x.a));
      fn(std::span<S>(lay.w_h.a));
      fn(std::span<S>(lay.bias));
      fn(std::span<S>(lay.ln_gain_x));
      fn(std::span<S>(lay.ln_gain_h));
    }
    fn(std::span<S>(softmax_w.a));
    fn(std::span<S>(softmax_b));
  }
  template <typename Fn>
  void for_each_array(Fn&& fn) const {
    const_cast<DenseParamsT*>(this)->for_each_array(
        [&fn](std::span<S> a) { fn(std::span<const S>(a)); });
  }

  std::uint64_t count() const {
    std::uint64_t n = 0;
    for_each_array([&n](std::span<const S> a) { n += a.size(); });
    return n;
  }
};

using DenseParams = DenseParamsT<float>;

template <typename S>
struct RnnStateT {
  std::vector<std::vector<S>> h, c;  // per layer, width H

  static RnnStateT zeros(const ModelConfig& cfg) {
    RnnStateT st;
    st.h.assign(static_cast<std::size_t>(cfg.layers),
                std::vector<S>(static_cast<std::size_t>(cfg.hidden), S(0)));
    st.c = st.h;
    return st;
  }
};

using RnnState = RnnStateT<float>;

// Adapts the per-slot embedding tables owned by a checkpoint or trainer to
// the forward pass. Non-owning.
struct TableSetView {
  const ModelConfig* cfg = nullptr;
  std::span<const EmbeddingTable> tables;

  std::span<const float> row(int layer, std::uint64_t id) const {
    return tables[static_cast<std::size_t>(cfg->table_slot(layer))].row(id);
  }
};

// Plain in-memory tables over any scalar; the double instantiation backs the
// numeric test fixtures.
template <typename S>
struct BasicTableSetT {
  const ModelConfig* cfg = nullptr;
  std::vector<MatrixT<S>> slots;

  static BasicTableSetT zeros(const ModelConfig& cfg_in) {
    BasicTableSetT t;
    t.cfg = &cfg_in;
    for (int s = 0; s < cfg_in.injected_layers(); ++s) {
      t.slots.emplace_back(static_cast<std::int64_t>(cfg_in.table_rows), cfg_in.table_dim);
    }
    return t;
  }

  std::span<const S> row(int layer, std::uint64_t id) const {
    const auto& m = slots[static_cast<std::size_t>(cfg->table_slot(layer))];
    if (id >= static_cast<std::uint64_t>(m.rows)) {
      throw std::out_of_range("embedding id outside table");
    }
    return m.row(static_cast<std::int64_t>(id));
  }
};

// Per-step activations captured for backpropagation.
template <typename S>
struct LayerCacheT {
  std::vector<S> input;                 // concatenated layer input
  std::vector<S> h_prev, c_prev;
  std::vector<S> xhat_x, xhat_h;        // normalized pre-gain activations, 4H
  std::vector<S> inv_std_x, inv_std_h;  // one per gate
  std::vector<S> gates;                 // i, f, g, o after activation, 4H
  std::vector<S> c, tanh_c, h;
};

template <typename S>
struct StepCacheT {
  std::vector<LayerCacheT<S>> layers;
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Per-gate-block normalization of the 4H preactivation vector, gain only.
// xhat/inv_std capture the intermediates for the backward pass when non-null.
template <typename S>
void norm_gates(std::span<const S> a, std::span<const S> gain, int hidden, std::span<S> out,
                S* xhat, S* inv_std) {
  for (int q = 0; q < 4; ++q) {
    const std::size_t off = static_cast<std::size_t>(q * hidden);
    double mean = 0.0;
    for (int j = 0; j < hidden; ++j) mean += static_cast<double>(a[off + j]);
    mean /= hidden;
    double var = 0.0;
    for (int j = 0; j < hidden; ++j) {
      const double d = static_cast<double>(a[off + j]) - mean;
      var += d * d;
    }
    var /= hidden;
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    if (inv_std != nullptr) inv_std[q] = static_cast<S>(is);
    for (int j = 0; j < hidden; ++j) {
      const double xh = (static_cast<double>(a[off + j]) - mean) * is;
      if (xhat != nullptr) xhat[off + j] = static_cast<S>(xh);
      out[off + j] = static_cast<S>(xh * static_cast<double>(gain[off + j]));
    }
  }
}

// Gradient of norm_gates with respect to the raw preactivations.
template <typename S>
void norm_gates_backward(std::span<const S> dpre, std::span<const S> gain,
                         std::span<const S> xhat, std::span<const S> inv_std, int hidden,
                         std::span<S> da, std::span<S> dgain) {
  for (int q = 0; q < 4; ++q) {
    const std::size_t off = static_cast<std::size_t>(q * hidden);
    double m1 = 0.0, m2 = 0.0;
    for (int j = 0; j < hidden; ++j) {
      const double dxh = static_cast<double>(dpre[off + j]) * static_cast<double>(gain[off + j]);
      m1 += dxh;
      m2 += dxh * static_cast<double>(xhat[off + j]);
    }
    m1 /= hidden;
    m2 /= hidden;
    const double is = static_cast<double>(inv_std[static_cast<std::size_t>(q)]);
    for (int j = 0; j < hidden; ++j) {
      const double dxh = static_cast<double>(dpre[off + j]) * static_cast<double>(gain[off + j]);
      da[off + j] = static_cast<S>(is * (dxh - m1 - static_cast<double>(xhat[off + j]) * m2));
      dgain[off + j] += static_cast<S>(static_cast<double>(dpre[off + j]) *
                                       static_cast<double>(xhat[off + j]));
    }
  }
}

}  // namespace detail

// One recurrent step. Consumes input_token under the current state, injecting
// one n-gram embedding per injected layer, and writes unnormalized logits
// (log-softmax is fused into the loss). ngram_ids holds one id per injected
// layer, table-slot order.
template <typename S, typename Tables>
void forward_step(const DenseParamsT<S>& params, const ModelConfig& cfg, RnnStateT<S>& state,
                  int input_token, std::span<const std::uint64_t> ngram_ids,
                  const Tables& tables, std::span<S> logits_out,
                  StepCacheT<S>* cache = nullptr) {
  const int H = cfg.hidden;
  if (input_token < 0 || input_token >= cfg.vocab_size) {
    throw std::out_of_range("input token outside vocabulary");
  }
  if (ngram_ids.size() != static_cast<std::size_t>(cfg.injected_layers())) {
    throw std::invalid_argument("ngram_ids length does not match injection mode");
  }
  if (logits_out.size() != static_cast<std::size_t>(cfg.vocab_size)) {
    throw std::invalid_argument("logits buffer has wrong length");
  }
  if (cache != nullptr) cache->layers.resize(static_cast<std::size_t>(cfg.layers));

  const std::size_t gates_n = static_cast<std::size_t>(4 * H);
  std::vector<S> below(params.input_embedding.row(input_token).begin(),
                       params.input_embedding.row(input_token).end());
  std::vector<S> ax(gates_n), ah(gates_n), nx(gates_n), nh(gates_n), gates(gates_n);

  for (int l = 0; l < cfg.layers; ++l) {
    const auto& lay = params.layers[static_cast<std::size_t>(l)];
    auto& h_state = state.h[static_cast<std::size_t>(l)];
    auto& c_state = state.c[static_cast<std::size_t>(l)];

    std::vector<S> in;
    in.reserve(static_cast<std::size_t>(cfg.layer_input_dim(l)));
    in.insert(in.end(), below.begin(), below.end());
    if (cfg.layer_injected(l)) {
      const auto emb = tables.row(l, ngram_ids[static_cast<std::size_t>(cfg.table_slot(l))]);
      in.insert(in.end(), emb.begin(), emb.end());
    }

    matvec(lay.w_x, std::span<const S>(in), std::span<S>(ax));
    matvec(lay.w_h, std::span<const S>(h_state), std::span<S>(ah));

    LayerCacheT<S>* lc = cache != nullptr ? &cache->layers[static_cast<std::size_t>(l)] : nullptr;
    if (lc != nullptr) {
      lc->h_prev = h_state;
      lc->c_prev = c_state;
      lc->xhat_x.resize(gates_n);
      lc->xhat_h.resize(gates_n);
      lc->inv_std_x.resize(4);
      lc->inv_std_h.resize(4);
    }
    detail::norm_gates(std::span<const S>(ax), std::span<const S>(lay.ln_gain_x), H,
                       std::span<S>(nx), lc ? lc->xhat_x.data() : nullptr,
                       lc ? lc->inv_std_x.data() : nullptr);
    detail::norm_gates(std::span<const S>(ah), std::span<const S>(lay.ln_gain_h), H,
                       std::span<S>(nh), lc ? lc->xhat_h.data() : nullptr,
                       lc ? lc->inv_std_h.data() : nullptr);

    for (std::size_t j = 0; j < gates_n; ++j) {
      const double pre = static_cast<double>(nx[j]) + static_cast<double>(nh[j]) +
                         static_cast<double>(lay.bias[j]);
      const bool is_cell_candidate = j >= 2 * static_cast<std::size_t>(H) &&
                                     j < 3 * static_cast<std::size_t>(H);
      gates[j] = static_cast<S>(is_cell_candidate ? std::tanh(pre) : detail::sigmoid(pre));
    }

    std::vector<S> tanh_c(static_cast<std::size_t>(H));
    for (int j = 0; j < H; ++j) {
      const S gi = gates[static_cast<std::size_t>(j)];
      const S gf = gates[static_cast<std::size_t>(H + j)];
      const S gg = gates[static_cast<std::size_t>(2 * H + j)];
      const S go = gates[static_cast<std::size_t>(3 * H + j)];
      const S c_new = gf * c_state[static_cast<std::size_t>(j)] + gi * gg;
      c_state[static_cast<std::size_t>(j)] = c_new;
      tanh_c[static_cast<std::size_t>(j)] = static_cast<S>(std::tanh(static_cast<double>(c_new)));
      h_state[static_cast<std::size_t>(j)] = go * tanh_c[static_cast<std::size_t>(j)];
    }

    if (lc != nullptr) {
      lc->input = std::move(in);
      lc->gates = gates;
      lc->c = c_state;
      lc->tanh_c = std::move(tanh_c);
      lc->h = h_state;
    }
    below = h_state;
  }

  matvec(params.softmax_w, std::span<const S>(below), logits_out);
  for (std::int64_t v = 0; v < cfg.vocab_size; ++v) {
    logits_out[static_cast<std::size_t>(v)] += params.softmax_b[static_cast<std::size_t>(v)];
  }
}

template <typename S>
double nll_from_logits(std::span<const S> logits, int target) {
  double mx = -std::numeric_limits<double>::infinity();
  for (const S x : logits) mx = std::max(mx, static_cast<double>(x));
  double sum = 0.0;
  for (const S x : logits) sum += std::exp(static_cast<double>(x) - mx);
  return -(static_cast<double>(logits[static_cast<std::size_t>(target)]) - mx - std::log(sum));
}

template <typename S>
std::vector<double> log_softmax(std::span<const S> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (const S x : logits) mx = std::max(mx, static_cast<double>(x));
  double sum = 0.0;
  for (const S x : logits) sum += std::exp(static_cast<double>(x) - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t v = 0; v < logits.size(); ++v) out[v] = static_cast<double>(logits[v]) - lse;
  return out;
}

// Per-position negative log-likelihoods for a BOS-initial sequence: element j
// is the NLL of seq[j+1] given the prefix, state threaded from zero.
// The n-gram window is hashed once per step and shared across layers.
template <typename S, typename Tables>
std::vector<double> sequence_nll(const DenseParamsT<S>& params, const ModelConfig& cfg,
                                 const Tables& tables, std::span<const int> seq) {
  if (seq.size() < 2) throw std::invalid_argument("sequence must hold at least BOS and EOS");
  const HashConfig hc = cfg.hash_config();
  RnnStateT<S> state = RnnStateT<S>::zeros(cfg);
  std::vector<S> logits(static_cast<std::size_t>(cfg.vocab_size));
  std::vector<int> window(static_cast<std::size_t>(cfg.order));
  std::vector<std::uint64_t> ids(static_cast<std::size_t>(cfg.injected_layers()));
  std::vector<double> nll;
  nll.reserve(seq.size() - 1);
  for (std::size_t k = 0; k + 1 < seq.size(); ++k) {
    if (!ids.empty()) {
      window_at_step(seq, k, hc, window);
      std::fill(ids.begin(), ids.end(), ngram2id(window, hc));
    }
    forward_step(params, cfg, state, seq[k], ids, tables, std::span<S>(logits));
    const double x = nll_from_logits(std::span<const S>(logits), seq[k + 1]);
    if (!std::isfinite(x)) {
      throw std::runtime_error("non-finite activation at position " + std::to_string(k + 1));
    }
    nll.push_back(x);
  }
  return nll;
}

// Sparse gradient: per layer, touched row id -> accumulated E_n gradient.
// Ordered map so downstream iteration is deterministic.
template <typename S>
using SparseGradsT = std::vector<std::map<std::uint64_t, std::vector<S>>>;

template <typename S>
struct BackwardResultT {
  DenseParamsT<S> dense;
  SparseGradsT<S> sparse;
  std::vector<double> position_nll;
  double total_nll = 0.0;
  std::int64_t predicted_tokens = 0;
};

// Exact gradients of the summed sequence NLL with respect to every dense
// parameter and every touched embedding row. Windows hashing to the same row
// within the sentence accumulate into one entry.
template <typename S, typename Tables>
BackwardResultT<S> backward(const DenseParamsT<S>& params, const ModelConfig& cfg,
                            const Tables& tables, std::span<const int> seq) {
  if (seq.size() < 2) throw std::invalid_argument("sequence must hold at least BOS and EOS");
  const int H = cfg.hidden;
  const int L = cfg.layers;
  const std::size_t gates_n = static_cast<std::size_t>(4 * H);
  const std::size_t steps = seq.size() - 1;
  const HashConfig hc = cfg.hash_config();

  // Forward with caches.
  std::vector<StepCacheT<S>> caches(steps);
  std::vector<MatrixT<S>> probs;  // steps x V, stored as one matrix
  MatrixT<S> prob_mat(static_cast<std::int64_t>(steps), cfg.vocab_size);
  std::vector<std::uint64_t> step_ids(steps);

  BackwardResultT<S> result;
  result.dense = DenseParamsT<S>::zeros(cfg);
  result.sparse.resize(static_cast<std::size_t>(L));
  result.predicted_tokens = static_cast<std::int64_t>(steps);

  {
    RnnStateT<S> state = RnnStateT<S>::zeros(cfg);
    std::vector<S> logits(static_cast<std::size_t>(cfg.vocab_size));
    std::vector<int> window(static_cast<std::size_t>(cfg.order));
    std::vector<std::uint64_t> ids(static_cast<std::size_t>(cfg.injected_layers()));
    for (std::size_t k = 0; k < steps; ++k) {
      if (!ids.empty()) {
        window_at_step(seq, k, hc, window);
        step_ids[k] = ngram2id(window, hc);
        std::fill(ids.begin(), ids.end(), step_ids[k]);
      }
      forward_step(params, cfg, state, seq[k], ids, tables, std::span<S>(logits), &caches[k]);
      const auto logp = log_softmax(std::span<const S>(logits));
      const double nll = -logp[static_cast<std::size_t>(seq[k + 1])];
      if (!std::isfinite(nll)) {
        throw std::runtime_error("non-finite activation at position " + std::to_string(k + 1));
      }
      result.position_nll.push_back(nll);
      result.total_nll += nll;
      for (std::int64_t v = 0; v < cfg.vocab_size; ++v) {
        prob_mat.at(static_cast<std::int64_t>(k), v) =
            static_cast<S>(std::exp(logp[static_cast<std::size_t>(v)]));
      }
    }
  }

  // Backward through time.
  std::vector<std::vector<S>> dh_time(static_cast<std::size_t>(L),
                                      std::vector<S>(static_cast<std::size_t>(H), S(0)));
  std::vector<std::vector<S>> dc_time = dh_time;
  std::vector<S> dlogits(static_cast<std::size_t>(cfg.vocab_size));
  std::vector<S> carry(static_cast<std::size_t>(H));
  std::vector<S> dh(static_cast<std::size_t>(H)), dct(static_cast<std::size_t>(H));
  std::vector<S> dpre(gates_n), dax(gates_n), dah(gates_n);

  for (std::size_t k = steps; k-- > 0;) {
    // Softmax gradient: p - onehot(target).
    for (std::int64_t v = 0; v < cfg.vocab_size; ++v) {
      dlogits[static_cast<std::size_t>(v)] = prob_mat.at(static_cast<std::int64_t>(k), v);
    }
    dlogits[static_cast<std::size_t>(seq[k + 1])] -= S(1);

    const auto& top = caches[k].layers[static_cast<std::size_t>(L - 1)];
    add_outer(result.dense.softmax_w, std::span<const S>(dlogits), std::span<const S>(top.h));
    for (std::int64_t v = 0; v < cfg.vocab_size; ++v) {
      result.dense.softmax_b[static_cast<std::size_t>(v)] += dlogits[static_cast<std::size_t>(v)];
    }
    std::fill(carry.begin(), carry.end(), S(0));
    matvec_transpose_add(params.softmax_w, std::span<const S>(dlogits), std::span<S>(carry));

    for (int l = L - 1; l >= 0; --l) {
      const auto& lay = params.layers[static_cast<std::size_t>(l)];
      auto& glay = result.dense.layers[static_cast<std::size_t>(l)];
      const auto& lc = caches[k].layers[static_cast<std::size_t>(l)];

      for (int j = 0; j < H; ++j) {
        dh[static_cast<std::size_t>(j)] =
            carry[static_cast<std::size_t>(j)] +
            dh_time[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)];
      }

      // Cell backward.
      for (int j = 0; j < H; ++j) {
        const std::size_t ji = static_cast<std::size_t>(j);
        const S gi = lc.gates[ji];
        const S gf = lc.gates[static_cast<std::size_t>(H + j)];
        const S gg = lc.gates[static_cast<std::size_t>(2 * H + j)];
        const S go = lc.gates[static_cast<std::size_t>(3 * H + j)];
        const S tc = lc.tanh_c[ji];

        const S d_ct = dh[ji] * go * (S(1) - tc * tc) + dc_time[static_cast<std::size_t>(l)][ji];
        const S d_o = dh[ji] * tc;
        const S d_i = d_ct * gg;
        const S d_f = d_ct * lc.c_prev[ji];
        const S d_g = d_ct * gi;

        dpre[ji] = d_i * gi * (S(1) - gi);
        dpre[static_cast<std::size_t>(H + j)] = d_f * gf * (S(1) - gf);
        dpre[static_cast<std::size_t>(2 * H + j)] = d_g * (S(1) - gg * gg);
        dpre[static_cast<std::size_t>(3 * H + j)] = d_o * go * (S(1) - go);

        dct[ji] = d_ct;
        dc_time[static_cast<std::size_t>(l)][ji] = d_ct * gf;
      }

      for (std::size_t j = 0; j < gates_n; ++j) glay.bias[j] += dpre[j];
      detail::norm_gates_backward(std::span<const S>(dpre), std::span<const S>(lay.ln_gain_x),
                                  std::span<const S>(lc.xhat_x), std::span<const S>(lc.inv_std_x),
                                  H, std::span<S>(dax), std::span<S>(glay.ln_gain_x));
      detail::norm_gates_backward(std::span<const S>(dpre), std::span<const S>(lay.ln_gain_h),
                                  std::span<const S>(lc.xhat_h), std::span<const S>(lc.inv_std_h),
                                  H, std::span<S>(dah), std::span<S>(glay.ln_gain_h));

      add_outer(glay.w_x, std::span<const S>(dax), std::span<const S>(lc.input));
      add_outer(glay.w_h, std::span<const S>(dah), std::span<const S>(lc.h_prev));

      std::vector<S> din(lc.input.size(), S(0));
      matvec_transpose_add(lay.w_x, std::span<const S>(dax), std::span<S>(din));
      std::fill(dh_time[static_cast<std::size_t>(l)].begin(),
                dh_time[static_cast<std::size_t>(l)].end(), S(0));
      matvec_transpose_add(lay.w_h, std::span<const S>(dah),
                           std::span<S>(dh_time[static_cast<std::size_t>(l)]));

      const std::size_t below_dim = static_cast<std::size_t>(l == 0 ? cfg.input_dim : H);
      if (cfg.layer_injected(l)) {
        auto& row_grad = result.sparse[static_cast<std::size_t>(l)][step_ids[k]];
        if (row_grad.empty()) row_grad.assign(static_cast<std::size_t>(cfg.table_dim), S(0));
        for (int e = 0; e < cfg.table_dim; ++e) {
          row_grad[static_cast<std::size_t>(e)] += din[below_dim + static_cast<std::size_t>(e)];
        }
      }
      if (l == 0) {
        auto erow = result.dense.input_embedding.row(seq[k]);
        for (std::size_t j = 0; j < below_dim; ++j) erow[j] += din[j];
      } else {
        for (std::size_t j = 0; j < below_dim; ++j) carry[j] = din[j];
      }
    }
  }
  return result;
}

// Double-precision copies for the numeric oracles.
DenseParamsT<double> to_double(const DenseParams& params);
BasicTableSetT<double> to_double_tables(const ModelConfig& cfg,
                                        std::span<const EmbeddingTable> tables);

}  // namespace lookuplm
