#include "lookuplm/reference_model.hpp"

#include <cmath>
#include <stdexcept>

namespace lookuplm::reference {

namespace {

// Normalize one H-wide gate block: (x - mean) / sqrt(var + eps), population
// variance, then scale by the gain.
std::vector<double> norm_block(std::span<const double> block, std::span<const double> gain) {
  const std::size_t h = block.size();
  double mean = 0.0;
  for (double x : block) mean += x;
  mean /= static_cast<double>(h);
  double var = 0.0;
  for (double x : block) var += (x - mean) * (x - mean);
  var /= static_cast<double>(h);
  const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
  std::vector<double> out(h);
  for (std::size_t j = 0; j < h; ++j) out[j] = (block[j] - mean) * inv_std * gain[j];
  return out;
}

std::vector<double> mat_times_vec(const MatrixT<double>& w, std::span<const double> x) {
  std::vector<double> out(static_cast<std::size_t>(w.rows), 0.0);
  for (std::int64_t r = 0; r < w.rows; ++r) {
    double acc = 0.0;
    for (std::int64_t c = 0; c < w.cols; ++c) {
      acc += w.at(r, c) * x[static_cast<std::size_t>(c)];
    }
    out[static_cast<std::size_t>(r)] = acc;
  }
  return out;
}

}  // namespace

std::vector<double> forward_step(const DenseParamsT<double>& params, const ModelConfig& cfg,
                                 RnnStateT<double>& state, int input_token,
                                 std::span<const std::uint64_t> ngram_ids,
                                 const BasicTableSetT<double>& tables) {
  const int h = cfg.hidden;

  std::vector<double> below(params.input_embedding.row(input_token).begin(),
                            params.input_embedding.row(input_token).end());
  for (int l = 0; l < cfg.layers; ++l) {
    const auto& lay = params.layers[static_cast<std::size_t>(l)];

    std::vector<double> in = below;
    if (cfg.layer_injected(l)) {
      const auto emb = tables.row(l, ngram_ids[static_cast<std::size_t>(cfg.table_slot(l))]);
      in.insert(in.end(), emb.begin(), emb.end());
    }

    const std::vector<double> ax = mat_times_vec(lay.w_x, in);
    const std::vector<double> ah =
        mat_times_vec(lay.w_h, state.h[static_cast<std::size_t>(l)]);

    std::vector<double> pre(static_cast<std::size_t>(4 * h), 0.0);
    for (int q = 0; q < 4; ++q) {
      const std::size_t off = static_cast<std::size_t>(q * h);
      const auto nx = norm_block(std::span<const double>(ax).subspan(off, h),
                                 std::span<const double>(lay.ln_gain_x).subspan(off, h));
      const auto nh = norm_block(std::span<const double>(ah).subspan(off, h),
                                 std::span<const double>(lay.ln_gain_h).subspan(off, h));
      for (int j = 0; j < h; ++j) {
        pre[off + static_cast<std::size_t>(j)] = nx[static_cast<std::size_t>(j)] +
                                                 nh[static_cast<std::size_t>(j)] +
                                                 lay.bias[off + static_cast<std::size_t>(j)];
      }
    }

    for (int j = 0; j < h; ++j) {
      const double gi = 1.0 / (1.0 + std::exp(-pre[static_cast<std::size_t>(j)]));
      const double gf = 1.0 / (1.0 + std::exp(-pre[static_cast<std::size_t>(h + j)]));
      const double gg = std::tanh(pre[static_cast<std::size_t>(2 * h + j)]);
      const double go = 1.0 / (1.0 + std::exp(-pre[static_cast<std::size_t>(3 * h + j)]));
      double& c = state.c[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)];
      c = gf * c + gi * gg;
      state.h[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)] = go * std::tanh(c);
    }
    below = state.h[static_cast<std::size_t>(l)];
  }

  std::vector<double> logits = mat_times_vec(params.softmax_w, below);
  for (std::size_t v = 0; v < logits.size(); ++v) logits[v] += params.softmax_b[v];
  return logits;
}

std::vector<double> sequence_nll(const DenseParamsT<double>& params, const ModelConfig& cfg,
                                 const BasicTableSetT<double>& tables,
                                 std::span<const int> seq) {
  if (seq.size() < 2) throw std::invalid_argument("sequence must hold at least BOS and EOS");
  const HashConfig hc = cfg.hash_config();
  RnnStateT<double> state = RnnStateT<double>::zeros(cfg);
  std::vector<int> window(static_cast<std::size_t>(cfg.order));
  std::vector<std::uint64_t> ids(static_cast<std::size_t>(cfg.injected_layers()));
  std::vector<double> out;
  for (std::size_t k = 0; k + 1 < seq.size(); ++k) {
    if (!ids.empty()) {
      window_at_step(seq, k, hc, window);
      const std::uint64_t id = ngram2id(window, hc);
      for (auto& x : ids) x = id;
    }
    const std::vector<double> logits = forward_step(params, cfg, state, seq[k], ids, tables);
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    double sum = 0.0;
    for (double x : logits) sum += std::exp(x - mx);
    out.push_back(-(logits[static_cast<std::size_t>(seq[k + 1])] - mx - std::log(sum)));
  }
  return out;
}

double total_nll(const DenseParamsT<double>& params, const ModelConfig& cfg,
                 const BasicTableSetT<double>& tables, std::span<const int> seq) {
  double total = 0.0;
  for (double x : sequence_nll(params, cfg, tables, seq)) total += x;
  return total;
}

}  // namespace lookuplm::reference
