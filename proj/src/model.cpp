#include "lookuplm/model.hpp"

namespace lookuplm {

Injection injection_from_string(const std::string& s) {
  if (s == "every") return Injection::kEveryLayer;
  if (s == "layer0") return Injection::kLayer0Only;
  if (s == "none") return Injection::kNone;
  throw std::invalid_argument("unknown injection mode: " + s +
                              " (expected every, layer0, or none)");
}

std::string injection_to_string(Injection injection) {
  switch (injection) {
    case Injection::kEveryLayer: return "every";
    case Injection::kLayer0Only: return "layer0";
    case Injection::kNone: return "none";
  }
  return "none";
}

void ModelConfig::validate() const {
  if (layers < 1) throw std::invalid_argument("model: layers must be >= 1");
  if (hidden < 1) throw std::invalid_argument("model: hidden must be >= 1");
  if (input_dim < 1) throw std::invalid_argument("model: input_dim must be >= 1");
  if (vocab_size < kNumReservedIds) {
    throw std::invalid_argument("model: vocab_size must be at least 3");
  }
  if (order < 1) throw std::invalid_argument("model: order must be >= 1");
  if (injection != Injection::kNone) {
    if (table_rows < 1) throw std::invalid_argument("model: table_rows must be >= 1");
    if (table_dim < 1) throw std::invalid_argument("model: table_dim must be >= 1");
  }
}

std::uint64_t ModelConfig::dense_param_count() const {
  const std::uint64_t v = static_cast<std::uint64_t>(vocab_size);
  const std::uint64_t h = static_cast<std::uint64_t>(hidden);
  std::uint64_t n = v * static_cast<std::uint64_t>(input_dim);  // input embedding
  for (int l = 0; l < layers; ++l) {
    const std::uint64_t in = static_cast<std::uint64_t>(layer_input_dim(l));
    // w_x, w_h, then bias and the two norm gains.
    n += 4 * h * in + 4 * h * h + 3 * (4 * h);
  }
  n += v * h + v;  // softmax projection and bias
  return n;
}

std::uint64_t ModelConfig::sparse_param_count() const {
  return static_cast<std::uint64_t>(injected_layers()) * table_rows *
         static_cast<std::uint64_t>(table_dim);
}

DenseParamsT<double> to_double(const DenseParams& params) {
  DenseParamsT<double> out;
  out.input_embedding =
      MatrixT<double>(params.input_embedding.rows, params.input_embedding.cols);
  std::copy(params.input_embedding.a.begin(), params.input_embedding.a.end(),
            out.input_embedding.a.begin());
  out.layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& src = params.layers[l];
    auto& dst = out.layers[l];
    dst.w_x = MatrixT<double>(src.w_x.rows, src.w_x.cols);
    std::copy(src.w_x.a.begin(), src.w_x.a.end(), dst.w_x.a.begin());
    dst.w_h = MatrixT<double>(src.w_h.rows, src.w_h.cols);
    std::copy(src.w_h.a.begin(), src.w_h.a.end(), dst.w_h.a.begin());
    dst.bias.assign(src.bias.begin(), src.bias.end());
    dst.ln_gain_x.assign(src.ln_gain_x.begin(), src.ln_gain_x.end());
    dst.ln_gain_h.assign(src.ln_gain_h.begin(), src.ln_gain_h.end());
  }
  out.softmax_w = MatrixT<double>(params.softmax_w.rows, params.softmax_w.cols);
  std::copy(params.softmax_w.a.begin(), params.softmax_w.a.end(), out.softmax_w.a.begin());
  out.softmax_b.assign(params.softmax_b.begin(), params.softmax_b.end());
  return out;
}

BasicTableSetT<double> to_double_tables(const ModelConfig& cfg,
                                        std::span<const EmbeddingTable> tables) {
  BasicTableSetT<double> out = BasicTableSetT<double>::zeros(cfg);
  for (std::size_t s = 0; s < tables.size(); ++s) {
    const auto& t = tables[s];
    for (std::uint64_t r = 0; r < t.rows(); ++r) {
      const auto src = t.row(r);
      auto dst = out.slots[s].row(static_cast<std::int64_t>(r));
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  return out;
}

}  // namespace lookuplm
