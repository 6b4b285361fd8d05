#include "lookuplm/ngram_hash.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace lookuplm {

void HashConfig::validate() const {
  if (vocab_size < 1) throw std::invalid_argument("hash config: V must be >= 1");
  if (table_size < 1) throw std::invalid_argument("hash config: U must be >= 1");
  if (order < 1) throw std::invalid_argument("hash config: order must be >= 1");
}

std::uint64_t ngram2id(std::span<const int> window, const HashConfig& cfg) {
  cfg.validate();
  if (window.size() != static_cast<std::size_t>(cfg.order)) {
    throw std::invalid_argument("window length does not match n-gram order");
  }
  const unsigned __int128 v = cfg.vocab_size;
  const unsigned __int128 u = cfg.table_size;
  unsigned __int128 acc = 0;
  for (int i = cfg.order - 1; i >= 0; --i) {
    const int t = window[static_cast<std::size_t>(i)];
    if (t < 0 || static_cast<std::uint64_t>(t) >= cfg.vocab_size) {
      throw std::out_of_range("window token id outside [0, V)");
    }
    acc = (acc * v + static_cast<unsigned __int128>(t)) % u;
  }
  return static_cast<std::uint64_t>(acc);
}

void window_at_step(std::span<const int> seq, std::size_t step, const HashConfig& cfg,
                    std::span<int> window_out) {
  if (window_out.size() != static_cast<std::size_t>(cfg.order)) {
    throw std::invalid_argument("window output length does not match n-gram order");
  }
  if (step >= seq.size()) throw std::out_of_range("step index outside sequence");
  // Window end (inclusive): step-1 normally, step when the current token is in.
  const long long end = static_cast<long long>(step) + (cfg.include_current ? 0 : -1);
  for (int i = 0; i < cfg.order; ++i) {
    const long long pos = end - (cfg.order - 1 - i);
    window_out[static_cast<std::size_t>(i)] =
        pos < 0 ? kBosId : seq[static_cast<std::size_t>(pos)];
  }
}

CollisionStats collision_stats(const std::string& corpus_path, const Vocab& vocab,
                               const HashConfig& cfg) {
  cfg.validate();
  // Windows are packed V-ary into 128 bits for exact distinctness counting;
  // that caps V^n at 2^128, far beyond any corpus this tool sees.
  std::unordered_map<std::string, std::uint64_t> window_to_id;
  std::unordered_map<std::uint64_t, std::uint64_t> bucket_sizes;

  std::vector<int> window(static_cast<std::size_t>(cfg.order));
  for (const std::string& line : read_lines(corpus_path)) {
    const std::vector<int> seq = vocab.encode(line);
    // One window per prediction step: the model consumes seq[0..len-2].
    for (std::size_t k = 0; k + 1 < seq.size(); ++k) {
      window_at_step(seq, k, cfg, window);
      std::string key(reinterpret_cast<const char*>(window.data()),
                      window.size() * sizeof(int));
      auto [it, inserted] = window_to_id.emplace(std::move(key), 0);
      if (inserted) {
        it->second = ngram2id(window, cfg);
        ++bucket_sizes[it->second];
      }
    }
  }

  CollisionStats stats;
  stats.distinct_ngrams = window_to_id.size();
  stats.distinct_ids = bucket_sizes.size();
  stats.load_factor =
      static_cast<double>(stats.distinct_ngrams) / static_cast<double>(cfg.table_size);
  for (const auto& [id, size] : bucket_sizes) stats.max_bucket = std::max(stats.max_bucket, size);
  return stats;
}

}  // namespace lookuplm
