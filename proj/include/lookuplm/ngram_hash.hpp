#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "lookuplm/vocab.hpp"

namespace lookuplm {

struct HashConfig {
  std::uint64_t vocab_size = 0;  // V
  std::uint64_t table_size = 1;  // U
  int order = 4;                 // n
  bool include_current = false;

  void validate() const;
};

// Embedding id of an n-gram window: (sum_i t_i * V^i) mod U. Evaluated by
// Horner recursion from the newest token down, reducing mod U at every step,
// so the result is exact for any V^n and identical across word sizes.
// window holds exactly cfg.order ids, oldest first.
std::uint64_t ngram2id(std::span<const int> window, const HashConfig& cfg);

// Token window feeding the embedding lookup when the model consumes seq[step].
// Without include_current the window is the `order` tokens strictly before
// step; with it, the window shifts right by one to end at seq[step].
// Positions before the sequence start are padded with BOS.
void window_at_step(std::span<const int> seq, std::size_t step, const HashConfig& cfg,
                    std::span<int> window_out);

struct CollisionStats {
  std::uint64_t distinct_ngrams = 0;
  std::uint64_t distinct_ids = 0;
  double load_factor = 0.0;  // distinct_ngrams / U
  std::uint64_t max_bucket = 0;
};

// Hashes every window observed while consuming the encoded corpus (one window
// per prediction step) and reports occupancy of the id space.
CollisionStats collision_stats(const std::string& corpus_path, const Vocab& vocab,
                               const HashConfig& cfg);

}  // namespace lookuplm
