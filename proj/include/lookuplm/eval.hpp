#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "lookuplm/trainer.hpp"
#include "lookuplm/vocab.hpp"

namespace lookuplm {

// Curated sentence set with a per-word boolean mask; true marks words that
// count toward the masked metric. File format: `sentence<TAB>mask` with one
// 0/1 character per word.
struct TestSetSpec {
  std::string name;
  std::vector<std::string> sentences;
  std::vector<std::vector<bool>> masks;

  void validate() const;
  void save(const std::string& path) const;
  static TestSetSpec load(const std::string& path, const std::string& name);
};

// Exact corpus word counts backing the rare-word definition (count <= threshold,
// boundary inclusive; unseen words count as zero and are rare).
class WordCounts {
 public:
  static WordCounts from_corpus(const std::string& path);
  std::uint64_t count(const std::string& word) const;

 private:
  std::unordered_map<std::string, std::uint64_t> counts_;
};

struct RareSets {
  WordCounts counts_a, counts_b;
  int threshold = 5;

  bool rare_in_a(const std::string& w) const {
    return counts_a.count(w) <= static_cast<std::uint64_t>(threshold);
  }
  bool rare_in_b(const std::string& w) const {
    return counts_b.count(w) <= static_cast<std::uint64_t>(threshold);
  }
};

struct CurateSizes {
  std::size_t head = 1000;
  std::size_t rare_a = 1000;
  std::size_t rare_both = 1000;
};

struct CuratedSets {
  TestSetSpec head, rare_a, rare_both;
  std::vector<std::string> rare_a_words, rare_both_words;  // masked words, sorted unique
  std::vector<std::string> shortfalls;                     // human-readable warnings
};

// Head: the first sizes.head held-out sentences, all-true masks. RareA:
// held-out sentences with a word rare in corpus A but not in corpus B, masked
// exactly on those words. RareBOTH: rare in both. Shortfalls are reported,
// not fatal.
CuratedSets curate_testsets(const std::string& corpus_a_path, const std::string& corpus_b_path,
                            const std::string& heldout_path, int threshold,
                            const CurateSizes& sizes);

struct PerplexityResult {
  double log_pp = 0.0;     // nll_sum / selected
  double nll_sum = 0.0;
  std::int64_t selected = 0;
};

// Log perplexity per word over the set. Full sentences are always fed to the
// model; masked mode averages only over mask-selected word positions and
// excludes EOS, unmasked mode covers every word plus EOS. An empty selection
// is an error.
PerplexityResult log_perplexity(const Checkpoint& ckpt, const Vocab& vocab,
                                const TestSetSpec& testset, bool masked);

struct SweepEntry {
  std::uint64_t table_rows = 0;
  int table_dim = 0;
  int order = 0;
  bool include_current = false;
  Injection injection = Injection::kEveryLayer;
};

// One experiment per line, space-separated key=value pairs over
// {table_rows, table_dim, order, include_current, injection}; missing keys
// default to the base config. '#' starts a comment.
std::vector<SweepEntry> parse_grid_file(const std::string& path, const ModelConfig& base);

struct SweepRow {
  std::string name;
  std::uint64_t dense_params = 0;
  std::uint64_t sparse_params = 0;
  double head = 0.0;
  double rare_a = 0.0;
  double rare_both = 0.0;
};

std::string sweep_entry_name(const SweepEntry& entry, const ModelConfig& base);

// Trains every grid entry with the shared seed and scores Head (unmasked)
// plus RareA/RareBOTH (masked).
std::vector<SweepRow> ablation_sweep(const std::vector<SweepEntry>& grid,
                                     const ModelConfig& base, const TrainConfig& train_cfg,
                                     const std::string& corpus_path, const Vocab& vocab,
                                     const CuratedSets& sets);

std::string sweep_table_tsv(const std::vector<SweepRow>& rows);

}  // namespace lookuplm
