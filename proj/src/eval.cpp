#include "lookuplm/eval.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

namespace lookuplm {

void TestSetSpec::validate() const {
  if (sentences.size() != masks.size()) {
    throw std::invalid_argument("test set has " + std::to_string(sentences.size()) +
                                " sentences but " + std::to_string(masks.size()) + " masks");
  }
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (split_words(sentences[i]).size() != masks[i].size()) {
      throw std::invalid_argument("mask length mismatch at sentence " + std::to_string(i) +
                                  " of test set " + name);
    }
  }
}

void TestSetSpec::save(const std::string& path) const {
  validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write test set: " + path);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    out << sentences[i] << '\t';
    for (bool b : masks[i]) out << (b ? '1' : '0');
    out << '\n';
  }
  if (!out) throw std::runtime_error("failed writing test set: " + path);
}

TestSetSpec TestSetSpec::load(const std::string& path, const std::string& name) {
  TestSetSpec spec;
  spec.name = name;
  for (const std::string& line : read_lines(path)) {
    if (line.empty()) continue;
    const std::size_t tab = line.rfind('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error("test set line without mask in " + path);
    }
    spec.sentences.push_back(line.substr(0, tab));
    std::vector<bool> mask;
    for (char c : line.substr(tab + 1)) {
      if (c != '0' && c != '1') throw std::runtime_error("bad mask character in " + path);
      mask.push_back(c == '1');
    }
    spec.masks.push_back(std::move(mask));
  }
  spec.validate();
  return spec;
}

WordCounts WordCounts::from_corpus(const std::string& path) {
  WordCounts wc;
  for (const std::string& line : read_lines(path)) {
    for (const std::string& w : split_words(line)) ++wc.counts_[w];
  }
  return wc;
}

std::uint64_t WordCounts::count(const std::string& word) const {
  auto it = counts_.find(word);
  return it == counts_.end() ? 0 : it->second;
}

CuratedSets curate_testsets(const std::string& corpus_a_path, const std::string& corpus_b_path,
                            const std::string& heldout_path, int threshold,
                            const CurateSizes& sizes) {
  if (threshold < 0) throw std::invalid_argument("rare threshold must be >= 0");
  RareSets rare;
  rare.threshold = threshold;
  rare.counts_a = WordCounts::from_corpus(corpus_a_path);
  rare.counts_b = WordCounts::from_corpus(corpus_b_path);

  const std::vector<std::string> heldout = read_lines(heldout_path);

  CuratedSets out;
  out.head.name = "Head";
  out.rare_a.name = "RareA";
  out.rare_both.name = "RareBOTH";
  std::set<std::string> words_a, words_both;

  for (const std::string& line : heldout) {
    const std::vector<std::string> words = split_words(line);
    if (words.empty()) continue;

    if (out.head.sentences.size() < sizes.head) {
      out.head.sentences.push_back(line);
      out.head.masks.emplace_back(words.size(), true);
    }

    std::vector<bool> mask_a(words.size(), false), mask_both(words.size(), false);
    bool any_a = false, any_both = false;
    for (std::size_t w = 0; w < words.size(); ++w) {
      const bool ra = rare.rare_in_a(words[w]);
      const bool rb = rare.rare_in_b(words[w]);
      if (ra && !rb) {
        mask_a[w] = true;
        any_a = true;
      }
      if (ra && rb) {
        mask_both[w] = true;
        any_both = true;
      }
    }
    if (any_a && out.rare_a.sentences.size() < sizes.rare_a) {
      out.rare_a.sentences.push_back(line);
      out.rare_a.masks.push_back(mask_a);
      for (std::size_t w = 0; w < words.size(); ++w) {
        if (mask_a[w]) words_a.insert(words[w]);
      }
    }
    if (any_both && out.rare_both.sentences.size() < sizes.rare_both) {
      out.rare_both.sentences.push_back(line);
      out.rare_both.masks.push_back(mask_both);
      for (std::size_t w = 0; w < words.size(); ++w) {
        if (mask_both[w]) words_both.insert(words[w]);
      }
    }
  }

  auto note_shortfall = [&out](const TestSetSpec& set, std::size_t want) {
    if (set.sentences.size() < want) {
      out.shortfalls.push_back(set.name + ": only " + std::to_string(set.sentences.size()) +
                               " of " + std::to_string(want) + " qualifying sentences");
    }
  };
  note_shortfall(out.head, sizes.head);
  note_shortfall(out.rare_a, sizes.rare_a);
  note_shortfall(out.rare_both, sizes.rare_both);

  out.rare_a_words.assign(words_a.begin(), words_a.end());
  out.rare_both_words.assign(words_both.begin(), words_both.end());
  return out;
}

PerplexityResult log_perplexity(const Checkpoint& ckpt, const Vocab& vocab,
                                const TestSetSpec& testset, bool masked) {
  testset.validate();
  if (ckpt.model.vocab_size != static_cast<std::int64_t>(vocab.size())) {
    throw std::invalid_argument("vocab size does not match the checkpointed model");
  }

  const std::size_t n = testset.sentences.size();
  std::vector<double> sums(n, 0.0);
  std::vector<std::int64_t> counts(n, 0);
  const TableSetView view = ckpt.table_view();
  std::string error;

  // Sentences are independent; results reduce in input order below.
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    try {
      const std::size_t si = static_cast<std::size_t>(i);
      const std::vector<int> seq = vocab.encode(testset.sentences[si]);
      const std::vector<double> nll = sequence_nll(ckpt.dense, ckpt.model, view, seq);
      const std::vector<bool>& mask = testset.masks[si];
      // nll[j] scores position j+1: words occupy positions 1..W, EOS is W+1.
      for (std::size_t w = 0; w < mask.size(); ++w) {
        if (!masked || mask[w]) {
          sums[si] += nll[w];
          ++counts[si];
        }
      }
      if (!masked) {
        sums[si] += nll[mask.size()];  // EOS term, unmasked mode only
        ++counts[si];
      }
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw std::runtime_error("evaluation failed: " + error);

  PerplexityResult result;
  for (std::size_t i = 0; i < n; ++i) {
    result.nll_sum += sums[i];
    result.selected += counts[i];
  }
  if (result.selected == 0) {
    throw std::runtime_error("log perplexity undefined: no selected tokens in " + testset.name);
  }
  result.log_pp = result.nll_sum / static_cast<double>(result.selected);
  return result;
}

std::vector<SweepEntry> parse_grid_file(const std::string& path, const ModelConfig& base) {
  std::vector<SweepEntry> grid;
  std::size_t line_no = 0;
  for (const std::string& line : read_lines(path)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    const std::string body = hash == std::string::npos ? line : line.substr(0, hash);
    const std::vector<std::string> tokens = split_words(body);
    if (tokens.empty()) continue;

    SweepEntry e;
    e.table_rows = base.table_rows;
    e.table_dim = base.table_dim;
    e.order = base.order;
    e.include_current = base.include_current;
    e.injection = base.injection;
    for (const std::string& tok : tokens) {
      const std::size_t eq = tok.find('=');
      if (eq == std::string::npos) {
        throw std::runtime_error("grid line " + std::to_string(line_no) +
                                 ": expected key=value, got '" + tok + "'");
      }
      const std::string key = tok.substr(0, eq);
      const std::string value = tok.substr(eq + 1);
      try {
        if (key == "table_rows") {
          e.table_rows = std::stoull(value);
        } else if (key == "table_dim") {
          e.table_dim = std::stoi(value);
        } else if (key == "order") {
          e.order = std::stoi(value);
        } else if (key == "include_current") {
          e.include_current = value == "1" || value == "true";
        } else if (key == "injection") {
          e.injection = injection_from_string(value);
        } else {
          throw std::runtime_error("unknown grid key '" + key + "'");
        }
      } catch (const std::invalid_argument&) {
        throw std::runtime_error("grid line " + std::to_string(line_no) + ": bad value for " +
                                 key);
      }
    }
    grid.push_back(e);
  }
  return grid;
}

std::string sweep_entry_name(const SweepEntry& entry, const ModelConfig& base) {
  if (entry.injection == Injection::kNone) return "Baseline";
  std::string name = "Lookup-" + std::to_string(entry.table_rows) + "-" +
                     std::to_string(entry.table_dim);
  if (entry.order != base.order) name += "-" + std::to_string(entry.order);
  if (entry.include_current) name += "-curr";
  if (entry.injection == Injection::kLayer0Only) name += "-layer0";
  return name;
}

std::vector<SweepRow> ablation_sweep(const std::vector<SweepEntry>& grid,
                                     const ModelConfig& base, const TrainConfig& train_cfg,
                                     const std::string& corpus_path, const Vocab& vocab,
                                     const CuratedSets& sets) {
  std::vector<SweepRow> rows;
  for (const SweepEntry& entry : grid) {
    ModelConfig cfg = base;
    cfg.table_rows = entry.table_rows;
    cfg.table_dim = entry.table_dim;
    cfg.order = entry.order;
    cfg.include_current = entry.include_current;
    cfg.injection = entry.injection;

    const Checkpoint ckpt = train(corpus_path, vocab, cfg, train_cfg, "");
    SweepRow row;
    row.name = sweep_entry_name(entry, base);
    row.dense_params = ckpt.model.dense_param_count();
    row.sparse_params = ckpt.model.sparse_param_count();
    row.head = log_perplexity(ckpt, vocab, sets.head, false).log_pp;
    row.rare_a = log_perplexity(ckpt, vocab, sets.rare_a, true).log_pp;
    row.rare_both = log_perplexity(ckpt, vocab, sets.rare_both, true).log_pp;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_table_tsv(const std::vector<SweepRow>& rows) {
  std::string out = "model\tdense_params\tsparse_params\tlogpp_head\tlogpp_rare_a\tlogpp_rare_both\n";
  char buf[256];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s\t%llu\t%llu\t%.4f\t%.4f\t%.4f\n", r.name.c_str(),
                  static_cast<unsigned long long>(r.dense_params),
                  static_cast<unsigned long long>(r.sparse_params), r.head, r.rare_a,
                  r.rare_both);
    out += buf;
  }
  return out;
}

}  // namespace lookuplm
