#include "lookuplm/eval.hpp"

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "lookuplm/reference_model.hpp"
#include "test_util.hpp"

using namespace lookuplm;
using testutil::TempDir;
using testutil::write_text;

namespace {

Vocab make_vocab(const std::vector<std::string>& words) {
  std::vector<std::string> tokens = {"<s>", "</s>", "<unk>"};
  tokens.insert(tokens.end(), words.begin(), words.end());
  return Vocab::from_tokens(std::move(tokens));
}

// In-memory checkpoint over a hand-rolled vocab, deterministic weights.
struct Fixture {
  Vocab vocab;
  Checkpoint ckpt;

  explicit Fixture(const std::vector<std::string>& words, std::uint64_t seed = 17,
                   int hidden = 4)
      : vocab(make_vocab(words)) {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.hidden = hidden;
    cfg.input_dim = 3;
    cfg.vocab_size = static_cast<std::int64_t>(vocab.size());
    cfg.order = 2;
    cfg.table_rows = 16;
    cfg.table_dim = 3;
    cfg.injection = Injection::kEveryLayer;

    ckpt.model = cfg;
    ckpt.dense = DenseParams::init(cfg, seed);
    for (int s = 0; s < cfg.injected_layers(); ++s) {
      ckpt.tables.push_back(EmbeddingTable::create(
          cfg.table_rows, static_cast<std::uint32_t>(cfg.table_dim), 0.2f, seed + 100 + s));
    }
  }
};

std::vector<double> per_position_nll(const Fixture& f, const std::string& sentence) {
  return sequence_nll(f.ckpt.dense, f.ckpt.model, f.ckpt.table_view(), f.vocab.encode(sentence));
}

}  // namespace

TEST_CASE("a word appearing exactly threshold times is rare, threshold+1 is not") {
  TempDir dir;
  std::string corpus_a, corpus_b;
  for (int i = 0; i < 5; ++i) corpus_a += "edge five\n";
  for (int i = 0; i < 6; ++i) corpus_a += "edge six\n";
  // Both words frequent in corpus B, so qualifying words land in RareA.
  for (int i = 0; i < 9; ++i) corpus_b += "five six edge\n";
  write_text(dir.file("a.txt"), corpus_a);
  write_text(dir.file("b.txt"), corpus_b);
  write_text(dir.file("h.txt"), "five six\n");

  const CuratedSets sets = curate_testsets(dir.file("a.txt"), dir.file("b.txt"),
                                           dir.file("h.txt"), 5, CurateSizes{10, 10, 10});
  REQUIRE(sets.rare_a.sentences.size() == 1);
  // count_a(five) = 5 <= 5 -> rare; count_a(six) = 6 -> not.
  CHECK(sets.rare_a.masks[0] == std::vector<bool>{true, false});
  CHECK(sets.rare_a_words == std::vector<std::string>{"five"});
  CHECK(sets.rare_both.sentences.empty());
}

TEST_CASE("rare-in-both masks cover exactly the long-tail words") {
  TempDir dir;
  std::string head;
  for (int i = 0; i < 20; ++i) head += "go to the city\n";
  write_text(dir.file("a.txt"), head + "funway foxboro\n");
  write_text(dir.file("b.txt"), head + "funway foxboro\nfunway foxboro\n");
  write_text(dir.file("h.txt"), "go to funway foxboro\n");

  const CuratedSets sets = curate_testsets(dir.file("a.txt"), dir.file("b.txt"),
                                           dir.file("h.txt"), 5, CurateSizes{10, 10, 10});
  REQUIRE(sets.rare_both.sentences.size() == 1);
  CHECK(sets.rare_both.sentences[0] == "go to funway foxboro");
  CHECK(sets.rare_both.masks[0] == std::vector<bool>{false, false, true, true});
  CHECK(sets.rare_both_words == std::vector<std::string>{"foxboro", "funway"});
}

TEST_CASE("head takes the first held-out sentences with all-true masks") {
  TempDir dir;
  write_text(dir.file("a.txt"), "x\n");
  write_text(dir.file("b.txt"), "x\n");
  write_text(dir.file("h.txt"), "one two\nthree\nfour five six\n");

  const CuratedSets sets = curate_testsets(dir.file("a.txt"), dir.file("b.txt"),
                                           dir.file("h.txt"), 5, CurateSizes{2, 10, 10});
  REQUIRE(sets.head.sentences.size() == 2);
  CHECK(sets.head.sentences[0] == "one two");
  CHECK(sets.head.masks[0] == std::vector<bool>{true, true});
  CHECK(sets.head.masks[1] == std::vector<bool>{true});
  // Shortfalls are reported for the rare sets that could not fill up.
  CHECK(!sets.shortfalls.empty());
}

TEST_CASE("every RareA sentence carries at least one masked word") {
  TempDir dir;
  SUBCASE("generated fixture") {
    std::string a, b, h;
    for (int i = 0; i < 8; ++i) a += "common words here\n";
    b = a;
    for (int i = 0; i < 20; ++i) b += "target" + std::to_string(i) + " common\n";
    h = "common target3 here\ncommon words\ntarget7 target8\n";
    write_text(dir.file("a.txt"), a);
    write_text(dir.file("b.txt"), b);
    write_text(dir.file("h.txt"), h);
    const CuratedSets sets = curate_testsets(dir.file("a.txt"), dir.file("b.txt"),
                                             dir.file("h.txt"), 5, CurateSizes{1, 10, 10});
    for (const auto& mask : sets.rare_a.masks) {
      CHECK(std::count(mask.begin(), mask.end(), true) >= 1);
    }
    for (const auto& mask : sets.head.masks) {
      CHECK(std::count(mask.begin(), mask.end(), false) == 0);
    }
  }
}

TEST_CASE("test set files round-trip") {
  TempDir dir;
  TestSetSpec spec;
  spec.name = "RareBOTH";
  spec.sentences = {"go to funway foxboro", "plain sentence"};
  spec.masks = {{false, false, true, true}, {false, false}};
  spec.save(dir.file("t.tsv"));

  const TestSetSpec loaded = TestSetSpec::load(dir.file("t.tsv"), "RareBOTH");
  CHECK(loaded.sentences == spec.sentences);
  CHECK(loaded.masks == spec.masks);

  TestSetSpec bad = spec;
  bad.masks[0].pop_back();
  CHECK_THROWS(bad.validate());
}

TEST_CASE("a zero-weight model scores ln V per word") {
  Fixture f({"aa", "bb", "cc"});
  f.ckpt.dense = DenseParams::zeros(f.ckpt.model);
  for (auto& t : f.ckpt.tables) {
    for (std::uint64_t r = 0; r < t.rows(); ++r) {
      for (float& x : t.mutable_row(r)) x = 0.0f;
    }
  }
  TestSetSpec set;
  set.name = "Head";
  set.sentences = {"aa bb", "cc"};
  set.masks = {{true, true}, {true}};

  const PerplexityResult r = log_perplexity(f.ckpt, f.vocab, set, false);
  CHECK(r.log_pp == doctest::Approx(std::log(6.0)).epsilon(1e-9));  // V = 6
  CHECK(r.selected == 5);  // 3 words + 2 EOS
}

TEST_CASE("masked selection keeps exactly the masked word positions") {
  Fixture f({"aa", "bb"});
  TestSetSpec set;
  set.name = "RareA";
  set.sentences = {"aa bb"};
  set.masks = {{false, true}};

  const auto nll = per_position_nll(f, "aa bb");  // positions: aa, bb, EOS
  const PerplexityResult r = log_perplexity(f.ckpt, f.vocab, set, true);
  CHECK(r.selected == 1);
  CHECK(r.log_pp == doctest::Approx(nll[1]).epsilon(1e-12));

  const PerplexityResult full = log_perplexity(f.ckpt, f.vocab, set, false);
  CHECK(full.selected == 3);
  CHECK(full.log_pp == doctest::Approx((nll[0] + nll[1] + nll[2]) / 3.0).epsilon(1e-12));
}

TEST_CASE("three-sentence masked fixture matches the scalar reference to 1e-6") {
  Fixture f({"go", "to", "funway", "foxboro", "the", "park"});
  TestSetSpec set;
  set.name = "RareBOTH";
  set.sentences = {"go to funway foxboro", "go to the park", "funway foxboro"};
  set.masks = {{false, false, true, true}, {false, false, false, false}, {true, true}};
  // The middle sentence contributes nothing to the masked metric.
  set.masks[1] = {false, false, false, false};

  const DenseParamsT<double> ref_params = to_double(f.ckpt.dense);
  const BasicTableSetT<double> ref_tables = to_double_tables(f.ckpt.model, f.ckpt.tables);
  double sum = 0.0;
  std::int64_t count = 0;
  for (std::size_t i = 0; i < set.sentences.size(); ++i) {
    const auto nll = reference::sequence_nll(ref_params, f.ckpt.model, ref_tables,
                                             f.vocab.encode(set.sentences[i]));
    for (std::size_t w = 0; w < set.masks[i].size(); ++w) {
      if (set.masks[i][w]) {
        sum += nll[w];
        ++count;
      }
    }
  }
  REQUIRE(count == 4);

  const PerplexityResult r = log_perplexity(f.ckpt, f.vocab, set, true);
  CHECK(std::abs(r.log_pp - sum / static_cast<double>(count)) < 1e-6);
}

TEST_CASE("all-true masked metric equals unmasked minus the EOS contribution") {
  Fixture f({"one", "two", "three"});
  TestSetSpec set;
  set.name = "Head";
  set.sentences = {"one two three", "two", "three one"};
  set.masks = {{true, true, true}, {true}, {true, true}};

  const PerplexityResult masked = log_perplexity(f.ckpt, f.vocab, set, true);
  const PerplexityResult full = log_perplexity(f.ckpt, f.vocab, set, false);

  double eos_sum = 0.0;
  for (const auto& s : set.sentences) {
    const auto nll = per_position_nll(f, s);
    eos_sum += nll.back();
  }
  const double expect =
      (full.nll_sum - eos_sum) / static_cast<double>(full.selected - 3);
  CHECK(masked.log_pp == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("log perplexity is invariant to sentence order") {
  Fixture f({"one", "two", "three"});
  TestSetSpec set;
  set.name = "Head";
  set.sentences = {"one two", "three", "two three one"};
  set.masks = {{true, true}, {true}, {true, true, true}};
  TestSetSpec reversed = set;
  std::reverse(reversed.sentences.begin(), reversed.sentences.end());
  std::reverse(reversed.masks.begin(), reversed.masks.end());

  const double a = log_perplexity(f.ckpt, f.vocab, set, false).log_pp;
  const double b = log_perplexity(f.ckpt, f.vocab, reversed, false).log_pp;
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("an empty selection is an error") {
  Fixture f({"one"});
  TestSetSpec set;
  set.name = "RareA";
  set.sentences = {"one"};
  set.masks = {{false}};
  CHECK_THROWS(log_perplexity(f.ckpt, f.vocab, set, true));
}

TEST_CASE("grid files parse into sweep entries with base defaults") {
  TempDir dir;
  write_text(dir.file("grid.txt"),
             "# ablation over table size\n"
             "table_rows=16\n"
             "table_rows=64 table_dim=8\n"
             "injection=none\n"
             "injection=layer0 order=3 include_current=1\n");
  ModelConfig base;
  base.table_rows = 1024;
  base.table_dim = 16;
  base.order = 4;

  const auto grid = parse_grid_file(dir.file("grid.txt"), base);
  REQUIRE(grid.size() == 4);
  CHECK(grid[0].table_rows == 16);
  CHECK(grid[0].table_dim == 16);
  CHECK(grid[1].table_dim == 8);
  CHECK(grid[2].injection == Injection::kNone);
  CHECK(grid[3].injection == Injection::kLayer0Only);
  CHECK(grid[3].order == 3);
  CHECK(grid[3].include_current);

  CHECK(sweep_entry_name(grid[0], base) == "Lookup-16-16");
  CHECK(sweep_entry_name(grid[2], base) == "Baseline");
  CHECK(sweep_entry_name(grid[3], base) == "Lookup-1024-16-3-curr-layer0");

  write_text(dir.file("bad.txt"), "frobnicate=1\n");
  CHECK_THROWS(parse_grid_file(dir.file("bad.txt"), base));
}

TEST_CASE("a one-entry baseline grid sweeps to a single row") {
  TempDir dir;
  std::string corpus;
  for (int i = 0; i < 6; ++i) corpus += "spring rolls\nfried rice\n";
  write_text(dir.file("c.txt"), corpus);
  const Vocab vocab = Vocab::build(dir.file("c.txt"), 16);

  CuratedSets sets;
  sets.head.name = "Head";
  sets.head.sentences = {"spring rolls"};
  sets.head.masks = {{true, true}};
  sets.rare_a = sets.head;
  sets.rare_a.name = "RareA";
  sets.rare_both = sets.head;
  sets.rare_both.name = "RareBOTH";

  ModelConfig base;
  base.layers = 2;
  base.hidden = 4;
  base.input_dim = 3;
  base.order = 2;
  base.table_rows = 8;
  base.table_dim = 4;
  TrainConfig tcfg;
  tcfg.steps = 3;
  tcfg.batch_size = 4;

  const std::vector<SweepEntry> grid = {{8, 4, 2, false, Injection::kNone}};
  const auto rows = ablation_sweep(grid, base, tcfg, dir.file("c.txt"), vocab, sets);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].name == "Baseline");
  CHECK(rows[0].sparse_params == 0);

  const std::string tsv = sweep_table_tsv(rows);
  CHECK(tsv.find("model\tdense_params") == 0);
  CHECK(tsv.find("Baseline") != std::string::npos);
}

TEST_CASE("sparse parameter column follows tables * U * E_n") {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.table_rows = 1024;
  cfg.table_dim = 16;
  cfg.injection = Injection::kEveryLayer;
  cfg.vocab_size = 10;
  CHECK(cfg.sparse_param_count() == 2ull * 1024ull * 16ull);
  cfg.injection = Injection::kLayer0Only;
  CHECK(cfg.sparse_param_count() == 1024ull * 16ull);
}
