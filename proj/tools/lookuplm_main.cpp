#include <zlib.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lookuplm/eval.hpp"
#include "lookuplm/fusion.hpp"
#include "lookuplm/ngram_hash.hpp"
#include "lookuplm/run_config.hpp"
#include "lookuplm/serialize.hpp"
#include "lookuplm/trainer.hpp"
#include "lookuplm/vocab.hpp"

namespace {

using namespace lookuplm;

std::uint32_t file_crc32(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  return static_cast<std::uint32_t>(
      ::crc32(0, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& overrides) {
  RunConfig rc;
  if (!config_path.empty()) rc.apply_file(config_path);
  rc.apply_overrides(overrides);
  rc.echo(std::cerr);
  return rc;
}

void add_build_vocab(CLI::App& app) {
  auto* cmd = app.add_subcommand("build-vocab", "Build a token vocabulary from a corpus");
  auto corpus = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto max_size = std::make_shared<std::int64_t>(32768);
  cmd->add_option("--corpus", *corpus, "Training corpus, one sentence per line")->required();
  cmd->add_option("--out", *out, "Output vocab file, one token per line")->required();
  cmd->add_option("--max-size", *max_size, "Maximum vocabulary size including reserved ids");
  cmd->callback([corpus, out, max_size]() {
    const Vocab vocab = Vocab::build(*corpus, static_cast<std::size_t>(*max_size));
    vocab.save(*out);
    std::cerr << "vocab_size=" << vocab.size() << '\n';
    std::cout << "vocab=" << *out << " size=" << vocab.size() << '\n';
  });
}

void add_rescale(CLI::App& app) {
  auto* cmd =
      app.add_subcommand("rescale-corpus", "Rescale duplicate sentence frequencies to ceil(ln n)");
  auto corpus = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  cmd->add_option("--corpus", *corpus, "Input corpus")->required();
  cmd->add_option("--out", *out, "Rescaled output corpus")->required();
  cmd->callback([corpus, out]() {
    frequency_rescale_corpus(*corpus, *out);
    std::cout << "rescaled=" << *out << '\n';
  });
}

void add_train(CLI::App& app) {
  auto* cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  auto corpus = std::make_shared<std::string>();
  auto vocab_path = std::make_shared<std::string>();
  auto config = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto sets = std::make_shared<std::vector<std::string>>();
  cmd->add_option("--corpus", *corpus, "Training corpus")->required();
  cmd->add_option("--vocab", *vocab_path, "Vocab file from build-vocab")->required();
  cmd->add_option("--config", *config, "key=value config file");
  cmd->add_option("--out", *out, "Checkpoint output path")->required();
  cmd->add_option("--set", *sets, "Override a config key, e.g. --set steps=100");
  cmd->callback([corpus, vocab_path, config, out, sets]() {
    const RunConfig rc = load_run_config(*config, *sets);
    const Vocab vocab = Vocab::load(*vocab_path);
    train(*corpus, vocab, rc.model, rc.train, *out);
    std::printf("checkpoint=%s crc32=%08x\n", out->c_str(), file_crc32(*out));
  });
}

void add_eval(CLI::App& app) {
  auto* cmd = app.add_subcommand("eval", "Log perplexity per word on a test set");
  auto ckpt_path = std::make_shared<std::string>();
  auto vocab_path = std::make_shared<std::string>();
  auto testset_path = std::make_shared<std::string>();
  auto masked = std::make_shared<bool>(false);
  cmd->add_option("--ckpt", *ckpt_path, "Checkpoint file")->required();
  cmd->add_option("--vocab", *vocab_path, "Vocab file")->required();
  cmd->add_option("--testset", *testset_path, "Test set file (sentence<TAB>mask)")->required();
  cmd->add_flag("--masked", *masked, "Also report the masked (rare word portion) metric");
  cmd->callback([ckpt_path, vocab_path, testset_path, masked]() {
    const Checkpoint ckpt = load_checkpoint(*ckpt_path);
    const Vocab vocab = Vocab::load(*vocab_path);
    const TestSetSpec testset = TestSetSpec::load(*testset_path, *testset_path);
    std::cout << "testset=" << *testset_path << " sentences=" << testset.sentences.size()
              << '\n';
    const PerplexityResult full = log_perplexity(ckpt, vocab, testset, false);
    std::printf("logpp_unmasked=%.6f tokens=%lld\n", full.log_pp,
                static_cast<long long>(full.selected));
    if (*masked) {
      const PerplexityResult part = log_perplexity(ckpt, vocab, testset, true);
      std::printf("logpp_masked=%.6f tokens=%lld\n", part.log_pp,
                  static_cast<long long>(part.selected));
    }
  });
}

void add_curate(CLI::App& app) {
  auto* cmd = app.add_subcommand("curate", "Curate Head/RareA/RareBOTH test sets");
  auto corpus_a = std::make_shared<std::string>();
  auto corpus_b = std::make_shared<std::string>();
  auto heldout = std::make_shared<std::string>();
  auto out_dir = std::make_shared<std::string>();
  auto threshold = std::make_shared<int>(5);
  auto head_size = std::make_shared<std::int64_t>(1000);
  auto rare_size = std::make_shared<std::int64_t>(1000);
  cmd->add_option("--corpus-a", *corpus_a, "Transcript-analog corpus (ASR side)")->required();
  cmd->add_option("--corpus-b", *corpus_b, "LM training corpus")->required();
  cmd->add_option("--heldout", *heldout, "Held-out sentences, disjoint from training lines")
      ->required();
  cmd->add_option("--threshold", *threshold, "Rare word count threshold (inclusive)");
  cmd->add_option("--out-dir", *out_dir, "Output directory")->required();
  cmd->add_option("--head-size", *head_size, "Head test set size");
  cmd->add_option("--rare-size", *rare_size, "Rare test set sizes");
  cmd->callback([=]() {
    CurateSizes sizes;
    sizes.head = static_cast<std::size_t>(*head_size);
    sizes.rare_a = static_cast<std::size_t>(*rare_size);
    sizes.rare_both = static_cast<std::size_t>(*rare_size);
    const CuratedSets sets = curate_testsets(*corpus_a, *corpus_b, *heldout, *threshold, sizes);
    for (const std::string& s : sets.shortfalls) std::cerr << "curate: " << s << '\n';
    std::filesystem::create_directories(*out_dir);
    sets.head.save(*out_dir + "/head.tsv");
    sets.rare_a.save(*out_dir + "/rare_a.tsv");
    sets.rare_both.save(*out_dir + "/rare_both.tsv");
    auto write_words = [](const std::string& path, const std::vector<std::string>& words) {
      ByteWriter w;
      for (const std::string& word : words) {
        w.bytes(word.data(), word.size());
        w.u8('\n');
      }
      write_file_bytes(path, w.data());
    };
    write_words(*out_dir + "/rare_a_words.txt", sets.rare_a_words);
    write_words(*out_dir + "/rare_both_words.txt", sets.rare_both_words);
    std::cout << "head=" << sets.head.sentences.size()
              << " rare_a=" << sets.rare_a.sentences.size()
              << " rare_both=" << sets.rare_both.sentences.size() << '\n';
  });
}

void add_hash_stats(CLI::App& app) {
  auto* cmd = app.add_subcommand("hash-stats", "N-gram hash collision statistics over a corpus");
  auto corpus = std::make_shared<std::string>();
  auto vocab_path = std::make_shared<std::string>();
  auto order = std::make_shared<int>(4);
  auto table_size = std::make_shared<std::uint64_t>(0);
  auto include_current = std::make_shared<bool>(false);
  cmd->add_option("--corpus", *corpus, "Corpus to scan")->required();
  cmd->add_option("--vocab", *vocab_path, "Vocab file")->required();
  cmd->add_option("--order", *order, "N-gram order");
  cmd->add_option("--table-size", *table_size, "Embedding vocabulary size U")->required();
  cmd->add_flag("--include-current", *include_current, "Window ends at the current token");
  cmd->callback([corpus, vocab_path, order, table_size, include_current]() {
    const Vocab vocab = Vocab::load(*vocab_path);
    HashConfig cfg{vocab.size(), *table_size, *order, *include_current};
    const CollisionStats stats = collision_stats(*corpus, vocab, cfg);
    std::printf("distinct_ngrams\t%llu\n", static_cast<unsigned long long>(stats.distinct_ngrams));
    std::printf("distinct_ids\t%llu\n", static_cast<unsigned long long>(stats.distinct_ids));
    std::printf("load_factor\t%.6f\n", stats.load_factor);
    std::printf("max_bucket\t%llu\n", static_cast<unsigned long long>(stats.max_bucket));
  });
}

void add_rescore(CLI::App& app) {
  auto* cmd = app.add_subcommand("rescore", "Shallow-fusion rescoring of an n-best list");
  auto ckpt_path = std::make_shared<std::string>();
  auto vocab_path = std::make_shared<std::string>();
  auto nbest = std::make_shared<std::string>();
  auto lambda1 = std::make_shared<double>(0.0);
  auto lambda2 = std::make_shared<double>(0.0);
  auto out = std::make_shared<std::string>();
  cmd->add_option("--ckpt", *ckpt_path, "Checkpoint file")->required();
  cmd->add_option("--vocab", *vocab_path, "Vocab file")->required();
  cmd->add_option("--nbest", *nbest, "N-best TSV: utt_id, text, acoustic_logp, ilm_logp")
      ->required();
  cmd->add_option("--lambda1", *lambda1, "External LM weight");
  cmd->add_option("--lambda2", *lambda2, "Internal LM weight");
  cmd->add_option("--out", *out, "Ranked output TSV")->required();
  cmd->callback([ckpt_path, vocab_path, nbest, lambda1, lambda2, out]() {
    const Checkpoint ckpt = load_checkpoint(*ckpt_path);
    const Vocab vocab = Vocab::load(*vocab_path);
    const auto ranked = rescore_nbest(*nbest, ckpt, vocab, {*lambda1, *lambda2}, *out);
    std::size_t hyps = 0;
    for (const auto& utt : ranked) hyps += utt.size();
    std::cout << "utterances=" << ranked.size() << " hypotheses=" << hyps << " out=" << *out
              << '\n';
  });
}

void add_sweep(CLI::App& app) {
  auto* cmd = app.add_subcommand("sweep", "Train and score a grid of table configurations");
  auto grid = std::make_shared<std::string>();
  auto corpus = std::make_shared<std::string>();
  auto vocab_path = std::make_shared<std::string>();
  auto testsets = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto config = std::make_shared<std::string>();
  auto sets = std::make_shared<std::vector<std::string>>();
  cmd->add_option("--grid", *grid, "Grid file: key=value pairs per line")->required();
  cmd->add_option("--corpus", *corpus, "Training corpus")->required();
  cmd->add_option("--vocab", *vocab_path, "Vocab file")->required();
  cmd->add_option("--testsets", *testsets, "Directory holding curate output")->required();
  cmd->add_option("--out", *out, "Also write the results table here");
  cmd->add_option("--config", *config, "key=value config file");
  cmd->add_option("--set", *sets, "Override a config key");
  cmd->callback([grid, corpus, vocab_path, testsets, out, config, sets]() {
    const RunConfig rc = load_run_config(*config, *sets);
    const Vocab vocab = Vocab::load(*vocab_path);
    CuratedSets curated;
    curated.head = TestSetSpec::load(*testsets + "/head.tsv", "Head");
    curated.rare_a = TestSetSpec::load(*testsets + "/rare_a.tsv", "RareA");
    curated.rare_both = TestSetSpec::load(*testsets + "/rare_both.tsv", "RareBOTH");
    const auto entries = parse_grid_file(*grid, rc.model);
    const auto rows = ablation_sweep(entries, rc.model, rc.train, *corpus, vocab, curated);
    const std::string tsv = sweep_table_tsv(rows);
    std::cout << tsv;
    if (!out->empty()) write_file_bytes(*out, tsv);
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LookupLM: recurrent language model with hash-addressed n-gram embedding tables"};
  app.require_subcommand(1);
  add_build_vocab(app);
  add_rescale(app);
  add_train(app);
  add_eval(app);
  add_curate(app);
  add_hash_stats(app);
  add_rescore(app);
  add_sweep(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
