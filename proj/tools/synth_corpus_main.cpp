#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "lookuplm/synth_corpus.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic long-tail corpus generator for LookupLM fixtures"};
  std::string out_dir;
  lookuplm::SynthOptions opts;
  app.add_option("--out-dir", out_dir, "Directory for train.txt, asr.txt, heldout.txt")
      ->required();
  app.add_option("--seed", opts.seed, "Generator seed");
  app.add_option("--head-entities", opts.head_entities, "Entities frequent in both corpora");
  app.add_option("--asr-rare-entities", opts.asr_rare_entities,
                 "Entities frequent in the LM corpus, rare in the transcripts");
  app.add_option("--tail-entities", opts.tail_entities, "Entities rare in both corpora");
  app.add_option("--heldout-head", opts.heldout_head, "Held-out head sentences");
  app.add_option("--threshold", opts.threshold, "Rare count threshold");

  try {
    app.parse(argc, argv);
    std::filesystem::create_directories(out_dir);
    const auto paths = lookuplm::write_synth_corpora(out_dir, opts);
    std::cout << "train=" << paths.train << " asr=" << paths.asr << " heldout=" << paths.heldout
              << '\n';
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
