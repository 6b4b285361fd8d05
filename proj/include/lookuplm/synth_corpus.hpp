#pragma once

#include <cstdint>
#include <string>

namespace lookuplm {

// Synthetic long-tail fixture corpora: a head grammar of frequent query
// templates plus entity names of the form "first mid connector second". The
// (first, mid) pair is unique per entity but built from small frequent
// pools, the connector is a frequent filler, and the final token is unique
// to the entity, so rare-word masks select exactly the final name tokens
// while the n-gram window preceding them still identifies the entity.
// Occurrence counts follow a long tail. Entities come in three classes:
//   head      - frequent in both the LM corpus and the transcript corpus
//   asr_rare  - frequent in the LM corpus, at most `threshold` occurrences in
//               the transcript corpus
//   tail      - at most `threshold` occurrences in both
// Held-out sentences reuse (template, entity) pairs seen in training but
// differ from every training line, so the window preceding an entity's second
// token transfers while the sentence string stays disjoint.
struct SynthOptions {
  std::uint64_t seed = 1;
  int head_entities = 40;
  int asr_rare_entities = 80;
  int tail_entities = 560;
  int heldout_head = 200;
  int threshold = 5;
};

struct SynthPaths {
  std::string train;    // LM training corpus (corpus B for curation)
  std::string asr;      // transcript-analog corpus (corpus A)
  std::string heldout;  // disjoint sentences for test-set curation
};

SynthPaths write_synth_corpora(const std::string& dir, const SynthOptions& opts);

}  // namespace lookuplm
