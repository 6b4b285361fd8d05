#include "lookuplm/synth_corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "lookuplm/rng.hpp"

namespace lookuplm {

namespace {

const std::vector<std::string> kTemplates = {
    "directions to", "navigate to", "show me", "where is", "find", "take me to",
};

// First suffix entry means "no suffix"; the rest are frequent filler words.
const std::vector<std::string> kSuffixes = {"", "please", "now", "thanks", "today"};

// Entity names are "first connector second" with entity-specific rare first
// and second tokens around a frequent connector. The n-gram window ends one
// position before the current input token, so the window that predicts the
// second name token reaches back exactly to the entity-specific first token.
const std::vector<std::string> kConnectors = {"creek", "lake", "plaza", "heights", "bay",
                                              "grove"};

const std::vector<std::string> kFillerSentences = {
    "coffee near me",         "gas station near me", "open now",
    "restaurants open late",  "parking near me",     "traffic on my route",
    "hotels with free wifi",  "pharmacy near me",    "best pizza around here",
    "grocery store hours",    "bank open today",     "car wash near me",
    "airport departures",     "bus schedule",        "train times today",
    "hardware store near me", "cheap flights",       "weather this weekend",
    "library opening hours",  "atm near me",
};

struct Entity {
  std::string first, connector, second;
};

std::string make_line(const std::string& tmpl, const Entity& e, const std::string& suffix) {
  std::string line = tmpl + " " + e.first + " " + e.connector + " " + e.second;
  if (!suffix.empty()) line += " " + suffix;
  return line;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  for (const std::string& line : lines) out << line << '\n';
  if (!out) throw std::runtime_error("failed writing corpus file: " + path);
}

}  // namespace

SynthPaths write_synth_corpora(const std::string& dir, const SynthOptions& opts) {
  if (opts.head_entities < 1 || opts.asr_rare_entities < 1 || opts.tail_entities < 1) {
    throw std::invalid_argument("synth corpus needs at least one entity per class");
  }
  UniformRng rng(UniformRng::derive(opts.seed, 0xC0FFEE));

  // Entity names: a unique (first, mid) pair per entity drawn from shared
  // frequent pools, plus a unique rare final token; shuffled assignments so
  // the structure carries no positional pattern.
  const int total = opts.head_entities + opts.asr_rare_entities + opts.tail_entities;
  if (total > kFirstPool * kMidPool) {
    throw std::invalid_argument("entity count exceeds the (first, mid) name pair pool");
  }
  std::vector<int> pair_slots(static_cast<std::size_t>(kFirstPool * kMidPool));
  for (std::size_t i = 0; i < pair_slots.size(); ++i) pair_slots[i] = static_cast<int>(i);
  shuffle_in_place(pair_slots, rng);
  std::vector<int> pairing(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) pairing[static_cast<std::size_t>(i)] = i;
  shuffle_in_place(pairing, rng);

  std::vector<Entity> entities;
  char buf[32];
  for (int i = 0; i < total; ++i) {
    Entity e;
    const int slot = pair_slots[static_cast<std::size_t>(i)];
    std::snprintf(buf, sizeof(buf), "poi%03d", slot / kMidPool);
    e.first = buf;
    std::snprintf(buf, sizeof(buf), "mid%02d", slot % kMidPool);
    e.mid = buf;
    e.connector = kConnectors[static_cast<std::size_t>(rng.next_below(kConnectors.size()))];
    std::snprintf(buf, sizeof(buf), "loc%04d", pairing[static_cast<std::size_t>(i)]);
    e.second = buf;
    entities.push_back(e);
  }
  const auto entity_class = [&](int i) {
    if (i < opts.head_entities) return 0;          // head
    if (i < opts.head_entities + opts.asr_rare_entities) return 1;  // asr_rare
    return 2;                                      // tail
  };

  // Training occurrence counts per class. Tail counts follow a long tail
  // capped at the rare threshold.
  const auto tail_count = [&rng, &opts]() {
    const double u = rng.next_unit();
    int k = 1;
    if (u > 0.25) k = 2;
    if (u > 0.60) k = 3;
    if (u > 0.80) k = 4;
    if (u > 0.92) k = 5;
    return std::min(k, opts.threshold);
  };

  std::vector<std::string> train_lines, asr_lines;
  std::set<std::string> train_set;
  // Per entity: (template index used in training) -> suffix indices used.
  std::vector<std::map<std::size_t, std::set<std::size_t>>> used(
      static_cast<std::size_t>(total));

  auto emit_train = [&](int entity_index) {
    const std::size_t t = static_cast<std::size_t>(rng.next_below(kTemplates.size()));
    const std::size_t s = static_cast<std::size_t>(rng.next_below(kSuffixes.size()));
    const std::string line =
        make_line(kTemplates[t], entities[static_cast<std::size_t>(entity_index)], kSuffixes[s]);
    train_lines.push_back(line);
    train_set.insert(line);
    used[static_cast<std::size_t>(entity_index)][t].insert(s);
  };
  auto emit_asr = [&](int entity_index) {
    const std::size_t t = static_cast<std::size_t>(rng.next_below(kTemplates.size()));
    const std::size_t s = static_cast<std::size_t>(rng.next_below(kSuffixes.size()));
    asr_lines.push_back(
        make_line(kTemplates[t], entities[static_cast<std::size_t>(entity_index)], kSuffixes[s]));
  };

  for (int i = 0; i < total; ++i) {
    switch (entity_class(i)) {
      case 0: {  // head: frequent everywhere
        const int n_train = 30 + static_cast<int>(rng.next_below(21));
        const int n_asr = 10 + static_cast<int>(rng.next_below(11));
        for (int k = 0; k < n_train; ++k) emit_train(i);
        for (int k = 0; k < n_asr; ++k) emit_asr(i);
        break;
      }
      case 1: {  // asr_rare: well above threshold in train, at most 2 in asr
        const int n_train = 2 * opts.threshold + static_cast<int>(rng.next_below(11));
        const int n_asr = static_cast<int>(rng.next_below(3));
        for (int k = 0; k < n_train; ++k) emit_train(i);
        for (int k = 0; k < n_asr; ++k) emit_asr(i);
        break;
      }
      default: {  // tail: long-tail counts in train, at most 1 in asr
        const int n_train = tail_count();
        for (int k = 0; k < n_train; ++k) emit_train(i);
        if (rng.next_unit() < 0.3) emit_asr(i);
        break;
      }
    }
  }

  // Frequent entity-free sentences give the head grammar mass in both corpora.
  for (const std::string& filler : kFillerSentences) {
    const int n_train = 15 + static_cast<int>(rng.next_below(16));
    const int n_asr = 8 + static_cast<int>(rng.next_below(9));
    for (int k = 0; k < n_train; ++k) train_lines.push_back(filler);
    for (int k = 0; k < n_asr; ++k) asr_lines.push_back(filler);
    train_set.insert(filler);
  }

  // Held-out sentences. Entity lines reuse a trained (template, entity) pair
  // with a suffix unused for that pair, keeping the pre-entity window trained
  // while the full line stays out of the training set.
  std::vector<std::string> heldout_head, heldout_rare;
  std::set<std::string> heldout_set;

  // Head candidates: every (entity, template, suffix-variant) line not used in
  // training, where variants include two-word suffixes so the pool stays far
  // larger than the training draw.
  std::vector<std::string> suffix_variants = kSuffixes;
  for (std::size_t a = 1; a < kSuffixes.size(); ++a) {
    for (std::size_t b = 1; b < kSuffixes.size(); ++b) {
      if (a != b) suffix_variants.push_back(kSuffixes[a] + " " + kSuffixes[b]);
    }
  }
  std::vector<std::string> head_candidates;
  for (int i = 0; i < opts.head_entities; ++i) {
    for (const auto& tmpl : kTemplates) {
      for (const auto& suffix : suffix_variants) {
        const std::string line =
            make_line(tmpl, entities[static_cast<std::size_t>(i)], suffix);
        if (train_set.count(line) == 0) head_candidates.push_back(line);
      }
    }
  }
  if (static_cast<int>(head_candidates.size()) < opts.heldout_head) {
    throw std::runtime_error("could not generate enough held-out head sentences");
  }
  shuffle_in_place(head_candidates, rng);
  for (int i = 0; i < opts.heldout_head; ++i) {
    heldout_head.push_back(head_candidates[static_cast<std::size_t>(i)]);
    heldout_set.insert(head_candidates[static_cast<std::size_t>(i)]);
  }

  for (int i = opts.head_entities; i < total; ++i) {
    const auto& trained = used[static_cast<std::size_t>(i)];
    if (trained.empty()) continue;
    bool placed = false;
    for (const auto& [t, suffixes] : trained) {
      for (std::size_t s = 0; s < kSuffixes.size() && !placed; ++s) {
        if (suffixes.count(s) > 0) continue;
        const std::string line =
            make_line(kTemplates[t], entities[static_cast<std::size_t>(i)], kSuffixes[s]);
        if (train_set.count(line) > 0 || heldout_set.count(line) > 0) continue;
        heldout_rare.push_back(line);
        heldout_set.insert(line);
        placed = true;
      }
      if (placed) break;
    }
    if (!placed) {
      // Every suffix taken for every trained template; extend with a second
      // filler word, which cannot collide with any 4-or-5-word training line
      // and keeps every held-out non-entity word frequent.
      const auto& [t, suffixes] = *trained.begin();
      (void)suffixes;
      const std::string line =
          make_line(kTemplates[t], entities[static_cast<std::size_t>(i)], "now please");
      heldout_rare.push_back(line);
      heldout_set.insert(line);
    }
  }

  shuffle_in_place(train_lines, rng);
  shuffle_in_place(asr_lines, rng);
  shuffle_in_place(heldout_rare, rng);

  std::vector<std::string> heldout_lines = heldout_head;
  heldout_lines.insert(heldout_lines.end(), heldout_rare.begin(), heldout_rare.end());

  SynthPaths paths;
  paths.train = dir + "/train.txt";
  paths.asr = dir + "/asr.txt";
  paths.heldout = dir + "/heldout.txt";
  write_lines(paths.train, train_lines);
  write_lines(paths.asr, asr_lines);
  write_lines(paths.heldout, heldout_lines);
  return paths;
}

}  // namespace lookuplm
