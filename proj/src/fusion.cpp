#include "lookuplm/fusion.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace lookuplm {

double fusion_score(const Hypothesis& hyp, const FusionWeights& weights, double lm_logp) {
  return hyp.acoustic_logp - weights.lambda2 * hyp.ilm_logp + weights.lambda1 * lm_logp;
}

namespace {

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(s, &used);
    return used == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

}  // namespace

NbestParse parse_nbest_file(const std::string& path) {
  NbestParse parsed;
  std::vector<Hypothesis> current;
  bool current_poisoned = false;
  std::string current_utt;

  auto close_current = [&]() {
    if (current_poisoned) {
      parsed.errors.push_back("utterance " + current_utt + " skipped");
    } else if (!current.empty()) {
      parsed.utterances.push_back(std::move(current));
    }
    current.clear();
    current_poisoned = false;
  };

  std::size_t line_no = 0;
  for (const std::string& line : read_lines(path)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_tabs(line);
    Hypothesis hyp;
    bool ok = fields.size() == 4;
    if (ok) {
      hyp.utt_id = fields[0];
      hyp.text = fields[1];
      ok = !hyp.utt_id.empty() && parse_double(fields[2], hyp.acoustic_logp) &&
           parse_double(fields[3], hyp.ilm_logp) && std::isfinite(hyp.acoustic_logp) &&
           std::isfinite(hyp.ilm_logp);
    }
    if (!ok) {
      // A malformed line poisons the utterance it belongs to: its own id
      // field when one is present, otherwise the group being accumulated.
      parsed.errors.push_back("line " + std::to_string(line_no) + ": malformed hypothesis");
      const std::string owner = fields.empty() ? "" : fields[0];
      if (!owner.empty() && owner != current_utt) {
        close_current();
        current_utt = owner;
      }
      current_poisoned = true;
      continue;
    }
    if (hyp.utt_id != current_utt) {
      close_current();
      current_utt = hyp.utt_id;
    }
    current.push_back(std::move(hyp));
  }
  close_current();
  return parsed;
}

std::vector<std::vector<ScoredHypothesis>> rescore_utterances(
    const std::vector<std::vector<Hypothesis>>& utterances, const Checkpoint& ckpt,
    const Vocab& vocab, const FusionWeights& weights) {
  // Flatten so LM scoring parallelizes over every hypothesis at once.
  std::vector<const Hypothesis*> flat;
  for (const auto& utt : utterances) {
    for (const auto& hyp : utt) flat.push_back(&hyp);
  }
  std::vector<double> lm_logp(flat.size(), 0.0);
  const TableSetView view = ckpt.table_view();
  std::string error;

#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(flat.size()); ++i) {
    try {
      const std::vector<int> seq = vocab.encode(flat[static_cast<std::size_t>(i)]->text);
      double total = 0.0;
      for (double nll : sequence_nll(ckpt.dense, ckpt.model, view, seq)) total += nll;
      lm_logp[static_cast<std::size_t>(i)] = -total;
    } catch (const std::exception& e) {
#pragma omp critical
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw std::runtime_error("rescoring failed: " + error);

  std::vector<std::vector<ScoredHypothesis>> out;
  std::size_t flat_index = 0;
  for (const auto& utt : utterances) {
    std::vector<ScoredHypothesis> scored;
    for (const auto& hyp : utt) {
      ScoredHypothesis s;
      s.hyp = hyp;
      s.lm_logp = lm_logp[flat_index++];
      s.score = fusion_score(hyp, weights, s.lm_logp);
      scored.push_back(std::move(s));
    }
    // Descending score; stable keeps file order on exact ties.
    std::stable_sort(scored.begin(), scored.end(),
                     [](const ScoredHypothesis& a, const ScoredHypothesis& b) {
                       return a.score > b.score;
                     });
    for (std::size_t r = 0; r < scored.size(); ++r) scored[r].rank = static_cast<int>(r + 1);
    out.push_back(std::move(scored));
  }
  return out;
}

std::vector<std::vector<ScoredHypothesis>> rescore_nbest(const std::string& nbest_path,
                                                         const Checkpoint& ckpt,
                                                         const Vocab& vocab,
                                                         const FusionWeights& weights,
                                                         const std::string& out_path) {
  const NbestParse parsed = parse_nbest_file(nbest_path);
  for (const std::string& e : parsed.errors) std::fprintf(stderr, "rescore: %s\n", e.c_str());

  const auto ranked = rescore_utterances(parsed.utterances, ckpt, vocab, weights);

  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write rescore output: " + out_path);
    char buf[64];
    for (const auto& utt : ranked) {
      for (const auto& s : utt) {
        out << s.hyp.utt_id << '\t' << s.hyp.text;
        std::snprintf(buf, sizeof(buf), "\t%.6f\t%.6f\t%.6f\t%.6f\t%d", s.hyp.acoustic_logp,
                      s.hyp.ilm_logp, s.lm_logp, s.score, s.rank);
        out << buf << '\n';
      }
    }
    if (!out) throw std::runtime_error("failed writing rescore output: " + out_path);
  }
  return ranked;
}

}  // namespace lookuplm
