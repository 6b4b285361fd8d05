#pragma once

#include <string>
#include <vector>

#include "lookuplm/trainer.hpp"
#include "lookuplm/vocab.hpp"

namespace lookuplm {

// One n-best entry. Acoustic and internal-LM log scores are inputs produced
// elsewhere; this toolkit never computes them.
struct Hypothesis {
  std::string utt_id;
  std::string text;
  double acoustic_logp = 0.0;
  double ilm_logp = 0.0;
};

struct FusionWeights {
  double lambda1 = 0.0;  // external LM weight
  double lambda2 = 0.0;  // internal LM weight
};

// acoustic - lambda2 * ilm + lambda1 * lm, the HAT-factorized fusion score.
double fusion_score(const Hypothesis& hyp, const FusionWeights& weights, double lm_logp);

struct ScoredHypothesis {
  Hypothesis hyp;
  double lm_logp = 0.0;
  double score = 0.0;
  int rank = 0;  // 1 = top
};

// N-best file: TSV lines `utt_id<TAB>text<TAB>acoustic_logp<TAB>ilm_logp`,
// hypotheses of one utterance contiguous.
struct NbestParse {
  std::vector<std::vector<Hypothesis>> utterances;
  std::vector<std::string> errors;  // one per malformed line / skipped utterance
};
NbestParse parse_nbest_file(const std::string& path);

// Scores every hypothesis with the LM (log-probability of the full sentence
// under the checkpoint), sorts each utterance by descending fusion score with
// ties kept in file order, and assigns ranks.
std::vector<std::vector<ScoredHypothesis>> rescore_utterances(
    const std::vector<std::vector<Hypothesis>>& utterances, const Checkpoint& ckpt,
    const Vocab& vocab, const FusionWeights& weights);

// File-to-file driver. Output columns: input columns plus lm_logp,
// fusion_score, rank. Returns the ranked lists.
std::vector<std::vector<ScoredHypothesis>> rescore_nbest(const std::string& nbest_path,
                                                         const Checkpoint& ckpt,
                                                         const Vocab& vocab,
                                                         const FusionWeights& weights,
                                                         const std::string& out_path);

}  // namespace lookuplm
