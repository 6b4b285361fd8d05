#pragma once

#include <span>
#include <vector>

#include "lookuplm/model.hpp"

namespace lookuplm::reference {

// Serial, double-precision re-implementation of the forward pass, kept as an
// independent check on the production kernels. Everything is written out as
// plain scalar loops from the architecture definition; it shares parameter
// containers with the production path but none of its compute helpers.

// Logits after consuming input_token; state updated in place.
std::vector<double> forward_step(const DenseParamsT<double>& params, const ModelConfig& cfg,
                                 RnnStateT<double>& state, int input_token,
                                 std::span<const std::uint64_t> ngram_ids,
                                 const BasicTableSetT<double>& tables);

// Per-position NLLs of a BOS-initial sequence, positions 1..len-1.
std::vector<double> sequence_nll(const DenseParamsT<double>& params, const ModelConfig& cfg,
                                 const BasicTableSetT<double>& tables,
                                 std::span<const int> seq);

double total_nll(const DenseParamsT<double>& params, const ModelConfig& cfg,
                 const BasicTableSetT<double>& tables, std::span<const int> seq);

}  // namespace lookuplm::reference
