#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lookuplm/embedding_table.hpp"
#include "lookuplm/model.hpp"
#include "lookuplm/vocab.hpp"

namespace lookuplm {

struct TrainConfig {
  std::int64_t steps = 1000;
  int batch_size = 32;
  double lr0 = 1e-3;
  double decay_rate = 0.5;
  std::int64_t decay_steps = 0;  // 0 selects steps / 4
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;
  int max_sentence_len = 64;  // words per sentence before truncation
  std::uint64_t seed = 1;
  double init_scale = 0.05;  // embedding-table init range

  void validate() const;
  std::int64_t effective_decay_steps() const;
  AdamHyper adam_hyper() const { return {beta1, beta2, eps}; }
};

// lr0 * decay_rate^(t / decay_steps) with a real-valued exponent.
double lr_at_step(const TrainConfig& cfg, std::int64_t t);

struct DenseAdamState {
  DenseParams m, v;
  std::int64_t step = 0;
};

// One elementwise Adam step over every dense array; bias correction uses the
// state's global step counter.
void dense_adam_update(DenseParams& params, const DenseParams& grads, DenseAdamState& state,
                       double lr, const AdamHyper& hyper);

double dense_grad_norm(const DenseParams& grads);

// Scales the dense gradients so their global norm is at most clip_norm.
// Returns the pre-clip norm.
double clip_dense_grads(DenseParams& grads, double clip_norm);

struct Checkpoint {
  ModelConfig model;
  DenseParams dense;
  std::vector<EmbeddingTable> tables;  // one per injected layer, slot order
  std::int64_t global_step = 0;
  bool has_optimizer = false;
  DenseAdamState dense_opt;
  std::vector<SparseAdamState> sparse_opt;  // parallel to tables

  TableSetView table_view() const { return {&model, tables}; }
  std::uint64_t stored_dense_count() const;
  std::uint64_t stored_sparse_count() const;
};

// Runs the full training loop: seeded shuffling with epoch wraparound,
// per-sentence forward/backward across the batch in parallel, loss
// normalization by predicted tokens, dense-gradient clipping, dense Adam and
// lazy sparse Adam, and a checkpoint written to out_path at the end
// (skipped when out_path is empty). Progress goes to stderr as key=value
// lines. A non-finite loss aborts with the failing step index.
Checkpoint train(const std::string& corpus_path, const Vocab& vocab,
                 const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                 const std::string& out_path);

// LKLM checkpoint file: magic, version u32, CRC32 of the payload, model
// config block, global step, dense arrays in declared order, per-slot LKTB
// table blocks, then an optional optimizer-state section. Save takes an
// advisory exclusive lock so two writers cannot interleave.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace lookuplm
