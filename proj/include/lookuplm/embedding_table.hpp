#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace lookuplm {

inline constexpr std::uint64_t kDefaultTableBudget = 1ull << 31;  // elements per table

class ByteWriter;
class ByteReader;

// U x E table of f32 rows, the sparse parameter store. Rows live either in
// process memory or in a memory-mapped file with the LKTB layout:
//   magic 'LKTB', version u32, rows u64, cols u32, rows*cols f32 little-endian.
// Both backends are bit-identical under identical operation histories.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(const EmbeddingTable&) = delete;
  EmbeddingTable& operator=(const EmbeddingTable&) = delete;
  EmbeddingTable(EmbeddingTable&& other) noexcept;
  EmbeddingTable& operator=(EmbeddingTable&& other) noexcept;
  ~EmbeddingTable();

  // Rows drawn i.i.d. uniform in [-init_scale, init_scale] from the seeded
  // generator; scale 0 gives an all-zero table.
  static EmbeddingTable create(std::uint64_t rows, std::uint32_t cols, float init_scale,
                               std::uint64_t seed,
                               std::uint64_t budget_elements = kDefaultTableBudget);
  static EmbeddingTable create_file_backed(const std::string& path, std::uint64_t rows,
                                           std::uint32_t cols, float init_scale,
                                           std::uint64_t seed,
                                           std::uint64_t budget_elements = kDefaultTableBudget);
  static EmbeddingTable open_file_backed(const std::string& path);

  std::uint64_t rows() const { return rows_; }
  std::uint32_t cols() const { return cols_; }
  bool file_backed() const { return fd_ >= 0; }

  std::span<const float> row(std::uint64_t id) const;
  std::span<float> mutable_row(std::uint64_t id);

  // Durability barrier for every write issued so far (msync on the mapping).
  // No-op for in-memory tables.
  void flush();

  // LKTB block embedded in a checkpoint payload; reading always yields an
  // in-memory table.
  void write_block(ByteWriter& out) const;
  static EmbeddingTable read_block(ByteReader& in);

 private:
  void check_id(std::uint64_t id) const;
  float* data() { return data_; }
  const float* data() const { return data_; }
  void fill_uniform(float init_scale, std::uint64_t seed);

  std::uint64_t rows_ = 0;
  std::uint32_t cols_ = 0;
  std::vector<float> mem_;       // in-memory backend
  float* data_ = nullptr;        // points into mem_ or the mapping
  void* map_base_ = nullptr;     // file backend
  std::size_t map_size_ = 0;
  int fd_ = -1;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Lazy per-row Adam. Moments materialize on first touch; untouched rows keep
// m = v = 0 and count 0, and bias correction uses the per-row update count
// rather than the global step.
class SparseAdamState {
 public:
  SparseAdamState() = default;
  explicit SparseAdamState(std::uint32_t cols, AdamHyper hyper = {})
      : cols_(cols), hyper_(hyper) {}

  // row <- row - lr * m_hat / (sqrt(v_hat) + eps). Rejects non-finite
  // gradients without touching any state.
  void apply(EmbeddingTable& table, std::uint64_t id, std::span<const float> grad, double lr);

  std::uint64_t touched_rows() const { return rows_.size(); }
  std::uint64_t update_count(std::uint64_t id) const;
  std::span<const float> first_moment(std::uint64_t id) const;
  std::span<const float> second_moment(std::uint64_t id) const;
  const AdamHyper& hyper() const { return hyper_; }
  std::uint32_t cols() const { return cols_; }

  void write_block(ByteWriter& out) const;
  static SparseAdamState read_block(ByteReader& in);

 private:
  struct RowState {
    std::uint64_t count = 0;
    std::vector<float> m, v;
  };

  std::uint32_t cols_ = 0;
  AdamHyper hyper_;
  std::map<std::uint64_t, RowState> rows_;  // ordered: deterministic serialization
};

}  // namespace lookuplm
