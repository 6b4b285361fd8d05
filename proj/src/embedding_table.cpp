#include "lookuplm/embedding_table.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <utility>

#include "lookuplm/rng.hpp"
#include "lookuplm/serialize.hpp"

namespace lookuplm {

namespace {

constexpr char kTableMagic[4] = {'L', 'K', 'T', 'B'};
constexpr std::uint32_t kTableVersion = 1;
constexpr std::size_t kHeaderSize = 4 + 4 + 8 + 4;  // magic, version, rows, cols

void check_shape(std::uint64_t rows, std::uint32_t cols, std::uint64_t budget) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("table shape must be at least 1x1");
  if (rows > budget / cols) {
    throw std::invalid_argument("table of " + std::to_string(rows) + "x" +
                                std::to_string(cols) + " exceeds the storage budget of " +
                                std::to_string(budget) + " elements");
  }
}

}  // namespace

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw std::runtime_error("failed reading file: " + path);
  return data;
}

void write_file_bytes(const std::string& path, std::span<const char> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("failed writing file: " + path);
}

EmbeddingTable::EmbeddingTable(EmbeddingTable&& other) noexcept { *this = std::move(other); }

EmbeddingTable& EmbeddingTable::operator=(EmbeddingTable&& other) noexcept {
  if (this == &other) return *this;
  this->~EmbeddingTable();
  rows_ = std::exchange(other.rows_, 0);
  cols_ = std::exchange(other.cols_, 0);
  mem_ = std::move(other.mem_);
  map_base_ = std::exchange(other.map_base_, nullptr);
  map_size_ = std::exchange(other.map_size_, 0);
  fd_ = std::exchange(other.fd_, -1);
  data_ = mem_.empty() && map_base_ != nullptr
              ? reinterpret_cast<float*>(static_cast<char*>(map_base_) + kHeaderSize)
              : mem_.data();
  other.data_ = nullptr;
  return *this;
}

EmbeddingTable::~EmbeddingTable() {
  if (map_base_ != nullptr) {
    ::munmap(map_base_, map_size_);
    map_base_ = nullptr;
  }
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void EmbeddingTable::fill_uniform(float init_scale, std::uint64_t seed) {
  UniformRng rng(seed);
  const std::uint64_t n = rows_ * cols_;
  for (std::uint64_t i = 0; i < n; ++i) {
    data_[i] = rng.next_uniform(-init_scale, init_scale);
  }
}

EmbeddingTable EmbeddingTable::create(std::uint64_t rows, std::uint32_t cols, float init_scale,
                                      std::uint64_t seed, std::uint64_t budget_elements) {
  check_shape(rows, cols, budget_elements);
  EmbeddingTable t;
  t.rows_ = rows;
  t.cols_ = cols;
  t.mem_.assign(rows * cols, 0.0f);
  t.data_ = t.mem_.data();
  t.fill_uniform(init_scale, seed);
  return t;
}

EmbeddingTable EmbeddingTable::create_file_backed(const std::string& path, std::uint64_t rows,
                                                  std::uint32_t cols, float init_scale,
                                                  std::uint64_t seed,
                                                  std::uint64_t budget_elements) {
  check_shape(rows, cols, budget_elements);

  const std::size_t file_size = kHeaderSize + rows * cols * sizeof(float);
  int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw std::runtime_error("cannot create table file: " + path);
  if (::ftruncate(fd, static_cast<off_t>(file_size)) != 0) {
    ::close(fd);
    throw std::runtime_error("cannot size table file: " + path);
  }

  ByteWriter header;
  header.magic(kTableMagic);
  header.u32(kTableVersion);
  header.u64(rows);
  header.u32(cols);
  if (::pwrite(fd, header.data().data(), header.data().size(), 0) !=
      static_cast<ssize_t>(kHeaderSize)) {
    ::close(fd);
    throw std::runtime_error("cannot write table header: " + path);
  }

  void* base = ::mmap(nullptr, file_size, PROT_READ | PROT_WRITE, MAP_SHARED, fd, 0);
  if (base == MAP_FAILED) {
    ::close(fd);
    throw std::runtime_error("cannot map table file: " + path);
  }

  EmbeddingTable t;
  t.rows_ = rows;
  t.cols_ = cols;
  t.fd_ = fd;
  t.map_base_ = base;
  t.map_size_ = file_size;
  t.data_ = reinterpret_cast<float*>(static_cast<char*>(base) + kHeaderSize);
  t.fill_uniform(init_scale, seed);
  return t;
}

EmbeddingTable EmbeddingTable::open_file_backed(const std::string& path) {
  int fd = ::open(path.c_str(), O_RDWR);
  if (fd < 0) throw std::runtime_error("cannot open table file: " + path);
  struct stat st {};
  if (::fstat(fd, &st) != 0) {
    ::close(fd);
    throw std::runtime_error("cannot stat table file: " + path);
  }
  const std::size_t file_size = static_cast<std::size_t>(st.st_size);
  if (file_size < kHeaderSize) {
    ::close(fd);
    throw std::runtime_error("table file too short: " + path);
  }

  char header_bytes[kHeaderSize];
  if (::pread(fd, header_bytes, kHeaderSize, 0) != static_cast<ssize_t>(kHeaderSize)) {
    ::close(fd);
    throw std::runtime_error("cannot read table header: " + path);
  }
  ByteReader header(std::span<const char>(header_bytes, kHeaderSize));
  try {
    header.expect_magic(kTableMagic, path);
    const std::uint32_t version = header.u32();
    if (version != kTableVersion) throw std::runtime_error("unsupported table version");
    const std::uint64_t rows = header.u64();
    const std::uint32_t cols = header.u32();
    if (rows < 1 || cols < 1 || file_size != kHeaderSize + rows * cols * sizeof(float)) {
      throw std::runtime_error("table file size does not match header");
    }

    void* base = ::mmap(nullptr, file_size, PROT_READ | PROT_WRITE, MAP_SHARED, fd, 0);
    if (base == MAP_FAILED) throw std::runtime_error("cannot map table file");

    EmbeddingTable t;
    t.rows_ = rows;
    t.cols_ = cols;
    t.fd_ = fd;
    t.map_base_ = base;
    t.map_size_ = file_size;
    t.data_ = reinterpret_cast<float*>(static_cast<char*>(base) + kHeaderSize);
    return t;
  } catch (const std::exception& e) {
    ::close(fd);
    throw std::runtime_error(std::string(e.what()) + ": " + path);
  }
}

void EmbeddingTable::check_id(std::uint64_t id) const {
  if (id >= rows_) {
    throw std::out_of_range("embedding id " + std::to_string(id) + " outside [0, " +
                            std::to_string(rows_) + ")");
  }
}

std::span<const float> EmbeddingTable::row(std::uint64_t id) const {
  check_id(id);
  return {data_ + id * cols_, cols_};
}

std::span<float> EmbeddingTable::mutable_row(std::uint64_t id) {
  check_id(id);
  return {data_ + id * cols_, cols_};
}

void EmbeddingTable::flush() {
  if (map_base_ == nullptr) return;
  if (::msync(map_base_, map_size_, MS_SYNC) != 0) {
    throw std::runtime_error("msync failed on table file");
  }
}

void EmbeddingTable::write_block(ByteWriter& out) const {
  out.magic(kTableMagic);
  out.u32(kTableVersion);
  out.u64(rows_);
  out.u32(cols_);
  out.f32_array({data_, rows_ * cols_});
}

EmbeddingTable EmbeddingTable::read_block(ByteReader& in) {
  in.expect_magic(kTableMagic, "table block");
  const std::uint32_t version = in.u32();
  if (version != kTableVersion) throw std::runtime_error("unsupported table version");
  const std::uint64_t rows = in.u64();
  const std::uint32_t cols = in.u32();
  if (rows < 1 || cols < 1) throw std::runtime_error("bad table block shape");
  EmbeddingTable t;
  t.rows_ = rows;
  t.cols_ = cols;
  t.mem_.assign(rows * cols, 0.0f);
  t.data_ = t.mem_.data();
  in.f32_array({t.data_, rows * cols});
  return t;
}

void SparseAdamState::apply(EmbeddingTable& table, std::uint64_t id,
                            std::span<const float> grad, double lr) {
  if (grad.size() != cols_ || table.cols() != cols_) {
    throw std::invalid_argument("gradient length does not match table width");
  }
  for (float g : grad) {
    if (!std::isfinite(g)) throw std::runtime_error("non-finite sparse gradient rejected");
  }

  std::span<float> row = table.mutable_row(id);
  RowState& rs = rows_[id];
  if (rs.m.empty()) {
    rs.m.assign(cols_, 0.0f);
    rs.v.assign(cols_, 0.0f);
  }
  rs.count += 1;
  const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(rs.count));
  const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(rs.count));
  for (std::uint32_t j = 0; j < cols_; ++j) {
    const double g = grad[j];
    const double m = hyper_.beta1 * rs.m[j] + (1.0 - hyper_.beta1) * g;
    const double v = hyper_.beta2 * rs.v[j] + (1.0 - hyper_.beta2) * g * g;
    rs.m[j] = static_cast<float>(m);
    rs.v[j] = static_cast<float>(v);
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    row[j] = static_cast<float>(row[j] - lr * m_hat / (std::sqrt(v_hat) + hyper_.eps));
  }
}

std::uint64_t SparseAdamState::update_count(std::uint64_t id) const {
  auto it = rows_.find(id);
  return it == rows_.end() ? 0 : it->second.count;
}

std::span<const float> SparseAdamState::first_moment(std::uint64_t id) const {
  auto it = rows_.find(id);
  if (it == rows_.end()) throw std::out_of_range("row has no materialized optimizer state");
  return it->second.m;
}

std::span<const float> SparseAdamState::second_moment(std::uint64_t id) const {
  auto it = rows_.find(id);
  if (it == rows_.end()) throw std::out_of_range("row has no materialized optimizer state");
  return it->second.v;
}

void SparseAdamState::write_block(ByteWriter& out) const {
  out.u32(cols_);
  out.pod(hyper_.beta1);
  out.pod(hyper_.beta2);
  out.pod(hyper_.eps);
  out.u64(rows_.size());
  for (const auto& [id, rs] : rows_) {
    out.u64(id);
    out.u64(rs.count);
    out.f32_array(rs.m);
    out.f32_array(rs.v);
  }
}

SparseAdamState SparseAdamState::read_block(ByteReader& in) {
  SparseAdamState s;
  s.cols_ = in.u32();
  s.hyper_.beta1 = in.pod<double>();
  s.hyper_.beta2 = in.pod<double>();
  s.hyper_.eps = in.pod<double>();
  const std::uint64_t n = in.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t id = in.u64();
    RowState rs;
    rs.count = in.u64();
    rs.m.resize(s.cols_);
    rs.v.resize(s.cols_);
    in.f32_array(rs.m);
    in.f32_array(rs.v);
    s.rows_.emplace(id, std::move(rs));
  }
  return s;
}

}  // namespace lookuplm
