#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>
#include <zlib.h>

#include <cstdio>
#include <stdexcept>

#include "lookuplm/serialize.hpp"
#include "lookuplm/trainer.hpp"

namespace lookuplm {

namespace {

constexpr char kCheckpointMagic[4] = {'L', 'K', 'L', 'M'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::uint32_t payload_crc(std::span<const char> payload) {
  return static_cast<std::uint32_t>(
      ::crc32(0, reinterpret_cast<const Bytef*>(payload.data()),
              static_cast<uInt>(payload.size())));
}

std::uint8_t injection_code(Injection injection) {
  switch (injection) {
    case Injection::kNone: return 0;
    case Injection::kLayer0Only: return 1;
    case Injection::kEveryLayer: return 2;
  }
  return 0;
}

Injection injection_from_code(std::uint8_t code) {
  switch (code) {
    case 0: return Injection::kNone;
    case 1: return Injection::kLayer0Only;
    case 2: return Injection::kEveryLayer;
  }
  throw std::runtime_error("bad injection code in checkpoint");
}

void write_model_config(ByteWriter& out, const ModelConfig& cfg) {
  out.i32(cfg.layers);
  out.i32(cfg.hidden);
  out.i32(cfg.input_dim);
  out.i64(cfg.vocab_size);
  out.i32(cfg.order);
  out.u64(cfg.table_rows);
  out.i32(cfg.table_dim);
  out.u8(cfg.include_current ? 1 : 0);
  out.u8(injection_code(cfg.injection));
}

ModelConfig read_model_config(ByteReader& in) {
  ModelConfig cfg;
  cfg.layers = in.i32();
  cfg.hidden = in.i32();
  cfg.input_dim = in.i32();
  cfg.vocab_size = in.i64();
  cfg.order = in.i32();
  cfg.table_rows = in.u64();
  cfg.table_dim = in.i32();
  cfg.include_current = in.u8() != 0;
  cfg.injection = injection_from_code(in.u8());
  cfg.validate();
  return cfg;
}

// File write under an advisory exclusive lock; a concurrent writer fails
// fast instead of interleaving.
void write_locked(const std::string& path, std::span<const char> data) {
  int fd = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
  if (fd < 0) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  if (::flock(fd, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd);
    throw std::runtime_error("checkpoint is locked by another writer: " + path);
  }
  bool ok = ::ftruncate(fd, 0) == 0;
  std::size_t off = 0;
  while (ok && off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n <= 0) {
      ok = false;
      break;
    }
    off += static_cast<std::size_t>(n);
  }
  ok = ::close(fd) == 0 && ok;  // close releases the lock
  if (!ok) throw std::runtime_error("failed writing checkpoint: " + path);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  ByteWriter payload;
  write_model_config(payload, ckpt.model);
  payload.i64(ckpt.global_step);
  ckpt.dense.for_each_array([&payload](std::span<const float> a) { payload.f32_array(a); });
  payload.u32(static_cast<std::uint32_t>(ckpt.tables.size()));
  for (const auto& table : ckpt.tables) table.write_block(payload);
  payload.u8(ckpt.has_optimizer ? 1 : 0);
  if (ckpt.has_optimizer) {
    payload.i64(ckpt.dense_opt.step);
    ckpt.dense_opt.m.for_each_array(
        [&payload](std::span<const float> a) { payload.f32_array(a); });
    ckpt.dense_opt.v.for_each_array(
        [&payload](std::span<const float> a) { payload.f32_array(a); });
    payload.u32(static_cast<std::uint32_t>(ckpt.sparse_opt.size()));
    for (const auto& state : ckpt.sparse_opt) state.write_block(payload);
  }

  ByteWriter file;
  file.magic(kCheckpointMagic);
  file.u32(kCheckpointVersion);
  file.u32(payload_crc(payload.data()));
  file.bytes(payload.data().data(), payload.data().size());
  write_locked(path, file.data());
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  ByteReader in(bytes);
  in.expect_magic(kCheckpointMagic, "checkpoint " + path);
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version in " + path);
  }
  const std::uint32_t crc = in.u32();
  if (crc != payload_crc(std::span<const char>(bytes).subspan(12))) {
    throw std::runtime_error("checkpoint checksum mismatch: " + path);
  }

  Checkpoint ckpt;
  ckpt.model = read_model_config(in);
  ckpt.global_step = in.i64();
  ckpt.dense = DenseParams::zeros(ckpt.model);
  ckpt.dense.for_each_array([&in](std::span<float> a) { in.f32_array(a); });
  const std::uint32_t n_tables = in.u32();
  if (n_tables != static_cast<std::uint32_t>(ckpt.model.injected_layers())) {
    throw std::runtime_error("checkpoint table count does not match injection mode");
  }
  for (std::uint32_t t = 0; t < n_tables; ++t) {
    ckpt.tables.push_back(EmbeddingTable::read_block(in));
  }
  ckpt.has_optimizer = in.u8() != 0;
  if (ckpt.has_optimizer) {
    ckpt.dense_opt.step = in.i64();
    ckpt.dense_opt.m = DenseParams::zeros(ckpt.model);
    ckpt.dense_opt.v = DenseParams::zeros(ckpt.model);
    ckpt.dense_opt.m.for_each_array([&in](std::span<float> a) { in.f32_array(a); });
    ckpt.dense_opt.v.for_each_array([&in](std::span<float> a) { in.f32_array(a); });
    const std::uint32_t n_states = in.u32();
    if (n_states != n_tables) {
      throw std::runtime_error("checkpoint optimizer state count does not match tables");
    }
    for (std::uint32_t s = 0; s < n_states; ++s) {
      ckpt.sparse_opt.push_back(SparseAdamState::read_block(in));
    }
  }
  if (!in.done()) throw std::runtime_error("trailing bytes in checkpoint: " + path);

  std::fprintf(stderr, "checkpoint=%s dense_params=%llu sparse_params=%llu global_step=%lld\n",
               path.c_str(), static_cast<unsigned long long>(ckpt.stored_dense_count()),
               static_cast<unsigned long long>(ckpt.stored_sparse_count()),
               static_cast<long long>(ckpt.global_step));
  return ckpt;
}

}  // namespace lookuplm
