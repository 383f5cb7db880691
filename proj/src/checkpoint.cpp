// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "cce/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>

#include "cce/error.hpp"

namespace cce {

namespace {

constexpr char kMagic[4] = {'C', 'C', 'E', '1'};
constexpr std::uint8_t kDense = 0;
constexpr std::uint8_t kEncoded = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> v) {
    for (double x : v) f64(x);
  }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw ValidationError("checkpoint: payload ends early");
  }
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void f64s(std::span<double> out) {
    if (out.size() > (in_.size() - pos_) / 8) throw ValidationError("checkpoint: payload ends early");
    for (double& x : out) x = f64();
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

// One slot of the fixed tensor sequence.
template <typename T>
struct Slot {
  std::span<T> data;
  std::size_t rows;
  std::size_t cols;
  const MatrixId* id;  // set for compressible matrices
};

template <typename Model>
void for_each_slot(Model& model, const std::vector<MatrixId>& ids, auto&& fn) {
  using T = std::conditional_t<std::is_const_v<Model>, const double, double>;
  auto mat = [&](auto& m, const MatrixId* id) {
    fn(Slot<T>{m.values(), m.rows(), m.cols(), id});
  };
  auto vec = [&](auto& v) { fn(Slot<T>{std::span<T>(v.data(), v.size()), 1, v.size(), nullptr}); };
  mat(model.token_embedding, nullptr);
  mat(model.position_embedding, nullptr);
  std::size_t next = 0;
  for (auto& b : model.blocks) {
    for (auto* m : {&b.wq, &b.wk, &b.wv, &b.wo, &b.w1, &b.w2}) mat(*m, &ids[next++]);
    for (auto* v : {&b.b1, &b.b2, &b.ln1_gain, &b.ln1_bias, &b.ln2_gain, &b.ln2_bias}) vec(*v);
  }
  vec(model.final_gain);
  vec(model.final_bias);
  mat(model.output, nullptr);
  vec(model.output_bias);
}

std::size_t checked_size(std::uint64_t v, const char* what) {
  if (v > (std::uint64_t{1} << 32)) {
    throw ValidationError(std::string("checkpoint: implausible ") + what);
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

void Checkpoint::validate() const {
  model.validate();
  const auto ids = model.compressible();
  for (const auto& [id, enc] : encoded) {
    if (id.block >= model.config.layers) {
      throw ValidationError("checkpoint: encoding for missing matrix " + id.name());
    }
    enc.validate();
    const Matrix& w = model.weight(id);
    if (enc.rows() != w.rows() || enc.cols() != w.cols()) {
      throw ValidationError("checkpoint: encoding shape mismatch for " + id.name());
    }
    if (!(decode_layer(enc) == w)) {
      throw ValidationError("checkpoint: dense weight of " + id.name() + " differs from its encoding");
    }
  }
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint) {
  checkpoint.validate();
  const auto& model = checkpoint.model;
  const auto ids = model.compressible();
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  const auto& c = model.config;
  for (std::size_t v : {c.layers, c.hidden, c.heads, c.ffn, c.vocab, c.max_seq}) w.u64(v);
  std::uint64_t entries = 0;
  for_each_slot(model, ids, [&](const auto&) { ++entries; });
  w.u64(entries);
  for_each_slot(model, ids, [&](const auto& slot) {
    const EncodedLayer* enc = nullptr;
    if (slot.id != nullptr) {
      const auto it = checkpoint.encoded.find(*slot.id);
      if (it != checkpoint.encoded.end()) enc = &it->second;
    }
    w.u8(enc ? kEncoded : kDense);
    w.u64(slot.rows);
    w.u64(slot.cols);
    if (!enc) {
      w.f64s(slot.data);
      return;
    }
    w.u64(enc->rank());
    w.f64s(enc->left.values());
    w.f64s(enc->right.values());
    w.u64(enc->residual.size());
    for (const auto& e : enc->residual) {
      w.u32(e.row);
      w.u32(e.col);
      w.f64(e.value);
    }
    w.f64s(enc->rescale);
  });
  w.u64(fnv1a64(w.data()));
  return std::move(w.data());
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw ChecksumError("checkpoint: too short to carry a checksum");
  const auto payload = bytes.first(bytes.size() - 8);
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[payload.size() + i]) << (8 * i);
  if (fnv1a64(payload) != stored) throw ChecksumError("checkpoint: checksum mismatch");

  Reader r(payload);
  r.need(4);
  if (std::memcmp(payload.data(), kMagic, 4) != 0) throw ValidationError("checkpoint: bad magic");
  for (int i = 0; i < 4; ++i) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw ValidationError("checkpoint: unsupported format version " + std::to_string(version));
  }
  ModelConfig config;
  for (std::size_t* v : {&config.layers, &config.hidden, &config.heads, &config.ffn, &config.vocab,
                         &config.max_seq}) {
    *v = checked_size(r.u64(), "architecture field");
  }
  config.validate();

  Checkpoint out{ModelParameters::zeros(config), {}};
  const auto ids = out.model.compressible();
  std::uint64_t expected = 0;
  for_each_slot(out.model, ids, [&](const auto&) { ++expected; });
  if (r.u64() != expected) throw ValidationError("checkpoint: entry count does not match header");

  for_each_slot(out.model, ids, [&](const auto& slot) {
    const std::uint8_t kind = r.u8();
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    if (rows != slot.rows || cols != slot.cols) {
      throw ValidationError("checkpoint: entry shape does not match header");
    }
    if (kind == kDense) {
      r.f64s(slot.data);
      return;
    }
    if (kind != kEncoded || slot.id == nullptr) throw ValidationError("checkpoint: bad entry kind");
    const std::size_t rank = checked_size(r.u64(), "rank");
    if (rank == 0 || rank > std::min(slot.rows, slot.cols)) {
      throw ValidationError("checkpoint: bad factor rank");
    }
    EncodedLayer enc;
    enc.left = Matrix(slot.rows, rank);
    enc.right = Matrix(rank, slot.cols);
    r.f64s(enc.left.values());
    r.f64s(enc.right.values());
    const std::size_t nnz = checked_size(r.u64(), "residual size");
    if (nnz > slot.rows * slot.cols) throw ValidationError("checkpoint: bad residual size");
    enc.residual.resize(nnz);
    for (auto& e : enc.residual) {
      e.row = r.u32();
      e.col = r.u32();
      e.value = r.f64();
    }
    enc.rescale.resize(slot.rows);
    r.f64s(enc.rescale);
    try {
      enc.validate();
    } catch (const ShapeError& e) {
      throw ValidationError(std::string("checkpoint: ") + e.what());
    }
    const Matrix dense = decode_layer(enc);
    std::copy(dense.values().begin(), dense.values().end(), slot.data.begin());
    out.encoded.emplace(*slot.id, std::move(enc));
  });
  if (!r.done()) throw ValidationError("checkpoint: trailing bytes after the last entry");
  return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("failed writing " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

}  // namespace cce
