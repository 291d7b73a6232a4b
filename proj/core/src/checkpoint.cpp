// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "rqsep/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "rqsep/error.hpp"

namespace rqsep::train {

namespace {

constexpr char kMagic[8] = {'R', 'Q', 'C', 'K', 'P', 'T', '\0', '\0'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  void need(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) fail(ErrorKind::kFormat, std::string("checkpoint truncated while reading ") + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize(const Checkpoint& checkpoint) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(checkpoint.kind);
  w.str(checkpoint.config);
  std::ostringstream meta;
  for (const auto& [k, v] : checkpoint.metadata) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      fail(ErrorKind::kInvalidArgument, "checkpoint metadata key/value contains a separator: " + k);
    }
    meta << k << '=' << v << '\n';
  }
  w.str(meta.str());
  w.u32(static_cast<std::uint32_t>(checkpoint.arrays.size()));
  for (const auto& [name, m] : checkpoint.arrays) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    for (Index i = 0; i < m.size(); ++i) w.u64(std::bit_cast<std::uint64_t>(m.data()[i]));
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    fail(ErrorKind::kFormat, "not a checkpoint file (bad magic)");
  }
  Checkpoint out;
  Reader rd(bytes);
  rd.need(8, "magic");
  for (int i = 0; i < 2; ++i) rd.u32("magic");
  const std::uint32_t version = rd.u32("version");
  if (version != kCheckpointVersion) {
    fail(ErrorKind::kFormat, "unsupported checkpoint version " + std::to_string(version) + " (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  }
  out.kind = rd.str("kind");
  out.config = rd.str("config");
  std::istringstream meta(rd.str("metadata"));
  for (std::string line; std::getline(meta, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::kFormat, "malformed checkpoint metadata line: " + line);
    out.metadata[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const std::uint32_t count = rd.u32("array count");
  for (std::uint32_t a = 0; a < count; ++a) {
    std::string name = rd.str("array name");
    const std::uint32_t rows = rd.u32("array rows");
    const std::uint32_t cols = rd.u32("array cols");
    rd.need(static_cast<std::size_t>(rows) * cols * 8, "array data");
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<double>(rd.u64("array data"));
    out.arrays.emplace(std::move(name), std::move(m));
  }
  if (!rd.done()) fail(ErrorKind::kFormat, "trailing bytes after checkpoint arrays");
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string bytes = serialize(checkpoint);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot open " + tmp + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::kIo, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize_checkpoint(bytes);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

std::uint64_t hash_arrays(const std::map<std::string, Matrix>& arrays) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char b) {
    h ^= b;
    h *= 0x100000001b3ULL;
  };
  for (const auto& [name, m] : arrays) {
    for (char c : name) mix(static_cast<unsigned char>(c));
    for (Index i = 0; i < m.size(); ++i) {
      const auto bits = std::bit_cast<std::uint64_t>(m.data()[i]);
      for (int k = 0; k < 8; ++k) mix(static_cast<unsigned char>(bits >> (8 * k)));
    }
  }
  return h;
}

}  // namespace rqsep::train
