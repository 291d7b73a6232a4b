// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#include "rqsep/code_grid.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "rqsep/error.hpp"

namespace rqsep::rvq {
namespace {

void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}
std::uint32_t get32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void CodeGrid::validate() const {
  if (codes.size() != static_cast<std::size_t>(positions) * static_cast<std::size_t>(depth)) {
    fail(ErrorKind::kFormat, "code grid storage does not match its dimensions");
  }
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] >= codebook_size) {
      fail(ErrorKind::kFormat, "code " + std::to_string(codes[i]) + " at position " + std::to_string(i / depth) +
                                   ", depth " + std::to_string(i % depth) + " exceeds codebook size " +
                                   std::to_string(codebook_size));
    }
  }
}

std::vector<unsigned char> serialize(const CodeGrid& grid) {
  grid.validate();
  std::vector<unsigned char> out{'R', 'Q', 'C', 'G'};
  put32(out, kCodeGridVersion);
  put32(out, static_cast<std::uint32_t>(grid.positions));
  put32(out, static_cast<std::uint32_t>(grid.depth));
  put32(out, static_cast<std::uint32_t>(grid.codebook_size));
  for (std::uint16_t c : grid.codes) {
    out.push_back(static_cast<unsigned char>(c & 0xFF));
    out.push_back(static_cast<unsigned char>(c >> 8));
  }
  return out;
}

CodeGrid deserialize_code_grid(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), "RQCG", 4) != 0) {
    fail(ErrorKind::kFormat, "not a code grid (bad magic)");
  }
  const std::uint32_t version = get32(bytes.data() + 4);
  if (version != kCodeGridVersion) fail(ErrorKind::kFormat, "unsupported code grid version " + std::to_string(version));
  const std::uint32_t positions = get32(bytes.data() + 8);
  const std::uint32_t depth = get32(bytes.data() + 12);
  const std::uint32_t codebook_size = get32(bytes.data() + 16);
  if (codebook_size == 0 || codebook_size > 65536) fail(ErrorKind::kFormat, "code grid codebook size out of range");
  const std::size_t count = static_cast<std::size_t>(positions) * depth;
  if (bytes.size() != 20 + 2 * count) fail(ErrorKind::kFormat, "code grid payload size mismatch");

  CodeGrid grid(static_cast<int>(positions), static_cast<int>(depth), static_cast<int>(codebook_size));
  for (std::size_t i = 0; i < count; ++i) {
    grid.codes[i] = static_cast<std::uint16_t>(bytes[20 + 2 * i] | (bytes[21 + 2 * i] << 8));
  }
  grid.validate();
  return grid;
}

void write_code_grid(const std::filesystem::path& path, const CodeGrid& grid) {
  const auto bytes = serialize(grid);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write code grid " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
}

CodeGrid read_code_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open code grid " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_code_grid(bytes);
}

}  // namespace rqsep::rvq
