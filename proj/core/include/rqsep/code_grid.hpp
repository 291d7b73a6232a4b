// Copyright 2026 The rqsep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace rqsep::rvq {

// Codebook indices for one clip: positions x depth, row-major.
//
// On-disk layout (little-endian):
//   offset 0   4 bytes  magic "RQCG"
//   offset 4   u32      format version (1)
//   offset 8   u32      positions (T_c)
//   offset 12  u32      depth (Q)
//   offset 16  u32      codebook size (N_cb)
//   offset 20  u16[T_c*Q] codes, row-major
struct CodeGrid {
  int positions = 0;
  int depth = 0;
  int codebook_size = 0;
  std::vector<std::uint16_t> codes;

  CodeGrid() = default;
  CodeGrid(int positions_, int depth_, int codebook_size_)
      : positions(positions_), depth(depth_), codebook_size(codebook_size_),
        codes(static_cast<std::size_t>(positions_) * static_cast<std::size_t>(depth_), 0) {}

  std::uint16_t& at(int t, int d) { return codes[static_cast<std::size_t>(t) * depth + d]; }
  std::uint16_t at(int t, int d) const { return codes[static_cast<std::size_t>(t) * depth + d]; }

  // Throws kFormat if any index is >= codebook_size.
  void validate() const;

  friend bool operator==(const CodeGrid&, const CodeGrid&) = default;
};

inline constexpr std::uint32_t kCodeGridVersion = 1;

std::vector<unsigned char> serialize(const CodeGrid& grid);
CodeGrid deserialize_code_grid(const std::vector<unsigned char>& bytes);

void write_code_grid(const std::filesystem::path& path, const CodeGrid& grid);
CodeGrid read_code_grid(const std::filesystem::path& path);

}  // namespace rqsep::rvq

namespace rqsep {
using rvq::CodeGrid;
}  // namespace rqsep
