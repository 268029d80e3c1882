// SPDX-License-Identifier: Apache-2.0
//
// Binary tensor container. Layout (all integers little-endian):
//   magic "ALTO" | version u16 | entry count u32
//   per entry: name length u16, UTF-8 name, rank u8, dims u32 x rank,
//              payload f32 x product(dims)
// Round trips are bit-exact.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace alto {

inline constexpr uint16_t kCheckpointVersion = 1;

struct CheckpointEntry {
    std::string name;
    std::vector<uint32_t> dims;
    std::vector<float> data;

    uint64_t numel() const {
        uint64_t n = 1;
        for (uint32_t d : dims) n *= d;
        return n;
    }
};

void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);

/// Throws std::invalid_argument with the failing byte offset on malformed input.
std::vector<CheckpointEntry> read_checkpoint(const std::string& path);

const CheckpointEntry* find_entry(const std::vector<CheckpointEntry>& entries,
                                  const std::string& name);

}  // namespace alto
