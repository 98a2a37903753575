// Copyright 2026 The coseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "coseg/core_types.hpp"

namespace coseg::png {

/// Grayscale PNG codec over in-memory buffers; bit depth 8 or 16.
std::vector<std::uint8_t> encode_gray8(const Grid<std::uint8_t>& image);
std::vector<std::uint8_t> encode_gray16(const Grid<std::uint16_t>& image);

struct DecodedGray {
  int bit_depth = 0;
  Grid<std::uint16_t> values;
};

/// Throws FormatError for non-grayscale or corrupt data.
DecodedGray decode_gray(const std::vector<std::uint8_t>& bytes);

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace coseg::png
