// Copyright 2026 The dcabird Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "dca/common.hpp"

#include <filesystem>

namespace dca {

// Binary tensor file: "MELX", u32 rows, u32 cols, rows*cols little-endian
// float32 in row-major order.
void write_tensor(const std::filesystem::path& path, const MatrixF& m);
MatrixF read_tensor(const std::filesystem::path& path);

// Content hash of a file's bytes (FNV-1a, hex).
std::string file_hash(const std::filesystem::path& path);

}  // namespace dca
