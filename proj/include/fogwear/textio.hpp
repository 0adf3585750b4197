/*
 * Copyright 2026 The fogwear Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace fogwear {

// Shortest decimal text that parses back to the identical double.
std::string format_real(double v);

// Full-string parse; nullopt on trailing garbage or empty input.
std::optional<double> parse_real(std::string_view text);

std::string_view trim(std::string_view s);

// Writes atomically enough for our purposes (truncate + write); throws
// DataError when the destination is not writable.
void write_text_file(const std::filesystem::path& file, std::string_view text);
std::string read_text_file(const std::filesystem::path& file);

}  // namespace fogwear
