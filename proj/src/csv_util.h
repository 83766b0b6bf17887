// Copyright 2026 The Fidelity Eval Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FIDELITY_SRC_CSV_UTIL_H_
#define FIDELITY_SRC_CSV_UTIL_H_

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fidelity/error.h"

namespace fidelity::internal {

inline std::string_view TrimField(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

// Minimal reader for the toolkit's own unquoted CSV files: checks the header
// line, skips blank lines, and hands each record's fields to `row`.
inline void ForEachCsvRecord(
    std::string_view text, std::string_view header, size_t field_count,
    const std::function<void(size_t line_no,
                             std::span<const std::string_view> fields)>& row) {
  size_t line_no = 0;
  bool saw_header = false;
  std::vector<std::string_view> fields;
  while (!text.empty()) {
    const size_t eol = text.find('\n');
    std::string_view line = TrimField(text.substr(0, eol));
    text = eol == std::string_view::npos ? std::string_view{}
                                         : text.substr(eol + 1);
    ++line_no;
    if (!saw_header) {
      if (line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
      if (line != header) {
        throw Error(ErrorCode::kParse,
                    "expected CSV header '" + std::string(header) + "'");
      }
      saw_header = true;
      continue;
    }
    if (line.empty()) continue;
    fields.clear();
    size_t start = 0;
    while (true) {
      const size_t comma = line.find(',', start);
      fields.push_back(TrimField(line.substr(start, comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != field_count) {
      throw Error(ErrorCode::kParse,
                  "CSV line " + std::to_string(line_no) + ": expected " +
                      std::to_string(field_count) + " fields, got " +
                      std::to_string(fields.size()));
    }
    row(line_no, fields);
  }
  if (!saw_header) {
    throw Error(ErrorCode::kParse,
                "missing CSV header '" + std::string(header) + "'");
  }
}

inline double ParseDoubleField(std::string_view field, size_t line_no) {
  double value = 0.0;
  auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc() ||
      ptr != field.data() + field.size()) {
    throw Error(ErrorCode::kParse, "CSV line " + std::to_string(line_no) +
                                       ": bad number '" + std::string(field) +
                                       "'");
  }
  return value;
}

inline std::string ReadTextFile(const std::filesystem::path& path,
                                std::string_view what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kNotFound,
                "cannot open " + std::string(what) + " " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace fidelity::internal

#endif  // FIDELITY_SRC_CSV_UTIL_H_
