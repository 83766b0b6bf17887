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

#ifndef FIDELITY_EVENT_LOG_H_
#define FIDELITY_EVENT_LOG_H_

#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

namespace fidelity::service {

// Append-only JSON-lines file. Each Append is written and fsync'ed before it
// returns, so anything acknowledged after Append survives a crash. Opening
// an existing log drops a torn final line left by an interrupted write.
class EventLog {
 public:
  explicit EventLog(std::filesystem::path path);
  ~EventLog();

  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  // Complete lines present when the log was opened.
  const std::vector<std::string>& recovered_lines() const { return recovered_; }

  void Append(const std::string& line);

  // Current file contents.
  std::string ReadAll() const;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::vector<std::string> recovered_;
  mutable std::mutex mu_;
};

}  // namespace fidelity::service

#endif  // FIDELITY_EVENT_LOG_H_
