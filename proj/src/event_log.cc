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

#include "fidelity/event_log.h"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "csv_util.h"
#include "fidelity/error.h"

namespace fidelity::service {
namespace {

[[noreturn]] void Fail(const std::string& what,
                       const std::filesystem::path& path) {
  throw Error(ErrorCode::kIoFailure, what + " " + path.string() + ": " +
                                         std::strerror(errno));
}

}  // namespace

EventLog::EventLog(std::filesystem::path path) : path_(std::move(path)) {
  std::string contents;
  std::error_code ec;
  if (std::filesystem::exists(path_, ec)) {
    contents = internal::ReadTextFile(path_, "event log");
  }
  const size_t last_newline = contents.rfind('\n');
  const size_t complete =
      last_newline == std::string::npos ? 0 : last_newline + 1;
  if (complete != contents.size()) {
    std::filesystem::resize_file(path_, complete, ec);
    if (ec) {
      throw Error(ErrorCode::kIoFailure,
                  "cannot trim torn tail of " + path_.string());
    }
  }
  std::string_view rest(contents.data(), complete);
  while (!rest.empty()) {
    const size_t eol = rest.find('\n');
    std::string_view line = rest.substr(0, eol);
    rest.remove_prefix(eol + 1);
    if (!internal::TrimField(line).empty()) recovered_.emplace_back(line);
  }

  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) Fail("cannot open", path_);
}

EventLog::~EventLog() {
  if (fd_ >= 0) ::close(fd_);
}

void EventLog::Append(const std::string& line) {
  if (line.find('\n') != std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "event must be a single line");
  }
  std::string record = line + "\n";
  std::lock_guard lock(mu_);
  const char* data = record.data();
  size_t left = record.size();
  while (left > 0) {
    const ssize_t n = ::write(fd_, data, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      Fail("cannot append to", path_);
    }
    data += n;
    left -= static_cast<size_t>(n);
  }
  if (::fdatasync(fd_) != 0) Fail("cannot sync", path_);
}

std::string EventLog::ReadAll() const {
  std::lock_guard lock(mu_);
  return internal::ReadTextFile(path_, "event log");
}

}  // namespace fidelity::service
