/* Copyright 2026 The dialearn Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace dialearn {

// Every recoverable failure in the library surfaces as an Error; callers that
// need a category (HTTP status, CLI exit code) inspect kind().
class Error : public std::runtime_error {
 public:
  enum class Kind { invalid_argument, not_found, conflict, io, format };

  explicit Error(const std::string& what, Kind kind = Kind::invalid_argument)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  return oss.str();
}

}  // namespace detail

template <typename... Args>
[[noreturn]] void fail(Error::Kind kind, Args&&... args) {
  throw Error(detail::concat(std::forward<Args>(args)...), kind);
}

template <typename... Args>
[[noreturn]] void fail(Args&&... args) {
  throw Error(detail::concat(std::forward<Args>(args)...));
}

}  // namespace dialearn
