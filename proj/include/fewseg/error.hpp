// Copyright 2026 The fewseg Authors
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

#include <stdexcept>
#include <string>

namespace fewseg {

// Base error carrying a short machine-readable code (e.g. "aspect-ratio",
// "shape-mismatch") next to the human message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// Violated operation precondition (bad argument, bad shape, bad config).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Failure touching the filesystem or decoding a file.
class IoError : public Error {
 public:
  using Error::Error;
};

// A data item broke one of the dataset collection rules.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace fewseg
