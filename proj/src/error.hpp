// Copyright 2026 The Desc2Story Authors.
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

#pragma once

#include <stdexcept>
#include <string>

namespace d2s {

// Numeric values are mirrored by d2s_status in the C API header.
enum class Errc : int {
  kInvalidArgument = 1,
  kShapeMismatch = 2,
  kNonFinite = 3,
  kEmptyCorpus = 4,
  kEmptyTarget = 5,
  kIo = 6,
  kParse = 7,
  kNotCheckpoint = 8,
  kUnsupportedVersion = 9,
  kTruncated = 10,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace d2s
