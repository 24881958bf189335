/* Copyright 2026 The KCR Authors. All Rights Reserved.

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
#ifndef KCR_ERROR_HPP_
#define KCR_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kcr {

// Numeric values are shared with kcr_status in kcr.h.
enum class ErrorCode : int {
  kInvalidArgument = 2,
  kInvalidBox = 3,
  kInvalidGamma = 4,
  kDegenerateQuad = 5,
  kParse = 6,
  kSchema = 7,
  kZeroGroundTruth = 8,
  kDivergedLoss = 9,
  kNonFiniteLoss = 10,
  kIo = 11,
  kInternal = 12,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// A parse failure with a location: a 1-based line (text formats), a byte
// offset (malformed JSON) or a JSON pointer (schema violations). The code is
// kParse unless the input parsed but described something invalid (kSchema,
// kInvalidBox).
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& reason,
             ErrorCode code = ErrorCode::kParse)
      : Error(code, "line " + std::to_string(line) + ": " + reason),
        line_(line),
        reason_(reason) {}
  ParseError(std::size_t line, std::size_t offset, const std::string& reason,
             ErrorCode code = ErrorCode::kParse)
      : Error(code, (line > 0 ? "line " + std::to_string(line)
                              : "byte " + std::to_string(offset)) +
                        ": " + reason),
        line_(line),
        offset_(offset),
        reason_(reason) {}
  ParseError(const std::string& path, const std::string& reason,
             ErrorCode code = ErrorCode::kSchema)
      : Error(code, "at " + (path.empty() ? std::string("/") : path) + ": " + reason),
        path_(path.empty() ? "/" : path),
        reason_(reason) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t offset() const noexcept { return offset_; }
  const std::string& path() const noexcept { return path_; }
  const std::string& reason() const noexcept { return reason_; }
  bool located() const noexcept { return line_ > 0 || offset_ > 0 || !path_.empty(); }

 private:
  std::size_t line_ = 0;
  std::size_t offset_ = 0;
  std::string path_;
  std::string reason_;
};

}  // namespace kcr

#endif  // KCR_ERROR_HPP_
