// pfusion/error.h

// Copyright 2026 The pfusion Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef PFUSION_ERROR_H_
#define PFUSION_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace pfusion {

/// Coarse error families; the CLI maps each family to an exit code.
enum class ErrorKind {
  kUsage,       // bad arguments or conflicting options
  kValidation,  // data violates a documented invariant
  kIo,          // missing file, malformed or truncated stream
  kNumerical,   // divergence or non-finite values during training
};

/// Every library failure is reported as an Error carrying a stable
/// machine-readable name such as "dimension-mismatch" or "bad-magic".
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string name, const std::string &detail);

  ErrorKind kind() const { return kind_; }
  const std::string &name() const { return name_; }

 private:
  ErrorKind kind_;
  std::string name_;
};

[[noreturn]] void ThrowValidation(std::string_view name,
                                  const std::string &detail);
[[noreturn]] void ThrowIo(std::string_view name, const std::string &detail);
[[noreturn]] void ThrowUsage(std::string_view name, const std::string &detail);

}  // namespace pfusion

#endif  // PFUSION_ERROR_H_
