// core/src/error.cc

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

#include "pfusion/error.h"

namespace pfusion {

Error::Error(ErrorKind kind, std::string name, const std::string &detail)
    : std::runtime_error(name + ": " + detail),
      kind_(kind),
      name_(std::move(name)) {}

void ThrowValidation(std::string_view name, const std::string &detail) {
  throw Error(ErrorKind::kValidation, std::string(name), detail);
}

void ThrowIo(std::string_view name, const std::string &detail) {
  throw Error(ErrorKind::kIo, std::string(name), detail);
}

void ThrowUsage(std::string_view name, const std::string &detail) {
  throw Error(ErrorKind::kUsage, std::string(name), detail);
}

}  // namespace pfusion
