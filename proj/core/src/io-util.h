// core/src/io-util.h

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

// Internal helpers for the little-endian "magic | u32 len | header | payload"
// containers (PGM1, MNW1) and for opening files with pfusion errors.

#ifndef PFUSION_IO_UTIL_H_
#define PFUSION_IO_UTIL_H_

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <map>
#include <ostream>
#include <string>

#include "pfusion/error.h"

namespace pfusion {

inline constexpr std::uint32_t kMaxHeaderLength = 4096;

template <typename U>
void StoreLe(U value, char *out) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out[i] = static_cast<char>((value >> (8 * i)) & 0xff);
}

template <typename U>
U LoadLe(const char *in) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    value |= static_cast<U>(static_cast<unsigned char>(in[i])) << (8 * i);
  return value;
}

inline void WriteU32(std::ostream &os, std::uint32_t value) {
  char buf[4];
  StoreLe(value, buf);
  os.write(buf, 4);
}

/// Reads exactly n bytes or throws truncated-stream.
inline void ReadExact(std::istream &is, char *out, std::size_t n) {
  is.read(out, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw Error(ErrorKind::kIo, "truncated-stream",
                "expected " + std::to_string(n) + " bytes, got " +
                    std::to_string(is.gcount()));
}

/// Reads the u32 length-prefixed header string.
inline std::string ReadHeader(std::istream &is) {
  char buf[4];
  ReadExact(is, buf, 4);
  const auto length = LoadLe<std::uint32_t>(buf);
  if (length == 0 || length > kMaxHeaderLength)
    throw Error(ErrorKind::kIo, "malformed-header",
                "header length " + std::to_string(length));
  std::string header(length, '\0');
  ReadExact(is, header.data(), length);
  return header;
}

/// Splits `k1=v1;k2=v2;...` and checks that exactly the given keys occur,
/// in order.
inline std::map<std::string, std::string> ParseHeaderFields(
    const std::string &header, std::initializer_list<const char *> keys) {
  std::map<std::string, std::string> fields;
  std::size_t pos = 0;
  for (const char *key : keys) {
    if (pos > header.size())
      throw Error(ErrorKind::kIo, "malformed-header",
                  "missing key '" + std::string(key) + "' in '" + header + "'");
    const std::size_t end = std::min(header.find(';', pos), header.size());
    const std::string item = header.substr(pos, end - pos);
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos || item.substr(0, eq) != key)
      throw Error(ErrorKind::kIo, "malformed-header",
                  "expected key '" + std::string(key) + "' in '" + header +
                      "'");
    fields[key] = item.substr(eq + 1);
    pos = end + 1;
  }
  if (pos <= header.size())
    throw Error(ErrorKind::kIo, "malformed-header",
                "trailing fields in '" + header + "'");
  return fields;
}

inline std::int64_t ParseHeaderInt(const std::string &text, const char *what) {
  std::int64_t value = 0;
  const char *end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end)
    throw Error(ErrorKind::kIo, "malformed-header",
                std::string("bad integer for ") + what + ": '" + text + "'");
  return value;
}

/// Throws payload-size-mismatch if bytes remain after the payload.
inline void ExpectEnd(std::istream &is) {
  if (is.peek() != std::char_traits<char>::eof())
    throw Error(ErrorKind::kIo, "payload-size-mismatch",
                "trailing bytes after payload");
}

inline std::ifstream OpenInput(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw Error(ErrorKind::kIo, "file-not-found",
                "cannot open '" + path.string() + "'");
  return is;
}

inline std::ofstream OpenOutput(const std::filesystem::path &path) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os)
    throw Error(ErrorKind::kIo, "write-failed",
                "cannot create '" + path.string() + "'");
  return os;
}

}  // namespace pfusion

#endif  // PFUSION_IO_UTIL_H_
