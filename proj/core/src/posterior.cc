// core/src/posterior.cc

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

#include "pfusion/posterior.h"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "io-util.h"

namespace pfusion {

namespace {

constexpr std::array<char, 4> kPgmMagic = {'P', 'G', 'M', '1'};

template <typename Matrix>
ValidationResult ValidateRowsImpl(const Matrix &frames) {
  if (frames.rows() < 1)
    return ValidationResult::Fail("empty-posteriorgram", -1,
                                  "posteriorgram has no frames");
  if (frames.cols() < 1)
    return ValidationResult::Fail("dimension-mismatch", -1,
                                  "posteriorgram has no classes");
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    double sum = 0.0;
    for (Eigen::Index k = 0; k < frames.cols(); ++k) {
      const double p = frames(t, k);
      if (!std::isfinite(p))
        return ValidationResult::Fail("non-finite-entry", t,
                                      "entry " + std::to_string(k) +
                                          " is not finite");
      if (p < 0.0)
        return ValidationResult::Fail("negative-entry", t,
                                      "entry " + std::to_string(k) + " = " +
                                          std::to_string(p));
      if (p > 1.0)
        return ValidationResult::Fail("entry-out-of-range", t,
                                      "entry " + std::to_string(k) + " = " +
                                          std::to_string(p));
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance)
      return ValidationResult::Fail("row-not-normalized", t,
                                    "row sum " + std::to_string(sum));
  }
  return ValidationResult::Ok();
}

void ExpectKey(const std::string &line, const std::string &key,
               std::string *value) {
  std::istringstream in(line);
  std::string k;
  if (!(in >> k) || k != key || !(in >> *value))
    ThrowIo("malformed-inventory", "expected '" + key + " <value>', got '" +
                                       line + "'");
}

}  // namespace

ClassInventory::ClassInventory(std::string language_id,
                               std::vector<std::string> phone_of_class,
                               std::string silence_phone)
    : language_id_(std::move(language_id)),
      phone_of_class_(std::move(phone_of_class)),
      silence_phone_(std::move(silence_phone)) {
  if (phone_of_class_.size() < 2)
    ThrowValidation("invalid-inventory", "inventory '" + language_id_ +
                                             "' needs at least 2 classes");
  for (std::size_t k = 0; k < phone_of_class_.size(); ++k)
    if (phone_of_class_[k].empty())
      ThrowValidation("invalid-inventory",
                      "class " + std::to_string(k) + " has an empty label");
  if (std::find(phone_of_class_.begin(), phone_of_class_.end(),
                silence_phone_) == phone_of_class_.end())
    ThrowValidation("invalid-inventory", "silence phone '" + silence_phone_ +
                                             "' is not used by any class");
}

void ValidationResult::ThrowIfFailed() const {
  if (ok) return;
  std::string detail = message;
  if (row >= 0) detail = "row " + std::to_string(row) + ": " + detail;
  ThrowValidation(error, detail);
}

ValidationResult ValidateDistributionRows(const FrameMatrix &frames) {
  return ValidateRowsImpl(frames);
}

ValidationResult ValidateDistributionRows(const RowMatrix &frames) {
  return ValidateRowsImpl(frames);
}

ValidationResult ValidatePosteriorgram(const Posteriorgram &pg,
                                       const ClassInventory &inv) {
  if (pg.dim() != inv.size())
    return ValidationResult::Fail(
        "dimension-mismatch", -1,
        "posteriorgram has " + std::to_string(pg.dim()) +
            " columns, inventory '" + inv.language_id() + "' has " +
            std::to_string(inv.size()) + " classes");
  return ValidateRowsImpl(pg.frames());
}

ValidationResult ValidateLabels(const LabelSequence &labels,
                                const ClassInventory &inv) {
  if (labels.labels.empty())
    return ValidationResult::Fail("empty-labels", -1, "no labels");
  for (std::size_t t = 0; t < labels.labels.size(); ++t) {
    const auto c = labels.labels[t];
    if (c < 0 || c >= inv.size())
      return ValidationResult::Fail(
          "label-out-of-range", static_cast<std::int64_t>(t),
          "label " + std::to_string(c) + " outside [0, " +
              std::to_string(inv.size()) + ")");
  }
  return ValidationResult::Ok();
}

bool FrameAlignCheck(const Posteriorgram &a, const Posteriorgram &b) {
  return a.num_frames() == b.num_frames() &&
         a.utterance_id() == b.utterance_id();
}

int ArgMax(std::span<const float> row) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(row.size()); ++k)
    if (row[k] > row[best]) best = k;
  return best;
}

int ArgMax(std::span<const double> row) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(row.size()); ++k)
    if (row[k] > row[best]) best = k;
  return best;
}

void CheckIdentifier(const std::string &id, const char *what) {
  if (id.empty() || id.find_first_of(";= \t\r\n") != std::string::npos)
    ThrowValidation("invalid-identifier",
                    std::string(what) + " '" + id +
                        "' must be non-empty without ';', '=' or whitespace");
}

void WritePosteriorgram(const Posteriorgram &pg, std::ostream &os) {
  ValidateDistributionRows(pg.frames()).ThrowIfFailed();
  CheckIdentifier(pg.utterance_id(), "utterance id");
  CheckIdentifier(pg.language_id(), "language id");
  const std::string header = "utt=" + pg.utterance_id() +
                             ";lang=" + pg.language_id() +
                             ";T=" + std::to_string(pg.num_frames()) +
                             ";D=" + std::to_string(pg.dim());
  os.write(kPgmMagic.data(), kPgmMagic.size());
  WriteU32(os, static_cast<std::uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  const auto &m = pg.frames();
  std::vector<char> payload(static_cast<std::size_t>(m.size()) * 4);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    StoreLe(std::bit_cast<std::uint32_t>(m.data()[i]), payload.data() + 4 * i);
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!os) ThrowIo("write-failed", "could not write posteriorgram");
}

Posteriorgram ReadPosteriorgram(std::istream &is) {
  std::array<char, 4> magic{};
  ReadExact(is, magic.data(), magic.size());
  if (magic != kPgmMagic)
    ThrowIo("bad-magic", "expected PGM1, got '" +
                             std::string(magic.data(), magic.size()) + "'");
  const std::string header = ReadHeader(is);
  const auto fields = ParseHeaderFields(header, {"utt", "lang", "T", "D"});
  const std::string &utt = fields.at("utt");
  const std::string &lang = fields.at("lang");
  const std::int64_t rows = ParseHeaderInt(fields.at("T"), "T");
  const std::int64_t cols = ParseHeaderInt(fields.at("D"), "D");
  if (rows < 1 || cols < 1 || rows > (1 << 28) / cols)
    ThrowIo("malformed-header", "implausible shape T=" + std::to_string(rows) +
                                    " D=" + std::to_string(cols));

  FrameMatrix frames(rows, cols);
  std::vector<char> payload(static_cast<std::size_t>(rows * cols) * 4);
  ReadExact(is, payload.data(), payload.size());
  for (Eigen::Index i = 0; i < frames.size(); ++i)
    frames.data()[i] = std::bit_cast<float>(LoadLe<std::uint32_t>(
        payload.data() + 4 * i));
  ExpectEnd(is);
  return Posteriorgram(utt, lang, std::move(frames));
}

void WritePosteriorgramFile(const Posteriorgram &pg,
                            const std::filesystem::path &path) {
  std::ofstream os = OpenOutput(path);
  WritePosteriorgram(pg, os);
}

Posteriorgram ReadPosteriorgramFile(const std::filesystem::path &path) {
  std::ifstream is = OpenInput(path);
  return ReadPosteriorgram(is);
}

void WriteInventory(const ClassInventory &inv, std::ostream &os) {
  os << "language_id " << inv.language_id() << '\n'
     << "size " << inv.size() << '\n'
     << "silence_phone " << inv.silence_phone() << '\n';
  for (int k = 0; k < inv.size(); ++k) os << k << ' ' << inv.phone(k) << '\n';
}

ClassInventory ReadInventory(std::istream &is) {
  std::vector<std::string> lines;
  for (std::string line; std::getline(is, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#')
      continue;
    lines.push_back(line);
  }
  if (lines.size() < 3)
    ThrowIo("malformed-inventory", "missing header lines");
  std::string lang, size_text, silence;
  ExpectKey(lines[0], "language_id", &lang);
  ExpectKey(lines[1], "size", &size_text);
  ExpectKey(lines[2], "silence_phone", &silence);
  const std::int64_t size = ParseHeaderInt(size_text, "size");
  if (size < 0 || size > (1 << 24))
    ThrowIo("malformed-inventory", "bad size " + size_text);
  if (static_cast<std::int64_t>(lines.size()) - 3 != size)
    ThrowIo("malformed-inventory",
            "size " + size_text + " but " + std::to_string(lines.size() - 3) +
                " class lines");
  std::vector<std::string> phones(static_cast<std::size_t>(size));
  std::vector<bool> seen(phones.size(), false);
  for (std::size_t i = 3; i < lines.size(); ++i) {
    std::istringstream in(lines[i]);
    std::int64_t index = -1;
    std::string label, extra;
    if (!(in >> index >> label) || (in >> extra) || index < 0 ||
        index >= size || seen[index])
      ThrowIo("malformed-inventory", "bad class line '" + lines[i] + "'");
    seen[index] = true;
    phones[index] = label;
  }
  return ClassInventory(lang, std::move(phones), silence);
}

void WriteInventoryFile(const ClassInventory &inv,
                        const std::filesystem::path &path) {
  std::ofstream os = OpenOutput(path);
  WriteInventory(inv, os);
}

ClassInventory ReadInventoryFile(const std::filesystem::path &path) {
  std::ifstream is = OpenInput(path);
  return ReadInventory(is);
}

void WriteLabels(const LabelSequence &labels, std::ostream &os) {
  for (auto c : labels.labels) os << c << '\n';
}

LabelSequence ReadLabels(std::istream &is, std::string utterance_id) {
  LabelSequence seq{std::move(utterance_id), {}};
  for (std::string line; std::getline(is, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::int32_t value = 0;
    const auto *end = line.data() + line.size();
    const auto [ptr, ec] = std::from_chars(line.data(), end, value);
    if (ec != std::errc() || ptr != end)
      ThrowIo("malformed-labels", "bad label line '" + line + "'");
    seq.labels.push_back(value);
  }
  return seq;
}

void WriteLabelsFile(const LabelSequence &labels,
                     const std::filesystem::path &path) {
  std::ofstream os = OpenOutput(path);
  WriteLabels(labels, os);
}

LabelSequence ReadLabelsFile(const std::filesystem::path &path) {
  std::ifstream is = OpenInput(path);
  return ReadLabels(is, path.stem().string());
}

}  // namespace pfusion
