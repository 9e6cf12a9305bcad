// pfusion/posterior.h

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

/** @file
 * Posteriorgrams, class inventories and per-frame label sequences, plus the
 * on-disk formats shared by every other module.
 *
 * Posteriorgram file ("PGM1"), all integers little-endian:
 *
 *     "PGM1" | u32 header_length | header | T*D f32 payload (row-major)
 *
 * where header is the UTF-8 string `utt=<id>;lang=<tag>;T=<n>;D=<n>`.
 *
 * Inventory file (text):
 *
 *     language_id <tag>
 *     size <n>
 *     silence_phone <label>
 *     <class_index> <phone_label>      (one line per class)
 *
 * Label file (text): one class index per line.
 */

#ifndef PFUSION_POSTERIOR_H_
#define PFUSION_POSTERIOR_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pfusion/error.h"

namespace pfusion {

/// Row-sum tolerance for any stored distribution.
inline constexpr double kRowSumTolerance = 1e-5;

using FrameMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Class set of one acoustic model: class index -> phone label.
class ClassInventory {
 public:
  /// Throws Error "invalid-inventory" unless size >= 2, every label is
  /// non-empty and silence_phone occurs among the labels.
  ClassInventory(std::string language_id,
                 std::vector<std::string> phone_of_class,
                 std::string silence_phone);

  const std::string &language_id() const { return language_id_; }
  int size() const { return static_cast<int>(phone_of_class_.size()); }
  const std::string &phone(int class_index) const {
    return phone_of_class_.at(class_index);
  }
  const std::vector<std::string> &phones() const { return phone_of_class_; }
  const std::string &silence_phone() const { return silence_phone_; }
  bool IsSilence(int class_index) const {
    return phone(class_index) == silence_phone_;
  }

  bool operator==(const ClassInventory &other) const = default;

 private:
  std::string language_id_;
  std::vector<std::string> phone_of_class_;
  std::string silence_phone_;
};

/// One utterance worth of per-frame posteriors over an inventory.
/// Construction does not validate; see ValidatePosteriorgram.
class Posteriorgram {
 public:
  Posteriorgram() = default;
  Posteriorgram(std::string utterance_id, std::string language_id,
                FrameMatrix frames)
      : utterance_id_(std::move(utterance_id)),
        language_id_(std::move(language_id)),
        frames_(std::move(frames)) {}

  const std::string &utterance_id() const { return utterance_id_; }
  const std::string &language_id() const { return language_id_; }
  const FrameMatrix &frames() const { return frames_; }
  int num_frames() const { return static_cast<int>(frames_.rows()); }
  int dim() const { return static_cast<int>(frames_.cols()); }

  std::span<const float> Row(int t) const {
    return {frames_.data() + static_cast<std::ptrdiff_t>(t) * frames_.cols(),
            static_cast<std::size_t>(frames_.cols())};
  }

  /// Frames widened to f64 for arithmetic.
  RowMatrix FramesAsDouble() const { return frames_.cast<double>(); }

 private:
  std::string utterance_id_;
  std::string language_id_;
  FrameMatrix frames_;
};

/// Reference classes for each frame of an utterance.
struct LabelSequence {
  std::string utterance_id;
  std::vector<std::int32_t> labels;

  int size() const { return static_cast<int>(labels.size()); }
};

/// Outcome of a validation predicate. `error` holds the machine name of the
/// first violated condition, `row` the offending frame (-1 if not per-row).
struct ValidationResult {
  bool ok = true;
  std::string error;
  std::int64_t row = -1;
  std::string message;

  explicit operator bool() const { return ok; }
  static ValidationResult Ok() { return {}; }
  static ValidationResult Fail(std::string error, std::int64_t row,
                               std::string message) {
    return {false, std::move(error), row, std::move(message)};
  }
  /// Throws a validation Error if !ok.
  void ThrowIfFailed() const;
};

/// Checks that the matrix is non-empty and that each row is a probability
/// distribution. Errors: empty-posteriorgram, non-finite-entry,
/// negative-entry, entry-out-of-range, row-not-normalized.
ValidationResult ValidateDistributionRows(const FrameMatrix &frames);
ValidationResult ValidateDistributionRows(const RowMatrix &frames);

/// Adds the dimension-mismatch check against the inventory size.
ValidationResult ValidatePosteriorgram(const Posteriorgram &pg,
                                       const ClassInventory &inv);

ValidationResult ValidateLabels(const LabelSequence &labels,
                                const ClassInventory &inv);

/// True iff the two posteriorgrams describe the same frames of the same
/// utterance (equal utterance id and frame count).
bool FrameAlignCheck(const Posteriorgram &a, const Posteriorgram &b);

/// Index of the largest entry; ties go to the lowest index.
int ArgMax(std::span<const float> row);
int ArgMax(std::span<const double> row);

// I/O. Readers throw Error with kind kIo; names are bad-magic,
// truncated-stream, malformed-header, payload-size-mismatch, file-not-found.

void WritePosteriorgram(const Posteriorgram &pg, std::ostream &os);
Posteriorgram ReadPosteriorgram(std::istream &is);
void WritePosteriorgramFile(const Posteriorgram &pg,
                            const std::filesystem::path &path);
Posteriorgram ReadPosteriorgramFile(const std::filesystem::path &path);

void WriteInventory(const ClassInventory &inv, std::ostream &os);
ClassInventory ReadInventory(std::istream &is);
void WriteInventoryFile(const ClassInventory &inv,
                        const std::filesystem::path &path);
ClassInventory ReadInventoryFile(const std::filesystem::path &path);

void WriteLabels(const LabelSequence &labels, std::ostream &os);
LabelSequence ReadLabels(std::istream &is, std::string utterance_id);
void WriteLabelsFile(const LabelSequence &labels,
                     const std::filesystem::path &path);
/// The utterance id is taken from the file stem.
LabelSequence ReadLabelsFile(const std::filesystem::path &path);

/// Rejects ids that would break the `key=value;` header syntax.
void CheckIdentifier(const std::string &id, const char *what);

}  // namespace pfusion

#endif  // PFUSION_POSTERIOR_H_
