// pfusion/metrics.h

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
 * Evaluation of posteriorgrams: frame accuracy (argmax agreement), top-n
 * accuracy, entropy, a greedy frame decoder and phoneme error rate.
 * Argmax ties resolve to the lowest class index everywhere.
 */

#ifndef PFUSION_METRICS_H_
#define PFUSION_METRICS_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pfusion/posterior.h"

namespace pfusion {

inline constexpr double kEntropyFloor = 1e-12;
inline const std::vector<int> kDefaultTopN = {1, 2, 5, 10};

/// Reference for frame-level scoring: either another posteriorgram (argmax
/// taken per frame) or hard class labels.
using FrameReference =
    std::variant<std::reference_wrapper<const Posteriorgram>,
                 std::reference_wrapper<const LabelSequence>>;

/// Reference class per frame. Errors: align-mismatch, dimension-mismatch,
/// label-out-of-range.
std::vector<int> ReferenceClasses(const FrameReference &reference,
                                  const Posteriorgram &hypothesis);

struct FrameAccuracy {
  std::int64_t cmf = 0;      // correctly mapped frames
  std::int64_t frames = 0;
  double accuracy = 0.0;
};

FrameAccuracy ComputeFrameAccuracy(const FrameReference &reference,
                                   const Posteriorgram &hypothesis);

/// 0-based rank of class c in row under (value desc, index asc) order.
int ClassRank(std::span<const float> row, int c);

/// n -> fraction of frames whose reference class is among the n most probable
/// hypothesis classes. Errors: topn-out-of-range (n outside [1, d]).
std::map<int, double> TopNAccuracy(const FrameReference &reference,
                                   const Posteriorgram &hypothesis,
                                   const std::vector<int> &ns);

/// -sum_k p_k ln max(p_k, 1e-12), in nats.
double FrameEntropy(std::span<const float> row);
double FrameEntropy(std::span<const double> row);
double AverageEntropy(const Posteriorgram &pg);
/// Frame-weighted mean over a set of utterances.
double AverageEntropy(const std::vector<Posteriorgram> &pgs);

/// Per-frame argmax -> phone, merge repeats, drop silence.
std::vector<std::string> GreedyDecode(const Posteriorgram &pg,
                                      const ClassInventory &inv);
/// Same collapse applied to hard labels.
std::vector<std::string> LabelsToPhones(const LabelSequence &labels,
                                        const ClassInventory &inv);
/// Merge repeats and drop silence from a per-frame phone string.
std::vector<std::string> CollapsePhones(const std::vector<std::string> &frames,
                                        const std::string &silence);

struct EditCounts {
  std::int64_t substitutions = 0;
  std::int64_t insertions = 0;
  std::int64_t deletions = 0;
  std::int64_t distance() const {
    return substitutions + insertions + deletions;
  }
};

/// Unit-cost Levenshtein alignment; backtrace prefers diagonal (match or
/// substitution), then deletion, then insertion.
EditCounts EditDistance(const std::vector<std::string> &reference,
                        const std::vector<std::string> &hypothesis);

struct PhoneErrorRate {
  double per = 0.0;
  EditCounts counts;
  std::int64_t reference_length = 0;
};

/// Errors: empty-reference.
PhoneErrorRate ComputePhoneErrorRate(
    const std::vector<std::string> &reference,
    const std::vector<std::string> &hypothesis);

struct EvalReport {
  std::int64_t frames = 0;
  std::int64_t cmf = 0;
  std::map<int, double> top_n;
  double avg_entropy = 0.0;
  /// Fraction of frames whose hypothesis phone equals the reference phone.
  double phone_accuracy = 0.0;
  double per = 0.0;
  std::int64_t reference_phones = 0;
  EditCounts edits;

  double accuracy() const {
    return frames ? static_cast<double>(cmf) / static_cast<double>(frames)
                  : 0.0;
  }
};

/// Scores one utterance. PER uses GreedyDecode on the hypothesis and on a
/// posteriorgram reference, or LabelsToPhones on a label reference.
EvalReport BuildReport(const FrameReference &reference,
                       const Posteriorgram &hypothesis,
                       const ClassInventory &inv, const std::vector<int> &ns);

/// Corpus-level aggregation: counts are summed, rates recomputed from the
/// summed counts (PER = total edits / total reference phones), entropy is
/// frame-weighted. Utterances are accumulated in the caller's order.
class ReportAccumulator {
 public:
  explicit ReportAccumulator(std::vector<int> ns) : ns_(std::move(ns)) {}

  void Add(const FrameReference &reference, const Posteriorgram &hypothesis,
           const ClassInventory &inv);
  /// Errors: empty-reference when no reference phones were seen.
  EvalReport Finish() const;

 private:
  std::vector<int> ns_;
  std::int64_t frames_ = 0;
  std::int64_t cmf_ = 0;
  std::int64_t phone_hits_ = 0;
  std::map<int, std::int64_t> top_hits_;
  double entropy_sum_ = 0.0;
  std::int64_t ref_phones_ = 0;
  EditCounts edits_;
};

/// Flat `key=value` block, reals with 6 decimals.
void WriteReport(const EvalReport &report, std::ostream &os);
std::string FormatReport(const EvalReport &report);

/// Parses "1,2,5,10".
std::vector<int> ParseTopN(const std::string &text);

}  // namespace pfusion

#endif  // PFUSION_METRICS_H_
