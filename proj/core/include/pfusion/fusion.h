// pfusion/fusion.h

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
 * Convex fusion of target-space posteriors:
 *
 *     p_fused = w_T * p_target + sum_i w_i * p_mapped_i,   w_T + sum w_i = 1
 *
 * Cross-lingual mode drops the target term (w_T = 0, no target input).
 *
 * Weight file (text, one entry per line):
 *
 *     mode <multilingual|cross-lingual>
 *     target <w_T>
 *     <lang> <w_i>                      (K lines, order = input order)
 *
 * Similarity table file (text): `<lang> <avg_entropy> <top1_accuracy>` lines.
 */

#ifndef PFUSION_FUSION_H_
#define PFUSION_FUSION_H_

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pfusion/posterior.h"

namespace pfusion {

inline constexpr double kWeightSumTolerance = 1e-9;
inline constexpr double kDefaultTemperature = 0.25;
inline constexpr double kDefaultTargetShare = 0.5;

enum class FusionMode { kMultilingual, kCrossLingual };

std::string_view ModeName(FusionMode mode);
/// Accepts "multilingual"/"multi" and "cross-lingual"/"cross".
FusionMode ParseMode(std::string_view text);

struct SourceWeight {
  std::string lang;
  double weight = 0.0;
};

struct WeightVector {
  FusionMode mode = FusionMode::kCrossLingual;
  double target_weight = 0.0;
  std::vector<SourceWeight> sources;

  int num_sources() const { return static_cast<int>(sources.size()); }
};

/// Checks every WeightVector invariant. On failure `error` names the first
/// violation (empty-sources, non-finite-weight, weight-out-of-range,
/// mode-violation, sum-violation) and `message` lists all of them.
ValidationResult ValidateWeights(const WeightVector &w);

/// Fuses one frame. target_row must be present iff w.mode is multilingual.
/// Errors: invalid-weights, mode-mismatch, source-count-mismatch,
/// dimension-mismatch.
std::vector<double> FuseFrame(
    std::optional<std::span<const double>> target_row,
    std::span<const std::span<const double>> mapped_rows,
    const WeightVector &w);

/// Frame-wise FuseFrame over whole utterances. `target` is null in
/// cross-lingual mode. Errors: align-mismatch plus the FuseFrame errors.
Posteriorgram FusePosteriorgrams(const Posteriorgram *target,
                                 const std::vector<Posteriorgram> &mapped,
                                 const WeightVector &w);

struct SimilarityEntry {
  std::string lang;
  double avg_entropy = 0.0;    // nats
  double top1_accuracy = 0.0;  // in [0, 1]
};
using SimilarityTable = std::vector<SimilarityEntry>;

/// Source weights proportional to top1_accuracy * exp(-avg_entropy / tau),
/// normalized to 1 - target_share (multilingual, target_weight =
/// target_share) or to 1 (cross-lingual). Errors: empty-table,
/// invalid-temperature, invalid-similarity, degenerate-similarity (all
/// source scores zero).
WeightVector DeriveWeights(const SimilarityTable &sim, FusionMode mode,
                           double temperature = kDefaultTemperature,
                           double target_share = kDefaultTargetShare);

void WriteWeights(const WeightVector &w, std::ostream &os);
/// Validates after parsing.
WeightVector ReadWeights(std::istream &is);
void WriteWeightsFile(const WeightVector &w, const std::filesystem::path &path);
WeightVector ReadWeightsFile(const std::filesystem::path &path);

void WriteSimilarityTable(const SimilarityTable &sim, std::ostream &os);
SimilarityTable ReadSimilarityTable(std::istream &is);
SimilarityTable ReadSimilarityTableFile(const std::filesystem::path &path);
void WriteSimilarityTableFile(const SimilarityTable &sim,
                              const std::filesystem::path &path);

/// Shortest decimal string that reads back to the same double.
std::string FormatExact(double value);
/// Correctly rounded decimal parse; throws `error_name` (kIo) on junk.
double ParseExact(std::string_view text, const char *error_name);

}  // namespace pfusion

#endif  // PFUSION_FUSION_H_
