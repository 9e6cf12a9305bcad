// core/src/fusion.cc

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

#include "pfusion/fusion.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "io-util.h"

namespace pfusion {

std::string_view ModeName(FusionMode mode) {
  return mode == FusionMode::kMultilingual ? "multilingual" : "cross-lingual";
}

FusionMode ParseMode(std::string_view text) {
  if (text == "multilingual" || text == "multi")
    return FusionMode::kMultilingual;
  if (text == "cross-lingual" || text == "cross")
    return FusionMode::kCrossLingual;
  ThrowUsage("bad-mode", "unknown fusion mode '" + std::string(text) + "'");
}

std::string FormatExact(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

double ParseExact(std::string_view text, const char *error_name) {
  double value = 0.0;
  const char *end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end)
    ThrowIo(error_name, "bad number '" + std::string(text) + "'");
  return value;
}

ValidationResult ValidateWeights(const WeightVector &w) {
  std::vector<std::string> failed;
  std::ostringstream msg;
  auto fail = [&](const std::string &name, const std::string &detail) {
    failed.push_back(name);
    msg << (failed.size() > 1 ? "; " : "") << name << ": " << detail;
  };
  if (w.sources.empty()) fail("empty-sources", "need at least one source");
  bool finite = std::isfinite(w.target_weight);
  bool in_range = w.target_weight >= 0.0 && w.target_weight <= 1.0;
  double sum = w.target_weight;
  for (const auto &s : w.sources) {
    finite = finite && std::isfinite(s.weight);
    in_range = in_range && s.weight >= 0.0 && s.weight <= 1.0;
    sum += s.weight;
  }
  if (!finite) fail("non-finite-weight", "weights must be finite");
  if (finite && !in_range)
    fail("weight-out-of-range", "weights must lie in [0, 1]");
  if (w.mode == FusionMode::kCrossLingual && w.target_weight != 0.0)
    fail("mode-violation", "cross-lingual mode requires target weight 0, got " +
                               FormatExact(w.target_weight));
  if (finite && std::abs(sum - 1.0) > kWeightSumTolerance)
    fail("sum-violation", "weights sum to " + FormatExact(sum));
  if (failed.empty()) return ValidationResult::Ok();
  return ValidationResult::Fail(failed.front(), -1, msg.str());
}

std::vector<double> FuseFrame(
    std::optional<std::span<const double>> target_row,
    std::span<const std::span<const double>> mapped_rows,
    const WeightVector &w) {
  if (const auto v = ValidateWeights(w); !v)
    ThrowValidation("invalid-weights", v.message);
  const bool multi = w.mode == FusionMode::kMultilingual;
  if (multi != target_row.has_value())
    ThrowValidation("mode-mismatch",
                    multi ? "multilingual fusion needs a target row"
                          : "cross-lingual fusion takes no target row");
  if (mapped_rows.size() != w.sources.size())
    ThrowValidation("source-count-mismatch",
                    std::to_string(mapped_rows.size()) + " rows for " +
                        std::to_string(w.sources.size()) + " weights");
  const std::size_t dim =
      target_row ? target_row->size() : mapped_rows.front().size();
  for (const auto &row : mapped_rows)
    if (row.size() != dim)
      ThrowValidation("dimension-mismatch",
                      "row of width " + std::to_string(row.size()) +
                          ", expected " + std::to_string(dim));

  std::vector<double> fused(dim, 0.0);
  if (target_row)
    for (std::size_t k = 0; k < dim; ++k)
      fused[k] = w.target_weight * (*target_row)[k];
  for (std::size_t i = 0; i < mapped_rows.size(); ++i) {
    const double wi = w.sources[i].weight;
    for (std::size_t k = 0; k < dim; ++k) fused[k] += wi * mapped_rows[i][k];
  }
  return fused;
}

Posteriorgram FusePosteriorgrams(const Posteriorgram *target,
                                 const std::vector<Posteriorgram> &mapped,
                                 const WeightVector &w) {
  if (mapped.empty())
    ThrowValidation("source-count-mismatch", "no mapped posteriorgrams");
  const Posteriorgram &ref = target ? *target : mapped.front();
  for (const auto &pg : mapped) {
    if (!FrameAlignCheck(ref, pg))
      ThrowValidation("align-mismatch",
                      "'" + pg.utterance_id() + "' (T=" +
                          std::to_string(pg.num_frames()) +
                          ") does not align with '" + ref.utterance_id() +
                          "' (T=" + std::to_string(ref.num_frames()) + ")");
    if (pg.dim() != ref.dim())
      ThrowValidation("dimension-mismatch",
                      "'" + pg.utterance_id() + "' has " +
                          std::to_string(pg.dim()) + " classes, expected " +
                          std::to_string(ref.dim()));
  }

  const int frames = ref.num_frames();
  const int dim = ref.dim();
  FrameMatrix out(frames, dim);
  std::vector<double> target_buf(dim);
  std::vector<std::vector<double>> mapped_buf(mapped.size(),
                                              std::vector<double>(dim));
  std::vector<std::span<const double>> mapped_rows(mapped.size());
  for (int t = 0; t < frames; ++t) {
    std::optional<std::span<const double>> target_row;
    if (target) {
      const auto row = target->Row(t);
      std::copy(row.begin(), row.end(), target_buf.begin());
      target_row = std::span<const double>(target_buf);
    }
    for (std::size_t i = 0; i < mapped.size(); ++i) {
      const auto row = mapped[i].Row(t);
      std::copy(row.begin(), row.end(), mapped_buf[i].begin());
      mapped_rows[i] = mapped_buf[i];
    }
    const auto fused = FuseFrame(target_row, mapped_rows, w);
    for (int k = 0; k < dim; ++k) out(t, k) = static_cast<float>(fused[k]);
  }
  Posteriorgram result(ref.utterance_id(), ref.language_id(), std::move(out));
  ValidateDistributionRows(result.frames()).ThrowIfFailed();
  return result;
}

WeightVector DeriveWeights(const SimilarityTable &sim, FusionMode mode,
                           double temperature, double target_share) {
  if (sim.empty()) ThrowValidation("empty-table", "similarity table is empty");
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    ThrowValidation("invalid-temperature",
                    "temperature must be positive, got " +
                        FormatExact(temperature));
  if (!(target_share >= 0.0 && target_share <= 1.0))
    ThrowValidation("invalid-target-share",
                    "target share must lie in [0, 1], got " +
                        FormatExact(target_share));
  double min_entropy = sim.front().avg_entropy;
  for (const auto &e : sim) {
    if (!std::isfinite(e.avg_entropy) || e.avg_entropy < 0.0 ||
        !(e.top1_accuracy >= 0.0 && e.top1_accuracy <= 1.0))
      ThrowValidation("invalid-similarity",
                      "bad similarity entry for '" + e.lang + "'");
    min_entropy = std::min(min_entropy, e.avg_entropy);
  }
  // Shifting by the minimum entropy cancels in the normalization and keeps
  // the largest exponential at 1.
  std::vector<double> score(sim.size());
  double total = 0.0;
  for (std::size_t i = 0; i < sim.size(); ++i) {
    score[i] = sim[i].top1_accuracy *
               std::exp(-(sim[i].avg_entropy - min_entropy) / temperature);
    total += score[i];
  }
  if (!(total > 0.0))
    ThrowValidation("degenerate-similarity",
                    "all sources have zero weight score");

  WeightVector w;
  w.mode = mode;
  w.target_weight = mode == FusionMode::kMultilingual ? target_share : 0.0;
  const double mass = 1.0 - w.target_weight;
  for (std::size_t i = 0; i < sim.size(); ++i)
    w.sources.push_back({sim[i].lang, mass * (score[i] / total)});
  return w;
}

void WriteWeights(const WeightVector &w, std::ostream &os) {
  os << "mode " << ModeName(w.mode) << '\n'
     << "target " << FormatExact(w.target_weight) << '\n';
  for (const auto &s : w.sources)
    os << s.lang << ' ' << FormatExact(s.weight) << '\n';
}

WeightVector ReadWeights(std::istream &is) {
  WeightVector w;
  bool have_mode = false, have_target = false;
  for (std::string line; std::getline(is, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream in(line);
    std::string key, value, extra;
    if (!(in >> key)) continue;
    if (key[0] == '#') continue;
    if (!(in >> value) || (in >> extra))
      ThrowIo("malformed-weights", "bad line '" + line + "'");
    if (key == "mode") {
      w.mode = ParseMode(value);
      have_mode = true;
    } else if (key == "target") {
      w.target_weight = ParseExact(value, "malformed-weights");
      have_target = true;
    } else {
      w.sources.push_back({key, ParseExact(value, "malformed-weights")});
    }
  }
  if (!have_mode || !have_target)
    ThrowIo("malformed-weights", "weight file needs 'mode' and 'target' lines");
  ValidateWeights(w).ThrowIfFailed();
  return w;
}

void WriteWeightsFile(const WeightVector &w,
                      const std::filesystem::path &path) {
  std::ofstream os = OpenOutput(path);
  WriteWeights(w, os);
}

WeightVector ReadWeightsFile(const std::filesystem::path &path) {
  std::ifstream is = OpenInput(path);
  return ReadWeights(is);
}

void WriteSimilarityTable(const SimilarityTable &sim, std::ostream &os) {
  for (const auto &e : sim)
    os << e.lang << ' ' << FormatExact(e.avg_entropy) << ' '
       << FormatExact(e.top1_accuracy) << '\n';
}

SimilarityTable ReadSimilarityTable(std::istream &is) {
  SimilarityTable sim;
  for (std::string line; std::getline(is, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream in(line);
    std::string lang, h, acc, extra;
    if (!(in >> lang) || lang[0] == '#') continue;
    if (!(in >> h >> acc) || (in >> extra))
      ThrowIo("malformed-similarity", "bad line '" + line + "'");
    sim.push_back({lang, ParseExact(h, "malformed-similarity"),
                   ParseExact(acc, "malformed-similarity")});
  }
  return sim;
}

SimilarityTable ReadSimilarityTableFile(const std::filesystem::path &path) {
  std::ifstream is = OpenInput(path);
  return ReadSimilarityTable(is);
}

void WriteSimilarityTableFile(const SimilarityTable &sim,
                              const std::filesystem::path &path) {
  std::ofstream os = OpenOutput(path);
  WriteSimilarityTable(sim, os);
}

}  // namespace pfusion
