// core/src/metrics.cc

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

#include "pfusion/metrics.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace pfusion {

namespace {

template <typename T>
double EntropyImpl(std::span<const T> row) {
  double h = 0.0;
  for (const T value : row) {
    const double p = value;
    if (p > 0.0) h -= p * std::log(std::max(p, kEntropyFloor));
  }
  return h;
}

void CheckTopN(const std::vector<int> &ns, int dim) {
  for (int n : ns)
    if (n < 1 || n > dim)
      ThrowValidation("topn-out-of-range",
                      "n=" + std::to_string(n) + " outside [1, " +
                          std::to_string(dim) + "]");
}

std::string Fixed6(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

}  // namespace

std::vector<int> ReferenceClasses(const FrameReference &reference,
                                  const Posteriorgram &hypothesis) {
  std::vector<int> classes;
  if (const auto *pg = std::get_if<0>(&reference)) {
    const Posteriorgram &ref = pg->get();
    if (!FrameAlignCheck(ref, hypothesis))
      ThrowValidation("align-mismatch",
                      "reference '" + ref.utterance_id() + "' (T=" +
                          std::to_string(ref.num_frames()) +
                          ") vs hypothesis '" + hypothesis.utterance_id() +
                          "' (T=" + std::to_string(hypothesis.num_frames()) +
                          ")");
    if (ref.dim() != hypothesis.dim())
      ThrowValidation("dimension-mismatch",
                      "reference has " + std::to_string(ref.dim()) +
                          " classes, hypothesis " +
                          std::to_string(hypothesis.dim()));
    classes.reserve(ref.num_frames());
    for (int t = 0; t < ref.num_frames(); ++t)
      classes.push_back(ArgMax(ref.Row(t)));
  } else {
    const LabelSequence &labels = std::get<1>(reference).get();
    if (labels.utterance_id != hypothesis.utterance_id() ||
        labels.size() != hypothesis.num_frames())
      ThrowValidation("align-mismatch",
                      "labels '" + labels.utterance_id + "' (T=" +
                          std::to_string(labels.size()) +
                          ") vs hypothesis '" + hypothesis.utterance_id() +
                          "' (T=" + std::to_string(hypothesis.num_frames()) +
                          ")");
    for (std::size_t t = 0; t < labels.labels.size(); ++t) {
      const int c = labels.labels[t];
      if (c < 0 || c >= hypothesis.dim())
        ThrowValidation("label-out-of-range",
                        "frame " + std::to_string(t) + " label " +
                            std::to_string(c));
      classes.push_back(c);
    }
  }
  return classes;
}

FrameAccuracy ComputeFrameAccuracy(const FrameReference &reference,
                                   const Posteriorgram &hypothesis) {
  const auto ref = ReferenceClasses(reference, hypothesis);
  FrameAccuracy acc;
  acc.frames = static_cast<std::int64_t>(ref.size());
  for (int t = 0; t < hypothesis.num_frames(); ++t)
    acc.cmf += (ArgMax(hypothesis.Row(t)) == ref[t]);
  acc.accuracy = acc.frames ? static_cast<double>(acc.cmf) /
                                  static_cast<double>(acc.frames)
                            : 0.0;
  return acc;
}

int ClassRank(std::span<const float> row, int c) {
  const float value = row[c];
  int rank = 0;
  for (int k = 0; k < static_cast<int>(row.size()); ++k)
    if (row[k] > value || (row[k] == value && k < c)) ++rank;
  return rank;
}

std::map<int, double> TopNAccuracy(const FrameReference &reference,
                                   const Posteriorgram &hypothesis,
                                   const std::vector<int> &ns) {
  CheckTopN(ns, hypothesis.dim());
  const auto ref = ReferenceClasses(reference, hypothesis);
  std::map<int, std::int64_t> hits;
  for (int n : ns) hits[n] = 0;
  for (int t = 0; t < hypothesis.num_frames(); ++t) {
    const int rank = ClassRank(hypothesis.Row(t), ref[t]);
    for (auto &[n, count] : hits) count += (rank < n);
  }
  std::map<int, double> out;
  const double frames = static_cast<double>(ref.size());
  for (const auto &[n, count] : hits)
    out[n] = frames > 0 ? static_cast<double>(count) / frames : 0.0;
  return out;
}

double FrameEntropy(std::span<const float> row) { return EntropyImpl(row); }
double FrameEntropy(std::span<const double> row) { return EntropyImpl(row); }

double AverageEntropy(const Posteriorgram &pg) {
  if (pg.num_frames() == 0) return 0.0;
  double sum = 0.0;
  for (int t = 0; t < pg.num_frames(); ++t) sum += FrameEntropy(pg.Row(t));
  return sum / pg.num_frames();
}

double AverageEntropy(const std::vector<Posteriorgram> &pgs) {
  double sum = 0.0;
  std::int64_t frames = 0;
  for (const auto &pg : pgs) {
    for (int t = 0; t < pg.num_frames(); ++t) sum += FrameEntropy(pg.Row(t));
    frames += pg.num_frames();
  }
  return frames ? sum / static_cast<double>(frames) : 0.0;
}

std::vector<std::string> CollapsePhones(const std::vector<std::string> &frames,
                                        const std::string &silence) {
  // Silence is dropped before merging, so "a sil a" decodes to a single "a"
  // and the output never holds two equal neighbours.
  std::vector<std::string> out;
  for (const auto &phone : frames) {
    if (phone == silence) continue;
    if (out.empty() || out.back() != phone) out.push_back(phone);
  }
  return out;
}

std::vector<std::string> GreedyDecode(const Posteriorgram &pg,
                                      const ClassInventory &inv) {
  if (pg.dim() != inv.size())
    ThrowValidation("dimension-mismatch",
                    "posteriorgram width " + std::to_string(pg.dim()) +
                        " vs inventory size " + std::to_string(inv.size()));
  std::vector<std::string> frames;
  frames.reserve(pg.num_frames());
  for (int t = 0; t < pg.num_frames(); ++t)
    frames.push_back(inv.phone(ArgMax(pg.Row(t))));
  return CollapsePhones(frames, inv.silence_phone());
}

std::vector<std::string> LabelsToPhones(const LabelSequence &labels,
                                        const ClassInventory &inv) {
  ValidateLabels(labels, inv).ThrowIfFailed();
  std::vector<std::string> frames;
  frames.reserve(labels.labels.size());
  for (auto c : labels.labels) frames.push_back(inv.phone(c));
  return CollapsePhones(frames, inv.silence_phone());
}

EditCounts EditDistance(const std::vector<std::string> &reference,
                        const std::vector<std::string> &hypothesis) {
  const std::size_t n = reference.size();
  const std::size_t m = hypothesis.size();
  // cost[i][j]: distance between reference[0, i) and hypothesis[0, j).
  std::vector<std::int64_t> cost((n + 1) * (m + 1));
  auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
  for (std::size_t i = 0; i <= n; ++i) cost[at(i, 0)] = i;
  for (std::size_t j = 0; j <= m; ++j) cost[at(0, j)] = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const std::int64_t diag =
          cost[at(i - 1, j - 1)] + (reference[i - 1] != hypothesis[j - 1]);
      cost[at(i, j)] = std::min({diag, cost[at(i - 1, j)] + 1,
                                 cost[at(i, j - 1)] + 1});
    }

  EditCounts counts;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const std::int64_t here = cost[at(i, j)];
    if (i > 0 && j > 0) {
      const bool same = reference[i - 1] == hypothesis[j - 1];
      if (cost[at(i - 1, j - 1)] + (same ? 0 : 1) == here) {
        counts.substitutions += same ? 0 : 1;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && cost[at(i - 1, j)] + 1 == here) {
      ++counts.deletions;
      --i;
    } else {
      ++counts.insertions;
      --j;
    }
  }
  return counts;
}

PhoneErrorRate ComputePhoneErrorRate(
    const std::vector<std::string> &reference,
    const std::vector<std::string> &hypothesis) {
  if (reference.empty())
    ThrowValidation("empty-reference", "reference phone sequence is empty");
  PhoneErrorRate result;
  result.counts = EditDistance(reference, hypothesis);
  result.reference_length = static_cast<std::int64_t>(reference.size());
  result.per = static_cast<double>(result.counts.distance()) /
               static_cast<double>(result.reference_length);
  return result;
}

void ReportAccumulator::Add(const FrameReference &reference,
                            const Posteriorgram &hypothesis,
                            const ClassInventory &inv) {
  if (hypothesis.dim() != inv.size())
    ThrowValidation("dimension-mismatch",
                    "hypothesis width " + std::to_string(hypothesis.dim()) +
                        " vs inventory size " + std::to_string(inv.size()));
  CheckTopN(ns_, hypothesis.dim());
  const auto ref = ReferenceClasses(reference, hypothesis);
  for (int n : ns_) top_hits_[n];
  for (int t = 0; t < hypothesis.num_frames(); ++t) {
    const auto row = hypothesis.Row(t);
    const int hyp = ArgMax(row);
    cmf_ += (hyp == ref[t]);
    phone_hits_ += (inv.phone(hyp) == inv.phone(ref[t]));
    const int rank = ClassRank(row, ref[t]);
    for (auto &[n, count] : top_hits_) count += (rank < n);
    entropy_sum_ += FrameEntropy(row);
  }
  frames_ += hypothesis.num_frames();

  std::vector<std::string> ref_phones;
  if (const auto *pg = std::get_if<0>(&reference)) {
    ref_phones = GreedyDecode(pg->get(), inv);
  } else {
    ref_phones = LabelsToPhones(std::get<1>(reference).get(), inv);
  }
  const auto hyp_phones = GreedyDecode(hypothesis, inv);
  const EditCounts e = EditDistance(ref_phones, hyp_phones);
  edits_.substitutions += e.substitutions;
  edits_.insertions += e.insertions;
  edits_.deletions += e.deletions;
  ref_phones_ += static_cast<std::int64_t>(ref_phones.size());
}

EvalReport ReportAccumulator::Finish() const {
  if (ref_phones_ == 0)
    ThrowValidation("empty-reference", "no reference phones to score PER");
  EvalReport r;
  r.frames = frames_;
  r.cmf = cmf_;
  const double frames = static_cast<double>(frames_);
  for (int n : ns_) {
    const auto it = top_hits_.find(n);
    r.top_n[n] = (it == top_hits_.end() || frames_ == 0)
                     ? 0.0
                     : static_cast<double>(it->second) / frames;
  }
  r.avg_entropy = frames_ ? entropy_sum_ / frames : 0.0;
  r.phone_accuracy = frames_ ? static_cast<double>(phone_hits_) / frames : 0.0;
  r.edits = edits_;
  r.reference_phones = ref_phones_;
  r.per = static_cast<double>(edits_.distance()) /
          static_cast<double>(ref_phones_);
  return r;
}

EvalReport BuildReport(const FrameReference &reference,
                       const Posteriorgram &hypothesis,
                       const ClassInventory &inv, const std::vector<int> &ns) {
  ReportAccumulator acc(ns);
  acc.Add(reference, hypothesis, inv);
  return acc.Finish();
}

void WriteReport(const EvalReport &report, std::ostream &os) {
  os << "frames=" << report.frames << '\n' << "cmf=" << report.cmf << '\n';
  for (const auto &[n, value] : report.top_n)
    os << "top" << n << '=' << Fixed6(value) << '\n';
  os << "avg_entropy_nats=" << Fixed6(report.avg_entropy) << '\n'
     << "phone_acc=" << Fixed6(report.phone_accuracy) << '\n'
     << "per=" << Fixed6(report.per) << '\n'
     << "sub=" << report.edits.substitutions << '\n'
     << "ins=" << report.edits.insertions << '\n'
     << "del=" << report.edits.deletions << '\n';
}

std::string FormatReport(const EvalReport &report) {
  std::ostringstream os;
  WriteReport(report, os);
  return os.str();
}

std::vector<int> ParseTopN(const std::string &text) {
  std::vector<int> ns;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, end - pos);
    int n = 0;
    const auto [ptr, ec] =
        std::from_chars(item.data(), item.data() + item.size(), n);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size())
      ThrowUsage("bad-topn", "cannot parse top-n list '" + text + "'");
    ns.push_back(n);
    pos = end + 1;
  }
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
  return ns;
}

}  // namespace pfusion
