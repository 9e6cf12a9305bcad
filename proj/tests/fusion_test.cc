// tests/fusion_test.cc

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

#include <cmath>
#include <sstream>

#include <doctest.h>

#include "pfusion/fusion.h"
#include "test-util.h"

namespace pfusion {
namespace {

using testing::RandomFrames;
using testing::RandomRow;

std::string ErrorName(const std::function<void()> &fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.name();
  }
  return "";
}

WeightVector Multi(double wt, std::vector<double> ws) {
  WeightVector w{FusionMode::kMultilingual, wt, {}};
  for (std::size_t i = 0; i < ws.size(); ++i)
    w.sources.push_back({"s" + std::to_string(i), ws[i]});
  return w;
}

WeightVector Cross(std::vector<double> ws) {
  WeightVector w = Multi(0.0, std::move(ws));
  w.mode = FusionMode::kCrossLingual;
  return w;
}

using Row = std::vector<double>;

Row Fuse(const std::optional<Row> &target, const std::vector<Row> &mapped,
         const WeightVector &w) {
  std::vector<std::span<const double>> spans(mapped.begin(), mapped.end());
  std::optional<std::span<const double>> t;
  if (target) t = std::span<const double>(*target);
  return FuseFrame(t, spans, w);
}

TEST_CASE("fuse frame examples") {
  const Row target = {0.8, 0.2};
  CHECK(Fuse(target, {{0.4, 0.6}}, Multi(1.0, {0.0})) == target);
  CHECK(Fuse(std::nullopt, {{1, 0}, {0, 1}}, Cross({0.5, 0.5})) == Row{0.5, 0.5});
  const Row mixed = Fuse(target, {{0.4, 0.6}}, Multi(0.5, {0.5}));
  CHECK(mixed[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(mixed[1] == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("fuse frame argument errors") {
  const Row a = {0.5, 0.5}, b = {0.2, 0.3, 0.5};
  CHECK(ErrorName([&] { Fuse(a, {a}, Cross({1.0})); }) == "mode-mismatch");
  CHECK(ErrorName([&] { Fuse(std::nullopt, {a}, Multi(0.5, {0.5})); }) ==
        "mode-mismatch");
  CHECK(ErrorName([&] { Fuse(std::nullopt, {a, b}, Cross({0.5, 0.5})); }) ==
        "dimension-mismatch");
  CHECK(ErrorName([&] { Fuse(b, {a}, Multi(0.5, {0.5})); }) ==
        "dimension-mismatch");
  CHECK(ErrorName([&] { Fuse(std::nullopt, {a}, Cross({0.5, 0.5})); }) ==
        "source-count-mismatch");
  CHECK(ErrorName([&] { Fuse(std::nullopt, {a, a}, Cross({0.5, 0.6})); }) ==
        "invalid-weights");
}

TEST_CASE("validate weights examples") {
  CHECK(ValidateWeights(Multi(0.4, {0.3, 0.3})).ok);
  CHECK(ValidateWeights(Cross({0.5, 0.6})).error == "sum-violation");
  WeightVector w = Cross({0.45, 0.45});
  w.target_weight = 0.1;
  CHECK(ValidateWeights(w).error == "mode-violation");
  CHECK(ValidateWeights(Cross({})).error == "empty-sources");
  CHECK(ValidateWeights(Cross({1.5, -0.5})).error == "weight-out-of-range");
  CHECK(ValidateWeights(Cross({std::nan(""), 1.0})).error == "non-finite-weight");
  // Sum tolerance is 1e-9.
  CHECK(ValidateWeights(Cross({0.5, 0.5 + 0.9e-9})).ok);
  CHECK_FALSE(ValidateWeights(Cross({0.5, 0.5 + 1.1e-9})).ok);
  // All violations are reported.
  WeightVector both = Cross({0.5, 0.6});
  both.target_weight = 0.2;
  const auto r = ValidateWeights(both);
  CHECK(r.message.find("mode-violation") != std::string::npos);
  CHECK(r.message.find("sum-violation") != std::string::npos);
}

TEST_CASE("fuse posteriorgrams") {
  Rng rng(4);
  const Posteriorgram a("u", "tgt", RandomFrames(rng, 100, 6));
  const Posteriorgram b("u", "tgt", RandomFrames(rng, 100, 6));
  CHECK(FusePosteriorgrams(nullptr, {a}, Cross({1.0})).frames() == a.frames());

  const Posteriorgram self = FusePosteriorgrams(&a, {a, a}, Multi(0.2, {0.3, 0.5}));
  CHECK((self.frames() - a.frames()).cwiseAbs().maxCoeff() <= 1e-7f);

  const Posteriorgram f = FusePosteriorgrams(&a, {b}, Multi(0.3, {0.7}));
  CHECK(f.num_frames() == 100);
  CHECK(f.utterance_id() == "u");
  for (int t = 0; t < 100; ++t) {
    double s = 0;
    for (float v : f.Row(t)) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-5);
  }
  const Posteriorgram other("v", "tgt", b.frames());
  CHECK(ErrorName([&] { FusePosteriorgrams(&a, {other}, Multi(0.5, {0.5})); }) ==
        "align-mismatch");
  const Posteriorgram shorter("u", "tgt", RandomFrames(rng, 99, 6));
  CHECK(ErrorName([&] { FusePosteriorgrams(nullptr, {a, shorter}, Cross({0.5, 0.5})); }) ==
        "align-mismatch");
}

TEST_CASE("derive weights examples") {
  const auto sym = DeriveWeights({{"a", 1.3, 0.6}, {"b", 1.3, 0.6}},
                                 FusionMode::kCrossLingual, 0.7);
  CHECK(sym.sources[0].weight == 0.5);
  CHECK(sym.sources[1].weight == 0.5);

  const auto ab = DeriveWeights({{"a", 1.0, 0.5}, {"b", 2.0, 0.5}},
                                FusionMode::kCrossLingual, 1.0);
  const double ea = std::exp(-1.0), eb = std::exp(-2.0);
  CHECK(ab.sources[0].weight == doctest::Approx(ea / (ea + eb)).epsilon(1e-12));
  CHECK(ab.sources[1].weight == doctest::Approx(eb / (ea + eb)).epsilon(1e-12));
  CHECK(ab.sources[0].weight == doctest::Approx(0.7311).epsilon(1e-4));

  // ceb target row of the entropy table: tam, tel, jav.
  const auto ceb = DeriveWeights(
      {{"tam", 1.214, 0.5}, {"tel", 1.235, 0.5}, {"jav", 1.098, 0.5}},
      FusionMode::kMultilingual);
  CHECK(ceb.target_weight == 0.5);
  CHECK(ceb.sources[2].weight > ceb.sources[0].weight);
  CHECK(ceb.sources[0].weight > ceb.sources[1].weight);
  CHECK(ValidateWeights(ceb).ok);
  double s = 0;
  for (const auto &x : ceb.sources) s += x.weight;
  CHECK(s == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("derive weights is monotone in entropy and rejects bad input") {
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    SimilarityTable sim;
    for (int k = 0; k < 4; ++k)
      sim.push_back({"l" + std::to_string(k), 3.0 * UniformUnit(rng), 0.7});
    const double tau = 0.05 + UniformUnit(rng);
    const auto w = DeriveWeights(sim, FusionMode::kCrossLingual, tau);
    CHECK(ValidateWeights(w).ok);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        if (sim[a].avg_entropy < sim[b].avg_entropy)
          CHECK(w.sources[a].weight > w.sources[b].weight);
  }
  CHECK(ErrorName([] { DeriveWeights({}, FusionMode::kCrossLingual); }) == "empty-table");
  CHECK(ErrorName([] { DeriveWeights({{"a", 1, 1}}, FusionMode::kCrossLingual, 0.0); }) ==
        "invalid-temperature");
  CHECK(ErrorName([] { DeriveWeights({{"a", 1, 1.5}}, FusionMode::kCrossLingual); }) ==
        "invalid-similarity");
  CHECK(ErrorName([] { DeriveWeights({{"a", 1, 0}}, FusionMode::kCrossLingual); }) ==
        "degenerate-similarity");
  CHECK(ErrorName([] { DeriveWeights({{"a", 1, 1}}, FusionMode::kMultilingual, 1, 1.5); }) ==
        "invalid-target-share");
}

TEST_CASE("weight file exact round trip") {
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    const double a = UniformUnit(rng) * 0.5;
    const double b = UniformUnit(rng) * 0.5;
    WeightVector w = Multi(1.0 - a - b, {a, b});
    w.sources[0].lang = "tam";
    w.sources[1].lang = "jav";
    if (!ValidateWeights(w).ok) continue;
    std::stringstream ss;
    WriteWeights(w, ss);
    const WeightVector back = ReadWeights(ss);
    CHECK(back.mode == w.mode);
    CHECK(back.target_weight == w.target_weight);
    REQUIRE(back.sources.size() == 2);
    CHECK(back.sources[0].lang == "tam");
    CHECK(back.sources[0].weight == w.sources[0].weight);
    CHECK(back.sources[1].weight == w.sources[1].weight);
  }
  std::istringstream bad("mode cross-lingual\ntarget 0.25\ntam 0.75\n");
  CHECK(ErrorName([&] { ReadWeights(bad); }) == "mode-violation");
}

TEST_CASE("exact decimal formatting") {
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double v = UniformUnit(rng) * std::pow(10.0, static_cast<int>(UniformIndex(rng, 10)) - 5);
    CHECK(ParseExact(FormatExact(v), "x") == v);
  }
  CHECK(FormatExact(0.1) == "0.1");
  CHECK(ParseExact("0.1", "x") == 0.1);
  CHECK(ErrorName([] { ParseExact("0.1abc", "bad-number"); }) == "bad-number");
}

TEST_CASE("similarity table round trip") {
  const SimilarityTable sim = {{"tam", 1.214, 0.41}, {"jav", 1.098, 0.47}};
  std::stringstream ss;
  WriteSimilarityTable(sim, ss);
  const SimilarityTable back = ReadSimilarityTable(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[1].lang == "jav");
  CHECK(back[1].avg_entropy == 1.098);
  CHECK(back[1].top1_accuracy == 0.47);
}

TEST_CASE("mode names") {
  CHECK(ParseMode("multi") == FusionMode::kMultilingual);
  CHECK(ParseMode("cross-lingual") == FusionMode::kCrossLingual);
  CHECK(ModeName(FusionMode::kMultilingual) == "multilingual");
  CHECK(ErrorName([] { ParseMode("both"); }) == "bad-mode");
}

}  // namespace
}  // namespace pfusion
