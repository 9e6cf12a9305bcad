// tests/synth_test.cc

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
#include <fstream>

#include <doctest.h>

#include "pfusion/metrics.h"
#include "pfusion/synth.h"
#include "test-util.h"

namespace pfusion {
namespace {

std::string ErrorName(const std::function<void()> &fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.name();
  }
  return "";
}

// Languages with one class per latent phone: class l peaks for latent l.
SynthConfig Diagonal(int n, double sigma, std::vector<std::string> tags) {
  SynthConfig cfg;
  for (int l = 0; l < n; ++l) cfg.latent_phones.push_back(l ? "p" + std::to_string(l) : "sil");
  for (const auto &tag : tags) {
    RowMatrix t = RowMatrix::Zero(n, n);
    for (int l = 0; l < n; ++l) t(l, l) = 3.0;
    cfg.languages.push_back({tag, t, sigma});
  }
  cfg.splits = {{"train", 20}, {"eval", 10}};
  cfg.min_frames = 20;
  cfg.max_frames = 40;
  return cfg;
}

TEST_CASE("presets validate and every posteriorgram is valid") {
  for (const std::string name : {"default", "confusable", "graded"}) {
    SynthConfig cfg = PresetSynthConfig(name, 3);
    cfg.splits = {{"train", 4}, {"eval", 2}};
    const SynthCorpus corpus = Generate(cfg);
    for (const auto &lang : cfg.languages) {
      const ClassInventory inv = SynthInventory(cfg, lang.tag);
      for (const auto &pg : corpus.posteriors.at(lang.tag))
        CHECK(ValidatePosteriorgram(pg, inv).ok);
    }
  }
  const SynthConfig d = DefaultSynthConfig();
  REQUIRE(d.languages.size() == 4);
  CHECK(d.n_latent() == 12);
  CHECK(d.languages[0].class_count() == 16);
  CHECK(d.languages[2].class_count() == 24);
  CHECK(ErrorName([] { PresetSynthConfig("nope", 1); }) == "invalid-config");
}

TEST_CASE("noise-free emission repeats the template softmax") {
  SynthConfig cfg = Diagonal(3, 0.0, {"x"});
  const SynthCorpus corpus = Generate(cfg);
  std::map<int, std::vector<float>> seen;
  for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
    const auto &pg = corpus.posteriors.at("x")[u];
    for (int t = 0; t < pg.num_frames(); ++t) {
      const int l = corpus.utterances[u].latent[t];
      const auto row = pg.Row(t);
      auto [it, fresh] = seen.emplace(l, std::vector<float>(row.begin(), row.end()));
      if (!fresh) CHECK(std::equal(row.begin(), row.end(), it->second.begin()));
    }
  }
  // softmax([3,0,0]) in row 0.
  const double e3 = std::exp(3.0);
  CHECK(seen.at(0)[0] == doctest::Approx(e3 / (e3 + 2)).epsilon(1e-6));
}

TEST_CASE("generation is deterministic and keyed per utterance") {
  const SynthConfig cfg = Diagonal(4, 1.0, {"x", "y"});
  const SynthCorpus a = Generate(cfg);
  const SynthCorpus b = Generate(cfg);
  for (std::size_t u = 0; u < a.utterances.size(); ++u) {
    CHECK(a.utterances[u].latent == b.utterances[u].latent);
    CHECK(a.posteriors.at("y")[u].frames() == b.posteriors.at("y")[u].frames());
  }
  // Dropping a language leaves the other language's stream untouched.
  SynthConfig only_x = cfg;
  only_x.languages.resize(1);
  const SynthCorpus c = Generate(only_x);
  for (std::size_t u = 0; u < a.utterances.size(); ++u)
    CHECK(c.posteriors.at("x")[u].frames() == a.posteriors.at("x")[u].frames());

  SynthConfig other = cfg;
  other.seed = 99;
  CHECK(Generate(other).utterances[0].latent != a.utterances[0].latent);
}

TEST_CASE("latent chain run lengths are geometric") {
  Rng rng(5);
  const auto chain = SampleLatentChain(rng, 12, 0.9, 10000);
  std::vector<int> runs;
  int run = 1;
  for (std::size_t t = 1; t < chain.size(); ++t) {
    if (chain[t] == chain[t - 1]) {
      ++run;
    } else {
      runs.push_back(run);
      run = 1;
    }
  }
  // Run length ~ Geometric(0.1): mean 10, variance 90.
  double mean = 0;
  for (int r : runs) mean += r;
  mean /= runs.size();
  const double sigma = std::sqrt(90.0 / runs.size());
  CHECK(std::abs(mean - 10.0) <= 5 * sigma);
}

TEST_CASE("oracle is the identity for matching noise-free languages") {
  const SynthConfig cfg = Diagonal(5, 0.0, {"x", "y"});
  const BayesOracle o = ComputeBayesOracle(cfg, "x", "y");
  for (int c = 0; c < 5; ++c) {
    CHECK(o.Predict(c) == c);
    CHECK(o.Lookup(c)[c] == 1.0);
  }
  CHECK(OracleAccuracy(Generate(cfg), o) == 1.0);
}

TEST_CASE("oracle splits a shared source class evenly") {
  SynthConfig cfg;
  cfg.latent_phones = {"sil", "a"};
  RowMatrix src(2, 2), tgt(2, 2);
  src << 2, 0, 2, 0;  // both latents peak at source class 0
  tgt << 2, 0, 0, 2;
  // Class 1 of the source must still label a phone; give it to latent 1.
  src(1, 1) = 1.0;
  cfg.languages = {{"src", src, 0.0}, {"tgt", tgt, 0.0}};
  const BayesOracle o = ComputeBayesOracle(cfg, "src", "tgt");
  CHECK(o.Lookup(0)[0] == doctest::Approx(0.5));
  CHECK(o.Lookup(0)[1] == doctest::Approx(0.5));
  // Source class 1 is never the argmax: target marginal.
  CHECK(o.Lookup(1)[0] == doctest::Approx(0.5));
}

TEST_CASE("single latent phone is predicted perfectly") {
  SynthConfig cfg;
  cfg.latent_phones = {"sil"};
  RowMatrix t(1, 3);
  t << 2, 0, 1;
  cfg.languages = {{"x", t, 0.7}, {"y", t, 0.0}};
  cfg.splits = {{"eval", 5}};
  const SynthCorpus corpus = Generate(cfg);
  CHECK(OracleAccuracy(corpus, ComputeBayesOracle(cfg, "x", "y", 20000)) == 1.0);
}

TEST_CASE("oracle accuracy falls with noise and is seed-stable") {
  double previous = 2.0;
  for (double sigma : {0.0, 0.5, 1.0, 2.0}) {
    SynthConfig cfg = DefaultSynthConfig(1);
    for (auto &lang : cfg.languages) lang.noise_sigma = sigma;
    cfg.languages.resize(2);
    cfg.splits = {{"eval", 100}};
    const double acc = OracleAccuracy(
        Generate(cfg), ComputeBayesOracle(cfg, "alpha", "beta", 100000));
    CHECK(acc <= previous + 0.005);
    previous = acc;
  }
  // ~10k eval frames per seed here; the 100k-frame tolerance is 0.01, so
  // allow sqrt(10) times that.
  std::vector<double> accs;
  for (std::uint64_t seed : {11, 12, 13}) {
    SynthConfig cfg = DefaultSynthConfig(1);
    cfg.languages.resize(2);
    cfg.seed = seed;
    cfg.splits = {{"eval", 100}};
    accs.push_back(OracleAccuracy(Generate(cfg),
                                  ComputeBayesOracle(cfg, "alpha", "beta", 100000, seed)));
  }
  for (double a : accs) CHECK(std::abs(a - accs[0]) <= 0.01 * std::sqrt(10.0));
}

TEST_CASE("truth labels follow the canonical class") {
  const SynthConfig cfg = DefaultSynthConfig(2);
  SynthConfig small = cfg;
  small.splits = {{"eval", 3}};
  const SynthCorpus corpus = Generate(small);
  const auto &lang = small.languages[1];
  const ClassInventory inv = SynthInventory(small, lang.tag);
  for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
    const LabelSequence truth = corpus.TruthLabels(lang.tag, u);
    for (std::size_t t = 0; t < truth.labels.size(); ++t) {
      const int latent = corpus.utterances[u].latent[t];
      CHECK(truth.labels[t] == CanonicalClass(lang, latent));
      CHECK(inv.phone(truth.labels[t]) == small.latent_phones[latent]);
    }
  }
}

TEST_CASE("config validation") {
  SynthConfig cfg = Diagonal(3, 1.0, {"x"});
  CHECK_NOTHROW(cfg.Validate());
  auto broken = [&](auto mutate) {
    SynthConfig c = cfg;
    mutate(c);
    return ErrorName([&] { c.Validate(); });
  };
  CHECK(broken([](SynthConfig &c) { c.self_loop = 1.0; }) == "invalid-config");
  CHECK(broken([](SynthConfig &c) { c.languages[0].noise_sigma = -1; }) == "invalid-config");
  CHECK(broken([](SynthConfig &c) { c.languages[0].templates.resize(2, 3); }) ==
        "invalid-config");
  CHECK(broken([](SynthConfig &c) { c.languages[0].tag = "labels"; }) == "invalid-config");
  CHECK(broken([](SynthConfig &c) { c.min_frames = 0; }) == "invalid-config");
  CHECK(broken([](SynthConfig &c) { c.languages.push_back(c.languages[0]); }) ==
        "invalid-config");
  // Silence must label some class.
  CHECK(broken([](SynthConfig &c) { c.languages[0].templates(0, 0) = -5; }) ==
        "invalid-config");
  CHECK(ErrorName([&] { cfg.Language("nope"); }) == "missing-language");
}

TEST_CASE("json round trip and preset overrides") {
  const SynthConfig cfg = GradedSynthConfig(4);
  const SynthConfig back = SynthConfigFromJson(SynthConfigToJson(cfg));
  REQUIRE(back.languages.size() == cfg.languages.size());
  for (std::size_t k = 0; k < cfg.languages.size(); ++k) {
    CHECK(back.languages[k].tag == cfg.languages[k].tag);
    CHECK(back.languages[k].templates == cfg.languages[k].templates);
  }
  CHECK(back.seed == cfg.seed);

  const SynthConfig p = SynthConfigFromJson(
      R"({"preset": "confusable", "seed": 7, "noise_sigma": 0.5,
          "splits": [{"name": "eval", "n_utterances": 3}], "min_frames": 5,
          "max_frames": 6})");
  CHECK(p.seed == 7);
  CHECK(p.languages[1].noise_sigma == 0.5);
  CHECK(p.splits.size() == 1);
  CHECK(p.max_frames == 6);
  CHECK(ErrorName([] { SynthConfigFromJson(R"({"latent_phones": []})"); }) ==
        "invalid-config");
}

TEST_CASE("corpus layout on disk") {
  testing::TempDir dir("synth");
  SynthConfig cfg = Diagonal(3, 1.0, {"x", "y"});
  cfg.splits = {{"train", 2}, {"eval", 1}};
  const SynthCorpus corpus = Generate(cfg);
  WriteCorpus(corpus, dir.path());
  const CorpusManifest m = ReadManifest(dir.path());
  CHECK(m.languages == std::vector<std::string>{"x", "y"});
  CHECK(m.latent_phones == cfg.latent_phones);
  REQUIRE(m.utterances.size() == 3);
  CHECK(m.SplitUtterances("eval").size() == 1);
  const auto &u = m.utterances[0];
  const Posteriorgram pg = ReadPosteriorgramFile(m.PosteriorPath("y", u));
  CHECK(pg.frames() == corpus.posteriors.at("y")[0].frames());
  CHECK(ReadLabelsFile(m.LatentPath(u)).labels == corpus.LatentLabels(0).labels);
  CHECK(ReadLabelsFile(m.TruthPath("x", u)).labels == corpus.TruthLabels("x", 0).labels);
  CHECK(ReadInventoryFile(m.InventoryPath("x")) == SynthInventory(cfg, "x"));
  CHECK(SynthConfigFromJson(testing::Slurp(dir / "config.json")).languages[1].templates ==
        cfg.languages[1].templates);
}

}  // namespace
}  // namespace pfusion
