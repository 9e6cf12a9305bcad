// core/src/synth.cc

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

#include "pfusion/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "io-util.h"
#include "pfusion/metrics.h"

namespace pfusion {

namespace {

using nlohmann::json;

std::vector<std::string> LatentNames(int n) {
  std::vector<std::string> names = {"sil"};
  for (int i = 1; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%02d", i);
    names.emplace_back(buf);
  }
  return names;
}

int RowArgMax(const RowMatrix &m, Eigen::Index row) {
  return ArgMax(std::span<const double>(m.row(row).data(),
                                        static_cast<std::size_t>(m.cols())));
}

// Emission templates over `n_groups` pseudo-latents: a random permutation of
// the classes gives every group one primary class at `strength`; spare
// classes become siblings of random groups at strength - gap, gap drawn from
// [gap_lo, gap_hi]. Every logit gets N(0, jitter^2) on top.
RowMatrix TiedStateTemplates(Rng &rng, int n_groups, int classes,
                             double strength, double jitter, double gap_lo,
                             double gap_hi) {
  std::vector<int> perm(classes);
  std::iota(perm.begin(), perm.end(), 0);
  Shuffle(std::span(perm), rng);
  RowMatrix t(n_groups, classes);
  for (Eigen::Index i = 0; i < t.size(); ++i)
    t.data()[i] = jitter * StandardNormal(rng);
  for (int i = 0; i < classes; ++i) {
    if (i < n_groups) {
      t(i, perm[i]) += strength;
    } else {
      const int owner = static_cast<int>(UniformIndex(rng, n_groups));
      const double gap = gap_lo + (gap_hi - gap_lo) * UniformUnit(rng);
      t(owner, perm[i]) += strength - gap;
    }
  }
  return t;
}

// Expands group templates to one row per latent phone.
RowMatrix ExpandGroups(const RowMatrix &group_templates,
                       const std::vector<int> &group_of_latent) {
  RowMatrix t(static_cast<Eigen::Index>(group_of_latent.size()),
              group_templates.cols());
  for (std::size_t l = 0; l < group_of_latent.size(); ++l)
    t.row(l) = group_templates.row(group_of_latent[l]);
  return t;
}

json ToJson(const SynthConfig &cfg) {
  json j;
  j["latent_phones"] = cfg.latent_phones;
  j["self_loop"] = cfg.self_loop;
  j["min_frames"] = cfg.min_frames;
  j["max_frames"] = cfg.max_frames;
  j["seed"] = cfg.seed;
  j["splits"] = json::array();
  for (const auto &s : cfg.splits)
    j["splits"].push_back({{"name", s.name}, {"n_utterances", s.n_utterances}});
  j["languages"] = json::array();
  for (const auto &lang : cfg.languages) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < lang.templates.rows(); ++r) {
      std::vector<double> row(lang.templates.row(r).data(),
                              lang.templates.row(r).data() +
                                  lang.templates.cols());
      rows.push_back(row);
    }
    j["languages"].push_back({{"tag", lang.tag},
                              {"noise_sigma", lang.noise_sigma},
                              {"templates", rows}});
  }
  return j;
}

void ApplyOverrides(const json &j, SynthConfig *cfg) {
  if (j.contains("self_loop")) cfg->self_loop = j.at("self_loop").get<double>();
  if (j.contains("min_frames")) cfg->min_frames = j.at("min_frames").get<int>();
  if (j.contains("max_frames")) cfg->max_frames = j.at("max_frames").get<int>();
  if (j.contains("splits")) {
    cfg->splits.clear();
    for (const auto &s : j.at("splits"))
      cfg->splits.push_back({s.at("name").get<std::string>(),
                             s.at("n_utterances").get<int>()});
  }
}

SynthConfig FromJson(const json &j) {
  if (j.contains("preset")) {
    SynthConfig cfg = PresetSynthConfig(j.at("preset").get<std::string>(),
                                        j.value("seed", std::uint64_t{1}));
    if (j.contains("noise_sigma"))
      for (auto &lang : cfg.languages)
        lang.noise_sigma = j.at("noise_sigma").get<double>();
    ApplyOverrides(j, &cfg);
    cfg.Validate();
    return cfg;
  }
  SynthConfig cfg;
  cfg.latent_phones = j.at("latent_phones").get<std::vector<std::string>>();
  cfg.seed = j.value("seed", std::uint64_t{0});
  ApplyOverrides(j, &cfg);
  for (const auto &lj : j.at("languages")) {
    SynthLanguage lang;
    lang.tag = lj.at("tag").get<std::string>();
    lang.noise_sigma = lj.at("noise_sigma").get<double>();
    const auto rows =
        lj.at("templates").get<std::vector<std::vector<double>>>();
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    lang.templates.resize(static_cast<Eigen::Index>(rows.size()),
                          static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != cols)
        ThrowValidation("invalid-config", "ragged template matrix for '" +
                                              lang.tag + "'");
      for (std::size_t c = 0; c < cols; ++c) lang.templates(r, c) = rows[r][c];
    }
    cfg.languages.push_back(std::move(lang));
  }
  cfg.Validate();
  return cfg;
}

}  // namespace

const SynthLanguage &SynthConfig::Language(const std::string &tag) const {
  return languages.at(static_cast<std::size_t>(LanguageIndex(tag)));
}

int SynthConfig::LanguageIndex(const std::string &tag) const {
  for (std::size_t i = 0; i < languages.size(); ++i)
    if (languages[i].tag == tag) return static_cast<int>(i);
  ThrowValidation("missing-language", "no language '" + tag + "'");
}

void SynthConfig::Validate() const {
  auto fail = [](const std::string &msg) {
    ThrowValidation("invalid-config", msg);
  };
  if (latent_phones.empty()) fail("need at least one latent phone");
  if (std::set<std::string>(latent_phones.begin(), latent_phones.end())
          .size() != latent_phones.size())
    fail("latent phone names must be unique");
  for (const auto &p : latent_phones)
    if (p.empty() || p.find_first_of(" \t\r\n") != std::string::npos)
      fail("bad latent phone name '" + p + "'");
  if (languages.empty()) fail("need at least one language");
  std::set<std::string> tags;
  for (const auto &lang : languages) {
    CheckIdentifier(lang.tag, "language tag");
    if (lang.tag == "latent" || lang.tag == "labels")
      fail("language tag '" + lang.tag + "' is reserved");
    if (!tags.insert(lang.tag).second) fail("duplicate language " + lang.tag);
    if (lang.templates.rows() != n_latent())
      fail("templates of '" + lang.tag + "' need one row per latent phone");
    if (lang.class_count() < 2) fail("'" + lang.tag + "' needs >= 2 classes");
    if (!lang.templates.allFinite()) fail("non-finite template logits");
    if (!(lang.noise_sigma >= 0.0) || !std::isfinite(lang.noise_sigma))
      fail("noise_sigma must be >= 0");
  }
  if (!(self_loop > 0.0 && self_loop < 1.0)) fail("self_loop must be in (0, 1)");
  if (min_frames < 1 || max_frames < min_frames)
    fail("need 1 <= min_frames <= max_frames");
  std::set<std::string> split_names;
  for (const auto &s : splits) {
    CheckIdentifier(s.name, "split name");
    if (s.n_utterances < 0) fail("negative utterance count");
    if (!split_names.insert(s.name).second) fail("duplicate split " + s.name);
  }
  for (const auto &lang : languages) SynthInventory(*this, lang.tag);
}

int CanonicalClass(const SynthLanguage &lang, int latent) {
  return RowArgMax(lang.templates, latent);
}

ClassInventory SynthInventory(const SynthConfig &cfg, const std::string &tag) {
  const SynthLanguage &lang = cfg.Language(tag);
  std::vector<std::string> phones(lang.class_count());
  for (int c = 0; c < lang.class_count(); ++c) {
    int best = 0;
    for (int l = 1; l < cfg.n_latent(); ++l)
      if (lang.templates(l, c) > lang.templates(best, c)) best = l;
    phones[c] = cfg.latent_phones[best];
  }
  try {
    return ClassInventory(tag, std::move(phones), cfg.latent_phones.front());
  } catch (const Error &e) {
    ThrowValidation("invalid-config", "language '" + tag + "': " + e.what());
  }
}

std::vector<Posteriorgram> SynthCorpus::Split(const std::string &lang,
                                              const std::string &split) const {
  const auto it = posteriors.find(lang);
  if (it == posteriors.end())
    ThrowValidation("missing-language", "corpus has no language '" + lang +
                                            "'");
  std::vector<Posteriorgram> out;
  for (std::size_t i = 0; i < utterances.size(); ++i)
    if (split.empty() || utterances[i].split == split)
      out.push_back(it->second[i]);
  return out;
}

LabelSequence SynthCorpus::TruthLabels(const std::string &lang,
                                       std::size_t utt) const {
  const SynthLanguage &language = config.Language(lang);
  LabelSequence seq{utterances.at(utt).id, {}};
  for (int l : utterances[utt].latent)
    seq.labels.push_back(CanonicalClass(language, l));
  return seq;
}

std::vector<LabelSequence> SynthCorpus::TruthLabels(
    const std::string &lang, const std::string &split) const {
  std::vector<LabelSequence> out;
  for (std::size_t i = 0; i < utterances.size(); ++i)
    if (split.empty() || utterances[i].split == split)
      out.push_back(TruthLabels(lang, i));
  return out;
}

LabelSequence SynthCorpus::LatentLabels(std::size_t utt) const {
  const auto &u = utterances.at(utt);
  return {u.id, std::vector<std::int32_t>(u.latent.begin(), u.latent.end())};
}

std::vector<int> SampleLatentChain(Rng &rng, int n_latent, double self_loop,
                                   int frames) {
  std::vector<int> chain;
  chain.reserve(frames);
  int current = static_cast<int>(UniformIndex(rng, n_latent));
  for (int t = 0; t < frames; ++t) {
    if (t > 0 && n_latent > 1 && UniformUnit(rng) >= self_loop) {
      const int j = static_cast<int>(UniformIndex(rng, n_latent - 1));
      current = j >= current ? j + 1 : j;
    }
    chain.push_back(current);
  }
  return chain;
}

SynthCorpus Generate(const SynthConfig &cfg) {
  cfg.Validate();
  SynthCorpus corpus;
  corpus.config = cfg;
  std::uint64_t index = 0;
  for (const auto &split : cfg.splits) {
    for (int i = 0; i < split.n_utterances; ++i, ++index) {
      char id[64];
      std::snprintf(id, sizeof(id), "%s_%04d", split.name.c_str(), i);
      const std::uint64_t utt_seed = MixSeed(cfg.seed, index);
      Rng rng(utt_seed);
      const int span = cfg.max_frames - cfg.min_frames + 1;
      const int frames =
          cfg.min_frames + static_cast<int>(UniformIndex(rng, span));
      corpus.utterances.push_back(
          {id, split.name,
           SampleLatentChain(rng, cfg.n_latent(), cfg.self_loop, frames)});
    }
  }

  for (std::size_t k = 0; k < cfg.languages.size(); ++k) {
    const SynthLanguage &lang = cfg.languages[k];
    auto &pgs = corpus.posteriors[lang.tag];
    pgs.reserve(corpus.utterances.size());
    for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
      const auto &utt = corpus.utterances[u];
      Rng rng(MixSeed(MixSeed(cfg.seed, u), k + 1));
      RowMatrix logits(static_cast<Eigen::Index>(utt.latent.size()),
                       lang.class_count());
      for (std::size_t t = 0; t < utt.latent.size(); ++t) {
        logits.row(t) = lang.templates.row(utt.latent[t]);
        if (lang.noise_sigma > 0.0)
          for (int c = 0; c < lang.class_count(); ++c)
            logits(t, c) += lang.noise_sigma * StandardNormal(rng);
      }
      RowMatrix rows(logits.rows(), logits.cols());
      for (Eigen::Index t = 0; t < logits.rows(); ++t) {
        const double top = logits.row(t).maxCoeff();
        rows.row(t) = (logits.row(t).array() - top).exp().matrix();
        rows.row(t) /= rows.row(t).sum();
      }
      pgs.emplace_back(utt.id, lang.tag, rows.cast<float>());
    }
  }
  return corpus;
}

int BayesOracle::Predict(int source_class) const {
  return ArgMax(Lookup(source_class));
}

BayesOracle ComputeBayesOracle(const SynthConfig &cfg,
                               const std::string &source_lang,
                               const std::string &target_lang,
                               std::int64_t samples, std::uint64_t seed) {
  cfg.Validate();
  const SynthLanguage &src = cfg.Language(source_lang);
  const SynthLanguage &tgt = cfg.Language(target_lang);
  const int n = cfg.n_latent();
  RowMatrix counts = RowMatrix::Zero(src.class_count(), tgt.class_count());

  if (src.noise_sigma == 0.0 && tgt.noise_sigma == 0.0) {
    for (int l = 0; l < n; ++l)
      counts(CanonicalClass(src, l), CanonicalClass(tgt, l)) += 1.0 / n;
  } else {
    if (samples < 1)
      ThrowValidation("invalid-config", "Monte Carlo needs samples >= 1");
    Rng rng(MixSeed(seed, 0x6f7261636c65ULL));
    Eigen::VectorXd zs(src.class_count()), zt(tgt.class_count());
    for (std::int64_t i = 0; i < samples; ++i) {
      const int l = static_cast<int>(UniformIndex(rng, n));
      for (int c = 0; c < src.class_count(); ++c)
        zs[c] = src.templates(l, c) + src.noise_sigma * StandardNormal(rng);
      for (int c = 0; c < tgt.class_count(); ++c)
        zt[c] = tgt.templates(l, c) + tgt.noise_sigma * StandardNormal(rng);
      const int s = ArgMax(std::span<const double>(zs.data(), zs.size()));
      const int t = ArgMax(std::span<const double>(zt.data(), zt.size()));
      counts(s, t) += 1.0;
    }
  }

  BayesOracle oracle;
  oracle.source_lang = source_lang;
  oracle.target_lang = target_lang;
  const Eigen::RowVectorXd marginal =
      counts.colwise().sum() / counts.sum();
  oracle.conditional.resize(counts.rows(), counts.cols());
  const double total = counts.sum();
  for (Eigen::Index s = 0; s < counts.rows(); ++s) {
    const double mass = counts.row(s).sum();
    oracle.source_mass.push_back(mass / total);
    if (mass > 0.0) {
      oracle.conditional.row(s) = counts.row(s) / mass;
    } else {
      oracle.conditional.row(s) = marginal;
    }
  }
  return oracle;
}

Posteriorgram ApplyOracle(const BayesOracle &oracle,
                          const Posteriorgram &src) {
  if (src.dim() != oracle.conditional.rows())
    ThrowValidation("dimension-mismatch",
                    "source posteriorgram has " + std::to_string(src.dim()) +
                        " classes, oracle expects " +
                        std::to_string(oracle.conditional.rows()));
  FrameMatrix rows(src.num_frames(), oracle.conditional.cols());
  for (int t = 0; t < src.num_frames(); ++t)
    rows.row(t) = oracle.conditional.row(ArgMax(src.Row(t))).cast<float>();
  return Posteriorgram(src.utterance_id(), oracle.target_lang,
                       std::move(rows));
}

double OracleAccuracy(const SynthCorpus &corpus, const BayesOracle &oracle,
                      const std::string &split) {
  const auto sources = corpus.Split(oracle.source_lang, split);
  const auto targets = corpus.Split(oracle.target_lang, split);
  std::int64_t cmf = 0, frames = 0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const Posteriorgram hyp = ApplyOracle(oracle, sources[i]);
    const auto acc = ComputeFrameAccuracy(std::cref(targets[i]), hyp);
    cmf += acc.cmf;
    frames += acc.frames;
  }
  return frames ? static_cast<double>(cmf) / static_cast<double>(frames) : 0.0;
}

SynthConfig DefaultSynthConfig(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.latent_phones = LatentNames(12);
  const std::vector<std::string> tags = {"alpha", "beta", "gamma", "delta"};
  const std::vector<int> dims = {16, 20, 24, 20};
  const std::vector<double> sigmas = {0.9, 1.0, 1.1, 1.0};
  Rng rng(MixSeed(seed, 0x74656d706cULL));
  for (std::size_t k = 0; k < tags.size(); ++k)
    cfg.languages.push_back(
        {tags[k],
         TiedStateTemplates(rng, cfg.n_latent(), dims[k], 5.0, 0.3, 0.25, 1.0),
         sigmas[k]});
  return cfg;
}

SynthConfig ConfusableSynthConfig(std::uint64_t seed, double noise_sigma) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.latent_phones = LatentNames(12);
  const int n = cfg.n_latent();
  Rng rng(MixSeed(seed, 0x636f6e66ULL));
  cfg.languages.push_back(
      {"src", TiedStateTemplates(rng, n, 16, 4.0, 0.3, 0.25, 1.0),
       noise_sigma});

  // Two identical-logit classes per latent phone.
  const int classes = 2 * n;
  std::vector<int> perm(classes);
  std::iota(perm.begin(), perm.end(), 0);
  Shuffle(std::span(perm), rng);
  RowMatrix t(n, classes);
  for (Eigen::Index i = 0; i < t.size(); ++i)
    t.data()[i] = 0.3 * StandardNormal(rng);
  for (int l = 0; l < n; ++l) {
    const double peak = 4.0 + 0.3 * StandardNormal(rng);
    t(l, perm[2 * l]) = peak;
    t(l, perm[2 * l + 1]) = peak;
  }
  cfg.languages.push_back({"tgt", t, noise_sigma});
  return cfg;
}

SynthConfig GradedSynthConfig(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.latent_phones = LatentNames(12);
  const int n = cfg.n_latent();
  Rng rng(MixSeed(seed, 0x67726164ULL));
  cfg.languages.push_back(
      {"tgt", TiedStateTemplates(rng, n, 16, 4.0, 0.3, 0.25, 1.0), 1.0});
  const std::vector<std::pair<std::string, int>> sources = {
      {"near", 12}, {"mid", 8}, {"far", 4}};
  for (const auto &[tag, groups] : sources) {
    std::vector<int> group_of_latent(n);
    for (int l = 0; l < n; ++l) group_of_latent[l] = l % groups;
    const RowMatrix group_templates =
        TiedStateTemplates(rng, groups, 16, 4.0, 0.3, 0.25, 1.0);
    cfg.languages.push_back(
        {tag, ExpandGroups(group_templates, group_of_latent), 1.0});
  }
  return cfg;
}

SynthConfig PresetSynthConfig(const std::string &name, std::uint64_t seed) {
  if (name == "default") return DefaultSynthConfig(seed);
  if (name == "confusable") return ConfusableSynthConfig(seed);
  if (name == "graded") return GradedSynthConfig(seed);
  ThrowValidation("invalid-config", "unknown preset '" + name + "'");
}

SynthConfig SynthConfigFromJson(const std::string &text) {
  try {
    return FromJson(json::parse(text));
  } catch (const json::exception &e) {
    ThrowValidation("invalid-config", e.what());
  }
}

std::string SynthConfigToJson(const SynthConfig &cfg) {
  return ToJson(cfg).dump(2);
}

SynthConfig ReadSynthConfigFile(const std::filesystem::path &path) {
  std::ifstream is = OpenInput(path);
  std::stringstream buf;
  buf << is.rdbuf();
  return SynthConfigFromJson(buf.str());
}

void WriteCorpus(const SynthCorpus &corpus, const std::filesystem::path &dir) {
  namespace fs = std::filesystem;
  const SynthConfig &cfg = corpus.config;
  {
    std::ofstream os = OpenOutput(dir / "config.json");
    os << SynthConfigToJson(cfg) << '\n';
  }
  for (const auto &lang : cfg.languages) {
    WriteInventoryFile(SynthInventory(cfg, lang.tag),
                       dir / lang.tag / "inventory.txt");
    const auto &pgs = corpus.posteriors.at(lang.tag);
    for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
      const auto &utt = corpus.utterances[u];
      WritePosteriorgramFile(pgs[u],
                             dir / lang.tag / utt.split / (utt.id + ".pgm"));
      WriteLabelsFile(corpus.TruthLabels(lang.tag, u),
                      dir / "labels" / lang.tag / utt.split /
                          (utt.id + ".lab"));
    }
  }
  for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
    const auto &utt = corpus.utterances[u];
    WriteLabelsFile(corpus.LatentLabels(u),
                    dir / "labels" / "latent" / utt.split / (utt.id + ".lab"));
  }
  std::ofstream os = OpenOutput(dir / "manifest.txt");
  os << "phones";
  for (const auto &p : cfg.latent_phones) os << ' ' << p;
  os << '\n';
  for (const auto &lang : cfg.languages) os << "language " << lang.tag << '\n';
  for (const auto &utt : corpus.utterances)
    os << "utterance " << utt.split << ' ' << utt.id << ' '
       << utt.latent.size() << '\n';
}

std::filesystem::path CorpusManifest::PosteriorPath(
    const std::string &lang, const SynthUtterance &u) const {
  return root / lang / u.split / (u.id + ".pgm");
}

std::filesystem::path CorpusManifest::TruthPath(const std::string &lang,
                                                const SynthUtterance &u) const {
  return root / "labels" / lang / u.split / (u.id + ".lab");
}

std::filesystem::path CorpusManifest::LatentPath(
    const SynthUtterance &u) const {
  return root / "labels" / "latent" / u.split / (u.id + ".lab");
}

std::filesystem::path CorpusManifest::InventoryPath(
    const std::string &lang) const {
  return root / lang / "inventory.txt";
}

std::vector<SynthUtterance> CorpusManifest::SplitUtterances(
    const std::string &split) const {
  std::vector<SynthUtterance> out;
  for (const auto &u : utterances)
    if (u.split == split) out.push_back(u);
  return out;
}

bool CorpusManifest::HasLanguage(const std::string &lang) const {
  return std::find(languages.begin(), languages.end(), lang) !=
         languages.end();
}

CorpusManifest ReadManifest(const std::filesystem::path &dir) {
  CorpusManifest m;
  m.root = dir;
  std::ifstream is = OpenInput(dir / "manifest.txt");
  for (std::string line; std::getline(is, line);) {
    std::istringstream in(line);
    std::string key;
    if (!(in >> key) || key[0] == '#') continue;
    if (key == "phones") {
      for (std::string p; in >> p;) m.latent_phones.push_back(p);
    } else if (key == "language") {
      std::string tag;
      if (!(in >> tag)) ThrowIo("malformed-manifest", "bad line '" + line + "'");
      m.languages.push_back(tag);
    } else if (key == "utterance") {
      SynthUtterance u;
      std::size_t frames = 0;
      if (!(in >> u.split >> u.id >> frames))
        ThrowIo("malformed-manifest", "bad line '" + line + "'");
      m.utterances.push_back(u);
    } else {
      ThrowIo("malformed-manifest", "unknown key '" + key + "'");
    }
  }
  return m;
}

}  // namespace pfusion
