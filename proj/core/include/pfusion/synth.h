// pfusion/synth.h

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
 * Synthetic multilingual posteriorgram corpora with known ground truth.
 *
 * Every utterance is a latent phone sequence drawn from a self-loop Markov
 * chain (uniform start, uniform jump to a different phone). Each synthetic
 * language observes the same latent sequence through its own emission
 * templates: frame row = softmax(template[latent] + N(0, sigma^2) per logit),
 * with independent noise per language. Latent phone 0 is silence.
 *
 * Corpus directory layout written by WriteCorpus:
 *
 *     manifest.txt                      languages, phones, utterance list
 *     config.json                       generating configuration
 *     <lang>/inventory.txt
 *     <lang>/<split>/<utt>.pgm
 *     labels/latent/<split>/<utt>.lab   latent phone indices
 *     labels/<lang>/<split>/<utt>.lab   canonical <lang> class per frame
 */

#ifndef PFUSION_SYNTH_H_
#define PFUSION_SYNTH_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pfusion/posterior.h"
#include "pfusion/random.h"

namespace pfusion {

struct SynthLanguage {
  std::string tag;
  RowMatrix templates;  // n_latent x class_count logits
  double noise_sigma = 1.0;

  int class_count() const { return static_cast<int>(templates.cols()); }
};

struct SynthSplit {
  std::string name;
  int n_utterances = 0;
};

struct SynthConfig {
  std::vector<std::string> latent_phones;  // [0] is silence
  std::vector<SynthLanguage> languages;
  double self_loop = 0.9;
  std::vector<SynthSplit> splits = {{"train", 500}, {"dev", 50}, {"eval", 100}};
  int min_frames = 80;
  int max_frames = 120;
  std::uint64_t seed = 0;

  int n_latent() const { return static_cast<int>(latent_phones.size()); }
  const SynthLanguage &Language(const std::string &tag) const;
  int LanguageIndex(const std::string &tag) const;

  /// Throws invalid-config.
  void Validate() const;
};

/// Phone label of each class: the latent phone with the largest template
/// logit for that class.
ClassInventory SynthInventory(const SynthConfig &cfg, const std::string &lang);
/// Class with the largest logit in template row `latent`.
int CanonicalClass(const SynthLanguage &lang, int latent);

struct SynthUtterance {
  std::string id;
  std::string split;
  std::vector<int> latent;
};

struct SynthCorpus {
  SynthConfig config;
  std::vector<SynthUtterance> utterances;
  /// Per language, index-aligned with `utterances`.
  std::map<std::string, std::vector<Posteriorgram>> posteriors;

  /// Posteriorgrams of one language restricted to one split, in utterance
  /// order. Errors: missing-language.
  std::vector<Posteriorgram> Split(const std::string &lang,
                                   const std::string &split) const;
  /// Canonical class of the true latent phone at each frame.
  LabelSequence TruthLabels(const std::string &lang, std::size_t utt) const;
  std::vector<LabelSequence> TruthLabels(const std::string &lang,
                                         const std::string &split) const;
  LabelSequence LatentLabels(std::size_t utt) const;
};

/// Latent phone sequence of length `frames`.
std::vector<int> SampleLatentChain(Rng &rng, int n_latent, double self_loop,
                                   int frames);

/// Deterministic in cfg.seed; utterance u draws from a generator seeded by
/// mixing u into the master seed, so generation order does not matter.
SynthCorpus Generate(const SynthConfig &cfg);

/// P(target argmax class | source argmax class) under the generative model.
struct BayesOracle {
  std::string source_lang;
  std::string target_lang;
  RowMatrix conditional;  // d_source x d_target, rows sum to 1
  std::vector<double> source_mass;

  std::span<const double> Lookup(int source_class) const {
    return {conditional.row(source_class).data(),
            static_cast<std::size_t>(conditional.cols())};
  }
  int Predict(int source_class) const;
};

/// Exact enumeration when both languages are noise-free, otherwise Monte
/// Carlo with `samples` draws (latents are uniform under the chain's
/// stationary distribution). Source classes never observed fall back to the
/// target marginal. Errors: invalid-config, missing-language.
BayesOracle ComputeBayesOracle(const SynthConfig &cfg,
                               const std::string &source_lang,
                               const std::string &target_lang,
                               std::int64_t samples = 200000,
                               std::uint64_t seed = 0);

/// Posteriorgram whose row t is the oracle lookup for source argmax at t.
Posteriorgram ApplyOracle(const BayesOracle &oracle, const Posteriorgram &src);

/// Frame accuracy of the oracle against the target posteriorgram argmax over
/// the given split ("" for all utterances). Errors: missing-language.
double OracleAccuracy(const SynthCorpus &corpus, const BayesOracle &oracle,
                      const std::string &split = "");

// Presets. All use latent phone 0 ("sil") as silence.

/// 12 latent phones, four languages with 16/20/24/20 classes. Each latent
/// owns one primary class; the remaining classes are tied-state siblings of
/// random latents, slightly weaker than the primary.
SynthConfig DefaultSynthConfig(std::uint64_t seed = 1);

/// Two languages: "src" (one class per latent plus spares) and "tgt" where
/// every latent owns two classes with identical templates, so the target
/// argmax within a latent is a coin flip.
SynthConfig ConfusableSynthConfig(std::uint64_t seed = 1,
                                  double noise_sigma = 1.0);

/// Target "tgt" plus sources "near", "mid", "far" that distinguish 12, 8 and
/// 4 of the 12 latent phones respectively (merged phones share a template).
SynthConfig GradedSynthConfig(std::uint64_t seed = 1);

/// JSON form: either a full configuration or {"preset": name, "seed": n}.
SynthConfig SynthConfigFromJson(const std::string &text);
std::string SynthConfigToJson(const SynthConfig &cfg);
SynthConfig ReadSynthConfigFile(const std::filesystem::path &path);
SynthConfig PresetSynthConfig(const std::string &name, std::uint64_t seed);

void WriteCorpus(const SynthCorpus &corpus, const std::filesystem::path &dir);

/// Index of a corpus directory.
struct CorpusManifest {
  std::filesystem::path root;
  std::vector<std::string> latent_phones;
  std::vector<std::string> languages;
  std::vector<SynthUtterance> utterances;  // latent left empty

  std::filesystem::path PosteriorPath(const std::string &lang,
                                      const SynthUtterance &u) const;
  std::filesystem::path TruthPath(const std::string &lang,
                                  const SynthUtterance &u) const;
  std::filesystem::path LatentPath(const SynthUtterance &u) const;
  std::filesystem::path InventoryPath(const std::string &lang) const;
  std::vector<SynthUtterance> SplitUtterances(const std::string &split) const;
  bool HasLanguage(const std::string &lang) const;
};

CorpusManifest ReadManifest(const std::filesystem::path &dir);

}  // namespace pfusion

#endif  // PFUSION_SYNTH_H_
