// pfusion/mapping-net.h

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
 * Source-to-target posterior mapping network: three ReLU hidden layers and a
 * softmax output, trained on soft targets with the KL divergence
 *
 *     L = sum_n sum_k p_nk * (log p_nk - log q_nk)
 *
 * where p is the target acoustic model's posterior row and q the mapped row.
 *
 * Network file ("MNW1"), little-endian:
 *
 *     "MNW1" | u32 header_length | header | f64 parameters
 *
 * with header `src=<tag>;tgt=<tag>;dims=<d_s>,<h1>,<h2>,<h3>,<d_t>` and the
 * parameters stored layer by layer, the weight matrix (out x in, row-major)
 * followed by the bias vector.
 */

#ifndef PFUSION_MAPPING_NET_H_
#define PFUSION_MAPPING_NET_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pfusion/error.h"
#include "pfusion/posterior.h"

namespace pfusion {

inline constexpr int kNumHiddenLayers = 3;
using HiddenDims = std::array<int, kNumHiddenLayers>;
inline constexpr HiddenDims kDefaultHiddenDims = {256, 256, 256};
inline constexpr double kDefaultEpsilonFloor = 1e-10;

/// Fully connected layer; weight is out x in.
struct DenseLayer {
  RowMatrix weight;
  Eigen::VectorXd bias;
};

class MappingNetwork {
 public:
  /// All parameters zero. Throws "invalid-topology" for non-positive dims.
  MappingNetwork(std::string source_lang, std::string target_lang,
                 int source_dim, HiddenDims hidden, int target_dim);

  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  void Initialize(std::uint64_t seed);

  const std::string &source_lang() const { return source_lang_; }
  const std::string &target_lang() const { return target_lang_; }
  int source_dim() const { return static_cast<int>(layers_.front().weight.cols()); }
  int target_dim() const { return static_cast<int>(layers_.back().weight.rows()); }
  HiddenDims hidden_dims() const;
  /// {d_s, h1, h2, h3, d_t}
  std::array<int, kNumHiddenLayers + 2> dims() const;

  const std::vector<DenseLayer> &layers() const { return layers_; }
  std::vector<DenseLayer> &mutable_layers() { return layers_; }

  std::size_t NumParameters() const;
  bool AllFinite() const;

 private:
  std::string source_lang_;
  std::string target_lang_;
  std::vector<DenseLayer> layers_;
};

/// Row-wise softmax, max-shifted.
RowMatrix Softmax(const RowMatrix &logits);

/// Maps B x source_dim rows to B x target_dim distributions.
/// Errors: dimension-mismatch.
RowMatrix Forward(const MappingNetwork &net, const RowMatrix &batch);

/// Batch-summed KL(target || mapped) with both arguments clamped to
/// epsilon_floor inside the logs. Errors: dimension-mismatch,
/// non-finite-input.
double KlLoss(const RowMatrix &target_rows, const RowMatrix &mapped_rows,
              double epsilon_floor = kDefaultEpsilonFloor);

/// Gradient of KlLoss(target_rows, Forward(net, batch)) with respect to every
/// parameter. output_delta holds the per-row output pre-activation gradient,
/// mapped - target. Inside the epsilon clamp the loss is flat; the identity is
/// used regardless, which only matters for rows with mapped mass < epsilon.
struct Gradient {
  std::vector<DenseLayer> layers;
  RowMatrix output_delta;
  double loss = 0.0;
};

Gradient Backward(const MappingNetwork &net, const RowMatrix &batch,
                  const RowMatrix &target_rows,
                  double epsilon_floor = kDefaultEpsilonFloor);

struct TrainingConfig {
  int batch_size = 256;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  int max_epochs = 50;
  int patience = 5;
  std::uint64_t seed = 0;
  double epsilon_floor = kDefaultEpsilonFloor;
  HiddenDims hidden = kDefaultHiddenDims;

  /// Throws "invalid-config".
  void Validate() const;
};

struct EpochRecord {
  int epoch = 0;          // 1-based
  double train_kl = 0.0;  // mean per frame over the epoch's mini-batches
  double dev_kl = 0.0;    // mean per frame
  double dev_top1 = 0.0;
};

struct TrainingTrace {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 0 when no epoch ran
  std::string stopping_reason;  // "max_epochs" or "early_stopping"
};

/// Thrown when a non-finite loss shows up; carries the trace so far.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string &detail, TrainingTrace trace);
  const TrainingTrace &trace() const { return trace_; }

 private:
  TrainingTrace trace_;
};

/// Frame-aligned source/target posteriorgram pairs, element i of `source`
/// paired with element i of `target`.
struct AlignedSet {
  std::vector<Posteriorgram> source;
  std::vector<Posteriorgram> target;
};

struct TrainResult {
  MappingNetwork net;
  TrainingTrace trace;
};

/// Mini-batch SGD with momentum on the per-frame mean of the KL loss.
/// Frames are shuffled each epoch with a generator seeded from cfg.seed.
/// After every epoch the dev KL and dev top-1 accuracy are measured;
/// training stops after max_epochs or once dev KL has not improved for
/// max(patience, 1) consecutive epochs, and the best-dev-KL parameters are
/// returned.
/// Errors: align-mismatch, dimension-mismatch, no-aligned-frames,
/// empty-dev-set, invalid-config, divergence (TrainingDiverged).
TrainResult Train(const AlignedSet &train, const AlignedSet &dev,
                  const TrainingConfig &cfg);

/// Applies the network to every frame; the result is labelled with the
/// network's target language.
Posteriorgram MapPosteriorgram(const MappingNetwork &net,
                               const Posteriorgram &pg);

void SaveNetwork(const MappingNetwork &net, std::ostream &os);
MappingNetwork LoadNetwork(std::istream &is);
void SaveNetworkFile(const MappingNetwork &net,
                     const std::filesystem::path &path);
MappingNetwork LoadNetworkFile(const std::filesystem::path &path);

}  // namespace pfusion

#endif  // PFUSION_MAPPING_NET_H_
