// core/src/mapping-net.cc

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

#include "pfusion/mapping-net.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "io-util.h"
#include "pfusion/random.h"

namespace pfusion {

namespace {

constexpr std::array<char, 4> kNetMagic = {'M', 'N', 'W', '1'};
constexpr int kMaxLayerWidth = 1 << 16;

// Activations of one forward pass, kept for backprop. pre[l] is the input to
// the nonlinearity of layer l, post[l] its output (post[0] is the batch).
struct ForwardCache {
  std::vector<RowMatrix> pre;
  std::vector<RowMatrix> post;
};

ForwardCache ForwardWithCache(const MappingNetwork &net,
                              const RowMatrix &batch) {
  ForwardCache cache;
  const auto &layers = net.layers();
  cache.post.push_back(batch);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    RowMatrix z = cache.post.back() * layers[l].weight.transpose();
    z.rowwise() += layers[l].bias.transpose();
    if (l + 1 < layers.size()) {
      cache.post.push_back(z.cwiseMax(0.0));
    } else {
      cache.post.push_back(Softmax(z));
    }
    cache.pre.push_back(std::move(z));
  }
  return cache;
}

void CheckBatchDims(const MappingNetwork &net, const RowMatrix &batch) {
  if (batch.rows() > 0 && batch.cols() != net.source_dim())
    ThrowValidation("dimension-mismatch",
                    "batch has " + std::to_string(batch.cols()) +
                        " columns, network expects " +
                        std::to_string(net.source_dim()));
}

RowMatrix StackFrames(const std::vector<Posteriorgram> &pgs) {
  Eigen::Index rows = 0;
  for (const auto &pg : pgs) rows += pg.num_frames();
  const Eigen::Index cols = pgs.empty() ? 0 : pgs.front().dim();
  RowMatrix out(rows, cols);
  Eigen::Index r = 0;
  for (const auto &pg : pgs) {
    if (pg.dim() != cols)
      ThrowValidation("dimension-mismatch",
                      "utterance '" + pg.utterance_id() + "' has " +
                          std::to_string(pg.dim()) + " classes, expected " +
                          std::to_string(cols));
    out.middleRows(r, pg.num_frames()) = pg.FramesAsDouble();
    r += pg.num_frames();
  }
  return out;
}

void CheckAligned(const AlignedSet &set, const char *what) {
  if (set.source.size() != set.target.size())
    ThrowValidation("align-mismatch",
                    std::string(what) + ": " +
                        std::to_string(set.source.size()) +
                        " source utterances vs " +
                        std::to_string(set.target.size()) + " target");
  for (std::size_t i = 0; i < set.source.size(); ++i) {
    if (!FrameAlignCheck(set.source[i], set.target[i]))
      ThrowValidation("align-mismatch",
                      std::string(what) + ": utterance '" +
                          set.source[i].utterance_id() + "' (T=" +
                          std::to_string(set.source[i].num_frames()) +
                          ") does not align with '" +
                          set.target[i].utterance_id() + "' (T=" +
                          std::to_string(set.target[i].num_frames()) + ")");
    ValidateDistributionRows(set.source[i].frames()).ThrowIfFailed();
    ValidateDistributionRows(set.target[i].frames()).ThrowIfFailed();
  }
}

struct DevScore {
  double kl = 0.0;
  double top1 = 0.0;
};

DevScore ScoreDev(const MappingNetwork &net, const RowMatrix &source,
                  const RowMatrix &target, double epsilon) {
  constexpr Eigen::Index kChunk = 4096;
  double kl = 0.0;
  std::int64_t hits = 0;
  for (Eigen::Index start = 0; start < source.rows(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, source.rows() - start);
    const RowMatrix tgt = target.middleRows(start, n);
    const RowMatrix out = Forward(net, source.middleRows(start, n));
    kl += KlLoss(tgt, out, epsilon);
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::span<const double> t(tgt.row(i).data(), tgt.cols());
      const std::span<const double> o(out.row(i).data(), out.cols());
      hits += (ArgMax(t) == ArgMax(o));
    }
  }
  const double frames = static_cast<double>(source.rows());
  return {kl / frames, static_cast<double>(hits) / frames};
}

}  // namespace

MappingNetwork::MappingNetwork(std::string source_lang,
                               std::string target_lang, int source_dim,
                               HiddenDims hidden, int target_dim)
    : source_lang_(std::move(source_lang)),
      target_lang_(std::move(target_lang)) {
  std::array<int, kNumHiddenLayers + 2> dims{};
  dims[0] = source_dim;
  std::copy(hidden.begin(), hidden.end(), dims.begin() + 1);
  dims.back() = target_dim;
  for (int d : dims)
    if (d <= 0 || d > kMaxLayerWidth)
      ThrowValidation("invalid-topology",
                      "layer width " + std::to_string(d) + " out of range");
  for (std::size_t l = 0; l + 1 < dims.size(); ++l)
    layers_.push_back({RowMatrix::Zero(dims[l + 1], dims[l]),
                       Eigen::VectorXd::Zero(dims[l + 1])});
}

void MappingNetwork::Initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (auto &layer : layers_) {
    const double fan = static_cast<double>(layer.weight.rows() +
                                           layer.weight.cols());
    const double limit = std::sqrt(6.0 / fan);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i)
      layer.weight.data()[i] = limit * (2.0 * UniformUnit(rng) - 1.0);
    layer.bias.setZero();
  }
}

HiddenDims MappingNetwork::hidden_dims() const {
  HiddenDims h{};
  for (int l = 0; l < kNumHiddenLayers; ++l)
    h[l] = static_cast<int>(layers_[l].weight.rows());
  return h;
}

std::array<int, kNumHiddenLayers + 2> MappingNetwork::dims() const {
  std::array<int, kNumHiddenLayers + 2> d{};
  d[0] = source_dim();
  for (std::size_t l = 0; l < layers_.size(); ++l)
    d[l + 1] = static_cast<int>(layers_[l].weight.rows());
  return d;
}

std::size_t MappingNetwork::NumParameters() const {
  std::size_t n = 0;
  for (const auto &layer : layers_)
    n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return n;
}

bool MappingNetwork::AllFinite() const {
  return std::all_of(layers_.begin(), layers_.end(), [](const DenseLayer &l) {
    return l.weight.allFinite() && l.bias.allFinite();
  });
}

RowMatrix Softmax(const RowMatrix &logits) {
  RowMatrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double top = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - top).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

RowMatrix Forward(const MappingNetwork &net, const RowMatrix &batch) {
  CheckBatchDims(net, batch);
  if (batch.rows() == 0) return RowMatrix(0, net.target_dim());
  RowMatrix a = batch;
  const auto &layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    RowMatrix z = a * layers[l].weight.transpose();
    z.rowwise() += layers[l].bias.transpose();
    if (l + 1 < layers.size()) {
      a = z.cwiseMax(0.0);
    } else {
      a = Softmax(z);
    }
  }
  return a;
}

double KlLoss(const RowMatrix &target_rows, const RowMatrix &mapped_rows,
              double epsilon_floor) {
  if (target_rows.rows() != mapped_rows.rows() ||
      target_rows.cols() != mapped_rows.cols())
    ThrowValidation("dimension-mismatch",
                    "target is " + std::to_string(target_rows.rows()) + "x" +
                        std::to_string(target_rows.cols()) + ", mapped is " +
                        std::to_string(mapped_rows.rows()) + "x" +
                        std::to_string(mapped_rows.cols()));
  if (!target_rows.allFinite() || !mapped_rows.allFinite())
    ThrowValidation("non-finite-input", "KL arguments must be finite");
  double loss = 0.0;
  for (Eigen::Index n = 0; n < target_rows.rows(); ++n) {
    for (Eigen::Index k = 0; k < target_rows.cols(); ++k) {
      const double p = target_rows(n, k);
      if (p == 0.0) continue;
      const double q = mapped_rows(n, k);
      loss += p * (std::log(std::max(p, epsilon_floor)) -
                   std::log(std::max(q, epsilon_floor)));
    }
  }
  return loss;
}

Gradient Backward(const MappingNetwork &net, const RowMatrix &batch,
                  const RowMatrix &target_rows, double epsilon_floor) {
  CheckBatchDims(net, batch);
  if (target_rows.rows() != batch.rows() ||
      (batch.rows() > 0 && target_rows.cols() != net.target_dim()))
    ThrowValidation("dimension-mismatch",
                    "target rows do not match batch/network shape");
  const auto &layers = net.layers();
  Gradient grad;
  grad.layers.resize(layers.size());
  if (batch.rows() == 0) {
    for (std::size_t l = 0; l < layers.size(); ++l)
      grad.layers[l] = {RowMatrix::Zero(layers[l].weight.rows(),
                                        layers[l].weight.cols()),
                        Eigen::VectorXd::Zero(layers[l].bias.size())};
    grad.output_delta = RowMatrix(0, net.target_dim());
    return grad;
  }

  const ForwardCache cache = ForwardWithCache(net, batch);
  grad.loss = KlLoss(target_rows, cache.post.back(), epsilon_floor);
  // Softmax followed by KL against a normalized target: dL/dz = q - p.
  RowMatrix delta = cache.post.back() - target_rows;
  grad.output_delta = delta;
  for (std::size_t l = layers.size(); l-- > 0;) {
    grad.layers[l].weight = delta.transpose() * cache.post[l];
    grad.layers[l].bias = delta.colwise().sum().transpose();
    if (l == 0) break;
    RowMatrix upstream = delta * layers[l].weight;
    delta = upstream.cwiseProduct(
        (cache.pre[l - 1].array() > 0.0).cast<double>().matrix());
  }
  return grad;
}

void TrainingConfig::Validate() const {
  auto fail = [](const std::string &msg) {
    ThrowValidation("invalid-config", msg);
  };
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    fail("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0, 1)");
  if (max_epochs < 0) fail("max_epochs must be >= 0");
  if (patience < 0) fail("patience must be >= 0");
  if (!(epsilon_floor > 0.0 && epsilon_floor <= 1e-6))
    fail("epsilon_floor must be in (0, 1e-6]");
  for (int h : hidden)
    if (h <= 0 || h > kMaxLayerWidth) fail("hidden widths must be positive");
}

TrainingDiverged::TrainingDiverged(const std::string &detail,
                                   TrainingTrace trace)
    : Error(ErrorKind::kNumerical, "divergence", detail),
      trace_(std::move(trace)) {}

TrainResult Train(const AlignedSet &train, const AlignedSet &dev,
                  const TrainingConfig &cfg) {
  cfg.Validate();
  CheckAligned(train, "train");
  CheckAligned(dev, "dev");
  const RowMatrix src = StackFrames(train.source);
  const RowMatrix tgt = StackFrames(train.target);
  if (src.rows() == 0)
    ThrowValidation("no-aligned-frames", "training set has no frames");
  const RowMatrix dev_src = StackFrames(dev.source);
  const RowMatrix dev_tgt = StackFrames(dev.target);
  if (dev_src.rows() == 0)
    ThrowValidation("empty-dev-set", "dev set has no frames");
  if (dev_src.cols() != src.cols() || dev_tgt.cols() != tgt.cols())
    ThrowValidation("dimension-mismatch",
                    "train and dev class counts differ");

  MappingNetwork net(train.source.front().language_id(),
                     train.target.front().language_id(),
                     static_cast<int>(src.cols()), cfg.hidden,
                     static_cast<int>(tgt.cols()));
  net.Initialize(MixSeed(cfg.seed, 0));

  TrainResult result{net, {}};
  result.trace.stopping_reason = "max_epochs";
  if (cfg.max_epochs == 0) return result;

  std::vector<DenseLayer> velocity;
  for (const auto &layer : net.layers())
    velocity.push_back({RowMatrix::Zero(layer.weight.rows(),
                                        layer.weight.cols()),
                        Eigen::VectorXd::Zero(layer.bias.size())});

  Rng shuffle_rng(MixSeed(cfg.seed, 1));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(src.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  double best_dev = std::numeric_limits<double>::infinity();
  int since_best = 0;
  const int stop_after = std::max(cfg.patience, 1);
  RowMatrix batch_src, batch_tgt;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Shuffle(std::span(order), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t n = std::min<std::size_t>(cfg.batch_size,
                                                  order.size() - start);
      batch_src.resize(static_cast<Eigen::Index>(n), src.cols());
      batch_tgt.resize(static_cast<Eigen::Index>(n), tgt.cols());
      for (std::size_t i = 0; i < n; ++i) {
        batch_src.row(i) = src.row(order[start + i]);
        batch_tgt.row(i) = tgt.row(order[start + i]);
      }
      Gradient grad;
      try {
        grad = Backward(net, batch_src, batch_tgt, cfg.epsilon_floor);
      } catch (const Error &e) {
        throw TrainingDiverged("training step failed in epoch " +
                                   std::to_string(epoch) + ": " + e.name(),
                               result.trace);
      }
      if (!std::isfinite(grad.loss))
        throw TrainingDiverged("non-finite training loss in epoch " +
                                   std::to_string(epoch),
                               result.trace);
      epoch_loss += grad.loss;
      const double step = cfg.learning_rate / static_cast<double>(n);
      auto &layers = net.mutable_layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        velocity[l].weight = cfg.momentum * velocity[l].weight -
                             step * grad.layers[l].weight;
        velocity[l].bias = cfg.momentum * velocity[l].bias -
                           step * grad.layers[l].bias;
        layers[l].weight += velocity[l].weight;
        layers[l].bias += velocity[l].bias;
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_kl = epoch_loss / static_cast<double>(src.rows());
    DevScore dev_score;
    try {
      dev_score = ScoreDev(net, dev_src, dev_tgt, cfg.epsilon_floor);
    } catch (const Error &e) {
      throw TrainingDiverged("dev evaluation failed in epoch " +
                                 std::to_string(epoch) + ": " + e.name(),
                             result.trace);
    }
    record.dev_kl = dev_score.kl;
    record.dev_top1 = dev_score.top1;
    result.trace.epochs.push_back(record);
    if (!std::isfinite(record.dev_kl) || !net.AllFinite())
      throw TrainingDiverged("non-finite dev loss in epoch " +
                                 std::to_string(epoch),
                             result.trace);

    if (record.dev_kl < best_dev) {
      best_dev = record.dev_kl;
      since_best = 0;
      result.net = net;
      result.trace.best_epoch = epoch;
    } else if (++since_best >= stop_after) {
      result.trace.stopping_reason = "early_stopping";
      break;
    }
  }
  return result;
}

Posteriorgram MapPosteriorgram(const MappingNetwork &net,
                               const Posteriorgram &pg) {
  if (pg.dim() != net.source_dim())
    ThrowValidation("dimension-mismatch",
                    "posteriorgram '" + pg.utterance_id() + "' has " +
                        std::to_string(pg.dim()) + " classes, network '" +
                        net.source_lang() + "' expects " +
                        std::to_string(net.source_dim()));
  const RowMatrix mapped = Forward(net, pg.FramesAsDouble());
  Posteriorgram out(pg.utterance_id(), net.target_lang(),
                    mapped.cast<float>());
  ValidateDistributionRows(out.frames()).ThrowIfFailed();
  return out;
}

void SaveNetwork(const MappingNetwork &net, std::ostream &os) {
  CheckIdentifier(net.source_lang(), "source language");
  CheckIdentifier(net.target_lang(), "target language");
  if (!net.AllFinite())
    ThrowValidation("non-finite-parameters", "network has NaN/Inf weights");
  std::ostringstream header;
  header << "src=" << net.source_lang() << ";tgt=" << net.target_lang()
         << ";dims=";
  const auto dims = net.dims();
  for (std::size_t i = 0; i < dims.size(); ++i)
    header << (i ? "," : "") << dims[i];
  const std::string text = header.str();
  os.write(kNetMagic.data(), kNetMagic.size());
  WriteU32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));

  std::vector<char> payload(net.NumParameters() * 8);
  char *out = payload.data();
  auto put = [&out](const double *values, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i, out += 8)
      StoreLe(std::bit_cast<std::uint64_t>(values[i]), out);
  };
  for (const auto &layer : net.layers()) {
    put(layer.weight.data(), layer.weight.size());
    put(layer.bias.data(), layer.bias.size());
  }
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!os) ThrowIo("write-failed", "could not write network");
}

MappingNetwork LoadNetwork(std::istream &is) {
  std::array<char, 4> magic{};
  ReadExact(is, magic.data(), magic.size());
  if (magic != kNetMagic)
    ThrowIo("bad-magic", "expected MNW1, got '" +
                             std::string(magic.data(), magic.size()) + "'");
  const auto fields = ParseHeaderFields(ReadHeader(is), {"src", "tgt", "dims"});
  std::vector<std::int64_t> dims;
  {
    std::string text = fields.at("dims");
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t end = std::min(text.find(',', pos), text.size());
      dims.push_back(ParseHeaderInt(text.substr(pos, end - pos), "dims"));
      pos = end + 1;
    }
  }
  if (dims.size() != kNumHiddenLayers + 2)
    ThrowValidation("invalid-topology",
                    "expected 5 layer widths, got " +
                        std::to_string(dims.size()));
  for (auto d : dims)
    if (d <= 0 || d > kMaxLayerWidth)
      ThrowValidation("invalid-topology",
                      "layer width " + std::to_string(d) + " out of range");
  MappingNetwork net(fields.at("src"), fields.at("tgt"),
                     static_cast<int>(dims[0]),
                     {static_cast<int>(dims[1]), static_cast<int>(dims[2]),
                      static_cast<int>(dims[3])},
                     static_cast<int>(dims[4]));
  std::vector<char> payload(net.NumParameters() * 8);
  ReadExact(is, payload.data(), payload.size());
  const char *in = payload.data();
  auto get = [&in](double *values, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i, in += 8)
      values[i] = std::bit_cast<double>(LoadLe<std::uint64_t>(in));
  };
  for (auto &layer : net.mutable_layers()) {
    get(layer.weight.data(), layer.weight.size());
    get(layer.bias.data(), layer.bias.size());
  }
  ExpectEnd(is);
  if (!net.AllFinite())
    ThrowValidation("non-finite-parameters", "network file has NaN/Inf");
  return net;
}

void SaveNetworkFile(const MappingNetwork &net,
                     const std::filesystem::path &path) {
  std::ofstream os = OpenOutput(path);
  SaveNetwork(net, os);
}

MappingNetwork LoadNetworkFile(const std::filesystem::path &path) {
  std::ifstream is = OpenInput(path);
  return LoadNetwork(is);
}

}  // namespace pfusion
