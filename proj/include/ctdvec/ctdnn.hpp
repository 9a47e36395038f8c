// ctdvec/ctdnn.hpp
//
// Copyright 2026  The ctdvec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// The convolutional + time-delay speaker network.
//
//   fbank [T, 40]
//     -> splice (+-4 frames, valid)         as 9 input channels
//     -> conv1 (2x5, 32 maps) -> pool freq 2 -> ReLU
//     -> conv2 (2x3, 64 maps) -> pool freq 2 -> ReLU
//     -> flatten per frame (64 x 8 = 512) -> bottleneck affine 512 -> ReLU
//     -> td1 {-3,0,3} 1536->1024 -> p-norm(2) 512
//     -> td2 {-1,0,2} 1536->1024 -> p-norm(2) 512
//     -> feature affine 400                  (speaker features, read here)
//     -> output affine K                     (speaker logits)
//
// Convolution time kernels look backwards (output t sees t-1, t), so with
// the splice and TD offsets the receptive field is 10 frames left and 9
// right: 20 frames in, one feature out.

#ifndef CTDVEC_CTDNN_HPP
#define CTDVEC_CTDNN_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctdvec/audio_frontend.hpp"
#include "ctdvec/base.hpp"
#include "ctdvec/binary_io.hpp"
#include "ctdvec/nn/layers.hpp"

namespace ctdvec {

using Json = nlohmann::json;

/// Throws a config error naming `where` if `j` has keys outside `allowed`.
inline void RejectUnknownKeys(const Json &j, std::initializer_list<const char *> allowed,
                              const std::string &where) {
  if (!j.is_object()) Fail(ErrorCode::kConfig, where, ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = std::any_of(allowed.begin(), allowed.end(),
                             [&](const char *k) { return it.key() == k; });
    if (!known) Fail(ErrorCode::kConfig, where, ".", it.key(), ": unknown key");
  }
}

template <typename T>
void ReadKey(const Json &j, const char *key, T &out, const std::string &where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception &e) {
    Fail(ErrorCode::kConfig, where, ".", key, ": ", e.what());
  }
}

struct ConvBlockConfig {
  int maps = 32;
  int kernel_time = 2;
  int kernel_freq = 5;
  int pool_freq = 2;
};

struct TdBlockConfig {
  std::vector<int> offsets;
  int affine_out = 1024;
  int pnorm_group = 2;
};

struct CtdnnConfig {
  int input_bins = 40;
  int splice_left = 4;
  int splice_right = 4;
  ConvBlockConfig conv1{32, 2, 5, 2};
  ConvBlockConfig conv2{64, 2, 3, 2};
  int bottleneck_dim = 512;
  TdBlockConfig td1{{-3, 0, 3}, 1024, 2};
  TdBlockConfig td2{{-1, 0, 2}, 1024, 2};
  double pnorm_p = 2.0;
  int feature_dim = 400;
  int num_speakers = 5000;

  int Conv1OutFreq() const { return input_bins - conv1.kernel_freq + 1; }
  int Pool1OutFreq() const { return Conv1OutFreq() / conv1.pool_freq; }
  int Conv2OutFreq() const { return Pool1OutFreq() - conv2.kernel_freq + 1; }
  int Pool2OutFreq() const { return Conv2OutFreq() / conv2.pool_freq; }
  int ConvOutputDim() const { return conv2.maps * Pool2OutFreq(); }
  int Td1OutDim() const { return td1.affine_out / td1.pnorm_group; }
  int Td2OutDim() const { return td2.affine_out / td2.pnorm_group; }

  void Validate() const {
    auto bad = [](const char *layer, auto... msg) {
      Fail(ErrorCode::kConfig, "layer '", layer, "': ", msg...);
    };
    if (input_bins < 1) bad("input", "input_bins must be positive");
    if (splice_left < 0 || splice_right < 0) bad("splice", "context must be >= 0");
    for (auto [name, c] : {std::pair{"conv1", conv1}, std::pair{"conv2", conv2}}) {
      if (c.maps < 1 || c.kernel_time < 1 || c.kernel_freq < 1 || c.pool_freq < 1)
        bad(name, "maps, kernels and pool must be positive");
    }
    if (Conv1OutFreq() < conv1.pool_freq) bad("conv1", "frequency kernel/pool exceed ", input_bins, " bins");
    if (Conv2OutFreq() < conv2.pool_freq) bad("conv2", "frequency kernel/pool exceed pooled conv1 width ", Pool1OutFreq());
    if (ConvOutputDim() != bottleneck_dim)
      bad("bottleneck", "convolutional output ", conv2.maps, "x", Pool2OutFreq(), "=",
          ConvOutputDim(), " does not equal bottleneck_dim ", bottleneck_dim);
    for (auto [name, t] : {std::pair{"td1", td1}, std::pair{"td2", td2}}) {
      if (t.offsets.empty()) bad(name, "needs at least one time offset");
      if (t.affine_out < 1 || t.pnorm_group < 1) bad(name, "affine_out and pnorm_group must be positive");
      if (t.affine_out % t.pnorm_group != 0)
        bad(name, "affine_out ", t.affine_out, " not divisible by p-norm group ", t.pnorm_group);
      if (std::adjacent_find(t.offsets.begin(), t.offsets.end(),
                             [](int a, int b) { return a >= b; }) != t.offsets.end())
        bad(name, "offsets must be strictly increasing");
    }
    if (!(pnorm_p >= 1.0)) bad("td1", "p-norm exponent must be >= 1");
    if (feature_dim < 1) bad("feature", "feature_dim must be positive");
    if (num_speakers < 2) bad("output", "num_speakers must be >= 2");
  }

  Json ToJson() const {
    auto conv = [](const ConvBlockConfig &c) {
      return Json{{"maps", c.maps}, {"kernel_time", c.kernel_time},
                  {"kernel_freq", c.kernel_freq}, {"pool_freq", c.pool_freq}};
    };
    auto td = [](const TdBlockConfig &t) {
      return Json{{"offsets", t.offsets}, {"affine_out", t.affine_out},
                  {"pnorm_group", t.pnorm_group}};
    };
    return Json{{"input_bins", input_bins}, {"splice_left", splice_left},
                {"splice_right", splice_right}, {"conv1", conv(conv1)},
                {"conv2", conv(conv2)}, {"bottleneck_dim", bottleneck_dim},
                {"td1", td(td1)}, {"td2", td(td2)}, {"pnorm_p", pnorm_p},
                {"feature_dim", feature_dim}, {"num_speakers", num_speakers}};
  }

  static CtdnnConfig FromJson(const Json &j, const std::string &where = "ctdnn") {
    RejectUnknownKeys(j, {"input_bins", "splice_left", "splice_right", "conv1", "conv2",
                          "bottleneck_dim", "td1", "td2", "pnorm_p", "feature_dim",
                          "num_speakers"},
                      where);
    CtdnnConfig c;
    ReadKey(j, "input_bins", c.input_bins, where);
    ReadKey(j, "splice_left", c.splice_left, where);
    ReadKey(j, "splice_right", c.splice_right, where);
    auto conv = [&](const char *key, ConvBlockConfig &out) {
      if (!j.contains(key)) return;
      const std::string w = where + "." + key;
      RejectUnknownKeys(j[key], {"maps", "kernel_time", "kernel_freq", "pool_freq"}, w);
      ReadKey(j[key], "maps", out.maps, w);
      ReadKey(j[key], "kernel_time", out.kernel_time, w);
      ReadKey(j[key], "kernel_freq", out.kernel_freq, w);
      ReadKey(j[key], "pool_freq", out.pool_freq, w);
    };
    auto td = [&](const char *key, TdBlockConfig &out) {
      if (!j.contains(key)) return;
      const std::string w = where + "." + key;
      RejectUnknownKeys(j[key], {"offsets", "affine_out", "pnorm_group"}, w);
      ReadKey(j[key], "offsets", out.offsets, w);
      ReadKey(j[key], "affine_out", out.affine_out, w);
      ReadKey(j[key], "pnorm_group", out.pnorm_group, w);
    };
    conv("conv1", c.conv1);
    conv("conv2", c.conv2);
    ReadKey(j, "bottleneck_dim", c.bottleneck_dim, where);
    td("td1", c.td1);
    td("td2", c.td2);
    ReadKey(j, "pnorm_p", c.pnorm_p, where);
    ReadKey(j, "feature_dim", c.feature_dim, where);
    ReadKey(j, "num_speakers", c.num_speakers, where);
    return c;
  }

  bool operator==(const CtdnnConfig &o) const { return ToJson() == o.ToJson(); }
};

struct ReceptiveField {
  int left = 0;
  int right = 0;
  int total = 1;
  bool operator==(const ReceptiveField &) const = default;
};

/// Composes the temporal extents of splice, conv time kernels (assigned to
/// the left) and TD offsets.
inline ReceptiveField ComputeReceptiveField(const CtdnnConfig &cfg) {
  ReceptiveField rf;
  rf.left = cfg.splice_left + (cfg.conv1.kernel_time - 1) + (cfg.conv2.kernel_time - 1);
  rf.right = cfg.splice_right;
  for (const auto *td : {&cfg.td1, &cfg.td2}) {
    rf.left -= *std::min_element(td->offsets.begin(), td->offsets.end());
    rf.right += *std::max_element(td->offsets.begin(), td->offsets.end());
  }
  rf.total = rf.left + rf.right + 1;
  return rf;
}

/// Layer indices of the canonical stack.
enum CtdnnLayerIndex : std::size_t {
  kSpliceLayer = 0,
  kConv1Layer,
  kPool1Layer,
  kRelu1Layer,
  kConv2Layer,
  kPool2Layer,
  kRelu2Layer,
  kFlattenLayer,
  kBottleneckLayer,
  kBottleneckReluLayer,
  kTd1Layer,
  kTd1PNormLayer,
  kTd2Layer,
  kTd2PNormLayer,
  kFeatureLayer,
  kOutputLayer,
  kNumCtdnnLayers,
};

inline constexpr std::uint32_t kModelFormatVersion = 1;

template <typename Real>
class CtdnnModel {
 public:
  using LayerPtr = std::unique_ptr<nn::Layer<Real>>;

  /// Builds and initializes; identical seeds give bitwise-identical models.
  CtdnnModel(const CtdnnConfig &cfg, std::uint64_t seed) : config_(cfg) {
    cfg.Validate();
    BuildLayers();
    std::mt19937_64 rng(seed);
    for (auto &layer : layers_) layer->InitParams(rng);
  }

  CtdnnModel(const CtdnnModel &other) : config_(other.config_), version_(other.version_) {
    for (const auto &l : other.layers_) layers_.push_back(l->Clone());
  }
  CtdnnModel &operator=(const CtdnnModel &other) {
    if (this != &other) {
      CtdnnModel tmp(other);
      *this = std::move(tmp);
    }
    return *this;
  }
  CtdnnModel(CtdnnModel &&) noexcept = default;
  CtdnnModel &operator=(CtdnnModel &&) noexcept = default;

  const CtdnnConfig &config() const { return config_; }
  std::uint32_t version() const { return version_; }
  ReceptiveField receptive_field() const { return ComputeReceptiveField(config_); }
  std::size_t num_layers() const { return layers_.size(); }
  nn::Layer<Real> &layer(std::size_t i) { return *layers_.at(i); }
  const nn::Layer<Real> &layer(std::size_t i) const { return *layers_.at(i); }

  /// Runs layers [0, end) without caching.  `x` is [T, bins] or [B, T, bins].
  nn::Tensor<Real> Apply(const nn::Tensor<Real> &x, std::size_t end = kNumCtdnnLayers) const {
    nn::Tensor<Real> h = x;
    for (std::size_t i = 0; i < end; ++i) h = layers_[i]->Apply(h);
    return h;
  }

  /// Training forward through every layer, caching for Backward().
  nn::Tensor<Real> Forward(const nn::Tensor<Real> &x) {
    nn::Tensor<Real> h = x;
    for (auto &layer : layers_) h = layer->Forward(h);
    return h;
  }
  nn::Tensor<Real> Backward(const nn::Tensor<Real> &grad_logits) {
    nn::Tensor<Real> g = grad_logits;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->Backward(g);
    return g;
  }
  void ClearCache() {
    for (auto &layer : layers_) layer->ClearCache();
  }

  std::vector<nn::ParamRef<Real>> Params() {
    std::vector<nn::ParamRef<Real>> out;
    for (auto &layer : layers_)
      for (auto &p : layer->Params()) out.push_back(p);
    return out;
  }
  std::vector<nn::ParamRef<Real>> Params() const {
    return const_cast<CtdnnModel *>(this)->Params();
  }
  void ZeroGrad() {
    for (auto &layer : layers_) layer->ZeroGrad();
  }
  std::uint64_t RegimeSignature() const {
    std::uint64_t h = 0;
    for (const auto &layer : layers_) h = nn::detail::MixSignature(h, layer->RegimeSignature());
    return h;
  }
  std::size_t NumParams() const {
    std::size_t n = 0;
    for (auto &p : Params()) n += static_cast<std::size_t>(p.value->size());
    return n;
  }
  bool AllFinite() const {
    for (auto &p : Params())
      if (!p.value->AllFinite()) return false;
    return true;
  }

  /// Per-frame speaker features: [T, bins] -> [T - total + 1, feature_dim].
  FeatureMatrix ForwardFeatures(const FeatureMatrix &fbank) const {
    return RunTo(fbank, kFeatureLayer + 1);
  }
  /// Per-frame speaker logits: [T, bins] -> [T - total + 1, num_speakers].
  FeatureMatrix ForwardLogits(const FeatureMatrix &fbank) const {
    return RunTo(fbank, kNumCtdnnLayers);
  }

  template <typename Other>
  CtdnnModel<Other> Cast() const {
    CtdnnModel<Other> out(config_, 0);
    auto src = Params();
    auto dst = out.Params();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].value = src[i].value->template Cast<Other>();
    return out;
  }

  /// Copies parameter values (not gradients) from a model of the same config.
  void CopyParamsFrom(const CtdnnModel &other) {
    auto src = other.Params();
    auto dst = Params();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].value = *src[i].value;
  }

  std::string Encode() const {
    ByteWriter out;
    out.PutMagic("CTDN");
    out.PutU32(kModelFormatVersion);
    out.PutString(config_.ToJson().dump());
    for (auto &p : Params()) out.PutF32Blob(std::span<const Real>(p.value->values()));
    return std::move(out.bytes());
  }

  static CtdnnModel Decode(std::string_view bytes, const std::string &source) {
    ByteReader in(bytes, source);
    in.ExpectMagic("CTDN");
    in.ExpectVersion(kModelFormatVersion);
    std::string cfg_text = in.GetString();
    Json j;
    try {
      j = Json::parse(cfg_text);
    } catch (const nlohmann::json::exception &e) {
      Fail(ErrorCode::kMalformedHeader, source, ": bad config block: ", e.what());
    }
    CtdnnModel model(CtdnnConfig::FromJson(j, source), 0);
    for (auto &p : model.Params()) in.GetF32Blob(p.value->values(), p.name);
    in.ExpectEnd();
    if (!model.AllFinite()) Fail(ErrorCode::kNumerical, source, ": non-finite parameters");
    return model;
  }

  void Save(const std::filesystem::path &path) const { WriteFileBytes(path, Encode()); }
  static CtdnnModel Load(const std::filesystem::path &path) {
    return Decode(ReadFileBytes(path), path.string());
  }

 private:
  FeatureMatrix RunTo(const FeatureMatrix &fbank, std::size_t end) const {
    const ReceptiveField rf = receptive_field();
    if (fbank.cols() != config_.input_bins)
      Fail(ErrorCode::kShape, "features have ", fbank.cols(), " dims, model expects ",
           config_.input_bins);
    if (fbank.rows() < rf.total)
      Fail(ErrorCode::kTooShort, "utterance of ", fbank.rows(), " frames is shorter than the ",
           rf.total, "-frame receptive field");
    nn::Tensor<Real> x({fbank.rows(), fbank.cols()});
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = static_cast<Real>(fbank.data.data()[i]);
    nn::Tensor<Real> y = Apply(x, end);
    MatrixR<float> out = y.Matrix().template cast<float>();
    return FeatureMatrix(std::move(out), fbank.frame_shift_ms);
  }

  void BuildLayers() {
    const auto &c = config_;
    const int channels = c.splice_left + c.splice_right + 1;
    layers_.push_back(std::make_unique<nn::Splice<Real>>("splice", c.splice_left, c.splice_right));
    layers_.push_back(std::make_unique<nn::Conv2D<Real>>("conv1", channels, c.conv1.maps,
                                                         c.conv1.kernel_time, c.conv1.kernel_freq));
    layers_.push_back(std::make_unique<nn::MaxPool2D<Real>>("conv1.pool", 1, c.conv1.pool_freq, 1,
                                                            c.conv1.pool_freq));
    layers_.push_back(std::make_unique<nn::Relu<Real>>("conv1.relu"));
    layers_.push_back(std::make_unique<nn::Conv2D<Real>>("conv2", c.conv1.maps, c.conv2.maps,
                                                         c.conv2.kernel_time, c.conv2.kernel_freq));
    layers_.push_back(std::make_unique<nn::MaxPool2D<Real>>("conv2.pool", 1, c.conv2.pool_freq, 1,
                                                            c.conv2.pool_freq));
    layers_.push_back(std::make_unique<nn::Relu<Real>>("conv2.relu"));
    layers_.push_back(std::make_unique<nn::FlattenFrames<Real>>("flatten"));
    layers_.push_back(std::make_unique<nn::Affine<Real>>("bottleneck", c.ConvOutputDim(), c.bottleneck_dim));
    layers_.push_back(std::make_unique<nn::Relu<Real>>("bottleneck.relu"));
    layers_.push_back(std::make_unique<nn::TimeDelayAffine<Real>>("td1", c.bottleneck_dim,
                                                                  c.td1.affine_out, c.td1.offsets));
    layers_.push_back(std::make_unique<nn::PNorm<Real>>("td1.pnorm", c.td1.pnorm_group, c.pnorm_p));
    layers_.push_back(std::make_unique<nn::TimeDelayAffine<Real>>("td2", c.Td1OutDim(),
                                                                  c.td2.affine_out, c.td2.offsets));
    layers_.push_back(std::make_unique<nn::PNorm<Real>>("td2.pnorm", c.td2.pnorm_group, c.pnorm_p));
    layers_.push_back(std::make_unique<nn::Affine<Real>>("feature", c.Td2OutDim(), c.feature_dim));
    layers_.push_back(std::make_unique<nn::Affine<Real>>("output", c.feature_dim, c.num_speakers));
  }

  CtdnnConfig config_;
  std::uint32_t version_ = kModelFormatVersion;
  std::vector<LayerPtr> layers_;
};

using Model = CtdnnModel<float>;

}  // namespace ctdvec

#endif  // CTDVEC_CTDNN_HPP
