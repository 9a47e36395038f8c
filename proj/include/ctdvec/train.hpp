// ctdvec/train.hpp
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

// Frame-level speaker-classification training with momentum SGD.
//
// A training example is one receptive-field window labeled with its
// utterance's speaker.  Adjacent windows share almost all of their
// computation, so windows are fed to the network in chunks: a chunk of L
// outputs costs one forward pass over L + rf - 1 input frames.  A minibatch
// is a set of chunks totalling roughly `minibatch_frames` windows.

#ifndef CTDVEC_TRAIN_HPP
#define CTDVEC_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ctdvec/audio_frontend.hpp"
#include "ctdvec/base.hpp"
#include "ctdvec/binary_io.hpp"
#include "ctdvec/ctdnn.hpp"

namespace ctdvec {

struct TrainConfig {
  double lr_initial = 0.01;
  double momentum = 0.9;
  int minibatch_frames = 256;
  /// Output frames per chunk (see file comment).
  int chunk_frames = 32;
  int epochs_max = 20;
  /// Halve the lr when held-out accuracy improves by no more than this.
  double plateau_threshold = 0.001;
  /// Stop after this many plateaus.
  int max_plateaus = 3;
  /// Fraction of each speaker's utterances held out for the lr schedule.
  double heldout_fraction = 0.1;
  /// Caps windows per epoch (0 = all); the cap keeps speaker balance.
  std::int64_t max_frames_per_epoch = 0;
  std::uint64_t seed = 1;

  void Validate() const {
    if (!(lr_initial >= 0) || !std::isfinite(lr_initial))
      Fail(ErrorCode::kConfig, "train.lr_initial must be finite and >= 0");
    if (!(momentum >= 0 && momentum < 1)) Fail(ErrorCode::kConfig, "train.momentum must be in [0, 1)");
    if (minibatch_frames < 1) Fail(ErrorCode::kConfig, "train.minibatch_frames must be >= 1");
    if (chunk_frames < 1) Fail(ErrorCode::kConfig, "train.chunk_frames must be >= 1");
    if (epochs_max < 0) Fail(ErrorCode::kConfig, "train.epochs_max must be >= 0");
    if (max_plateaus < 1) Fail(ErrorCode::kConfig, "train.max_plateaus must be >= 1");
    if (!(heldout_fraction >= 0 && heldout_fraction < 1))
      Fail(ErrorCode::kConfig, "train.heldout_fraction must be in [0, 1)");
    if (max_frames_per_epoch < 0) Fail(ErrorCode::kConfig, "train.max_frames_per_epoch must be >= 0");
  }

  Json ToJson() const {
    return Json{{"lr_initial", lr_initial},
                {"momentum", momentum},
                {"minibatch_frames", minibatch_frames},
                {"chunk_frames", chunk_frames},
                {"epochs_max", epochs_max},
                {"plateau_threshold", plateau_threshold},
                {"max_plateaus", max_plateaus},
                {"heldout_fraction", heldout_fraction},
                {"max_frames_per_epoch", max_frames_per_epoch},
                {"seed", seed}};
  }

  static TrainConfig FromJson(const Json &j, const std::string &where = "train") {
    RejectUnknownKeys(j,
                      {"lr_initial", "momentum", "minibatch_frames", "chunk_frames", "epochs_max",
                       "plateau_threshold", "max_plateaus", "heldout_fraction",
                       "max_frames_per_epoch", "seed"},
                      where);
    TrainConfig c;
    ReadKey(j, "lr_initial", c.lr_initial, where);
    ReadKey(j, "momentum", c.momentum, where);
    ReadKey(j, "minibatch_frames", c.minibatch_frames, where);
    ReadKey(j, "chunk_frames", c.chunk_frames, where);
    ReadKey(j, "epochs_max", c.epochs_max, where);
    ReadKey(j, "plateau_threshold", c.plateau_threshold, where);
    ReadKey(j, "max_plateaus", c.max_plateaus, where);
    ReadKey(j, "heldout_fraction", c.heldout_fraction, where);
    ReadKey(j, "max_frames_per_epoch", c.max_frames_per_epoch, where);
    ReadKey(j, "seed", c.seed, where);
    c.Validate();
    return c;
  }
};

struct TrainState {
  int epoch = 0;
  std::uint64_t frames_seen = 0;
  double lr = 0.0;
  /// Exponential moving average of the per-batch loss; NaN before any batch.
  double loss_ema = std::numeric_limits<double>::quiet_NaN();
  double heldout_accuracy = 0.0;
  double best_accuracy = -1.0;
  int plateaus = 0;
  bool finished = false;
  /// Serialized std::mt19937_64 driving the per-epoch shuffles.
  std::string rng_state;

  Json ToJson() const {
    return Json{{"epoch", epoch},
                {"frames_seen", frames_seen},
                {"lr", lr},
                {"loss_ema", std::isfinite(loss_ema) ? Json(loss_ema) : Json(nullptr)},
                {"heldout_accuracy", heldout_accuracy},
                {"best_accuracy", best_accuracy},
                {"plateaus", plateaus},
                {"finished", finished},
                {"rng_state", rng_state}};
  }

  static TrainState FromJson(const Json &j, const std::string &where) {
    RejectUnknownKeys(j,
                      {"epoch", "frames_seen", "lr", "loss_ema", "heldout_accuracy",
                       "best_accuracy", "plateaus", "finished", "rng_state"},
                      where);
    TrainState s;
    ReadKey(j, "epoch", s.epoch, where);
    ReadKey(j, "frames_seen", s.frames_seen, where);
    ReadKey(j, "lr", s.lr, where);
    if (j.contains("loss_ema") && !j["loss_ema"].is_null()) ReadKey(j, "loss_ema", s.loss_ema, where);
    ReadKey(j, "heldout_accuracy", s.heldout_accuracy, where);
    ReadKey(j, "best_accuracy", s.best_accuracy, where);
    ReadKey(j, "plateaus", s.plateaus, where);
    ReadKey(j, "finished", s.finished, where);
    ReadKey(j, "rng_state", s.rng_state, where);
    return s;
  }
};

// ---------------------------------------------------------------------------
// Labels

/// Speaker id -> contiguous label in [0, K), ordered by id.
class LabelMap {
 public:
  LabelMap() = default;
  explicit LabelMap(std::vector<std::string> speakers) {
    std::sort(speakers.begin(), speakers.end());
    speakers.erase(std::unique(speakers.begin(), speakers.end()), speakers.end());
    speakers_ = std::move(speakers);
    for (std::size_t i = 0; i < speakers_.size(); ++i) index_[speakers_[i]] = static_cast<int>(i);
  }

  int size() const { return static_cast<int>(speakers_.size()); }
  const std::vector<std::string> &speakers() const { return speakers_; }
  bool contains(const std::string &spk) const { return index_.count(spk) != 0; }
  int Label(const std::string &spk) const {
    auto it = index_.find(spk);
    if (it == index_.end()) Fail(ErrorCode::kLabeling, "unknown speaker id '", spk, "'");
    return it->second;
  }
  const std::string &Speaker(int label) const {
    if (label < 0 || label >= size()) Fail(ErrorCode::kIndex, "label ", label, " out of range");
    return speakers_[static_cast<std::size_t>(label)];
  }

  /// One speaker id per line, line number = label.
  void Save(const std::filesystem::path &path) const {
    std::string text;
    for (const auto &s : speakers_) text += s + '\n';
    WriteFileBytes(path, text);
  }
  static LabelMap Load(const std::filesystem::path &path) {
    std::istringstream in(ReadFileBytes(path));
    std::vector<std::string> speakers;
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) speakers.push_back(line);
    LabelMap m(speakers);
    if (m.speakers_ != speakers)
      Fail(ErrorCode::kMalformedHeader, path.string(), ": label map must be sorted and unique");
    return m;
  }

 private:
  std::vector<std::string> speakers_;
  std::map<std::string, int> index_;
};

// ---------------------------------------------------------------------------
// Dataset

struct LabeledUtterance {
  std::string utt_id;
  std::string speaker_id;
  FeatureMatrix fbank;
};

struct FrameDataset {
  struct Item {
    std::string utt_id;
    int label = 0;
    FeatureMatrix fbank;
  };
  std::vector<Item> utterances;
  int num_classes = 0;
  int receptive_field = 0;

  /// Windows in utterance u: T_u - rf + 1.
  std::int64_t NumWindows(std::size_t u) const {
    return utterances[u].fbank.rows() - receptive_field + 1;
  }
  std::int64_t NumWindows() const {
    std::int64_t n = 0;
    for (std::size_t u = 0; u < utterances.size(); ++u) n += NumWindows(u);
    return n;
  }
  bool empty() const { return utterances.empty(); }
};

/// Utterances shorter than the receptive field contribute no windows; they
/// are dropped with a warning.
inline FrameDataset MakeFrameDataset(std::vector<LabeledUtterance> utts, const LabelMap &labels,
                                     const CtdnnConfig &cfg) {
  FrameDataset ds;
  ds.num_classes = labels.size();
  ds.receptive_field = ComputeReceptiveField(cfg).total;
  if (labels.size() != cfg.num_speakers)
    Fail(ErrorCode::kLabeling, "label map has ", labels.size(), " speakers, model has ",
         cfg.num_speakers, " outputs");
  for (auto &u : utts) {
    const int label = labels.Label(u.speaker_id);
    if (u.fbank.cols() != cfg.input_bins)
      Fail(ErrorCode::kShape, u.utt_id, ": ", u.fbank.cols(), " feature dims, expected ",
           cfg.input_bins);
    if (u.fbank.rows() < ds.receptive_field) {
      LogWarning("utterance ", u.utt_id, " has ", u.fbank.rows(), " frames (< ",
                 ds.receptive_field, "); no training windows");
      continue;
    }
    ds.utterances.push_back({std::move(u.utt_id), label, std::move(u.fbank)});
  }
  return ds;
}

/// Reads every feature file listed in a feature manifest.
inline std::vector<LabeledUtterance> LoadLabeledFeatures(const std::filesystem::path &manifest,
                                                         int threads = 1) {
  auto entries = ReadFeatureManifest(manifest);
  std::vector<LabeledUtterance> out(entries.size());
  ParallelFor(entries.size(), threads, [&](std::size_t i) {
    std::filesystem::path p(entries[i].path);
    if (p.is_relative()) p = manifest.parent_path() / p;
    out[i] = {entries[i].utt_id, entries[i].speaker_id, ReadFeatures(p)};
  });
  return out;
}

/// Per speaker, moves round(fraction * n) utterances (at least one if the
/// speaker has two or more and fraction > 0) from `train` into the result.
inline FrameDataset SplitHeldOut(FrameDataset &train, double fraction, std::uint64_t seed) {
  FrameDataset held;
  held.num_classes = train.num_classes;
  held.receptive_field = train.receptive_field;
  if (fraction <= 0) return held;
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < train.utterances.size(); ++i)
    by_label[train.utterances[i].label].push_back(i);
  std::vector<bool> take(train.utterances.size(), false);
  std::mt19937_64 rng(DeriveSeed(seed, "heldout"));
  for (auto &[label, idx] : by_label) {
    if (idx.size() < 2) continue;
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    std::size_t n = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(idx.size())));
    n = std::clamp<std::size_t>(n, 1, idx.size() - 1);
    for (std::size_t k = 0; k < n; ++k) take[idx[k]] = true;
  }
  FrameDataset rest;
  rest.num_classes = train.num_classes;
  rest.receptive_field = train.receptive_field;
  for (std::size_t i = 0; i < train.utterances.size(); ++i)
    (take[i] ? held : rest).utterances.push_back(std::move(train.utterances[i]));
  train = std::move(rest);
  return held;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Index of the largest value; ties go to the lowest index.
template <typename Row>
Eigen::Index ArgmaxLowest(const Row &row) {
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < row.size(); ++k)
    if (row(k) > row(best)) best = k;
  return best;
}

/// Fraction of windows whose argmax logit equals the label.
inline double EvaluateFrameAccuracy(const Model &model, const FrameDataset &ds, int threads = 1) {
  if (ds.empty()) Fail(ErrorCode::kPrecondition, "frame accuracy needs a nonempty dataset");
  std::vector<std::int64_t> correct(ds.utterances.size(), 0);
  ParallelFor(ds.utterances.size(), threads, [&](std::size_t u) {
    FeatureMatrix logits = model.ForwardLogits(ds.utterances[u].fbank);
    for (Eigen::Index t = 0; t < logits.rows(); ++t)
      correct[u] += ArgmaxLowest(logits.data.row(t)) == ds.utterances[u].label;
  });
  std::int64_t hits = 0;
  for (auto c : correct) hits += c;
  return static_cast<double>(hits) / static_cast<double>(ds.NumWindows());
}

// ---------------------------------------------------------------------------
// Optimizer

struct Chunk {
  std::uint32_t utt = 0;
  std::int64_t start = 0;  // first output window
  std::int64_t length = 0;  // number of output windows
};

/// Splits each utterance's windows into chunks of `chunk` outputs; a final
/// partial chunk is shifted back to end at the utterance end, so short
/// utterances give a single chunk of all their windows.
inline std::vector<std::vector<Chunk>> ChunksBySpeaker(const FrameDataset &ds, int chunk) {
  std::vector<std::vector<Chunk>> out(static_cast<std::size_t>(ds.num_classes));
  for (std::size_t u = 0; u < ds.utterances.size(); ++u) {
    const std::int64_t n = ds.NumWindows(u);
    auto &list = out[static_cast<std::size_t>(ds.utterances[u].label)];
    if (n <= chunk) {
      list.push_back({static_cast<std::uint32_t>(u), 0, n});
      continue;
    }
    for (std::int64_t s = 0; s < n; s += chunk)
      list.push_back({static_cast<std::uint32_t>(u), std::min(s, n - chunk), chunk});
  }
  return out;
}

struct EpochStats {
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
  std::int64_t frames = 0;
  std::int64_t batches = 0;
};

class SgdTrainer {
 public:
  SgdTrainer(Model &model, const TrainConfig &cfg) : model_(model), cfg_(cfg) {
    cfg.Validate();
    for (auto &p : model_.Params()) velocity_.push_back(nn::Tensor<float>(p.value->shape()));
    for (auto &v : velocity_) v.SetZero();
    state_.lr = cfg.lr_initial;
    rng_.seed(DeriveSeed(cfg.seed, "train-shuffle"));
    state_.rng_state = RngState();
  }

  const TrainState &state() const { return state_; }
  TrainState &mutable_state() { return state_; }
  const TrainConfig &config() const { return cfg_; }

  /// One balanced, shuffled pass (capped by max_frames_per_epoch).
  EpochStats TrainEpoch(const FrameDataset &ds) {
    if (ds.empty()) Fail(ErrorCode::kPrecondition, "training dataset is empty");
    if (ds.num_classes != model_.config().num_speakers)
      Fail(ErrorCode::kLabeling, "dataset has ", ds.num_classes, " classes, model has ",
           model_.config().num_speakers);
    const std::vector<Chunk> order = EpochOrder(ds);
    EpochStats stats;
    double loss_sum = 0.0;
    std::int64_t hits = 0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      std::vector<Chunk> batch;
      std::int64_t frames = 0;
      while (pos < order.size() && frames < cfg_.minibatch_frames) {
        frames += order[pos].length;
        batch.push_back(order[pos++]);
      }
      auto [loss, correct] = Step(ds, batch, frames, stats.batches);
      loss_sum += loss * static_cast<double>(frames);
      hits += correct;
      stats.frames += frames;
      ++stats.batches;
    }
    stats.mean_loss = loss_sum / static_cast<double>(stats.frames);
    stats.train_accuracy = static_cast<double>(hits) / static_cast<double>(stats.frames);
    ++state_.epoch;
    state_.rng_state = RngState();
    return stats;
  }

  /// Model file, velocity file (same format) and state JSON under `dir`.
  void SaveCheckpoint(const std::filesystem::path &dir) const {
    model_.Save(dir / "model.ctdn");
    Model vel(model_.config(), 0);
    auto dst = vel.Params();
    for (std::size_t i = 0; i < dst.size(); ++i) *dst[i].value = velocity_[i];
    vel.Save(dir / "velocity.ctdn");
    Json j{{"state", state_.ToJson()}, {"config", cfg_.ToJson()}};
    WriteFileBytes(dir / "state.json", j.dump(2) + "\n");
  }

  /// Restores model, velocity, state and shuffle RNG from SaveCheckpoint().
  void LoadCheckpoint(const std::filesystem::path &dir) {
    for (const char *f : {"model.ctdn", "velocity.ctdn", "state.json"})
      if (!std::filesystem::exists(dir / f))
        Fail(ErrorCode::kDependency, "checkpoint file missing: ", (dir / f).string());
    Model loaded = Model::Load(dir / "model.ctdn");
    if (loaded.config().ToJson() != model_.config().ToJson())
      Fail(ErrorCode::kConfig, "checkpoint model config differs from the training config");
    model_.CopyParamsFrom(loaded);
    Model vel = Model::Load(dir / "velocity.ctdn");
    auto src = vel.Params();
    for (std::size_t i = 0; i < src.size(); ++i) velocity_[i] = *src[i].value;
    Json j;
    const std::string where = (dir / "state.json").string();
    try {
      j = Json::parse(ReadFileBytes(dir / "state.json"));
    } catch (const nlohmann::json::exception &e) {
      Fail(ErrorCode::kMalformedHeader, where, ": ", e.what());
    }
    state_ = TrainState::FromJson(j.at("state"), where);
    std::istringstream is(state_.rng_state);
    is >> rng_;
    if (!is) Fail(ErrorCode::kMalformedHeader, where, ": bad rng_state");
  }

 private:
  std::string RngState() const {
    std::ostringstream os;
    os << rng_;
    return os.str();
  }

  /// Chunks shuffled within each speaker, then dealt round-robin over a
  /// shuffled speaker order so every stretch of the epoch is balanced.
  std::vector<Chunk> EpochOrder(const FrameDataset &ds) {
    auto by_speaker = ChunksBySpeaker(ds, cfg_.chunk_frames);
    for (auto &list : by_speaker)
      for (std::size_t i = list.size(); i > 1; --i) std::swap(list[i - 1], list[rng_() % i]);
    std::vector<std::size_t> speakers(by_speaker.size());
    for (std::size_t i = 0; i < speakers.size(); ++i) speakers[i] = i;
    for (std::size_t i = speakers.size(); i > 1; --i) std::swap(speakers[i - 1], speakers[rng_() % i]);
    std::vector<Chunk> order;
    std::int64_t frames = 0;
    const std::int64_t cap = cfg_.max_frames_per_epoch;
    for (std::size_t round = 0;; ++round) {
      bool any = false;
      for (std::size_t s : speakers) {
        if (round >= by_speaker[s].size()) continue;
        any = true;
        order.push_back(by_speaker[s][round]);
        frames += order.back().length;
      }
      if (!any || (cap > 0 && frames >= cap)) break;
    }
    return order;
  }

  /// Forward/backward over the batch (grouped by chunk length), then one
  /// momentum update.  Returns the mean loss and the number of correct frames.
  std::pair<double, std::int64_t> Step(const FrameDataset &ds, const std::vector<Chunk> &batch,
                                       std::int64_t frames, std::int64_t batch_id) {
    model_.ZeroGrad();
    std::map<std::int64_t, std::vector<const Chunk *>> groups;
    for (const auto &c : batch) groups[c.length].push_back(&c);
    const Eigen::Index rf = ds.receptive_field;
    const Eigen::Index bins = model_.config().input_bins;
    const float inv_frames = 1.0f / static_cast<float>(frames);
    double loss = 0.0;
    std::int64_t correct = 0;
    for (const auto &[len, chunks] : groups) {
      const Eigen::Index in_len = len + rf - 1;
      nn::Tensor<float> x({static_cast<Eigen::Index>(chunks.size()), in_len, bins});
      for (std::size_t b = 0; b < chunks.size(); ++b) {
        const auto &src = ds.utterances[chunks[b]->utt].fbank.data;
        std::copy_n(src.data() + chunks[b]->start * bins, in_len * bins,
                    x.data() + static_cast<Eigen::Index>(b) * in_len * bins);
      }
      nn::Tensor<float> logits = model_.Forward(x);
      nn::Tensor<float> grad(logits.shape());
      auto lm = logits.Matrix();
      auto gm = grad.Matrix();
      for (Eigen::Index r = 0; r < lm.rows(); ++r) {
        const int label = ds.utterances[chunks[static_cast<std::size_t>(r / len)]->utt].label;
        auto res = nn::SoftmaxXent<float>(lm.row(r), label);
        loss += res.loss;
        correct += ArgmaxLowest(lm.row(r)) == label;
        gm.row(r) = res.grad_logits * inv_frames;
      }
      model_.Backward(grad);
    }
    model_.ClearCache();
    loss /= static_cast<double>(frames);
    if (!std::isfinite(loss))
      Fail(ErrorCode::kTraining, "non-finite loss at epoch ", state_.epoch, " batch ", batch_id,
           " (lr ", state_.lr, ")");

    const float lr = static_cast<float>(state_.lr);
    const float mu = static_cast<float>(cfg_.momentum);
    auto params = model_.Params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto v = velocity_[i].Flat();
      v = mu * v - lr * params[i].grad->Flat();
      params[i].value->Flat() += v;
    }
    state_.frames_seen += static_cast<std::uint64_t>(frames);
    state_.loss_ema = std::isfinite(state_.loss_ema) ? 0.99 * state_.loss_ema + 0.01 * loss : loss;
    return {loss, correct};
  }

  Model &model_;
  TrainConfig cfg_;
  TrainState state_;
  std::vector<nn::Tensor<float>> velocity_;
  std::mt19937_64 rng_;
};

/// Epoch loop with plateau lr halving and early stop.  Appends one JSON line
/// per epoch to `log_path` and checkpoints into `checkpoint_dir` after every
/// epoch (either may be empty to skip).  Resumes from an existing checkpoint.
inline TrainState RunTraining(Model &model, const FrameDataset &train, const FrameDataset &heldout,
                              const TrainConfig &cfg, const std::filesystem::path &log_path = {},
                              const std::filesystem::path &checkpoint_dir = {}, int threads = 1) {
  SgdTrainer trainer(model, cfg);
  if (!checkpoint_dir.empty() && std::filesystem::exists(checkpoint_dir / "state.json")) {
    trainer.LoadCheckpoint(checkpoint_dir);
    LogInfo("resuming training at epoch ", trainer.state().epoch);
  }
  while (!trainer.state().finished && trainer.state().epoch < cfg.epochs_max) {
    EpochStats stats = trainer.TrainEpoch(train);
    TrainState &st = trainer.mutable_state();
    const double lr_used = st.lr;
    st.heldout_accuracy = heldout.empty() ? stats.train_accuracy
                                          : EvaluateFrameAccuracy(model, heldout, threads);
    if (st.heldout_accuracy <= st.best_accuracy + cfg.plateau_threshold) {
      ++st.plateaus;
      st.lr *= 0.5;
      if (st.plateaus >= cfg.max_plateaus) st.finished = true;
    }
    st.best_accuracy = std::max(st.best_accuracy, st.heldout_accuracy);
    LogInfo("epoch ", st.epoch, " loss ", stats.mean_loss, " train_acc ", stats.train_accuracy,
            " heldout_acc ", st.heldout_accuracy, " lr ", lr_used);
    if (!log_path.empty()) {
      Json line{{"epoch", st.epoch},
                {"loss", stats.mean_loss},
                {"train_accuracy", stats.train_accuracy},
                {"heldout_accuracy", st.heldout_accuracy},
                {"lr", lr_used},
                {"frames", stats.frames}};
      if (!log_path.parent_path().empty()) std::filesystem::create_directories(log_path.parent_path());
      std::ofstream(log_path, std::ios::app) << line.dump() << '\n';
    }
    if (!checkpoint_dir.empty()) trainer.SaveCheckpoint(checkpoint_dir);
  }
  return trainer.state();
}

}  // namespace ctdvec

#endif  // CTDVEC_TRAIN_HPP
