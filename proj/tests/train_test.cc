// tests/train_test.cc
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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "ctdvec/synth_corpus.hpp"
#include "ctdvec/train.hpp"
#include "test_util.h"

namespace ctdvec {
namespace {

FeatureMatrix NoiseFbank(Eigen::Index t, std::uint64_t seed, float offset = 0.0f) {
  std::mt19937_64 rng(seed);
  MatrixR<float> m(t, 40);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(nn::StandardNormal(rng)) + offset;
  return FeatureMatrix(std::move(m));
}

// Fbank of a synthetic utterance cut to `frames` rows.
FeatureMatrix SynthFbank(int speaker, int utt, Eigen::Index frames) {
  SynthSpec spec;
  spec.utt_seconds = 0.05 + 0.01 * static_cast<double>(frames);
  FeatureMatrix f = ComputeFbank(SynthesizeUtterance(spec, speaker, utt), FbankConfig{});
  return FeatureMatrix(MatrixR<float>(f.data.topRows(frames)));
}

CtdnnConfig Canonical(int k) {
  CtdnnConfig c;
  c.num_speakers = k;
  return c;
}

std::vector<std::string> Speakers(int k) {
  std::vector<std::string> s;
  for (int i = 0; i < k; ++i) s.push_back(SpeakerId(i));
  return s;
}

std::vector<float> Flatten(Model &m) {
  std::vector<float> out;
  for (auto &p : m.Params()) out.insert(out.end(), p.value->data(), p.value->data() + p.value->size());
  return out;
}

/// 2 speakers, one synthetic utterance of 69 frames each: 50 windows per speaker.
FrameDataset TwoSpeakerSet(int utt = 0) {
  std::vector<LabeledUtterance> u;
  for (int s = 0; s < 2; ++s) u.push_back({UtteranceId(s, utt), SpeakerId(s), SynthFbank(s, utt, 69)});
  return MakeFrameDataset(std::move(u), LabelMap(Speakers(2)), Canonical(2));
}

TEST(LabelMapTest, SortedUniqueAndRoundTrip) {
  testing::TempDir dir;
  LabelMap m({"b", "a", "c", "a"});
  EXPECT_EQ(m.size(), 3);
  EXPECT_EQ(m.Label("a"), 0);
  EXPECT_EQ(m.Label("c"), 2);
  EXPECT_EQ(m.Speaker(1), "b");
  EXPECT_ERROR_CODE(m.Label("zz"), ErrorCode::kLabeling);
  m.Save(dir / "labels.txt");
  LabelMap back = LabelMap::Load(dir / "labels.txt");
  EXPECT_EQ(back.speakers(), m.speakers());
  for (const auto &s : m.speakers()) EXPECT_EQ(back.Label(s), m.Label(s));
}

TEST(FrameDatasetTest, WindowCountsAndBoundary) {
  testing::LogCapture log;
  std::vector<LabeledUtterance> u;
  const std::vector<Eigen::Index> lengths = {20, 19, 5, 21, 100, 57};
  for (std::size_t i = 0; i < lengths.size(); ++i)
    u.push_back({"u" + std::to_string(i), SpeakerId(static_cast<int>(i % 3)), NoiseFbank(lengths[i], i)});
  FrameDataset ds = MakeFrameDataset(u, LabelMap(Speakers(3)), Canonical(3));
  std::int64_t expected = 0;
  for (auto t : lengths) expected += std::max<std::int64_t>(0, t - 19);
  EXPECT_EQ(ds.NumWindows(), expected);
  EXPECT_EQ(ds.utterances.size(), 4u);
  EXPECT_EQ(log.messages.size(), 2u);

  FrameDataset one = MakeFrameDataset({{"x", SpeakerId(0), NoiseFbank(20, 1)}}, LabelMap(Speakers(3)), Canonical(3));
  EXPECT_EQ(one.NumWindows(), 1);
  FrameDataset none =
      MakeFrameDataset({{"x", SpeakerId(0), NoiseFbank(19, 1)}}, LabelMap(Speakers(3)), Canonical(3));
  EXPECT_EQ(none.NumWindows(), 0);
  EXPECT_TRUE(none.empty());
}

TEST(FrameDatasetTest, LabelingErrors) {
  EXPECT_ERROR_CODE(MakeFrameDataset({{"x", "stranger", NoiseFbank(30, 1)}}, LabelMap(Speakers(3)), Canonical(3)),
                    ErrorCode::kLabeling);
  EXPECT_ERROR_CODE(MakeFrameDataset({}, LabelMap(Speakers(3)), Canonical(4)), ErrorCode::kLabeling);
}

TEST(FrameDatasetTest, ReingestionKeepsLabels) {
  testing::TempDir dir;
  LabelMap m(Speakers(5));
  m.Save(dir / "labels.txt");
  std::vector<LabeledUtterance> u;
  for (int s = 4; s >= 0; --s) u.push_back({"u" + std::to_string(s), SpeakerId(s), NoiseFbank(25, 1)});
  FrameDataset a = MakeFrameDataset(u, m, Canonical(5));
  FrameDataset b = MakeFrameDataset(u, LabelMap::Load(dir / "labels.txt"), Canonical(5));
  for (std::size_t i = 0; i < a.utterances.size(); ++i) EXPECT_EQ(a.utterances[i].label, b.utterances[i].label);
}

TEST(FrameDatasetTest, HeldOutSplitIsPerSpeakerAndDeterministic) {
  std::vector<LabeledUtterance> u;
  for (int s = 0; s < 4; ++s)
    for (int i = 0; i < 10; ++i) u.push_back({UtteranceId(s, i), SpeakerId(s), NoiseFbank(21, 1)});
  FrameDataset a = MakeFrameDataset(u, LabelMap(Speakers(4)), Canonical(4));
  FrameDataset b = a;
  FrameDataset ha = SplitHeldOut(a, 0.1, 5), hb = SplitHeldOut(b, 0.1, 5);
  ASSERT_EQ(ha.utterances.size(), 4u);
  EXPECT_EQ(a.utterances.size(), 36u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(ha.utterances[i].utt_id, hb.utterances[i].utt_id);
    EXPECT_EQ(ha.utterances[i].label, static_cast<int>(i));
  }
}

TEST(ChunkTest, ChunksCoverEveryWindowOnce) {
  std::vector<LabeledUtterance> u;
  for (Eigen::Index t : {20, 50, 51, 52, 83, 200})
    u.push_back({"u" + std::to_string(t), SpeakerId(0), NoiseFbank(t, 1)});
  FrameDataset ds = MakeFrameDataset(u, LabelMap(Speakers(1)), Canonical(1));
  auto chunks = ChunksBySpeaker(ds, 32);
  std::vector<std::vector<int>> covered(ds.utterances.size());
  for (std::size_t i = 0; i < ds.utterances.size(); ++i)
    covered[i].assign(static_cast<std::size_t>(ds.NumWindows(i)), 0);
  for (const auto &c : chunks[0]) {
    EXPECT_LE(c.length, 32);
    EXPECT_GE(c.start, 0);
    EXPECT_LE(c.start + c.length, ds.NumWindows(c.utt));
    for (std::int64_t w = c.start; w < c.start + c.length; ++w) covered[c.utt][static_cast<std::size_t>(w)]++;
  }
  for (const auto &v : covered)
    for (int n : v) {
      EXPECT_GE(n, 1);
      EXPECT_LE(n, 2);
    }
}

TEST(AccuracyTest, UntrainedModelIsNearChance) {
  std::vector<LabeledUtterance> u;
  for (int s = 0; s < 32; ++s) u.push_back({UtteranceId(s, 0), SpeakerId(s), SynthFbank(s, 0, 60)});
  FrameDataset ds = MakeFrameDataset(std::move(u), LabelMap(Speakers(32)), Canonical(32));
  Model m(Canonical(32), 3);
  EXPECT_NEAR(EvaluateFrameAccuracy(m, ds), 1.0 / 32.0, 0.05);
}

TEST(AccuracyTest, MatchesRecountFromPosteriors) {
  std::vector<LabeledUtterance> u;
  for (int s = 0; s < 4; ++s)
    for (int i = 0; i < 2; ++i) u.push_back({UtteranceId(s, i), SpeakerId(s), NoiseFbank(40 + 3 * s, 10u * s + i, 0.2f * s)});
  FrameDataset ds = MakeFrameDataset(std::move(u), LabelMap(Speakers(4)), Canonical(4));
  Model m(Canonical(4), 8);
  std::int64_t hits = 0, total = 0;
  for (const auto &item : ds.utterances) {
    FeatureMatrix logits = m.ForwardLogits(item.fbank);
    for (Eigen::Index t = 0; t < logits.rows(); ++t) {
      const float *row = logits.data.row(t).data();
      hits += std::max_element(row, row + logits.cols()) - row == item.label;
      ++total;
    }
  }
  EXPECT_EQ(total, ds.NumWindows());
  EXPECT_DOUBLE_EQ(EvaluateFrameAccuracy(m, ds), static_cast<double>(hits) / static_cast<double>(total));
  EXPECT_DOUBLE_EQ(EvaluateFrameAccuracy(m, ds, 3), static_cast<double>(hits) / static_cast<double>(total));
}

TEST(AccuracyTest, TiesGoToTheLowestIndex) {
  Eigen::VectorXf v(4);
  v << 1, 3, 3, 2;
  EXPECT_EQ(ArgmaxLowest(v), 1);
  v << 0, 0, 0, 0;
  EXPECT_EQ(ArgmaxLowest(v), 0);
}

TEST(SgdTest, ZeroLearningRateLeavesParametersBitwiseUnchanged) {
  FrameDataset ds = TwoSpeakerSet();
  Model m(Canonical(2), 1);
  const auto before = Flatten(m);
  TrainConfig cfg;
  cfg.lr_initial = 0.0;
  SgdTrainer trainer(m, cfg);
  trainer.TrainEpoch(ds);
  EXPECT_EQ(Flatten(m), before);
}

TEST(SgdTest, ZeroMomentumStepIsPlainGradientDescent) {
  // One utterance with fewer windows than a chunk: one chunk, one batch, one step.
  FrameDataset ds =
      MakeFrameDataset({{"u", SpeakerId(1), SynthFbank(1, 0, 40)}}, LabelMap(Speakers(2)), Canonical(2));
  Model m(Canonical(2), 4);
  Model ref(Canonical(2), 4);
  TrainConfig cfg;
  cfg.momentum = 0.0;
  cfg.lr_initial = 0.05;
  SgdTrainer trainer(m, cfg);
  EpochStats st = trainer.TrainEpoch(ds);
  EXPECT_EQ(st.batches, 1);
  EXPECT_EQ(st.frames, 21);

  // Gradient of the mean frame loss, from the reference copy.
  const auto &x = ds.utterances[0].fbank.data;
  nn::Tensor<float> in({1, x.rows(), x.cols()});
  std::copy_n(x.data(), x.size(), in.data());
  ref.ZeroGrad();
  nn::Tensor<float> logits = ref.Forward(in);
  nn::Tensor<float> g(logits.shape());
  for (Eigen::Index r = 0; r < logits.Matrix().rows(); ++r)
    g.Matrix().row(r) = nn::SoftmaxXent<float>(logits.Matrix().row(r), 1).grad_logits * (1.0f / 21.0f);
  ref.Backward(g);
  auto rp = ref.Params(), mp = m.Params();
  for (std::size_t i = 0; i < rp.size(); ++i) {
    // Scalar arithmetic, one rounding per operation.
    for (Eigen::Index j = 0; j < rp[i].value->size(); ++j) {
      const float step = 0.05f * (*rp[i].grad)[j];
      const float expected = (*rp[i].value)[j] - step;
      ASSERT_EQ((*mp[i].value)[j], expected) << "param " << i << " index " << j;
    }
  }
}

TEST(SgdTest, OverfitsTwoSpeakers) {
  FrameDataset ds = TwoSpeakerSet();
  ASSERT_EQ(ds.NumWindows(), 100);
  Model m(Canonical(2), 5);
  TrainConfig cfg;
  SgdTrainer trainer(m, cfg);
  for (int e = 0; e < 30; ++e) trainer.TrainEpoch(ds);
  EXPECT_GT(EvaluateFrameAccuracy(m, ds), 0.95);
  // Keep going until saturated.
  for (int e = 0; e < 30 && EvaluateFrameAccuracy(m, ds) < 1.0; ++e) trainer.TrainEpoch(ds);
  EXPECT_EQ(EvaluateFrameAccuracy(m, ds), 1.0);
  // A single-window input is confidently classified.
  FeatureMatrix logits = m.ForwardLogits(FeatureMatrix(MatrixR<float>(ds.utterances[0].fbank.data.topRows(20))));
  const double p = 1.0 / (1.0 + std::exp(static_cast<double>(logits.data(0, 1) - logits.data(0, 0))));
  EXPECT_GT(ds.utterances[0].label == 0 ? p : 1.0 - p, 0.99);
}

TEST(SgdTest, SameSeedSameParameters) {
  std::vector<LabeledUtterance> u;
  for (int s = 0; s < 3; ++s)
    for (int i = 0; i < 3; ++i) u.push_back({UtteranceId(s, i), SpeakerId(s), SynthFbank(s, i, 90)});
  FrameDataset ds = MakeFrameDataset(std::move(u), LabelMap(Speakers(3)), Canonical(3));
  TrainConfig cfg;
  cfg.seed = 12;
  Model a(Canonical(3), 2), b(Canonical(3), 2);
  SgdTrainer ta(a, cfg), tb(b, cfg);
  for (int e = 0; e < 2; ++e) {
    ta.TrainEpoch(ds);
    tb.TrainEpoch(ds);
  }
  EXPECT_EQ(Flatten(a), Flatten(b));
  cfg.seed = 13;
  Model c(Canonical(3), 2);
  SgdTrainer tc(c, cfg);
  for (int e = 0; e < 2; ++e) tc.TrainEpoch(ds);
  EXPECT_NE(Flatten(a), Flatten(c));
}

TEST(SgdTest, CheckpointResumeIsBitwise) {
  testing::TempDir dir;
  std::vector<LabeledUtterance> u;
  for (int s = 0; s < 3; ++s)
    for (int i = 0; i < 2; ++i) u.push_back({UtteranceId(s, i), SpeakerId(s), SynthFbank(s, i, 120)});
  FrameDataset ds = MakeFrameDataset(std::move(u), LabelMap(Speakers(3)), Canonical(3));
  TrainConfig cfg;
  cfg.seed = 3;

  Model straight(Canonical(3), 9);
  SgdTrainer t1(straight, cfg);
  t1.TrainEpoch(ds);
  t1.TrainEpoch(ds);

  Model first(Canonical(3), 9);
  SgdTrainer t2(first, cfg);
  t2.TrainEpoch(ds);
  t2.SaveCheckpoint(dir.path());

  Model resumed(Canonical(3), 77);
  SgdTrainer t3(resumed, cfg);
  t3.LoadCheckpoint(dir.path());
  EXPECT_EQ(t3.state().epoch, 1);
  t3.TrainEpoch(ds);
  EXPECT_EQ(Flatten(resumed), Flatten(straight));
  EXPECT_EQ(t3.state().frames_seen, t1.state().frames_seen);

  std::filesystem::remove(dir / "velocity.ctdn");
  Model other(Canonical(3), 1);
  SgdTrainer t4(other, cfg);
  EXPECT_ERROR_CODE(t4.LoadCheckpoint(dir.path()), ErrorCode::kDependency);
}

TEST(SgdTest, LossDecreasesOnATinySet) {
  // Evaluated on the whole set after each epoch; every seed must be
  // non-increasing over the run.
  std::vector<LabeledUtterance> u;
  for (int s = 0; s < 4; ++s) u.push_back({UtteranceId(s, 0), SpeakerId(s), SynthFbank(s, 0, 60)});
  FrameDataset ds = MakeFrameDataset(std::move(u), LabelMap(Speakers(4)), Canonical(4));
  auto mean_loss = [&](const Model &m) {
    double sum = 0;
    for (const auto &item : ds.utterances) {
      FeatureMatrix l = m.ForwardLogits(item.fbank);
      for (Eigen::Index t = 0; t < l.rows(); ++t)
        sum += nn::SoftmaxXent<float>(l.data.row(t), item.label).loss;
    }
    return sum / static_cast<double>(ds.NumWindows());
  };
  int monotone = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Model m(Canonical(4), seed);
    TrainConfig cfg;
    cfg.seed = seed;
    SgdTrainer trainer(m, cfg);
    std::vector<double> losses{mean_loss(m)};
    for (int e = 0; e < 6; ++e) {
      trainer.TrainEpoch(ds);
      losses.push_back(mean_loss(m));
    }
    bool ok = true;
    for (std::size_t i = 1; i < losses.size(); ++i) ok = ok && losses[i] <= losses[i - 1];
    monotone += ok;
    EXPECT_LT(losses.back(), losses.front()) << "seed " << seed;
  }
  EXPECT_GE(monotone, 5);  // at least 90% of 5 runs
}

TEST(SgdTest, NonFiniteLossAbortsWithDiagnostics) {
  // NaN in the input is squashed to zero by the rectifiers, so poison the
  // output layer instead.
  FrameDataset ds = MakeFrameDataset({{"u", SpeakerId(0), NoiseFbank(30, 1)}}, LabelMap(Speakers(2)), Canonical(2));
  Model m(Canonical(2), 1);
  auto params = m.Params();
  (*params.back().value)[0] = std::numeric_limits<float>::quiet_NaN();
  SgdTrainer trainer(m, TrainConfig{});
  try {
    trainer.TrainEpoch(ds);
    FAIL() << "expected a training error";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::kTraining);
    EXPECT_NE(std::string(e.what()).find("batch 0"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("lr"), std::string::npos) << e.what();
  }
}

TEST(TrainConfigTest, ValidationAndJson) {
  TrainConfig c;
  c.lr_initial = -0.01;
  EXPECT_ERROR_CODE(c.Validate(), ErrorCode::kConfig);
  c.lr_initial = 0.0;  // allowed: a null update
  c.Validate();
  c = TrainConfig{};
  c.minibatch_frames = 0;
  EXPECT_ERROR_CODE(c.Validate(), ErrorCode::kConfig);
  c = TrainConfig{};
  c.momentum = 0.5;
  c.epochs_max = 7;
  TrainConfig back = TrainConfig::FromJson(c.ToJson());
  EXPECT_EQ(back.ToJson(), c.ToJson());
  Json j = c.ToJson();
  j["learning_rate"] = 1;
  EXPECT_ERROR_CODE(TrainConfig::FromJson(j, "train"), ErrorCode::kConfig);
}

TEST(RunTrainingTest, PlateausHalveTheRateAndStop) {
  testing::TempDir dir;
  FrameDataset ds = TwoSpeakerSet();
  Model m(Canonical(2), 1);
  TrainConfig cfg;
  cfg.lr_initial = 0.0;  // accuracy never moves, so every epoch is a plateau after the first
  cfg.epochs_max = 10;
  TrainState st = RunTraining(m, ds, ds, cfg, dir / "log.jsonl", dir / "ckpt");
  EXPECT_TRUE(st.finished);
  EXPECT_EQ(st.epoch, 4);
  EXPECT_EQ(st.plateaus, 3);
  std::ifstream in(dir / "log.jsonl");
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    Json j = Json::parse(line);
    EXPECT_EQ(j.at("epoch").get<int>(), n + 1);
    for (const char *k : {"loss", "train_accuracy", "heldout_accuracy", "lr", "frames"}) EXPECT_TRUE(j.contains(k));
    ++n;
  }
  EXPECT_EQ(n, 4);
  // A finished checkpoint resumes as a no-op.
  Model again(Canonical(2), 1);
  TrainState st2 = RunTraining(again, ds, ds, cfg, {}, dir / "ckpt");
  EXPECT_EQ(st2.epoch, 4);
}

TEST(RunTrainingTest, ResumedRunMatchesStraightRun) {
  testing::TempDir dir;
  FrameDataset ds = TwoSpeakerSet();
  FrameDataset held = TwoSpeakerSet(1);
  TrainConfig cfg;
  cfg.epochs_max = 2;
  Model straight(Canonical(2), 6);
  RunTraining(straight, ds, held, cfg);

  TrainConfig one = cfg;
  one.epochs_max = 1;
  Model part(Canonical(2), 6);
  RunTraining(part, ds, held, one, {}, dir / "ckpt");
  Model resumed(Canonical(2), 6);
  TrainState st = RunTraining(resumed, ds, held, cfg, {}, dir / "ckpt");
  EXPECT_EQ(st.epoch, 2);
  EXPECT_EQ(Flatten(resumed), Flatten(straight));
}

}  // namespace
}  // namespace ctdvec
