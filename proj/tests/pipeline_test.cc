// tests/pipeline_test.cc
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

#include <gtest/gtest.h>

#include "ctdvec/pipeline.hpp"
#include "test_util.h"

namespace ctdvec {
namespace {

PipelineConfig TinyConfig(const std::filesystem::path &root) {
  PipelineConfig c;
  c.seed = 3;
  c.paths.root = root;
  c.synth.num_speakers = 6;
  c.synth.utts_per_speaker = 4;
  c.synth.utt_seconds = 1.0;
  c.split = {4, 2, 2};
  c.train.epochs_max = 1;
  c.train.max_frames_per_epoch = 512;
  c.train.heldout_fraction = 0.25;
  c.backend.lda_dim = 3;
  c.test_frames = {0, 50, 20};
  return c;
}

bool Logged(const testing::LogCapture &log, const std::string &needle) {
  return std::any_of(log.messages.begin(), log.messages.end(),
                     [&](const std::string &m) { return m.find(needle) != std::string::npos; });
}

TEST(PipelineTest, RunAllThenRerunIsANoOp) {
  testing::TempDir dir;
  Json report = Pipeline(TinyConfig(dir.path())).RunAll();
  EXPECT_EQ(report.at("conditions"), Json({"full", "50f", "20f"}));
  EXPECT_EQ(report.at("backends"), Json({"cosine", "lda", "plda"}));
  for (const char *c : {"full", "50f", "20f"})
    for (const char *k : {"cosine", "lda", "plda"}) {
      const double eer = report.at("eer").at(c).at(k).at("eer").get<double>();
      EXPECT_GE(eer, 0.0);
      EXPECT_LE(eer, 1.0);
      // 2 speaker models x 4 test utterances.
      EXPECT_EQ(report.at("eer").at(c).at(k).at("n_target").get<int>(), 4);
      EXPECT_EQ(report.at("eer").at(c).at(k).at("n_nontarget").get<int>(), 4);
    }
  const auto results = dir.path() / "results";
  for (const char *f : {"report.json", "report.txt", "det_full.svg", "det_20f.svg", "embeddings_test.csv",
                        "det_50f_plda.csv", "trials_20f_cosine.txt"})
    EXPECT_TRUE(std::filesystem::exists(results / f)) << f;
  for (const char *f : {"model.ctdn", "labels.txt", "train_log.jsonl", "train_state.json", "backend_plda.bknd"})
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "models" / f)) << f;
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "vectors" / "train.dvec"));
  EXPECT_EQ(report.at("training").at("speakers").get<int>(), 4);
  const std::string json = ReadFileBytes(results / "report.json");
  EXPECT_EQ(json.find(dir.path().string()), std::string::npos) << "report must not embed absolute paths";

  const std::string model = ReadFileBytes(dir.path() / "models" / "model.ctdn");
  const auto stamp_time = std::filesystem::last_write_time(dir.path() / "models" / "model.ctdn");
  testing::LogCapture log(LogLevel::kInfo);
  Json again = Pipeline(TinyConfig(dir.path())).RunAll();
  EXPECT_EQ(again, report);
  EXPECT_TRUE(Logged(log, "train: up to date"));
  EXPECT_TRUE(Logged(log, "report: up to date"));
  EXPECT_FALSE(Logged(log, "rerunning"));
  EXPECT_EQ(std::filesystem::last_write_time(dir.path() / "models" / "model.ctdn"), stamp_time);
  EXPECT_EQ(ReadFileBytes(dir.path() / "models" / "model.ctdn"), model);
}

TEST(PipelineTest, DifferentConfigIsRefusedUnlessForced) {
  testing::TempDir dir;
  PipelineConfig c = TinyConfig(dir.path());
  Pipeline(c).Synth();
  c.synth.utts_per_speaker = 5;
  EXPECT_ERROR_CODE(Pipeline(c).Synth(), ErrorCode::kConfig);
  Pipeline(c, 1, /*force=*/true).Synth();
  EXPECT_EQ(ReadManifest(dir.path() / "corpus" / "manifest.txt").size(), 30u);
  Pipeline(c).Synth();  // now stamped with the new config
}

TEST(PipelineTest, ChangedUpstreamRerunsDownstream) {
  testing::TempDir dir;
  PipelineConfig c = TinyConfig(dir.path());
  Pipeline(c).Synth();
  Pipeline(c).Fbank();
  Pipeline(c).Train();
  const std::string before = ReadFileBytes(dir.path() / "models" / "model.ctdn");
  c.fbank.preemphasis = 0.9;
  Pipeline(c, 1, true).Fbank();
  testing::LogCapture log(LogLevel::kInfo);
  Pipeline(c).Train();
  EXPECT_TRUE(Logged(log, "train: inputs changed"));
  EXPECT_NE(ReadFileBytes(dir.path() / "models" / "model.ctdn"), before);
}

TEST(PipelineTest, MissingUpstreamNamesTheProducer) {
  testing::TempDir dir;
  PipelineConfig c = TinyConfig(dir.path());
  try {
    Pipeline(c).Train();
    FAIL() << "expected a dependency error";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::kDependency);
    EXPECT_NE(std::string(e.what()).find("features/train.txt"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("ctdvec fbank"), std::string::npos) << e.what();
  }
  EXPECT_ERROR_CODE(Pipeline(c).Fbank(), ErrorCode::kDependency);
  EXPECT_ERROR_CODE(Pipeline(c).Extract(), ErrorCode::kDependency);
  EXPECT_ERROR_CODE(Pipeline(c).Report(), ErrorCode::kDependency);
  c.corpus_manifest = (dir.path() / "nope.txt").string();
  EXPECT_ERROR_CODE(Pipeline(c).Synth(), ErrorCode::kDependency);
}

TEST(PipelineTest, ShortTestUtteranceIsSkippedAtTwentyFrames) {
  testing::TempDir dir;
  PipelineConfig c = TinyConfig(dir.path());
  c.backends = {BackendKind::kCosine};
  Pipeline p(c);
  p.Synth();
  p.Fbank();
  auto test = ReadFeatureManifest(dir.path() / "features" / "test.txt");
  ASSERT_EQ(test.size(), 4u);
  FeatureMatrix f = ReadFeatures(dir.path() / "features" / test[0].path);
  WriteFeatures(TruncateFrames(f, 19), dir.path() / "features" / test[0].path);
  p.Train();
  p.ExtractBase();
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "vectors" / "train.dvec"));  // cosine needs none
  p.BackendFit();
  testing::LogCapture log;
  auto eer = p.EvaluateCondition(20);
  ConditionCounts n = p.ReadCounts(20);
  EXPECT_EQ(n.used, 3);
  EXPECT_EQ(n.skipped, 1);
  EXPECT_TRUE(Logged(log, test[0].utt_id));
  EXPECT_EQ(eer.at(BackendKind::kCosine).num_target, 3u);
  EXPECT_EQ(eer.at(BackendKind::kCosine).num_nontarget, 3u);
}

TEST(PipelineConfigTest, JsonRoundTripAndDefaults) {
  PipelineConfig c = TinyConfig("some/where");
  c.synth_seed = 99;
  c.num_train_speakers = 2;
  c.backends = {BackendKind::kPlda, BackendKind::kCosine};
  PipelineConfig back = PipelineConfig::FromJson(c.ToJson());
  EXPECT_EQ(back.ToJson(), c.ToJson());
  EXPECT_EQ(back.SynthSeed(), 99u);
  PipelineConfig d = PipelineConfig::FromJson(Json::object());
  EXPECT_EQ(d.synth.num_speakers, 40);
  EXPECT_EQ(d.split.train_speakers, 32);
  EXPECT_EQ(d.test_frames, (std::vector<int>{0, 100, 50, 20}));
  EXPECT_EQ(d.paths.Models(), std::filesystem::path("work") / "models");
  // Stage streams are distinct and follow the global seed.
  EXPECT_NE(d.ModelSeed(), d.TrainSeed());
  PipelineConfig e = PipelineConfig::FromJson(Json{{"seed", 2}});
  EXPECT_NE(e.ModelSeed(), d.ModelSeed());
  EXPECT_NE(e.SynthSeed(), d.SynthSeed());
}

TEST(PipelineConfigTest, UnknownKeysAreNamed) {
  auto expect_key = [](const Json &j, const std::string &needle) {
    try {
      PipelineConfig::FromJson(j);
      ADD_FAILURE() << "accepted " << j.dump();
    } catch (const Error &e) {
      EXPECT_EQ(e.code(), ErrorCode::kConfig);
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_key(Json{{"sede", 1}}, "config.sede");
  expect_key(Json{{"train", {{"lr", 0.1}}}}, "config.train.lr");
  expect_key(Json{{"model", {{"conv1", {{"mapz", 3}}}}}}, "config.model.conv1.mapz");
  expect_key(Json{{"synth", {{"speakers", 3}}}}, "config.synth.speakers");
  expect_key(Json{{"eval", {{"frames", {20}}}}}, "config.eval.frames");
  expect_key(Json{{"backend", {{"kinds", {"svm"}}}}}, "svm");
  expect_key(Json{{"train", {{"seed", 4}}}}, "config.train.seed");
  expect_key(Json{{"model", {{"num_speakers", 4}}}}, "config.model.num_speakers");
  expect_key(Json{{"eval", {{"test_frames", {20, 20}}}}}, "repeated");
  expect_key(Json{{"num_train_speakers", 33}}, "num_train_speakers");
  expect_key(Json{{"seed", "one"}}, "seed");
  expect_key(Json{{"model", {{"conv2", {{"maps", 3}}}}}}, "bottleneck");
}

}  // namespace
}  // namespace ctdvec
