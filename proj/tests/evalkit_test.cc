// tests/evalkit_test.cc
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

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ctdvec/evalkit.hpp"
#include "ctdvec/nn/tensor.hpp"
#include "oracles.h"
#include "test_util.h"

namespace ctdvec {
namespace {

std::vector<IdSpeaker> Ids(int speakers, int per, const std::string &prefix) {
  std::vector<IdSpeaker> out;
  for (int s = 0; s < speakers; ++s)
    for (int u = 0; u < per; ++u)
      out.push_back({prefix + std::to_string(s) + "_" + std::to_string(u), "spk" + std::to_string(s)});
  return out;
}

TEST(MakeTrialsTest, TwoSpeakersFourTests) {
  std::vector<IdSpeaker> enroll = {{"spk0", "spk0"}, {"spk1", "spk1"}};
  TrialList t = MakeTrials(enroll, Ids(2, 2, "u"));
  ASSERT_EQ(t.size(), 8u);
  int targets = 0;
  for (const auto &x : t) targets += x.is_target;
  EXPECT_EQ(targets, 4);
  EXPECT_EQ(t[0].enroll_id, "spk0");
  EXPECT_EQ(t[0].test_id, "u0_0");
  EXPECT_TRUE(t[0].is_target);
  EXPECT_FALSE(t[2].is_target);
}

TEST(MakeTrialsTest, FiveHundredSpeakerCounts) {
  std::vector<IdSpeaker> enroll;
  for (int s = 0; s < 500; ++s) enroll.push_back({"spk" + std::to_string(s), "spk" + std::to_string(s)});
  TrialList t = MakeTrials(enroll, Ids(500, 10, "u"));
  std::size_t targets = 0;
  for (const auto &x : t) targets += x.is_target;
  EXPECT_EQ(t.size(), 500u * 5000u);
  EXPECT_EQ(targets, 5000u);
  EXPECT_EQ(t.size() - targets, 2495000u);
}

TEST(MakeTrialsTest, EmptySetsAreErrors) {
  EXPECT_ERROR_CODE(MakeTrials(std::vector<IdSpeaker>{}, Ids(1, 1, "u")), ErrorCode::kPrecondition);
  EXPECT_ERROR_CODE(MakeTrials(Ids(1, 1, "e"), std::vector<IdSpeaker>{}), ErrorCode::kPrecondition);
}

DVector Vec(const std::string &id, const std::string &spk, VectorD v) {
  DVector d;
  d.utt_id = id;
  d.speaker_id = spk;
  d.num_frames = 1;
  d.values = std::move(v);
  return d;
}

TEST(ScoreTrialsTest, CosineSelfScoreAndDeterminism) {
  std::mt19937_64 rng(3);
  std::vector<DVector> enroll, test;
  for (int s = 0; s < 3; ++s) {
    VectorD v = oracle::RandomVector(5, rng);
    enroll.push_back(Vec("spk" + std::to_string(s), "spk" + std::to_string(s), v));
    test.push_back(Vec("t" + std::to_string(s), "spk" + std::to_string(s), v));
    test.push_back(Vec("t" + std::to_string(s) + "b", "spk" + std::to_string(s), oracle::RandomVector(5, rng)));
  }
  TrialList t = MakeTrials(enroll, test);
  TrialList a = ScoreTrials(t, enroll, test, Backend());
  TrialList b = ScoreTrials(t, enroll, test, Backend(), 3);
  ASSERT_EQ(a.size(), t.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].enroll_id, t[i].enroll_id);
    EXPECT_EQ(a[i].test_id, t[i].test_id);
    EXPECT_EQ(*a[i].score, *b[i].score);
  }
  EXPECT_NEAR(*a[0].score, 1.0, 1e-12);  // spk0 vs t0
}

TEST(ScoreTrialsTest, LdaEqualsCosineOfIndependentlyProjectedVectors) {
  std::mt19937_64 rng(4);
  MatrixD x = oracle::RandomMatrix(40, 6, rng);
  std::vector<int> labels;
  for (int i = 0; i < 40; ++i) labels.push_back(i % 5);
  BackendOptions o;
  o.lda_dim = 3;
  Backend lda = Backend::Fit(BackendKind::kLda, x, labels, o);
  std::vector<DVector> enroll = {Vec("a", "a", oracle::RandomVector(6, rng)), Vec("b", "b", oracle::RandomVector(6, rng))};
  std::vector<DVector> test = {Vec("x", "a", oracle::RandomVector(6, rng)), Vec("y", "b", oracle::RandomVector(6, rng))};
  TrialList t = ScoreTrials(MakeTrials(enroll, test), enroll, test, lda);
  for (const auto &tr : t) {
    const auto &e = tr.enroll_id == "a" ? enroll[0] : enroll[1];
    const auto &s = tr.test_id == "x" ? test[0] : test[1];
    VectorD pe = lda.lda().projection * (e.values - lda.lda().mean);
    VectorD ps = lda.lda().projection * (s.values - lda.lda().mean);
    EXPECT_NEAR(*tr.score, pe.dot(ps) / (pe.norm() * ps.norm()), 1e-12);
  }
}

TEST(ScoreTrialsTest, UnresolvedIdNamesTheId) {
  std::vector<DVector> enroll = {Vec("a", "a", VectorD::Ones(3))};
  std::vector<DVector> test = {Vec("x", "a", VectorD::Ones(3))};
  TrialList t = {{"a", "missing_utt", true, std::nullopt}};
  try {
    ScoreTrials(t, enroll, test, Backend());
    FAIL() << "no error";
  } catch (const Error &e) {
    EXPECT_EQ(e.code(), ErrorCode::kListing);
    EXPECT_NE(std::string(e.what()).find("missing_utt"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// EER

TEST(EerTest, PerfectSeparationIsZero) {
  EerResult r = ComputeEer({0.9, 0.8}, {0.2, 0.1});
  EXPECT_EQ(r.eer, 0.0);
  EXPECT_EQ(r.num_target, 2u);
  EXPECT_EQ(r.num_nontarget, 2u);
}

TEST(EerTest, IdenticalMultisetsGiveOneHalf) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s;
    const int n = 1 + static_cast<int>(rng() % 50);
    for (int i = 0; i < n; ++i) s.push_back(std::round(nn::StandardNormal(rng) * 3) / 3);
    EXPECT_DOUBLE_EQ(ComputeEer(s, s).eer, 0.5) << n;
  }
  EXPECT_EQ(ComputeEer({1.0}, {1.0}).eer, 0.5);
}

TEST(EerTest, SingleClassIsPreconditionError) {
  EXPECT_ERROR_CODE(ComputeEer({1.0, 2.0}, {}), ErrorCode::kPrecondition);
  EXPECT_ERROR_CODE(ComputeEer({}, {1.0}), ErrorCode::kPrecondition);
}

TEST(EerTest, MatchesBruteForceOnOverlappingGaussians) {
  std::mt19937_64 rng(6);
  std::vector<double> t, n;
  for (int i = 0; i < 1000; ++i) {
    t.push_back(1.0 + nn::StandardNormal(rng));
    n.push_back(nn::StandardNormal(rng));
  }
  EerResult r = ComputeEer(t, n);
  oracle::BruteEer b = oracle::BruteForceEer(t, n);
  EXPECT_NEAR(r.eer, b.eer, 1e-9);
  EXPECT_NEAR(r.threshold, b.threshold, 1e-9);
  // Gaussian shift of 1: the EER is Phi(-0.5) ~ 0.3085 up to sampling.
  EXPECT_NEAR(r.eer, 0.3085, 0.04);
}

TEST(EerTest, MatchesBruteForceOnRandomInstancesWithTies) {
  std::mt19937_64 rng(7);
  for (int inst = 0; inst < 100; ++inst) {
    const int nt = 1 + static_cast<int>(rng() % 300), nn_ = 1 + static_cast<int>(rng() % 3000);
    const double shift = nn::UniformRange(rng, -0.5, 3.0);
    const bool quantize = inst % 3 == 0;
    std::vector<double> t, n;
    auto q = [&](double v) { return quantize ? std::round(v * 4) / 4 : v; };
    for (int i = 0; i < nt; ++i) t.push_back(q(shift + nn::StandardNormal(rng)));
    for (int i = 0; i < nn_; ++i) n.push_back(q(nn::StandardNormal(rng)));
    EXPECT_NEAR(ComputeEer(t, n).eer, oracle::BruteForceEer(t, n).eer, 1e-9) << inst;
  }
}

TEST(EerTest, RankInvariantAndLabelSwapSymmetric) {
  std::mt19937_64 rng(8);
  std::vector<double> t, n, t2, n2, tneg, nneg;
  for (int i = 0; i < 400; ++i) {
    t.push_back(0.8 + nn::StandardNormal(rng));
    n.push_back(nn::StandardNormal(rng));
  }
  for (double v : t) {
    t2.push_back(std::exp(2 * v) + 5);
    nneg.push_back(-v);
  }
  for (double v : n) {
    n2.push_back(std::exp(2 * v) + 5);
    tneg.push_back(-v);
  }
  const double e = ComputeEer(t, n).eer;
  EXPECT_NEAR(ComputeEer(t2, n2).eer, e, 1e-12);
  EXPECT_NEAR(ComputeEer(tneg, nneg).eer, e, 1e-12);
  EXPECT_GE(e, 0.0);
  EXPECT_LE(e, 0.5);
}

TEST(EerTest, ZeroExactlyWhenClassesAreSeparated) {
  EXPECT_EQ(ComputeEer({0.5, 0.6}, {0.4, 0.49}).eer, 0.0);
  EXPECT_GT(ComputeEer({0.5, 0.6}, {0.4, 0.5}).eer, 0.0);
}

TEST(DetTest, MonotoneStaircaseThroughTheEerPoint) {
  std::mt19937_64 rng(9);
  std::vector<double> t, n;
  for (int i = 0; i < 300; ++i) t.push_back(0.7 + nn::StandardNormal(rng));
  for (int i = 0; i < 500; ++i) n.push_back(nn::StandardNormal(rng));
  std::vector<DetPoint> pts = DetPoints(t, n);
  EXPECT_EQ(pts.front().far, 1.0);
  EXPECT_EQ(pts.front().frr, 0.0);
  EXPECT_EQ(pts.back().far, 0.0);
  EXPECT_EQ(pts.back().frr, 1.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    EXPECT_LT(pts[i - 1].threshold, pts[i].threshold);
    EXPECT_LE(pts[i].far, pts[i - 1].far);
    EXPECT_GE(pts[i].frr, pts[i - 1].frr);
  }
  // The EER point lies on the segment between two adjacent DET points.
  const EerResult r = ComputeEer(t, n);
  bool on_segment = false;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const auto &a = pts[i - 1], &b = pts[i];
    if (r.eer < std::min(a.frr, b.frr) - 1e-12 || r.eer > std::max(a.frr, b.frr) + 1e-12) continue;
    const double alpha = b.frr == a.frr ? 0.0 : (r.eer - a.frr) / (b.frr - a.frr);
    on_segment |= std::abs(a.far + alpha * (b.far - a.far) - r.eer) < 1e-9;
  }
  EXPECT_TRUE(on_segment);
}

TEST(DetTest, PerfectSeparationTouchesOrigin) {
  std::vector<DetPoint> pts = DetPoints({0.9, 0.8}, {0.2, 0.1});
  bool origin = false;
  for (const auto &p : pts) origin |= p.far == 0.0 && p.frr == 0.0;
  EXPECT_TRUE(origin);
}

TEST(DetTest, CsvHasConventionHeader) {
  const std::string csv = FormatDetCsv(DetPoints({0.9, 0.3}, {0.2, 0.4}));
  EXPECT_EQ(csv.rfind("# accept iff score >= threshold", 0), 0u);
  EXPECT_NE(csv.find("\nthreshold,far,frr\n"), std::string::npos);
  EXPECT_NE(csv.find("inf,0,1\n"), std::string::npos);
}

TEST(TrialFileTest, RoundTripWithAndWithoutScores) {
  TrialList t = {{"spk0", "u1", true, std::nullopt}, {"spk1", "u1", false, 0.125}, {"spk1", "u2", true, -3.5e-7}};
  TrialList back = ParseTrials(FormatTrials(t), "mem");
  EXPECT_EQ(back, t);
  EXPECT_ERROR_CODE(ParseTrials("a b maybe\n", "bad"), ErrorCode::kMalformedHeader);
  EXPECT_ERROR_CODE(ParseTrials("a b target zz\n", "bad"), ErrorCode::kMalformedHeader);
}

TEST(EerReportTest, JsonFields) {
  Json j = EerToJson(ComputeEer({0.9, 0.8}, {0.2, 0.1}));
  EXPECT_EQ(j["eer"], 0.0);
  EXPECT_EQ(j["n_target"], 2);
  EXPECT_EQ(j["n_nontarget"], 2);
  EXPECT_TRUE(j.contains("threshold"));
}

}  // namespace
}  // namespace ctdvec
