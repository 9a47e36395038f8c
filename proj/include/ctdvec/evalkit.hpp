// ctdvec/evalkit.hpp
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

// Trial lists, scoring, EER and DET points.
//
// Threshold convention: a trial is accepted iff score >= threshold.  The
// candidate thresholds are the distinct scores plus +inf.  EER is read off
// by linear interpolation between the two adjacent operating points where
// FRR - FAR changes sign.

#ifndef CTDVEC_EVALKIT_HPP
#define CTDVEC_EVALKIT_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctdvec/backend.hpp"
#include "ctdvec/base.hpp"
#include "ctdvec/dvector.hpp"

namespace ctdvec {

struct Trial {
  std::string enroll_id;
  std::string test_id;
  bool is_target = false;
  std::optional<double> score;
  bool operator==(const Trial &) const = default;
};

using TrialList = std::vector<Trial>;

struct IdSpeaker {
  std::string id;
  std::string speaker_id;
};

/// Full cross product: every enrollment model against every test utterance.
inline TrialList MakeTrials(const std::vector<IdSpeaker> &enroll, const std::vector<IdSpeaker> &test) {
  if (enroll.empty() || test.empty())
    Fail(ErrorCode::kPrecondition, "trial construction needs nonempty enroll and test sets");
  TrialList trials;
  trials.reserve(enroll.size() * test.size());
  for (const auto &e : enroll)
    for (const auto &t : test) trials.push_back({e.id, t.id, e.speaker_id == t.speaker_id, std::nullopt});
  return trials;
}

inline TrialList MakeTrials(const std::vector<DVector> &enroll, const std::vector<DVector> &test) {
  std::vector<IdSpeaker> e, t;
  for (const auto &v : enroll) e.push_back({v.utt_id, v.speaker_id});
  for (const auto &v : test) t.push_back({v.utt_id, v.speaker_id});
  return MakeTrials(e, t);
}

/// Scores every trial in place order.  Each vector is transformed once.
inline TrialList ScoreTrials(TrialList trials, const std::vector<DVector> &enroll,
                             const std::vector<DVector> &test, const Backend &backend,
                             int threads = 1) {
  auto index = [&](const std::vector<DVector> &vecs, const char *what) {
    std::unordered_map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < vecs.size(); ++i)
      if (!idx.emplace(vecs[i].utt_id, i).second)
        Fail(ErrorCode::kListing, "duplicate ", what, " id '", vecs[i].utt_id, "'");
    return idx;
  };
  const auto e_idx = index(enroll, "enroll");
  const auto t_idx = index(test, "test");
  std::vector<std::size_t> ei(trials.size()), ti(trials.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    auto e = e_idx.find(trials[i].enroll_id);
    if (e == e_idx.end()) Fail(ErrorCode::kListing, "unresolved enroll id '", trials[i].enroll_id, "'");
    auto t = t_idx.find(trials[i].test_id);
    if (t == t_idx.end()) Fail(ErrorCode::kListing, "unresolved test id '", trials[i].test_id, "'");
    ei[i] = e->second;
    ti[i] = t->second;
  }
  std::vector<VectorD> et(enroll.size()), tt(test.size());
  ParallelFor(enroll.size(), threads, [&](std::size_t i) { et[i] = backend.Transform(enroll[i].values); });
  ParallelFor(test.size(), threads, [&](std::size_t i) { tt[i] = backend.Transform(test[i].values); });
  ParallelFor(trials.size(), threads, [&](std::size_t i) {
    const double s = backend.ScoreTransformed(et[ei[i]], tt[ti[i]]);
    if (!std::isfinite(s))
      Fail(ErrorCode::kNumerical, "non-finite score for ", trials[i].enroll_id, " / ", trials[i].test_id);
    trials[i].score = s;
  });
  return trials;
}

// ---------------------------------------------------------------------------
// EER / DET

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
  std::size_t num_target = 0;
  std::size_t num_nontarget = 0;
};

struct DetPoint {
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

/// One operating point per distinct score (ascending) plus +inf.  FAR is
/// non-increasing and FRR non-decreasing along the sequence.
inline std::vector<DetPoint> DetPoints(const std::vector<double> &target,
                                       const std::vector<double> &nontarget) {
  if (target.empty() || nontarget.empty())
    Fail(ErrorCode::kPrecondition, "EER needs at least one target and one nontarget score");
  std::vector<std::pair<double, bool>> all;
  all.reserve(target.size() + nontarget.size());
  for (double s : target) all.emplace_back(s, true);
  for (double s : nontarget) all.emplace_back(s, false);
  for (const auto &p : all)
    if (std::isnan(p.first)) Fail(ErrorCode::kNumerical, "NaN score");
  std::sort(all.begin(), all.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
  const double nt = static_cast<double>(target.size()), nn = static_cast<double>(nontarget.size());
  std::vector<DetPoint> points;
  std::size_t below_target = 0, below_non = 0;
  for (std::size_t i = 0; i < all.size();) {
    const double theta = all[i].first;
    points.push_back({theta, (nn - static_cast<double>(below_non)) / nn, static_cast<double>(below_target) / nt});
    // Scores equal to theta are accepted at theta and rejected beyond it.
    for (; i < all.size() && all[i].first == theta; ++i) (all[i].second ? below_target : below_non)++;
  }
  points.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  return points;
}

inline EerResult ComputeEer(const std::vector<double> &target, const std::vector<double> &nontarget) {
  const std::vector<DetPoint> pts = DetPoints(target, nontarget);
  EerResult r;
  r.num_target = target.size();
  r.num_nontarget = nontarget.size();
  // d = frr - far goes from -1 (first point) to +1 (last point).
  for (std::size_t j = 1; j < pts.size(); ++j) {
    const double d1 = pts[j].frr - pts[j].far;
    if (d1 < 0) continue;
    if (d1 == 0) {
      r.eer = pts[j].frr;
      r.threshold = pts[j].threshold;
      return r;
    }
    const double d0 = pts[j - 1].frr - pts[j - 1].far;
    const double a = -d0 / (d1 - d0);
    r.eer = pts[j - 1].frr + a * (pts[j].frr - pts[j - 1].frr);
    r.threshold = std::isinf(pts[j].threshold)
                      ? pts[j - 1].threshold
                      : pts[j - 1].threshold + a * (pts[j].threshold - pts[j - 1].threshold);
    return r;
  }
  Fail(ErrorCode::kNumerical, "EER sweep found no crossing");
}

inline void SplitScores(const TrialList &trials, std::vector<double> &target,
                        std::vector<double> &nontarget) {
  target.clear();
  nontarget.clear();
  for (const auto &t : trials) {
    if (!t.score) Fail(ErrorCode::kPrecondition, "trial ", t.enroll_id, " / ", t.test_id, " is unscored");
    (t.is_target ? target : nontarget).push_back(*t.score);
  }
}

inline EerResult ComputeEer(const TrialList &trials) {
  std::vector<double> t, n;
  SplitScores(trials, t, n);
  return ComputeEer(t, n);
}

inline std::vector<DetPoint> DetPoints(const TrialList &trials) {
  std::vector<double> t, n;
  SplitScores(trials, t, n);
  return DetPoints(t, n);
}

// ---------------------------------------------------------------------------
// Text formats

inline std::string FormatScore(double s) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", s);
  return buf;
}

/// "<enroll-id> <test-id> target|nontarget [score]" per line.
inline std::string FormatTrials(const TrialList &trials) {
  std::string text;
  for (const auto &t : trials) {
    text += t.enroll_id + ' ' + t.test_id + (t.is_target ? " target" : " nontarget");
    if (t.score) text += ' ' + FormatScore(*t.score);
    text += '\n';
  }
  return text;
}

inline TrialList ParseTrials(const std::string &text, const std::string &source) {
  TrialList trials;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    Trial t;
    std::string kind;
    if (!(is >> t.enroll_id >> t.test_id >> kind) || (kind != "target" && kind != "nontarget"))
      Fail(ErrorCode::kMalformedHeader, source, ":", lineno,
           ": expected '<enroll-id> <test-id> target|nontarget [score]'");
    t.is_target = kind == "target";
    std::string score;
    if (is >> score) {
      char *end = nullptr;
      const double v = std::strtod(score.c_str(), &end);
      if (end == score.c_str() || *end != '\0')
        Fail(ErrorCode::kMalformedHeader, source, ":", lineno, ": bad score '", score, "'");
      t.score = v;
    }
    trials.push_back(std::move(t));
  }
  return trials;
}

inline void WriteTrials(const TrialList &trials, const std::filesystem::path &path) {
  WriteFileBytes(path, FormatTrials(trials));
}
inline TrialList ReadTrials(const std::filesystem::path &path) {
  return ParseTrials(ReadFileBytes(path), path.string());
}

inline constexpr const char *kDetCsvConvention =
    "# accept iff score >= threshold; thresholds are the distinct scores plus inf; "
    "EER is linearly interpolated between adjacent points where frr - far changes sign";

inline std::string FormatDetCsv(const std::vector<DetPoint> &points) {
  std::string text = std::string(kDetCsvConvention) + "\nthreshold,far,frr\n";
  char buf[96];
  for (const auto &p : points) {
    std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g\n",
                  std::isinf(p.threshold) ? "inf" : FormatScore(p.threshold).c_str(), p.far, p.frr);
    text += buf;
  }
  return text;
}

inline Json EerToJson(const EerResult &r) {
  return Json{{"eer", r.eer}, {"threshold", r.threshold}, {"n_target", r.num_target},
              {"n_nontarget", r.num_nontarget}};
}

/// Minimal SVG of one or more DET curves (FAR on x, FRR on y, linear axes).
inline std::string RenderDetSvg(const std::vector<std::pair<std::string, std::vector<DetPoint>>> &curves) {
  const int w = 480, h = 480, pad = 50;
  const char *colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  const int side = w - 2 * pad;
  os << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << side << "\" height=\"" << side
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << pad << "\" y1=\"" << pad + side << "\" x2=\"" << pad + side << "\" y2=\"" << pad
     << "\" stroke=\"#bbbbbb\" stroke-dasharray=\"4\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\" font-size=\"13\">false accept rate</text>\n";
  os << "<text x=\"14\" y=\"" << h / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 14 "
     << h / 2 << ")\">false reject rate</text>\n";
  char buf[64];
  for (std::size_t c = 0; c < curves.size(); ++c) {
    os << "<polyline fill=\"none\" stroke=\"" << colors[c % 6] << "\" stroke-width=\"1.5\" points=\"";
    for (const auto &p : curves[c].second) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", pad + p.far * side, pad + (1.0 - p.frr) * side);
      os << buf;
    }
    os << "\"/>\n";
    os << "<text x=\"" << pad + 10 << "\" y=\"" << pad + 18 + 16 * static_cast<int>(c) << "\" font-size=\"12\" fill=\""
       << colors[c % 6] << "\">" << curves[c].first << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace ctdvec

#endif  // CTDVEC_EVALKIT_HPP
