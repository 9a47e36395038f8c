// ctdvec/backend.hpp
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

// Scoring back-ends over speaker vectors: cosine, LDA + cosine, and
// two-covariance PLDA (y ~ N(mu, Sb), x | y ~ N(y, Sw)).

#ifndef CTDVEC_BACKEND_HPP
#define CTDVEC_BACKEND_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ctdvec/base.hpp"
#include "ctdvec/binary_io.hpp"
#include "ctdvec/ctdnn.hpp"

namespace ctdvec {

inline double CosineScore(const VectorD &a, const VectorD &b) {
  if (a.size() != b.size())
    Fail(ErrorCode::kShape, "cosine of vectors with dims ", a.size(), " and ", b.size());
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0) || !(nb > 0)) Fail(ErrorCode::kUndefinedScore, "cosine score of a zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

namespace detail {

struct ClassStats {
  std::vector<int> classes;       // distinct labels, ascending
  std::vector<Eigen::Index> count;
  std::vector<VectorD> mean;
  MatrixD within_scatter;         // sum over classes of sum (x - m_c)(x - m_c)^T
  VectorD global_mean;
  Eigen::Index total = 0;
};

/// `x` holds one sample per row.
inline ClassStats ComputeClassStats(const MatrixD &x, const std::vector<int> &labels) {
  if (x.rows() != static_cast<Eigen::Index>(labels.size()))
    Fail(ErrorCode::kShape, x.rows(), " vectors but ", labels.size(), " labels");
  if (x.rows() == 0) Fail(ErrorCode::kPrecondition, "no training vectors");
  if (!x.allFinite()) Fail(ErrorCode::kNumerical, "non-finite training vectors");
  std::map<int, std::vector<Eigen::Index>> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) rows[labels[i]].push_back(static_cast<Eigen::Index>(i));
  ClassStats s;
  const Eigen::Index d = x.cols();
  s.total = x.rows();
  s.global_mean = x.colwise().mean().transpose();
  s.within_scatter = MatrixD::Zero(d, d);
  for (auto &[label, idx] : rows) {
    VectorD m = VectorD::Zero(d);
    for (Eigen::Index r : idx) m += x.row(r).transpose();
    m /= static_cast<double>(idx.size());
    MatrixD centered(static_cast<Eigen::Index>(idx.size()), d);
    for (std::size_t k = 0; k < idx.size(); ++k) centered.row(static_cast<Eigen::Index>(k)) = x.row(idx[k]) - m.transpose();
    s.within_scatter.noalias() += centered.transpose() * centered;
    s.classes.push_back(label);
    s.count.push_back(static_cast<Eigen::Index>(idx.size()));
    s.mean.push_back(std::move(m));
  }
  return s;
}

inline MatrixD Symmetrize(const MatrixD &m) { return 0.5 * (m + m.transpose()); }

inline double LogDetPd(const MatrixD &m, const char *what) {
  Eigen::LLT<MatrixD> llt(m);
  if (llt.info() != Eigen::Success) Fail(ErrorCode::kNumerical, what, " is not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// LDA

struct LdaTransform {
  MatrixD projection;  // p x D
  VectorD mean;
  int num_classes = 0;

  Eigen::Index input_dim() const { return projection.cols(); }
  Eigen::Index output_dim() const { return projection.rows(); }

  VectorD Apply(const VectorD &v) const {
    if (v.size() != projection.cols())
      Fail(ErrorCode::kShape, "LDA expects dim ", projection.cols(), ", got ", v.size());
    return projection * (v - mean);
  }
};

/// Top-p generalized eigenvectors of (Sb, Sw + eps I), eps = 1e-6 tr(Sw)/D,
/// in descending eigenvalue order, each with unit Sw-norm.  Rows are signed
/// so their largest-magnitude entry is positive.
inline LdaTransform FitLda(const MatrixD &x, const std::vector<int> &labels, int p) {
  detail::ClassStats s = detail::ComputeClassStats(x, labels);
  const Eigen::Index d = x.cols();
  const int classes = static_cast<int>(s.classes.size());
  if (classes < 2) Fail(ErrorCode::kPrecondition, "LDA needs at least 2 classes, got ", classes);
  if (std::none_of(s.count.begin(), s.count.end(), [](Eigen::Index n) { return n >= 2; }))
    Fail(ErrorCode::kPrecondition, "LDA needs a class with at least 2 samples");
  if (p < 1 || p > std::min<Eigen::Index>(d, classes - 1))
    Fail(ErrorCode::kConfig, "LDA dimension ", p, " must be in [1, min(D=", d, ", classes-1=",
         classes - 1, ")]");

  const double n = static_cast<double>(s.total);
  MatrixD sw = s.within_scatter / n;
  MatrixD sb = MatrixD::Zero(d, d);
  for (std::size_t c = 0; c < s.classes.size(); ++c) {
    VectorD diff = s.mean[c] - s.global_mean;
    sb.noalias() += static_cast<double>(s.count[c]) * diff * diff.transpose();
  }
  sb /= n;
  const double eps = 1e-6 * sw.trace() / static_cast<double>(d);
  sw.diagonal().array() += eps;
  sw = detail::Symmetrize(sw);
  Eigen::LLT<MatrixD> check(sw);
  if (!(eps > 0) || check.info() != Eigen::Success)
    Fail(ErrorCode::kNumerical, "within-class scatter is singular after ridge");

  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixD> solver(detail::Symmetrize(sb), sw);
  if (solver.info() != Eigen::Success) Fail(ErrorCode::kNumerical, "LDA eigensolver failed");
  LdaTransform t;
  t.mean = s.global_mean;
  t.num_classes = classes;
  t.projection.resize(p, d);
  for (int k = 0; k < p; ++k) {
    VectorD v = solver.eigenvectors().col(d - 1 - k);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    t.projection.row(k) = v.transpose();
  }
  return t;
}

// ---------------------------------------------------------------------------
// PLDA

struct PldaModel {
  VectorD mu;
  MatrixD sigma_b;
  MatrixD sigma_w;

  Eigen::Index dim() const { return mu.size(); }
};

struct PldaFit {
  PldaModel model;
  /// Log-likelihood before the first iteration and after each one.
  std::vector<double> log_likelihood;
  int iterations = 0;
};

namespace detail {

/// Marginal log-likelihood of every class's data under the model.
inline double PldaLogLikelihood(const PldaModel &m, const ClassStats &s) {
  const double d = static_cast<double>(m.dim());
  Eigen::LLT<MatrixD> w_llt(m.sigma_w);
  if (w_llt.info() != Eigen::Success) Fail(ErrorCode::kNumerical, "Sw is not positive definite");
  const double logdet_w = LogDetPd(m.sigma_w, "Sw");
  const MatrixD w_inv = w_llt.solve(MatrixD::Identity(m.dim(), m.dim()));
  double ll = -0.5 * (w_inv.cwiseProduct(s.within_scatter).sum());
  std::map<Eigen::Index, std::pair<Eigen::LLT<MatrixD>, double>> cache;
  for (std::size_t c = 0; c < s.mean.size(); ++c) {
    const Eigen::Index n = s.count[c];
    auto it = cache.find(n);
    if (it == cache.end()) {
      MatrixD cov = m.sigma_w + static_cast<double>(n) * m.sigma_b;
      it = cache.emplace(n, std::make_pair(Eigen::LLT<MatrixD>(cov), LogDetPd(cov, "Sw + n Sb"))).first;
    }
    const VectorD diff = s.mean[c] - m.mu;
    const double nd = static_cast<double>(n);
    ll -= 0.5 * (nd * d * std::log(2.0 * std::numbers::pi) + (nd - 1.0) * logdet_w + it->second.second +
                 nd * diff.dot(it->second.first.solve(diff)));
  }
  return ll;
}

}  // namespace detail

/// EM for the two-covariance model.  Stops after `max_iter` iterations or
/// when the relative log-likelihood change drops below `tol`.
inline PldaFit FitPlda(const MatrixD &x, const std::vector<int> &labels, int max_iter = 20,
                       double tol = 1e-6) {
  detail::ClassStats s = detail::ComputeClassStats(x, labels);
  const Eigen::Index d = x.cols();
  if (s.classes.size() < 2) Fail(ErrorCode::kPrecondition, "PLDA needs at least 2 classes");
  for (std::size_t c = 0; c < s.classes.size(); ++c)
    if (s.count[c] < 2)
      Fail(ErrorCode::kPrecondition, "PLDA needs at least 2 samples per class; class ",
           s.classes[c], " has ", s.count[c]);
  const double n = static_cast<double>(s.total);
  const double k = static_cast<double>(s.classes.size());

  PldaFit fit;
  PldaModel &m = fit.model;
  m.mu = s.global_mean;
  m.sigma_w = s.within_scatter / n;
  m.sigma_b = MatrixD::Zero(d, d);
  for (const auto &mean : s.mean) m.sigma_b.noalias() += (mean - m.mu) * (mean - m.mu).transpose();
  m.sigma_b /= k;
  fit.log_likelihood.push_back(detail::PldaLogLikelihood(m, s));

  for (int iter = 1; iter <= max_iter; ++iter) {
    // E-step: y_c | data ~ N(m_c, C_c), written without inverting Sb so a
    // rank-deficient Sb is fine.
    std::map<Eigen::Index, std::pair<MatrixD, MatrixD>> gain;  // n -> (Sb G^-1, C)
    VectorD mu_new = VectorD::Zero(d);
    std::vector<VectorD> post_mean(s.mean.size());
    MatrixD sum_cov_b = MatrixD::Zero(d, d);
    MatrixD sum_w = s.within_scatter;
    for (std::size_t c = 0; c < s.mean.size(); ++c) {
      const Eigen::Index cn = s.count[c];
      auto it = gain.find(cn);
      if (it == gain.end()) {
        MatrixD g = m.sigma_b + m.sigma_w / static_cast<double>(cn);
        Eigen::LLT<MatrixD> llt(g);
        if (llt.info() != Eigen::Success)
          Fail(ErrorCode::kNumerical, "PLDA EM iteration ", iter, ": Sb + Sw/n is not positive definite");
        MatrixD k_gain = llt.solve(m.sigma_b).transpose();  // Sb G^-1
        MatrixD cov = detail::Symmetrize(m.sigma_b - k_gain * m.sigma_b);
        it = gain.emplace(cn, std::make_pair(std::move(k_gain), std::move(cov))).first;
      }
      post_mean[c] = m.mu + it->second.first * (s.mean[c] - m.mu);
      mu_new += post_mean[c];
      sum_cov_b += it->second.second;
      const VectorD r = s.mean[c] - post_mean[c];
      sum_w.noalias() += static_cast<double>(cn) * (r * r.transpose() + it->second.second);
    }
    mu_new /= k;
    MatrixD sb = sum_cov_b;
    for (const auto &pm : post_mean) sb.noalias() += (pm - mu_new) * (pm - mu_new).transpose();
    m.mu = mu_new;
    m.sigma_b = detail::Symmetrize(sb / k);
    m.sigma_w = detail::Symmetrize(sum_w / n);
    if (!m.sigma_b.allFinite() || !m.sigma_w.allFinite())
      Fail(ErrorCode::kNumerical, "PLDA EM iteration ", iter, ": non-finite covariance");
    Eigen::LLT<MatrixD> w_check(m.sigma_w);
    if (w_check.info() != Eigen::Success)
      Fail(ErrorCode::kNumerical, "PLDA EM iteration ", iter, ": Sw is not positive definite");
    const double prev = fit.log_likelihood.back();
    fit.log_likelihood.push_back(detail::PldaLogLikelihood(m, s));
    fit.iterations = iter;
    if (std::abs(fit.log_likelihood.back() - prev) < tol * std::abs(prev)) break;
  }
  return fit;
}

/// Precomputed log-likelihood ratio between the same-speaker joint Gaussian
/// [[T, Sb], [Sb, T]] and the independent one [[T, 0], [0, T]], T = Sb + Sw.
class PldaScorer {
 public:
  PldaScorer() = default;
  explicit PldaScorer(const PldaModel &m) : mu_(m.mu) {
    const Eigen::Index d = m.dim();
    const MatrixD t = m.sigma_b + m.sigma_w;
    Eigen::LLT<MatrixD> t_llt(t);
    if (t_llt.info() != Eigen::Success) Fail(ErrorCode::kNumerical, "PLDA total covariance is not PD");
    const MatrixD t_inv = detail::Symmetrize(t_llt.solve(MatrixD::Identity(d, d)));
    const MatrixD schur = detail::Symmetrize(t - m.sigma_b * t_inv * m.sigma_b);
    Eigen::LLT<MatrixD> s_llt(schur);
    if (s_llt.info() != Eigen::Success)
      Fail(ErrorCode::kNumerical, "PLDA same-speaker covariance is not PD");
    const MatrixD a = detail::Symmetrize(s_llt.solve(MatrixD::Identity(d, d)));
    q_ = t_inv - a;
    p_ = detail::Symmetrize(t_inv * m.sigma_b * a);  // equals -C of the block inverse
    constant_ = 0.5 * (detail::LogDetPd(t, "T") - detail::LogDetPd(schur, "T - Sb T^-1 Sb"));
  }

  double Score(const VectorD &enroll, const VectorD &test) const {
    if (enroll.size() != mu_.size() || test.size() != mu_.size())
      Fail(ErrorCode::kShape, "PLDA expects dim ", mu_.size());
    const VectorD e = enroll - mu_, t = test - mu_;
    return 0.5 * (e.dot(q_ * e) + t.dot(q_ * t)) + e.dot(p_ * t) + constant_;
  }

 private:
  VectorD mu_;
  MatrixD q_, p_;
  double constant_ = 0.0;
};

inline double PldaScore(const PldaModel &m, const VectorD &enroll, const VectorD &test) {
  return PldaScorer(m).Score(enroll, test);
}

// ---------------------------------------------------------------------------
// Backend: optional centering + length norm, then none / LDA / LDA + PLDA.

enum class BackendKind : std::uint8_t { kCosine = 0, kLda = 1, kPlda = 2 };

inline const char *BackendKindName(BackendKind k) {
  switch (k) {
    case BackendKind::kCosine: return "cosine";
    case BackendKind::kLda: return "lda";
    case BackendKind::kPlda: return "plda";
  }
  return "?";
}

inline BackendKind ParseBackendKind(const std::string &s) {
  if (s == "cosine" || s == "none") return BackendKind::kCosine;
  if (s == "lda") return BackendKind::kLda;
  if (s == "plda") return BackendKind::kPlda;
  Fail(ErrorCode::kConfig, "unknown backend '", s, "' (cosine, lda, plda)");
}

struct BackendOptions {
  int lda_dim = 150;
  /// PLDA runs in the LDA space when true.
  bool plda_lda = true;
  bool length_norm = false;
  int plda_iterations = 20;
  double plda_tol = 1e-6;

  Json ToJson() const {
    return Json{{"lda_dim", lda_dim},
                {"plda_lda", plda_lda},
                {"length_norm", length_norm},
                {"plda_iterations", plda_iterations},
                {"plda_tol", plda_tol}};
  }
  static BackendOptions FromJson(const Json &j, const std::string &where = "backend") {
    RejectUnknownKeys(j, {"lda_dim", "plda_lda", "length_norm", "plda_iterations", "plda_tol"}, where);
    BackendOptions o;
    ReadKey(j, "lda_dim", o.lda_dim, where);
    ReadKey(j, "plda_lda", o.plda_lda, where);
    ReadKey(j, "length_norm", o.length_norm, where);
    ReadKey(j, "plda_iterations", o.plda_iterations, where);
    ReadKey(j, "plda_tol", o.plda_tol, where);
    if (o.lda_dim < 1) Fail(ErrorCode::kConfig, where, ".lda_dim must be >= 1");
    if (o.plda_iterations < 1) Fail(ErrorCode::kConfig, where, ".plda_iterations must be >= 1");
    return o;
  }
};

inline constexpr std::uint32_t kBackendFormatVersion = 1;

class Backend {
 public:
  Backend() = default;

  /// `x` holds one training vector per row.  The LDA dimension is clamped
  /// to min(lda_dim, D, classes - 1).
  static Backend Fit(BackendKind kind, const MatrixD &x, const std::vector<int> &labels,
                     const BackendOptions &opts = {}) {
    Backend b;
    b.kind_ = kind;
    b.input_dim_ = static_cast<std::uint32_t>(x.cols());
    if (kind == BackendKind::kCosine) return b;
    MatrixD h = x;
    if (opts.length_norm) {
      b.center_ = x.colwise().mean().transpose();
      for (Eigen::Index r = 0; r < h.rows(); ++r) h.row(r) = b.LengthNorm(h.row(r).transpose()).transpose();
    }
    const bool use_lda = kind == BackendKind::kLda || opts.plda_lda;
    if (use_lda) {
      std::vector<int> distinct = labels;
      std::sort(distinct.begin(), distinct.end());
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      const int p = static_cast<int>(std::min<Eigen::Index>(
          {static_cast<Eigen::Index>(opts.lda_dim), x.cols(), static_cast<Eigen::Index>(distinct.size()) - 1}));
      if (p < opts.lda_dim) LogInfo("LDA dimension clamped from ", opts.lda_dim, " to ", p);
      b.lda_ = FitLda(h, labels, std::max(p, 1));
      MatrixD projected(h.rows(), p);
      for (Eigen::Index r = 0; r < h.rows(); ++r) projected.row(r) = b.lda_.Apply(h.row(r).transpose()).transpose();
      h = std::move(projected);
    }
    if (kind == BackendKind::kPlda) b.plda_ = FitPlda(h, labels, opts.plda_iterations, opts.plda_tol).model;
    b.Quantize();
    return b;
  }

  BackendKind kind() const { return kind_; }
  bool has_lda() const { return lda_.projection.size() > 0; }
  const LdaTransform &lda() const { return lda_; }
  const PldaModel &plda() const { return plda_; }

  /// Length norm and LDA as configured.
  VectorD Transform(const VectorD &v) const {
    // A default-constructed (cosine) backend accepts any dimension.
    if (input_dim_ != 0 && v.size() != static_cast<Eigen::Index>(input_dim_))
      Fail(ErrorCode::kShape, "backend expects dim ", input_dim_, ", got ", v.size());
    VectorD h = center_.size() ? LengthNorm(v) : v;
    if (has_lda()) h = lda_.Apply(h);
    return h;
  }

  /// Scores already-transformed vectors.
  double ScoreTransformed(const VectorD &e, const VectorD &t) const {
    if (kind_ == BackendKind::kPlda) return scorer_.Score(e, t);
    return CosineScore(e, t);
  }

  double Score(const VectorD &enroll, const VectorD &test) const {
    return ScoreTransformed(Transform(enroll), Transform(test));
  }

  // "BKND", u32 version, u8 kind, u32 input dim, then blobs of
  // (u32 rows, u32 cols, rows*cols f32): center, lda mean, lda projection,
  // plda mu, plda Sb, plda Sw.  Unused blobs are 0 x 0.
  std::string Encode() const {
    ByteWriter out;
    out.PutMagic("BKND");
    out.PutU32(kBackendFormatVersion);
    out.PutU8(static_cast<std::uint8_t>(kind_));
    out.PutU32(input_dim_);
    auto put = [&](const MatrixD &m) {
      out.PutU32(static_cast<std::uint32_t>(m.rows()));
      out.PutU32(static_cast<std::uint32_t>(m.cols()));
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out.PutF32(static_cast<float>(m(r, c)));
    };
    put(center_);
    put(lda_.mean);
    put(lda_.projection);
    put(plda_.mu);
    put(plda_.sigma_b);
    put(plda_.sigma_w);
    return std::move(out.bytes());
  }

  static Backend Decode(std::string_view bytes, const std::string &source) {
    ByteReader in(bytes, source);
    in.ExpectMagic("BKND");
    in.ExpectVersion(kBackendFormatVersion);
    Backend b;
    const std::uint8_t kind = in.GetU8();
    if (kind > 2) Fail(ErrorCode::kMalformedHeader, source, ": unknown backend kind ", int(kind));
    b.kind_ = static_cast<BackendKind>(kind);
    b.input_dim_ = in.GetU32();
    auto get = [&](const char *what) {
      const std::uint32_t rows = in.GetU32(), cols = in.GetU32();
      if (static_cast<std::uint64_t>(rows) * cols * 4 > in.remaining())
        Fail(ErrorCode::kTruncated, source, ": blob '", what, "' runs past the end");
      MatrixD m(rows, cols);
      for (std::uint32_t r = 0; r < rows; ++r)
        for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = in.GetF32();
      if (!m.allFinite()) Fail(ErrorCode::kNumerical, source, ": non-finite ", what);
      return m;
    };
    auto get_vec = [&](const char *what) {
      MatrixD m = get(what);
      if (m.size() && m.cols() != 1) Fail(ErrorCode::kShape, source, ": ", what, " must be a column");
      return VectorD(m.size() ? VectorD(m.col(0)) : VectorD());
    };
    b.center_ = get_vec("center");
    b.lda_.mean = get_vec("lda mean");
    b.lda_.projection = get("lda projection");
    b.plda_.mu = get_vec("plda mu");
    b.plda_.sigma_b = get("plda Sb");
    b.plda_.sigma_w = get("plda Sw");
    in.ExpectEnd();
    b.Validate(source);
    if (b.kind_ == BackendKind::kPlda) b.scorer_ = PldaScorer(b.plda_);
    return b;
  }

  void Save(const std::filesystem::path &path) const { WriteFileBytes(path, Encode()); }
  static Backend Load(const std::filesystem::path &path) {
    return Decode(ReadFileBytes(path), path.string());
  }

 private:
  VectorD LengthNorm(const VectorD &v) const {
    VectorD c = v - center_;
    const double n = c.norm();
    if (!(n > 0)) Fail(ErrorCode::kUndefinedScore, "length norm of a vector equal to the center");
    return c * (std::sqrt(static_cast<double>(c.size())) / n);
  }

  /// Parameters are stored as float32; rounding them here keeps a freshly
  /// fitted backend identical to one loaded from disk.
  void Quantize() {
    auto q = [](auto &m) { m = m.template cast<float>().template cast<double>(); };
    q(center_);
    q(lda_.mean);
    q(lda_.projection);
    q(plda_.mu);
    q(plda_.sigma_b);
    q(plda_.sigma_w);
    if (kind_ == BackendKind::kPlda) scorer_ = PldaScorer(plda_);
  }

  void Validate(const std::string &source) const {
    const Eigen::Index d = input_dim_;
    if (center_.size() && center_.size() != d) Fail(ErrorCode::kShape, source, ": center dim");
    if (has_lda() && (lda_.projection.cols() != d || lda_.mean.size() != d))
      Fail(ErrorCode::kShape, source, ": LDA dims do not match input dim ", d);
    if (kind_ == BackendKind::kLda && !has_lda()) Fail(ErrorCode::kShape, source, ": LDA backend without projection");
    if (kind_ == BackendKind::kPlda) {
      const Eigen::Index pd = has_lda() ? lda_.projection.rows() : d;
      if (plda_.mu.size() != pd || plda_.sigma_b.rows() != pd || plda_.sigma_b.cols() != pd ||
          plda_.sigma_w.rows() != pd || plda_.sigma_w.cols() != pd)
        Fail(ErrorCode::kShape, source, ": PLDA dims do not match");
    }
  }

  BackendKind kind_ = BackendKind::kCosine;
  std::uint32_t input_dim_ = 0;
  VectorD center_;
  LdaTransform lda_;
  PldaModel plda_;
  PldaScorer scorer_;
};

}  // namespace ctdvec

#endif  // CTDVEC_BACKEND_HPP
