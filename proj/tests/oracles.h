// tests/oracles.h
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

// Reference computations the tests compare the library against.  These are
// written the slow, obvious way and share no code with the library.

#ifndef CTDVEC_TESTS_ORACLES_H
#define CTDVEC_TESTS_ORACLES_H

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "ctdvec/backend.hpp"
#include "ctdvec/nn/tensor.hpp"

namespace ctdvec::oracle {

inline VectorD RandomVector(Eigen::Index n, std::mt19937_64 &rng) {
  VectorD v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = nn::StandardNormal(rng);
  return v;
}

inline MatrixD RandomMatrix(Eigen::Index r, Eigen::Index c, std::mt19937_64 &rng) {
  MatrixD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nn::StandardNormal(rng);
  return m;
}

/// Haar-ish orthogonal matrix from the QR of a Gaussian matrix.
inline MatrixD RandomRotation(Eigen::Index d, std::mt19937_64 &rng) {
  Eigen::HouseholderQR<MatrixD> qr(RandomMatrix(d, d, rng));
  return qr.householderQ() * MatrixD::Identity(d, d);
}

inline double LogDet(const MatrixD &m) {
  Eigen::LLT<MatrixD> llt(m);
  double s = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) s += 2.0 * std::log(llt.matrixL()(i, i));
  return s;
}

inline double GaussianLogPdf(const VectorD &x, const VectorD &mean, const MatrixD &cov) {
  Eigen::LLT<MatrixD> llt(cov);
  const VectorD z = llt.matrixL().solve(x - mean);
  return -0.5 * (z.squaredNorm() + LogDet(cov) + static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi));
}

struct PldaTruth {
  VectorD mu;
  MatrixD sigma_b;
  MatrixD sigma_w;
};

inline PldaTruth RandomPldaTruth(Eigen::Index d, std::mt19937_64 &rng) {
  PldaTruth t;
  t.mu = 2.0 * RandomVector(d, rng);
  MatrixD a = RandomMatrix(d, d, rng), b = RandomMatrix(d, d, rng);
  t.sigma_b = a * a.transpose() / static_cast<double>(d) + 0.3 * MatrixD::Identity(d, d);
  t.sigma_w = 0.5 * b * b.transpose() / static_cast<double>(d) + 0.2 * MatrixD::Identity(d, d);
  return t;
}

/// Appends `classes` x `per` samples (one per row) and their labels.
inline MatrixD SamplePlda(const PldaTruth &t, int classes, int per, std::mt19937_64 &rng,
                          std::vector<int> &labels, int label_offset = 0) {
  const Eigen::Index d = t.mu.size();
  Eigen::LLT<MatrixD> lb(t.sigma_b), lw(t.sigma_w);
  MatrixD x(classes * per, d);
  for (int c = 0; c < classes; ++c) {
    VectorD y = t.mu + lb.matrixL() * RandomVector(d, rng);
    for (int i = 0; i < per; ++i) {
      x.row(c * per + i) = (y + lw.matrixL() * RandomVector(d, rng)).transpose();
      labels.push_back(label_offset + c);
    }
  }
  return x;
}

/// log N([e; t]; [mu; mu], same) - log N([e; t]; [mu; mu], diff), with the
/// 2d x 2d covariances written out explicitly.
inline double JointGaussianLlr(const PldaModel &m, const VectorD &e, const VectorD &t) {
  const Eigen::Index d = m.mu.size();
  const MatrixD tot = m.sigma_b + m.sigma_w;
  MatrixD same(2 * d, 2 * d), diff = MatrixD::Zero(2 * d, 2 * d);
  same << tot, m.sigma_b, m.sigma_b, tot;
  diff.topLeftCorner(d, d) = tot;
  diff.bottomRightCorner(d, d) = tot;
  VectorD z(2 * d), mean(2 * d);
  z << e, t;
  mean << m.mu, m.mu;
  return GaussianLogPdf(z, mean, same) - GaussianLogPdf(z, mean, diff);
}

/// Sum over classes of the log density of the stacked class samples, whose
/// covariance is I (x) Sw + 11^T (x) Sb.
inline double PldaDirectLogLikelihood(const PldaModel &m, const MatrixD &x, const std::vector<int> &labels) {
  std::map<int, std::vector<Eigen::Index>> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) rows[labels[i]].push_back(static_cast<Eigen::Index>(i));
  const Eigen::Index d = m.mu.size();
  double ll = 0;
  for (const auto &[label, idx] : rows) {
    const Eigen::Index n = static_cast<Eigen::Index>(idx.size());
    MatrixD cov(n * d, n * d);
    VectorD z(n * d), mean(n * d);
    for (Eigen::Index i = 0; i < n; ++i) {
      z.segment(i * d, d) = x.row(idx[static_cast<std::size_t>(i)]).transpose();
      mean.segment(i * d, d) = m.mu;
      for (Eigen::Index j = 0; j < n; ++j)
        cov.block(i * d, j * d, d, d) = m.sigma_b + (i == j ? m.sigma_w : MatrixD::Zero(d, d));
    }
    ll += GaussianLogPdf(z, mean, cov);
  }
  return ll;
}

// ---------------------------------------------------------------------------
// EER by brute-force threshold sweep with binary-search counting.

struct BruteEer {
  double eer;
  double threshold;
};

inline BruteEer BruteForceEer(std::vector<double> target, std::vector<double> nontarget) {
  std::sort(target.begin(), target.end());
  std::sort(nontarget.begin(), nontarget.end());
  std::vector<double> thresholds(target);
  thresholds.insert(thresholds.end(), nontarget.begin(), nontarget.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());
  auto frr = [&](double th) {
    return static_cast<double>(std::lower_bound(target.begin(), target.end(), th) - target.begin()) /
           static_cast<double>(target.size());
  };
  auto far = [&](double th) {
    return static_cast<double>(nontarget.end() - std::lower_bound(nontarget.begin(), nontarget.end(), th)) /
           static_cast<double>(nontarget.size());
  };
  double prev_th = thresholds[0], prev_d = frr(prev_th) - far(prev_th), prev_frr = frr(prev_th);
  for (std::size_t j = 1; j < thresholds.size(); ++j) {
    const double th = thresholds[j], r = frr(th), a = far(th), dd = r - a;
    if (dd >= 0) {
      if (dd == 0) return {r, th};
      const double alpha = prev_d / (prev_d - dd);
      return {prev_frr + alpha * (r - prev_frr), std::isinf(th) ? prev_th : prev_th + alpha * (th - prev_th)};
    }
    prev_th = th;
    prev_d = dd;
    prev_frr = r;
  }
  return {std::numeric_limits<double>::quiet_NaN(), 0.0};
}

// ---------------------------------------------------------------------------
// Spectra

/// Magnitude of a direct O(n^2) DFT, bins 0..n/2.
inline std::vector<double> DirectDftMagnitude(const std::vector<double> &x) {
  const std::size_t n = x.size();
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t t = 0; t < n; ++t)
      acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n));
    out[k] = std::abs(acc);
  }
  return out;
}

}  // namespace ctdvec::oracle

#endif  // CTDVEC_TESTS_ORACLES_H
