// ctdvec/nn/grad_check.hpp
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

#ifndef CTDVEC_NN_GRAD_CHECK_HPP
#define CTDVEC_NN_GRAD_CHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ctdvec/nn/layers.hpp"
#include "ctdvec/nn/tensor.hpp"

namespace ctdvec::nn {

struct BlockGradError {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates whose +/- eps evaluations changed the piecewise regime.
  std::size_t skipped = 0;
};

struct GradCheckReport {
  std::string layer_id;
  double max_rel_error = 0.0;
  std::vector<BlockGradError> blocks;

  bool Passed(double tol) const { return max_rel_error < tol; }
};

inline double RelativeError(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

struct GradCheckOptions {
  double eps = 1e-3;
  /// 0 checks every coordinate; otherwise a seeded random sample per block.
  std::size_t max_coords_per_block = 0;
  std::uint64_t seed = 1;
  bool check_input = true;
};

/// Something with Forward/Backward/Params/RegimeSignature in double precision:
/// a single Layer<double> or a whole network.
template <typename M>
concept Differentiable = requires(M m, const Tensor<double> &t) {
  { m.Forward(t) } -> std::same_as<Tensor<double>>;
  { m.Backward(t) } -> std::same_as<Tensor<double>>;
  { m.Params() } -> std::same_as<std::vector<ParamRef<double>>>;
  { m.RegimeSignature() } -> std::convertible_to<std::uint64_t>;
};

/// Scalar objective over the module output: returns value, fills gradient.
using Objective = std::function<double(const Tensor<double> &, Tensor<double> &)>;

/// L(y) = sum_i r_i y_i with fixed random r; scaled so |L|-sized rounding in
/// the finite differences stays far below the 1e-8 relative-error floor.
inline Objective RandomProjectionObjective(const Shape &output_shape, std::uint64_t seed,
                                           double scale = 1e-2) {
  std::mt19937_64 rng(seed);
  auto r = std::make_shared<Tensor<double>>(RandomTensor<double>(output_shape, rng));
  const double n = static_cast<double>(std::max<Eigen::Index>(1, r->size()));
  for (double &v : r->values()) v *= scale / n;
  return [r](const Tensor<double> &y, Tensor<double> &grad) {
    grad = *r;
    return y.Flat().dot(r->Flat());
  };
}

namespace detail {

inline std::vector<Eigen::Index> SampleCoords(Eigen::Index n, std::size_t max_coords,
                                              std::mt19937_64 &rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (max_coords == 0 || idx.size() <= max_coords) return idx;
  for (std::size_t i = 0; i < max_coords; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng() % (idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(max_coords);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

/// Central-difference check of the analytic input and parameter gradients.
template <Differentiable M>
GradCheckReport GradCheck(M &module, const Tensor<double> &input, const Objective &objective,
                          const GradCheckOptions &opts = {}, std::string id = "") {
  if (!(opts.eps > 0)) Fail(ErrorCode::kConfig, "grad check eps must be positive");
  GradCheckReport report;
  report.layer_id = std::move(id);

  for (auto &p : module.Params()) p.grad->SetZero();
  Tensor<double> y = module.Forward(input);
  const std::uint64_t regime = module.RegimeSignature();
  Tensor<double> dy;
  objective(y, dy);
  const Tensor<double> dx = module.Backward(dy);

  // Snapshot analytic parameter gradients before any re-evaluation.
  std::vector<Tensor<double>> analytic;
  auto params = module.Params();
  for (auto &p : params) analytic.push_back(*p.grad);

  auto evaluate = [&](const Tensor<double> &x, bool &same_regime) {
    Tensor<double> out = module.Forward(x);
    same_regime = module.RegimeSignature() == regime;
    Tensor<double> scratch;
    return objective(out, scratch);
  };

  std::mt19937_64 rng(opts.seed);
  auto check_block = [&](const std::string &name, Tensor<double> &values,
                         const Tensor<double> &grad, const Tensor<double> &probe_input) {
    BlockGradError block;
    block.name = name;
    for (Eigen::Index i : detail::SampleCoords(values.size(), opts.max_coords_per_block, rng)) {
      const double saved = values[i];
      bool same_plus = false, same_minus = false;
      values[i] = saved + opts.eps;
      const double plus = evaluate(probe_input, same_plus);
      values[i] = saved - opts.eps;
      const double minus = evaluate(probe_input, same_minus);
      values[i] = saved;
      if (!same_plus || !same_minus) {
        ++block.skipped;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * opts.eps);
      block.max_rel_error = std::max(block.max_rel_error, RelativeError(grad[i], numeric));
      ++block.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, block.max_rel_error);
    report.blocks.push_back(block);
  };

  if (opts.check_input) {
    Tensor<double> x = input;
    // The input block perturbs `x` itself, which check_block re-reads.
    check_block("input", x, dx, x);
  }
  for (std::size_t b = 0; b < params.size(); ++b)
    check_block(params[b].name, *params[b].value, analytic[b], input);
  return report;
}

}  // namespace ctdvec::nn

#endif  // CTDVEC_NN_GRAD_CHECK_HPP
