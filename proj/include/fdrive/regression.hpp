// Copyright 2026 The fdrive Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>

#include <Eigen/Dense>

#include "fdrive/core.hpp"

namespace fdrive {

struct LeastSquaresResult {
  Eigen::VectorXd coeffs;
  Eigen::VectorXd residuals;
  double residual_rms = 0.0;
  Eigen::Index rank = 0;
  double condition = 0.0;  // ratio of extreme singular values of the column-scaled design
};

/// Solves min |A x - y|^2 (+ ridge |x|^2). Columns are scaled to unit norm
/// before factorization so that the rank test and condition number do not
/// depend on units. Throws DataError on rank deficiency.
inline LeastSquaresResult least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                                        double ridge = 0.0) {
  if (a.rows() != y.size()) throw DataError("least_squares: row count mismatch");
  if (a.rows() < a.cols()) throw DataError("least_squares: fewer rows than unknowns");
  Eigen::VectorXd scale = a.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < scale.size(); ++j)
    if (!(scale[j] > 0.0)) throw DataError("least_squares: all-zero design column " + std::to_string(j));
  const Eigen::MatrixXd as = a * scale.cwiseInverse().asDiagonal();

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(as);
  const auto& sv = svd.singularValues();
  LeastSquaresResult r;
  r.condition = sv[sv.size() - 1] > 0.0 ? sv[0] / sv[sv.size() - 1]
                                        : std::numeric_limits<double>::infinity();

  Eigen::VectorXd xs;
  if (ridge > 0.0) {
    const Eigen::Index n = as.cols();
    Eigen::MatrixXd aug(as.rows() + n, n);
    aug << as, std::sqrt(ridge) * scale.asDiagonal().toDenseMatrix();
    Eigen::VectorXd yaug(as.rows() + n);
    yaug << y, Eigen::VectorXd::Zero(n);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(aug);
    r.rank = qr.rank();
    xs = qr.solve(yaug);
  } else {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(as);
    qr.setThreshold(1e-12);
    r.rank = qr.rank();
    if (r.rank < as.cols())
      throw DataError("least_squares: rank deficient design (rank " + std::to_string(r.rank) + " of " +
                      std::to_string(as.cols()) + ", condition " + std::to_string(r.condition) + ")");
    xs = qr.solve(y);
  }
  r.coeffs = xs.cwiseQuotient(scale);
  r.residuals = y - a * r.coeffs;
  r.residual_rms = std::sqrt(r.residuals.squaredNorm() / static_cast<double>(y.size()));
  return r;
}

}  // namespace fdrive
