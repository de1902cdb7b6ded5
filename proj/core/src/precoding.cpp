// SPDX-License-Identifier: Apache-2.0
#include "qmat/precoding.hpp"

#include <stdexcept>

namespace qmat {

Eigen::VectorXcd zf_beamformer(const std::vector<Eigen::RowVectorXcd>& excluded, int M,
                               Rng& rng) {
  if (static_cast<int>(excluded.size()) >= M) {
    throw std::invalid_argument("excluded set must be smaller than antenna count");
  }
  // Orthonormal basis of the span of the excluded rows (as column vectors).
  std::vector<Eigen::VectorXcd> basis;
  for (const auto& row : excluded) {
    if (row.size() != M) throw std::invalid_argument("excluded row has wrong dimension");
    Eigen::VectorXcd b = row.adjoint();
    double norm0 = b.norm();
    for (const auto& q : basis) b -= q * (q.dot(b));
    if (b.norm() < 1e-12 * std::max(norm0, 1.0)) continue;  // dependent row
    basis.push_back(b.normalized());
  }
  // Isotropic direction within the complement.
  for (int attempt = 0; attempt < 16; ++attempt) {
    Eigen::VectorXcd g(M);
    for (int i = 0; i < M; ++i) g(i) = complex_gaussian(rng, 1.0);
    for (const auto& q : basis) g -= q * (q.dot(g));
    double n = g.norm();
    if (n > 1e-9) return g / n;
  }
  throw std::runtime_error("failed to draw a nullspace direction");
}

Eigen::MatrixXcd random_isotropic_columns(int M, int count, Rng& rng) {
  if (count > M) throw std::invalid_argument("column count must not exceed dimension");
  if (count < 0) throw std::invalid_argument("column count must be nonnegative");
  Eigen::MatrixXcd G(M, count);
  if (count == 0) return G;
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < count; ++j) G(i, j) = complex_gaussian(rng, 1.0);
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(G);
  Eigen::MatrixXcd Q = qr.householderQ() * Eigen::MatrixXcd::Identity(M, count);
  Eigen::MatrixXcd R = qr.matrixQR().topRows(count).triangularView<Eigen::Upper>();
  // Fix column phases so the distribution is exactly Haar.
  for (int j = 0; j < count; ++j) {
    std::complex<double> d = R(j, j);
    double a = std::abs(d);
    if (a > 0) Q.col(j) *= d / a;
  }
  return Q;
}

double leakage_power(const Eigen::RowVectorXcd& h_row, const Eigen::VectorXcd& v) {
  return std::norm((h_row * v)(0, 0));
}

}  // namespace qmat
