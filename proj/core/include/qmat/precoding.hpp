// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "qmat/rng.hpp"

namespace qmat {

// Unit-norm vector orthogonal to every row in `excluded`, drawn isotropically
// within the nullspace of the excluded rows. Rows that are numerically
// dependent on earlier ones are dropped.
Eigen::VectorXcd zf_beamformer(const std::vector<Eigen::RowVectorXcd>& excluded, int M,
                               Rng& rng);

// M x count matrix with orthonormal columns whose span is Haar-distributed.
Eigen::MatrixXcd random_isotropic_columns(int M, int count, Rng& rng);

// |h^H v|^2 for a conjugated channel row h^H given as a row vector.
double leakage_power(const Eigen::RowVectorXcd& h_row, const Eigen::VectorXcd& v);

}  // namespace qmat
