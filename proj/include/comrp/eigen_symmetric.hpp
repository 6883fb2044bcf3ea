// Copyright 2026 The comrp Authors
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

#include <vector>

#include "comrp/matrix.hpp"

namespace comrp {

struct SymmetricEigen {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column j pairs with values[j]
};

/// Full eigendecomposition of a dense real symmetric matrix by Householder
/// tridiagonalization followed by the implicit-shift QL iteration.
///
/// Throws NotSymmetric when |a(i,j) - a(j,i)| exceeds tol * max(1, max|a|)
/// or an entry is non-finite, and NoConvergence when an eigenvalue needs
/// more than `max_sweeps` QL sweeps. Each eigenvector is sign-normalized so
/// that its first largest-magnitude component is positive.
SymmetricEigen eig_symmetric(const Matrix& a, double tol = 1e-9, int max_sweeps = 60);

}  // namespace comrp
