#pragma once

// Linear-SCM algebra over weighted admissible adjacency matrices.
//
//   decode:  X = (I - A)^{-1} E      (forward substitution, unit diagonal)
//   encode:  E = (I - A) X
//
// A need not be binary; training feeds the structure estimate straight in.

#include "cdid/graph.hpp"

namespace cdid {

/// Throws DimensionMismatch / TimeOrderViolation when A is not a strictly
/// lower-triangular N x N matrix compatible with a row count of `rows`.
void check_admissible(const Matrix& a, Eigen::Index rows);

Matrix decode(const Matrix& a, const Matrix& noise);
Matrix encode(const Matrix& a, const Matrix& repr);

/// Copy of A with every target row zeroed: Pa(x_t) = {} for each target.
Matrix intervene_structure(const Matrix& a, const InterventionView& view);
Matrix intervene_representation(const Matrix& a, const Matrix& noise, const InterventionView& view);

/// Adjoint of decode. Given X = decode(A, E) and G = dL/dX, returns
/// dL/dE = (I - A)^{-T} G.  dL/dA is then (dL/dE) X^T on admissible entries.
Matrix decode_adjoint(const Matrix& a, const Matrix& grad_repr);

}  // namespace cdid
