#include "cdid/scm.hpp"

#include <sstream>

#include "cdid/error.hpp"

namespace cdid {

void check_admissible(const Matrix& a, Eigen::Index rows) {
  if (a.rows() != a.cols()) throw Error(ErrorCode::NonSquare, "adjacency must be square");
  if (a.rows() != rows) {
    std::ostringstream os;
    os << "adjacency is " << a.rows() << "x" << a.cols() << " but matrix has " << rows << " rows";
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = i; j < a.cols(); ++j)
      if (a(i, j) != 0.0) {
        std::ostringstream os;
        os << "(" << i + 1 << "," << j + 1 << ")";
        throw Error(ErrorCode::TimeOrderViolation, os.str());
      }
}

Matrix decode(const Matrix& a, const Matrix& noise) {
  check_admissible(a, noise.rows());
  const Eigen::Index n = a.rows();
  Matrix x = noise;
  for (Eigen::Index i = 1; i < n; ++i)
    x.row(i).noalias() += a.row(i).head(i) * x.topRows(i);
  return x;
}

Matrix encode(const Matrix& a, const Matrix& repr) {
  check_admissible(a, repr.rows());
  return repr - a * repr;
}

Matrix intervene_structure(const Matrix& a, const InterventionView& view) {
  Matrix out = a;
  for (int t : view.targets()) {
    if (t < 0 || t >= a.rows()) throw Error(ErrorCode::IndexOutOfRange, "view target outside matrix");
    out.row(t).setZero();
  }
  return out;
}

Matrix intervene_representation(const Matrix& a, const Matrix& noise, const InterventionView& view) {
  return decode(intervene_structure(a, view), noise);
}

Matrix decode_adjoint(const Matrix& a, const Matrix& grad_repr) {
  // Solve (I - A)^T Y = G: unit upper-triangular, back substitution.
  const Eigen::Index n = a.rows();
  Matrix y = grad_repr;
  for (Eigen::Index i = n - 2; i >= 0; --i)
    y.row(i).noalias() += a.col(i).tail(n - 1 - i).transpose() * y.bottomRows(n - 1 - i);
  return y;
}

}  // namespace cdid
