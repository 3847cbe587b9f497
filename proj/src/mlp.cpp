#include "cdid/mlp.hpp"

#include <cmath>

#include "cdid/error.hpp"

namespace cdid {

MlpParams MlpParams::zeros(int dim, int hidden) {
  if (dim < 1 || hidden < 1) throw Error(ErrorCode::InvalidArgument, "mlp dimensions must be positive");
  MlpParams p;
  p.w1 = Matrix::Zero(hidden, 2 * dim);
  p.b1 = Vector::Zero(hidden);
  p.w2 = Vector::Zero(hidden);
  p.b2 = 0.0;
  return p;
}

MlpParams MlpParams::random(int dim, int hidden, std::mt19937_64& rng) {
  MlpParams p = zeros(dim, hidden);
  const double r1 = std::sqrt(6.0 / (2.0 * dim + hidden));
  const double r2 = std::sqrt(6.0 / (hidden + 1.0));
  std::uniform_real_distribution<double> u1(-r1, r1), u2(-r2, r2);
  for (Eigen::Index k = 0; k < p.w1.size(); ++k) p.w1.data()[k] = u1(rng);
  for (Eigen::Index k = 0; k < p.w2.size(); ++k) p.w2(k) = u2(rng);
  return p;
}

bool MlpParams::is_finite() const {
  return w1.allFinite() && b1.allFinite() && w2.allFinite() && std::isfinite(b2);
}

std::vector<std::span<double>> MlpParams::blocks() {
  return {{w1.data(), static_cast<size_t>(w1.size())},
          {b1.data(), static_cast<size_t>(b1.size())},
          {w2.data(), static_cast<size_t>(w2.size())},
          {&b2, 1}};
}

std::vector<std::span<const double>> MlpParams::blocks() const {
  return {{w1.data(), static_cast<size_t>(w1.size())},
          {b1.data(), static_cast<size_t>(b1.size())},
          {w2.data(), static_cast<size_t>(w2.size())},
          {&b2, 1}};
}

bool MlpParams::operator==(const MlpParams& o) const {
  return w1.rows() == o.w1.rows() && w1.cols() == o.w1.cols() && w1 == o.w1 && b1 == o.b1 && w2 == o.w2 &&
         b2 == o.b2;
}

PairTape mlp_forward(const MlpParams& p, const Matrix& x) {
  const int n = static_cast<int>(x.rows());
  const int d = p.dim();
  if (x.cols() != d) throw Error(ErrorCode::ShapeMismatch, "representation width does not match scorer input");
  PairTape tape;
  tape.pairs = admissible_pairs(n);
  const auto k_pairs = static_cast<Eigen::Index>(tape.pairs.size());
  // Project each variable once per role; pair pre-activations are column sums.
  const Matrix from_cause = p.w1.leftCols(d) * x.transpose();   // h x N
  const Matrix from_effect = p.w1.rightCols(d) * x.transpose();  // h x N
  tape.hidden.resize(p.hidden(), k_pairs);
  for (Eigen::Index k = 0; k < k_pairs; ++k) {
    const auto& e = tape.pairs[static_cast<size_t>(k)];
    tape.hidden.col(k) = (from_cause.col(e.cause) + from_effect.col(e.effect) + p.b1).array().tanh();
  }
  const Vector logits = (tape.hidden.transpose() * p.w2).array() + p.b2;
  tape.out = (1.0 / (1.0 + (-logits.array()).exp())).matrix();
  return tape;
}

Matrix mlp_backward(const MlpParams& p, const Matrix& x, const PairTape& tape, const Vector& grad_out,
                    MlpParams& grad, bool want_input_grad) {
  const int n = static_cast<int>(x.rows());
  const int d = p.dim();
  const Vector d_logit = (grad_out.array() * tape.out.array() * (1.0 - tape.out.array())).matrix();
  grad.w2.noalias() += tape.hidden * d_logit;
  grad.b2 += d_logit.sum();
  const Matrix d_pre =
      ((p.w2 * d_logit.transpose()).array() * (1.0 - tape.hidden.array().square())).matrix();  // h x K
  grad.b1.noalias() += d_pre.rowwise().sum();
  Matrix by_cause = Matrix::Zero(p.hidden(), n);
  Matrix by_effect = Matrix::Zero(p.hidden(), n);
  for (size_t k = 0; k < tape.pairs.size(); ++k) {
    by_cause.col(tape.pairs[k].cause) += d_pre.col(static_cast<Eigen::Index>(k));
    by_effect.col(tape.pairs[k].effect) += d_pre.col(static_cast<Eigen::Index>(k));
  }
  grad.w1.leftCols(d).noalias() += by_cause * x;
  grad.w1.rightCols(d).noalias() += by_effect * x;
  if (!want_input_grad) return {};
  return by_cause.transpose() * p.w1.leftCols(d) + by_effect.transpose() * p.w1.rightCols(d);
}

Matrix pairs_to_matrix(const std::vector<Edge>& pairs, const Vector& values, int n_vars) {
  Matrix m = Matrix::Zero(n_vars, n_vars);
  for (size_t k = 0; k < pairs.size(); ++k) m(pairs[k].effect, pairs[k].cause) = values(static_cast<Eigen::Index>(k));
  return m;
}

Vector matrix_to_pairs(const std::vector<Edge>& pairs, const Matrix& m) {
  Vector v(static_cast<Eigen::Index>(pairs.size()));
  for (size_t k = 0; k < pairs.size(); ++k) v(static_cast<Eigen::Index>(k)) = m(pairs[k].effect, pairs[k].cause);
  return v;
}

}  // namespace cdid
