#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "icl/scenario.hpp"

namespace icl {

// ================================================================
// Simplified softmax-attention predictor.
//
// The prompt matrix stacks D example columns (x_i; y_i) and the query
// column (x_q; 0). A head scores every column against the query with
// logit_i = x_i^T A x_q + y_i b^T x_q (the query scores itself with a
// zero label slot), softmaxes, and reads out the label row scaled by v
// plus an optional input read-out u.
// ================================================================

struct SingleHeadParams {
  MatrixXd A;   // d x d key-query block
  VectorXd b;   // label-row block of the key-query matrix
  double v = 0; // label read-out scale
  VectorXd u;   // input read-out; empty or zero outside the prior regime

  static SingleHeadParams identity_over_v(int d, double v) {
    return {MatrixXd::Identity(d, d) / v, VectorXd::Zero(d), v, VectorXd()};
  }
};

struct AttentionHead {
  MatrixXd A;
  VectorXd b;
  double weight = 0;  // signed combination weight applied to the label row
};

struct GeneralHeads {
  std::vector<AttentionHead> heads;
};

// Two-head parametrization with shared shape parameter c: the heads carry
// A1 = (c/v) I and A2 = ((2c-1)/v) I with b = 0, combined as
// +vm (head 1) - vn (head 2). Finite losses need v^2 > max{2c^2, 2(2c-1)^2}.
struct TwoHeadParams {
  double c;
  double v;
  double m = 2.0;
  double n = 1.0;

  TwoHeadParams(double c_, double v_, double m_ = 2.0, double n_ = 1.0)
      : c(c_), v(v_), m(m_), n(n_) {
    if (m <= 0.0 || n <= 0.0)
      throw std::invalid_argument("TwoHeadParams: m and n must be positive");
    const double lim =
        std::max(2.0 * c * c, 2.0 * (2.0 * c - 1.0) * (2.0 * c - 1.0));
    if (v * v <= lim)
      throw std::domain_error(
          "TwoHeadParams: v^2 must exceed max{2c^2, 2(2c-1)^2}");
  }

  GeneralHeads to_heads(int d) const {
    GeneralHeads g;
    g.heads.push_back(
        {MatrixXd::Identity(d, d) * (c / v), VectorXd::Zero(d), v * m});
    g.heads.push_back({MatrixXd::Identity(d, d) * ((2.0 * c - 1.0) / v),
                       VectorXd::Zero(d), -v * n});
    return g;
  }
};

// The analyzed case m = 2, n = 1 with combination weights (+2v, -v).
inline GeneralHeads two_head_from_c(double c, double v, int d) {
  return TwoHeadParams(c, v).to_heads(d);
}

inline void check_head_shapes(const Prompt& p, const MatrixXd& A,
                              const VectorXd& b) {
  const auto d = p.X.rows();
  if (A.rows() != d || A.cols() != d || b.size() != d)
    throw std::invalid_argument("attention: parameter shapes do not match prompt");
}

// logits over the D+1 columns; the query attends to itself through
// x_q^T A x_q with label slot 0.
inline VectorXd head_logits(const Prompt& p, const MatrixXd& A,
                            const VectorXd& b) {
  check_head_shapes(p, A, b);
  const auto D = p.X.cols();
  VectorXd logits(D + 1);
  VectorXd Axq = A * p.x_q;
  logits.head(D).noalias() = p.X.transpose() * Axq;
  logits.head(D) += b.dot(p.x_q) * p.y;
  logits[D] = p.x_q.dot(Axq);
  return logits;
}

// Max-subtracted softmax; immune to overflow for any finite logits.
inline VectorXd softmax(const VectorXd& logits) {
  if (logits.size() == 0)
    throw std::invalid_argument("softmax: empty input");
  if (logits.hasNaN())
    throw std::invalid_argument("softmax: NaN in logits");
  VectorXd w = (logits.array() - logits.maxCoeff()).exp();
  w /= w.sum();
  return w;
}

namespace detail {

// Shared read-out used by both the single-head and multi-head paths, so a
// one-entry GeneralHeads reproduces predict_single bit for bit. Kept as one
// emitted copy (no inlining, no constprop clones): per-call-site code
// generation may contract the arithmetic differently and break that.
//   sum_i (u_scale u^T x_i + label_scale y_i) w_i + u_scale u^T x_q w_{D+1}
[[gnu::noinline, gnu::noclone]] inline double head_readout(const Prompt& p, const MatrixXd& A,
                           const VectorXd& b, double label_scale,
                           const VectorXd& u, double u_scale) {
  const auto D = p.X.cols();
  const VectorXd w = softmax(head_logits(p, A, b));
  const bool with_u = u.size() != 0 && !u.isZero(0.0);
  if (with_u && u.size() != p.X.rows())
    throw std::invalid_argument("attention: u has wrong length");

  double out = 0.0;
  if (with_u) {
    for (Eigen::Index i = 0; i < D; ++i)
      out += (u_scale * u.dot(p.X.col(i)) + label_scale * p.y[i]) * w[i];
    out += u_scale * u.dot(p.x_q) * w[D];
  } else {
    for (Eigen::Index i = 0; i < D; ++i) out += label_scale * p.y[i] * w[i];
  }
  return out;
}

}  // namespace detail

inline double predict_single(const Prompt& p, const SingleHeadParams& params) {
  return detail::head_readout(p, params.A, params.b, params.v, params.u, 1.0);
}

// Signed combination of head read-outs. The input read-out u is shared by
// the heads (split equally), which makes the one-head case coincide with
// predict_single for any u; every multi-head result we evaluate uses u = 0.
inline double predict_multi(const Prompt& p, const GeneralHeads& g,
                            const VectorXd& u = VectorXd()) {
  if (g.heads.empty())
    throw std::invalid_argument("predict_multi: no heads");
  const double u_scale = 1.0 / static_cast<double>(g.heads.size());
  double out = 0.0;
  for (const auto& h : g.heads)
    out += detail::head_readout(p, h.A, h.b, h.weight, u, u_scale);
  return out;
}

}  // namespace icl
