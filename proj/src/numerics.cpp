#include "d2tpt/numerics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "d2tpt/errors.hpp"
#include "d2tpt/parallel.hpp"

namespace d2tpt {

bool all_finite(const Vec& v) { return v.allFinite(); }
bool all_finite(const Mat& m) { return m.allFinite(); }

Vec l2_normalize(const Vec& v) {
  double norm = v.norm();
  if (!std::isfinite(norm)) throw NonFinite("l2_normalize: non-finite input");
  if (norm <= kNormEpsilon) {
    std::ostringstream msg;
    msg << "l2_normalize: norm " << norm << " <= " << kNormEpsilon
        << " (dim " << v.size() << ")";
    throw DegenerateVector(msg.str());
  }
  return v / norm;
}

Mat normalize_rows(const Mat& m) {
  Mat out(m.rows(), m.cols());
  parallel_rows(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()),
                [&](std::size_t begin, std::size_t end) {
                  for (std::size_t i = begin; i < end; ++i) {
                    auto r = static_cast<Eigen::Index>(i);
                    double norm = m.row(r).norm();
                    if (!std::isfinite(norm)) {
                      throw NonFinite("normalize_rows: non-finite row " + std::to_string(i));
                    }
                    if (norm <= kNormEpsilon) {
                      throw DegenerateVector("normalize_rows: degenerate row " +
                                             std::to_string(i));
                    }
                    out.row(r) = m.row(r) / norm;
                  }
                });
  return out;
}

Vec softmax(const Vec& logits) {
  if (!logits.allFinite()) throw NonFinite("softmax: non-finite logits");
  if (logits.size() == 0) return logits;
  Vec e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

double entropy(const Vec& probs) {
  if (!probs.allFinite()) throw NotADistribution("entropy: non-finite probability");
  if (probs.size() == 0) throw NotADistribution("entropy: empty distribution");
  if (probs.minCoeff() < 0.0) throw NotADistribution("entropy: negative probability");
  double total = probs.sum();
  if (std::abs(total - 1.0) > kDistributionTolerance) {
    std::ostringstream msg;
    msg << "entropy: probabilities sum to " << total;
    throw NotADistribution(msg.str());
  }
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double softmax_entropy(const Vec& logits) { return entropy(softmax(logits)); }

Vec row_entropies(const Mat& logits) {
  Vec h(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    h(i) = softmax_entropy(logits.row(i).transpose());
  }
  return h;
}

Mat cosine_matrix(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) {
    throw ShapeMismatch("cosine_matrix: dimension " + std::to_string(a.cols()) + " vs " +
                        std::to_string(b.cols()));
  }
  Mat an = normalize_rows(a);
  Mat bn = normalize_rows(b);
  Mat out(a.rows(), b.rows());
  parallel_rows(static_cast<std::size_t>(a.rows()),
                static_cast<std::size_t>(b.rows() * b.cols()),
                [&](std::size_t begin, std::size_t end) {
                  auto r0 = static_cast<Eigen::Index>(begin);
                  auto len = static_cast<Eigen::Index>(end - begin);
                  out.middleRows(r0, len).noalias() = an.middleRows(r0, len) * bn.transpose();
                });
  return out;
}

std::size_t argmax(const Vec& v) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
  }
  return best;
}

Vec vjp_softmax(const Vec& probs, const Vec& upstream) {
  if (probs.size() != upstream.size()) throw ShapeMismatch("vjp_softmax: size mismatch");
  return probs.cwiseProduct((upstream.array() - probs.dot(upstream)).matrix());
}

Vec vjp_softmax_entropy(const Vec& logits, double upstream) {
  Vec p = softmax(logits);
  Vec grad = Vec::Zero(p.size());
  if (upstream == 0.0) return grad;
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0) h -= p(i) * std::log(p(i));
  }
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0) grad(i) = -upstream * p(i) * (std::log(p(i)) + h);
  }
  return grad;
}

Vec vjp_l2_normalize(const Vec& v, const Vec& upstream) {
  if (v.size() != upstream.size()) throw ShapeMismatch("vjp_l2_normalize: size mismatch");
  Vec unit = l2_normalize(v);
  double norm = v.norm();
  return (upstream - unit * unit.dot(upstream)) / norm;
}

}  // namespace d2tpt
