#pragma once

// Dense numeric primitives shared by every loss and gradient in the engine.
//
// Storage is single precision on disk, but all arithmetic here runs in
// double. Every function is pure and may be called concurrently.

#include <cstddef>

#include <Eigen/Dense>

namespace d2tpt {

using Vec = Eigen::VectorXd;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Vectors with a norm at or below this are rejected by l2_normalize.
inline constexpr double kNormEpsilon = 1e-12;

// Tolerance on sum(p) == 1 accepted by entropy().
inline constexpr double kDistributionTolerance = 1e-6;

bool all_finite(const Vec& v);
bool all_finite(const Mat& m);

// Returns v / ||v||_2. Throws DegenerateVector when ||v||_2 <= kNormEpsilon.
Vec l2_normalize(const Vec& v);

// Row-wise l2_normalize.
Mat normalize_rows(const Mat& m);

// Max-subtracted softmax. Throws NonFinite on NaN/Inf input.
Vec softmax(const Vec& logits);

// Shannon entropy in nats. Zero-probability terms contribute 0.
// Throws NotADistribution if probs has a negative entry or does not sum to
// one within kDistributionTolerance.
double entropy(const Vec& probs);

// entropy(softmax(logits)), fused.
double softmax_entropy(const Vec& logits);

// Per-row softmax entropy of a logit matrix.
Vec row_entropies(const Mat& logits);

// Entry (i, j) is the cosine similarity of a.row(i) and b.row(j).
Mat cosine_matrix(const Mat& a, const Mat& b);

// Index of the largest entry; the lowest index wins ties.
std::size_t argmax(const Vec& v);

// Vector-Jacobian product of softmax, given its output.
//   d/dz = p .* (u - <u, p>)
Vec vjp_softmax(const Vec& probs, const Vec& upstream);

// upstream * dH(softmax(z))/dz. With p = softmax(z) and H its entropy the
// gradient is -p .* (log p + H); entries with p == 0 contribute 0.
Vec vjp_softmax_entropy(const Vec& logits, double upstream);

// Vector-Jacobian product of l2_normalize: (I - v_hat v_hat^T) u / ||v||.
Vec vjp_l2_normalize(const Vec& v, const Vec& upstream);

}  // namespace d2tpt
