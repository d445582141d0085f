#include "lexprobe/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lexprobe/error.hpp"

namespace lexprobe::numerics {
namespace {

template <typename T>
double cosine_impl(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) fail(ErrorKind::kDimensionMismatch, "cosine: length mismatch");
  double dot = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i];
    const double b = v[i];
    dot += a * b;
    uu += a * a;
    vv += b * b;
  }
  if (uu == 0.0 || vv == 0.0) fail(ErrorKind::kNumeric, "cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

double cosine(std::span<const double> u, std::span<const double> v) {
  return cosine_impl(u, v);
}

double cosine(std::span<const float> u, std::span<const float> v) {
  return cosine_impl(u, v);
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // positions i..j (0-based) share rank mean((i+1)..(j+1))
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorKind::kDimensionMismatch, "pearson: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) fail(ErrorKind::kInsufficientData, "correlation needs at least 2 points");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    fail(ErrorKind::kNumeric, "correlation undefined for a constant list");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorKind::kDimensionMismatch, "spearman: length mismatch");
  if (x.size() < 2) fail(ErrorKind::kInsufficientData, "spearman needs at least 2 points");
  for (double v : x) {
    if (!std::isfinite(v)) fail(ErrorKind::kNumeric, "spearman: non-finite score");
  }
  for (double v : y) {
    if (!std::isfinite(v)) fail(ErrorKind::kNumeric, "spearman: non-finite score");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

double OrthogonalMap::orthogonality_error() const {
  return (w.transpose() * w - Matrix::Identity(w.rows(), w.cols())).norm();
}

OrthogonalMap procrustes(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    fail(ErrorKind::kDimensionMismatch, "procrustes: X and Y must have the same shape");
  }
  if (x.rows() < 1 || x.cols() < 1) fail(ErrorKind::kInsufficientData, "procrustes: empty input");
  if (!all_finite(x) || !all_finite(y)) fail(ErrorKind::kNumeric, "procrustes: non-finite input");
  const Matrix m = x.transpose() * y;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  OrthogonalMap map;
  map.w = svd.matrixU() * svd.matrixV().transpose();
  return map;
}

std::string CkaOptions::describe() const {
  std::string s = normalize_rows ? "l2-normalize rows, then " : "";
  s += center == CenterAxis::kColumns ? "mean-center columns" : "mean-center rows";
  return s;
}

Matrix cka_preprocess(const Matrix& x, const CkaOptions& options) {
  Matrix out = x;
  if (options.normalize_rows) {
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double norm = out.row(r).norm();
      if (norm > 0.0) out.row(r) /= norm;
    }
  }
  if (options.center == CenterAxis::kColumns) {
    const Eigen::RowVectorXd mean = out.colwise().mean();
    out.rowwise() -= mean;
  } else {
    const Eigen::VectorXd mean = out.rowwise().mean();
    out.colwise() -= mean;
  }
  return out;
}

double linear_cka_raw(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) {
    fail(ErrorKind::kDimensionMismatch, "linear CKA: example counts differ (" +
                                            std::to_string(x.rows()) + " vs " +
                                            std::to_string(y.rows()) + ")");
  }
  if (x.rows() < 2) fail(ErrorKind::kInsufficientData, "linear CKA needs at least 2 examples");
  if (!all_finite(x) || !all_finite(y)) fail(ErrorKind::kNumeric, "linear CKA: non-finite input");
  const double cross = (y.transpose() * x).squaredNorm();
  const double xx = (x.transpose() * x).norm();
  const double yy = (y.transpose() * y).norm();
  if (xx == 0.0 || yy == 0.0) fail(ErrorKind::kNumeric, "linear CKA undefined for an all-zero matrix");
  return std::clamp(cross / (xx * yy), 0.0, 1.0);
}

Matrix cka_preprocess_checked(const Matrix& m, const CkaOptions& options) {
  Matrix out = cka_preprocess(m, options);
  // Row normalisation bounds every entry by 1, otherwise use the input scale.
  const double scale = options.normalize_rows ? 1.0 : std::max(1.0, m.norm());
  if (out.norm() <= 1e-12 * scale * std::sqrt(static_cast<double>(m.rows()))) {
    fail(ErrorKind::kNumeric, "linear CKA undefined: matrix is all-zero after centering");
  }
  return out;
}

double linear_cka(const Matrix& x, const Matrix& y, const CkaOptions& options) {
  if (x.rows() != y.rows()) {
    fail(ErrorKind::kDimensionMismatch, "linear CKA: example counts differ");
  }
  if (x.rows() < 2) fail(ErrorKind::kInsufficientData, "linear CKA needs at least 2 examples");
  return linear_cka_raw(cka_preprocess_checked(x, options), cka_preprocess_checked(y, options));
}

}  // namespace lexprobe::numerics
