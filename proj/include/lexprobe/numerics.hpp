#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lexprobe {

// Row-major so that a matrix row is one example / one word vector.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

namespace numerics {

// u.v / (|u||v|); throws kNumeric when either norm is zero.
double cosine(std::span<const double> u, std::span<const double> v);
double cosine(std::span<const float> u, std::span<const float> v);

// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);

// Pearson correlation of average ranks. Requires n >= 2 and at least two
// distinct values in each list.
double spearman(std::span<const double> x, std::span<const double> y);

struct OrthogonalMap {
  Matrix w;  // d x d, applied on the right: mapped = x * W

  std::size_t dim() const { return static_cast<std::size_t>(w.rows()); }
  static OrthogonalMap identity(std::size_t d) {
    return {Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d))};
  }
  // ||W^T W - I||_F
  double orthogonality_error() const;
};

// Orthogonal W minimising ||XW - Y||_F: W = U V^T where X^T Y = U S V^T.
OrthogonalMap procrustes(const Matrix& x, const Matrix& y);

enum class CenterAxis { kColumns, kRows };

struct CkaOptions {
  bool normalize_rows = true;
  CenterAxis center = CenterAxis::kColumns;

  // Human-readable record of the preprocessing, stored with every result.
  std::string describe() const;
};

// Applies CKA preprocessing: l2-normalise each row, then mean-centre
// columns (or rows). Zero rows are left as zero.
Matrix cka_preprocess(const Matrix& x, const CkaOptions& options = {});

// ||Y^T X||_F^2 / (||X^T X||_F ||Y^T Y||_F) on already preprocessed inputs.
double linear_cka_raw(const Matrix& x, const Matrix& y);

// cka_preprocess, then kNumeric if the result is zero up to rounding.
Matrix cka_preprocess_checked(const Matrix& x, const CkaOptions& options = {});

double linear_cka(const Matrix& x, const Matrix& y, const CkaOptions& options = {});

}  // namespace numerics
}  // namespace lexprobe
