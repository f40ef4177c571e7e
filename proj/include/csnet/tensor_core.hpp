#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace csnet {

// Dense row-major matrix of doubles. Doubles as the cross-section panel type.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {values_.data() + r * cols_, cols_};
  }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool all_finite() const noexcept;
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// A time x event cross-section of a cuboid.
using Panel = Matrix;

// out = a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// out = a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// out = a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

// Rank-3 block indexed [t][e][r] (time, event, region), stored row-major in
// that order: flat index = (t * e_len + e) * r_len + r.
class DataCuboid {
 public:
  DataCuboid() = default;
  DataCuboid(std::size_t t_len, std::size_t e_len, std::size_t r_len, double fill = 0.0);
  DataCuboid(std::size_t t_len, std::size_t e_len, std::size_t r_len, std::vector<double> values);

  std::size_t t_len() const noexcept { return t_len_; }
  std::size_t e_len() const noexcept { return e_len_; }
  std::size_t r_len() const noexcept { return r_len_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::size_t index(std::size_t t, std::size_t e, std::size_t r) const noexcept {
    return (t * e_len_ + e) * r_len_ + r;
  }
  double& operator()(std::size_t t, std::size_t e, std::size_t r) noexcept {
    return values_[index(t, e, r)];
  }
  double operator()(std::size_t t, std::size_t e, std::size_t r) const noexcept {
    return values_[index(t, e, r)];
  }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool all_finite() const noexcept;
  bool same_shape(const DataCuboid& other) const noexcept {
    return t_len_ == other.t_len_ && e_len_ == other.e_len_ && r_len_ == other.r_len_;
  }

  // Series (e, r) over the full time axis.
  std::vector<double> series(std::size_t e, std::size_t r) const;

  friend bool operator==(const DataCuboid&, const DataCuboid&) = default;

 private:
  std::size_t t_len_ = 0;
  std::size_t e_len_ = 0;
  std::size_t r_len_ = 0;
  std::vector<double> values_;
};

// H x E x R predictions for the steps following an input window.
using ForecastBlock = DataCuboid;

// Names of the key structural dimensions, time first.
class AxisOrder {
 public:
  explicit AxisOrder(std::vector<std::string> names);
  static AxisOrder standard() { return AxisOrder({"time", "event", "region"}); }

  const std::vector<std::string>& names() const noexcept { return names_; }

 private:
  std::vector<std::string> names_;
};

// Time x event panel for one region.
Panel slice_spatial(const DataCuboid& cuboid, std::size_t region);
// Time x region panel for one event type (the second decomposition block).
Panel slice_event(const DataCuboid& cuboid, std::size_t event);
// Inverse of slice_spatial over all regions.
DataCuboid stack_spatial(std::span<const Panel> panels);

DataCuboid time_window(const DataCuboid& cuboid, std::size_t start, std::size_t length);

}  // namespace csnet
