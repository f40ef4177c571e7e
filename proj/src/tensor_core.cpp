#include "csnet/tensor_core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include <Eigen/Core>

#include "csnet/error.hpp"

namespace csnet {

namespace {

bool finite_range(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::string shape_str(std::size_t a, std::size_t b) {
  return std::to_string(a) + "x" + std::to_string(b);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw Error(Errc::ShapeMismatch, "matrix " + shape_str(rows_, cols_) + " given " +
                                         std::to_string(values_.size()) + " values");
  }
}

bool Matrix::all_finite() const noexcept { return finite_range(values_); }

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstView = Eigen::Map<const RowMajor>;
using View = Eigen::Map<RowMajor>;

ConstView view(const Matrix& m) {
  return ConstView(m.values().data(), static_cast<Eigen::Index>(m.rows()),
                   static_cast<Eigen::Index>(m.cols()));
}
View view(Matrix& m) {
  return View(m.values().data(), static_cast<Eigen::Index>(m.rows()),
              static_cast<Eigen::Index>(m.cols()));
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw Error(Errc::ShapeMismatch,
                "matmul " + shape_str(a.rows(), a.cols()) + " * " + shape_str(b.rows(), b.cols()));
  }
  Matrix out(a.rows(), b.cols());
  if (out.size() != 0 && a.cols() != 0) view(out).noalias() = view(a) * view(b);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw Error(Errc::ShapeMismatch, "matmul_tn " + shape_str(a.rows(), a.cols()) + "^T * " +
                                         shape_str(b.rows(), b.cols()));
  }
  Matrix out(a.cols(), b.cols());
  if (out.size() != 0 && a.rows() != 0) view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw Error(Errc::ShapeMismatch, "matmul_nt " + shape_str(a.rows(), a.cols()) + " * " +
                                         shape_str(b.rows(), b.cols()) + "^T");
  }
  Matrix out(a.rows(), b.rows());
  if (out.size() != 0 && a.cols() != 0) view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

DataCuboid::DataCuboid(std::size_t t_len, std::size_t e_len, std::size_t r_len, double fill)
    : t_len_(t_len), e_len_(e_len), r_len_(r_len), values_(t_len * e_len * r_len, fill) {}

DataCuboid::DataCuboid(std::size_t t_len, std::size_t e_len, std::size_t r_len,
                       std::vector<double> values)
    : t_len_(t_len), e_len_(e_len), r_len_(r_len), values_(std::move(values)) {
  if (values_.size() != t_len_ * e_len_ * r_len_) {
    throw Error(Errc::ShapeMismatch, "cuboid " + std::to_string(t_len_) + "x" +
                                         std::to_string(e_len_) + "x" + std::to_string(r_len_) +
                                         " given " + std::to_string(values_.size()) + " values");
  }
}

bool DataCuboid::all_finite() const noexcept { return finite_range(values_); }

std::vector<double> DataCuboid::series(std::size_t e, std::size_t r) const {
  std::vector<double> out(t_len_);
  for (std::size_t t = 0; t < t_len_; ++t) out[t] = (*this)(t, e, r);
  return out;
}

AxisOrder::AxisOrder(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty() || names_.front() != "time") {
    throw Error(Errc::InvalidConfig, "axis order must start with 'time'");
  }
  std::set<std::string> seen(names_.begin(), names_.end());
  if (seen.size() != names_.size()) {
    throw Error(Errc::InvalidConfig, "axis names must be unique");
  }
}

Panel slice_spatial(const DataCuboid& cuboid, std::size_t region) {
  if (region >= cuboid.r_len()) {
    throw Error(Errc::IndexOutOfRange, "region " + std::to_string(region) + " of " +
                                           std::to_string(cuboid.r_len()));
  }
  Panel panel(cuboid.t_len(), cuboid.e_len());
  for (std::size_t t = 0; t < cuboid.t_len(); ++t)
    for (std::size_t e = 0; e < cuboid.e_len(); ++e) panel(t, e) = cuboid(t, e, region);
  return panel;
}

Panel slice_event(const DataCuboid& cuboid, std::size_t event) {
  if (event >= cuboid.e_len()) {
    throw Error(Errc::IndexOutOfRange,
                "event " + std::to_string(event) + " of " + std::to_string(cuboid.e_len()));
  }
  Panel panel(cuboid.t_len(), cuboid.r_len());
  for (std::size_t t = 0; t < cuboid.t_len(); ++t)
    for (std::size_t r = 0; r < cuboid.r_len(); ++r) panel(t, r) = cuboid(t, event, r);
  return panel;
}

DataCuboid stack_spatial(std::span<const Panel> panels) {
  if (panels.empty()) throw Error(Errc::ShapeMismatch, "no panels to stack");
  const std::size_t t_len = panels.front().rows();
  const std::size_t e_len = panels.front().cols();
  DataCuboid out(t_len, e_len, panels.size());
  for (std::size_t r = 0; r < panels.size(); ++r) {
    if (panels[r].rows() != t_len || panels[r].cols() != e_len) {
      throw Error(Errc::ShapeMismatch, "panel " + std::to_string(r) + " has a different shape");
    }
    for (std::size_t t = 0; t < t_len; ++t)
      for (std::size_t e = 0; e < e_len; ++e) out(t, e, r) = panels[r](t, e);
  }
  return out;
}

DataCuboid time_window(const DataCuboid& cuboid, std::size_t start, std::size_t length) {
  if (length == 0 || start > cuboid.t_len() || length > cuboid.t_len() - start) {
    throw Error(Errc::IndexOutOfRange, "window [" + std::to_string(start) + ", " +
                                           std::to_string(start + length) + ") of t_len " +
                                           std::to_string(cuboid.t_len()));
  }
  const std::size_t plane = cuboid.e_len() * cuboid.r_len();
  auto first = cuboid.values().begin() + static_cast<std::ptrdiff_t>(start * plane);
  std::vector<double> values(first, first + static_cast<std::ptrdiff_t>(length * plane));
  return DataCuboid(length, cuboid.e_len(), cuboid.r_len(), std::move(values));
}

}  // namespace csnet
