#include "csnet/var_forecaster.hpp"

#include <atomic>
#include <string>
#include <thread>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "csnet/error.hpp"

namespace csnet {

VarModel fit_var(const Matrix& history, std::size_t lag, double ridge) {
  if (lag < 1) throw Error(Errc::InvalidConfig, "VAR lag must be >= 1");
  if (!(ridge >= 0.0)) throw Error(Errc::InvalidConfig, "VAR ridge must be >= 0");
  const std::size_t T = history.rows();
  const std::size_t d = history.cols();
  if (d < 1) throw Error(Errc::ShapeMismatch, "VAR needs at least one series");
  if (T <= lag) {
    throw Error(Errc::InsufficientHistory, std::to_string(T) + " rows cannot fit a VAR(" +
                                               std::to_string(lag) + ")");
  }

  const std::size_t n = T - lag;
  const std::size_t k = 1 + d * lag;
  if (ridge == 0.0 && n < k) {
    throw Error(Errc::SingularDesign, std::to_string(n) + " usable rows for " + std::to_string(k) +
                                          " regressors without ridge");
  }

  // Row i of the design: [1, y_{t-1}, ..., y_{t-p}] for t = lag + i.
  Eigen::MatrixXd X(n, k);
  Eigen::MatrixXd Y(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = lag + i;
    X(i, 0) = 1.0;
    for (std::size_t l = 1; l <= lag; ++l)
      for (std::size_t j = 0; j < d; ++j) X(i, 1 + (l - 1) * d + j) = history(t - l, j);
    for (std::size_t j = 0; j < d; ++j) Y(i, j) = history(t, j);
  }

  Eigen::MatrixXd gram = X.transpose() * X;
  for (std::size_t j = 1; j < k; ++j) gram(j, j) += ridge;
  const Eigen::MatrixXd rhs = X.transpose() * Y;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    throw Error(Errc::SingularDesign, "normal equations are not positive definite");
  }
  // Rounding can leave a tiny positive pivot on an exactly collinear design.
  // With ridge > 0 the system is positive definite by construction.
  const double pivot_floor = ridge > 0.0 ? 0.0 : 1e-12 * gram.diagonal().maxCoeff();
  for (Eigen::Index j = 0; j < llt.matrixLLT().rows(); ++j) {
    const double l = llt.matrixLLT()(j, j);
    if (l * l <= pivot_floor) {
      throw Error(Errc::SingularDesign, "lagged design is rank deficient");
    }
  }
  const Eigen::MatrixXd B = llt.solve(rhs);  // k x d
  if (!B.allFinite()) throw Error(Errc::SingularDesign, "normal-equation solve is not finite");

  VarModel model;
  model.lag = lag;
  model.ridge = ridge;
  model.intercept.resize(d);
  for (std::size_t j = 0; j < d; ++j) model.intercept[j] = B(0, j);
  for (std::size_t l = 1; l <= lag; ++l) {
    Matrix A(d, d);
    // A(row=output j, col=input m) multiplies y_{t-l}[m].
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t m = 0; m < d; ++m) A(j, m) = B(1 + (l - 1) * d + m, j);
    model.coefficients.push_back(std::move(A));
  }
  const Eigen::MatrixXd resid = Y - X * B;
  model.residual_variance = resid.squaredNorm() / static_cast<double>(n * d);
  return model;
}

Matrix forecast_var(const VarModel& model, const Matrix& tail, std::size_t horizon) {
  const std::size_t d = model.dim();
  if (tail.cols() != d) {
    throw Error(Errc::ShapeMismatch, "tail has " + std::to_string(tail.cols()) +
                                         " series, model has " + std::to_string(d));
  }
  if (tail.rows() < model.lag) {
    throw Error(Errc::InsufficientHistory, "tail has " + std::to_string(tail.rows()) +
                                               " rows, VAR(" + std::to_string(model.lag) +
                                               ") needs " + std::to_string(model.lag));
  }
  // recent[l] holds y_{t-1-l}.
  std::vector<std::vector<double>> recent;
  for (std::size_t l = 0; l < model.lag; ++l) {
    auto row = tail.row(tail.rows() - 1 - l);
    recent.emplace_back(row.begin(), row.end());
  }
  Matrix out(horizon, d);
  for (std::size_t h = 0; h < horizon; ++h) {
    std::vector<double> next = model.intercept;
    for (std::size_t l = 0; l < model.lag; ++l) {
      const Matrix& A = model.coefficients[l];
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t m = 0; m < d; ++m) acc += A(j, m) * recent[l][m];
        next[j] += acc;
      }
    }
    for (std::size_t j = 0; j < d; ++j) out(h, j) = next[j];
    recent.pop_back();
    recent.insert(recent.begin(), std::move(next));
  }
  return out;
}

VarBlocking VarBlocking::per_region(std::size_t e_len, std::size_t r_len) {
  VarBlocking b;
  for (std::size_t r = 0; r < r_len; ++r) {
    SeriesBlock block;
    for (std::size_t e = 0; e < e_len; ++e) block.emplace_back(e, r);
    b.blocks.push_back(std::move(block));
  }
  return b;
}

VarBlocking VarBlocking::per_series(std::size_t e_len, std::size_t r_len) {
  VarBlocking b;
  for (std::size_t e = 0; e < e_len; ++e)
    for (std::size_t r = 0; r < r_len; ++r) b.blocks.push_back({{e, r}});
  return b;
}

VarBlocking VarBlocking::joint(std::size_t e_len, std::size_t r_len) {
  VarBlocking b;
  SeriesBlock block;
  for (std::size_t e = 0; e < e_len; ++e)
    for (std::size_t r = 0; r < r_len; ++r) block.emplace_back(e, r);
  b.blocks.push_back(std::move(block));
  return b;
}

ForecastBlock var_forecast_cuboid(const DataCuboid& data, const VarSettings& settings,
                                  std::size_t horizon, const VarBlocking& blocking,
                                  unsigned threads) {
  std::vector<int> covered(data.e_len() * data.r_len(), 0);
  for (const auto& block : blocking.blocks) {
    if (block.empty()) throw Error(Errc::InvalidConfig, "empty VAR block");
    for (auto [e, r] : block) {
      if (e >= data.e_len() || r >= data.r_len()) {
        throw Error(Errc::IndexOutOfRange, "VAR block names a series outside the cuboid");
      }
      ++covered[e * data.r_len() + r];
    }
  }
  for (int c : covered) {
    if (c != 1) throw Error(Errc::InvalidConfig, "VAR blocking must cover every series exactly once");
  }

  std::vector<Matrix> results(blocking.blocks.size());
  auto run_block = [&](std::size_t b) {
    const auto& block = blocking.blocks[b];
    Matrix history(data.t_len(), block.size());
    for (std::size_t t = 0; t < data.t_len(); ++t)
      for (std::size_t j = 0; j < block.size(); ++j)
        history(t, j) = data(t, block[j].first, block[j].second);
    const VarModel model = fit_var(history, settings.lag, settings.ridge);
    results[b] = forecast_var(model, history, horizon);
  };

  if (threads <= 1 || blocking.blocks.size() < 2) {
    for (std::size_t b = 0; b < blocking.blocks.size(); ++b) run_block(b);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(blocking.blocks.size());
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) {
      pool.emplace_back([&] {
        for (std::size_t b = next++; b < blocking.blocks.size(); b = next++) {
          try {
            run_block(b);
          } catch (...) {
            errors[b] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  ForecastBlock out(horizon, data.e_len(), data.r_len());
  for (std::size_t b = 0; b < blocking.blocks.size(); ++b) {
    const auto& block = blocking.blocks[b];
    for (std::size_t h = 0; h < horizon; ++h)
      for (std::size_t j = 0; j < block.size(); ++j)
        out(h, block[j].first, block[j].second) = results[b](h, j);
  }
  return out;
}

}  // namespace csnet
