#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "csnet/tensor_core.hpp"

namespace csnet {

// y_t = c + sum_i A_i y_{t-i} + e_t for a block of d jointly modeled series.
struct VarModel {
  std::size_t lag = 1;
  double ridge = 0.0;
  std::vector<Matrix> coefficients;  // A_1..A_p, each d x d
  std::vector<double> intercept;     // c
  double residual_variance = 0.0;    // mean squared in-sample residual over all d series

  std::size_t dim() const { return intercept.size(); }
};

// Ridge least squares on the lagged design matrix (intercept unpenalized),
// solved through a Cholesky factorization of the normal equations. `history`
// is T x d, rows in time order. Throws InsufficientHistory when T <= p and
// SingularDesign when the factorization fails.
VarModel fit_var(const Matrix& history, std::size_t lag, double ridge);

// Iterated one-step forecasts from the last `lag` rows of `tail`; returns H x d.
Matrix forecast_var(const VarModel& model, const Matrix& tail, std::size_t horizon);

// Which (event, region) series are modeled jointly.
using SeriesBlock = std::vector<std::pair<std::size_t, std::size_t>>;

struct VarBlocking {
  std::vector<SeriesBlock> blocks;

  // One block per region holding all its events (d = e_len).
  static VarBlocking per_region(std::size_t e_len, std::size_t r_len);
  // Every series on its own (d = 1).
  static VarBlocking per_series(std::size_t e_len, std::size_t r_len);
  // One block with every series.
  static VarBlocking joint(std::size_t e_len, std::size_t r_len);
};

struct VarSettings {
  std::size_t lag = 2;
  double ridge = 0.1;
};

// Fits and forecasts each block independently; results are stacked into an
// H x E x R block in block order. `threads` > 1 fits blocks concurrently.
ForecastBlock var_forecast_cuboid(const DataCuboid& data, const VarSettings& settings,
                                  std::size_t horizon, const VarBlocking& blocking,
                                  unsigned threads = 1);

}  // namespace csnet
