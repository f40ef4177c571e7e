#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "csnet/backtest.hpp"
#include "csnet/csnet_model.hpp"
#include "csnet/ensemble_metrics.hpp"
#include "csnet/var_forecaster.hpp"

namespace csnet {

// Repeats the last observed row.
class PersistenceForecaster final : public Forecaster {
 public:
  std::string name() const override { return "persistence"; }
  void fit(const DataCuboid& history) override;
  ForecastBlock predict(std::size_t horizon) override;

 private:
  std::optional<DataCuboid> last_;
};

enum class BlockingKind { PerRegion, PerSeries, Joint };

BlockingKind parse_blocking(const std::string& name);
std::string blocking_name(BlockingKind kind);
VarBlocking make_blocking(BlockingKind kind, std::size_t e_len, std::size_t r_len);

class VarCuboidForecaster final : public Forecaster {
 public:
  VarCuboidForecaster(VarSettings settings, BlockingKind blocking, unsigned threads = 1);
  std::string name() const override { return "var"; }
  void fit(const DataCuboid& history) override;
  ForecastBlock predict(std::size_t horizon) override;

 private:
  VarSettings settings_;
  BlockingKind blocking_;
  unsigned threads_;
  std::optional<DataCuboid> history_;
};

struct EnsembleSettings {
  // Trailing H-step origins held out to pick the blend weight.
  std::size_t validation_windows = 2;
  // Retrain the network on the full history after the weight is chosen.
  bool refit = true;
};

// The network alone (conv_only) or blended with the VAR baseline
// (conv_plus_var, full). The blend weight is tuned on the tail of the history
// handed to fit, so nothing past the training range is consulted.
class CsNetForecaster final : public Forecaster {
 public:
  CsNetForecaster(CsNetConfig config, VarSettings var, BlockingKind blocking,
                  EnsembleSettings ensemble, bool count_data = false, bool warm_start = false,
                  unsigned threads = 1);
  std::string name() const override;
  void fit(const DataCuboid& history) override;
  // Throws ShapeMismatch unless horizon equals the configured horizon.
  ForecastBlock predict(std::size_t horizon) override;

  // Uses an already trained network (and its stored blend weight) on
  // `history` instead of fitting. Throws IncompatibleModel on mismatch.
  void adopt(TrainedModel model, const DataCuboid& history);

  const std::optional<WeightSelection>& selection() const noexcept { return selection_; }
  const std::optional<TrainedModel>& model() const noexcept { return model_; }

 private:
  ForecastBlock var_block(const DataCuboid& history) const;

  CsNetConfig config_;
  VarSettings var_;
  BlockingKind blocking_;
  EnsembleSettings ensemble_;
  bool count_data_;
  bool warm_start_;
  unsigned threads_;
  std::optional<DataCuboid> history_;
  std::optional<TrainedModel> model_;
  std::optional<WeightSelection> selection_;
};

}  // namespace csnet
