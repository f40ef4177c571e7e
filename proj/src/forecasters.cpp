#include "csnet/forecasters.hpp"

#include <algorithm>
#include <vector>

#include "csnet/error.hpp"

namespace csnet {

void PersistenceForecaster::fit(const DataCuboid& history) {
  if (history.t_len() < 1) throw Error(Errc::InsufficientHistory, "empty history");
  last_ = time_window(history, history.t_len() - 1, 1);
}

ForecastBlock PersistenceForecaster::predict(std::size_t horizon) {
  if (!last_) throw Error(Errc::InvalidConfig, "predict called before fit");
  ForecastBlock out(horizon, last_->e_len(), last_->r_len());
  for (std::size_t h = 0; h < horizon; ++h)
    for (std::size_t e = 0; e < out.e_len(); ++e)
      for (std::size_t r = 0; r < out.r_len(); ++r) out(h, e, r) = (*last_)(0, e, r);
  return out;
}

BlockingKind parse_blocking(const std::string& name) {
  if (name == "per_region") return BlockingKind::PerRegion;
  if (name == "per_series") return BlockingKind::PerSeries;
  if (name == "joint") return BlockingKind::Joint;
  throw Error(Errc::InvalidConfig, "unknown VAR blocking '" + name + "'");
}

std::string blocking_name(BlockingKind kind) {
  switch (kind) {
    case BlockingKind::PerRegion: return "per_region";
    case BlockingKind::PerSeries: return "per_series";
    case BlockingKind::Joint: return "joint";
  }
  return "per_region";
}

VarBlocking make_blocking(BlockingKind kind, std::size_t e_len, std::size_t r_len) {
  switch (kind) {
    case BlockingKind::PerSeries: return VarBlocking::per_series(e_len, r_len);
    case BlockingKind::Joint: return VarBlocking::joint(e_len, r_len);
    case BlockingKind::PerRegion: break;
  }
  return VarBlocking::per_region(e_len, r_len);
}

VarCuboidForecaster::VarCuboidForecaster(VarSettings settings, BlockingKind blocking,
                                         unsigned threads)
    : settings_(settings), blocking_(blocking), threads_(threads) {}

void VarCuboidForecaster::fit(const DataCuboid& history) { history_ = history; }

ForecastBlock VarCuboidForecaster::predict(std::size_t horizon) {
  if (!history_) throw Error(Errc::InvalidConfig, "predict called before fit");
  return var_forecast_cuboid(*history_, settings_, horizon,
                             make_blocking(blocking_, history_->e_len(), history_->r_len()),
                             threads_);
}

CsNetForecaster::CsNetForecaster(CsNetConfig config, VarSettings var, BlockingKind blocking,
                                 EnsembleSettings ensemble, bool count_data, bool warm_start,
                                 unsigned threads)
    : config_(std::move(config)),
      var_(var),
      blocking_(blocking),
      ensemble_(ensemble),
      count_data_(count_data),
      warm_start_(warm_start),
      threads_(threads) {
  config_.validate();
  if (config_.uses_var() && ensemble_.validation_windows < 1) {
    throw Error(Errc::InvalidConfig, "ensemble.validation_windows must be >= 1");
  }
}

std::string CsNetForecaster::name() const {
  switch (config_.variant) {
    case Variant::ConvOnly: return "csnet1";
    case Variant::ConvPlusVar: return "csnet2";
    case Variant::Full: return "csnet3";
  }
  return "csnet";
}

ForecastBlock CsNetForecaster::var_block(const DataCuboid& history) const {
  return var_forecast_cuboid(history, var_, config_.horizon,
                             make_blocking(blocking_, history.e_len(), history.r_len()), threads_);
}

void CsNetForecaster::fit(const DataCuboid& history) {
  const CsNetParams* init = warm_start_ && model_ ? &model_->params : nullptr;
  selection_.reset();
  history_ = history;
  if (!config_.uses_var()) {
    model_ = train(history, config_, count_data_, init);
    return;
  }

  const std::size_t H = config_.horizon;
  const std::size_t held = ensemble_.validation_windows * H;
  if (history.t_len() < held + config_.window + H) {
    throw Error(Errc::InsufficientHistory,
                std::to_string(history.t_len()) + " rows cannot hold " +
                    std::to_string(ensemble_.validation_windows) +
                    " validation windows after a trainable range");
  }
  const std::size_t cut = history.t_len() - held;
  TrainedModel tuned = train(time_window(history, 0, cut), config_, count_data_, init);

  std::vector<ValidationWindow> windows;
  for (std::size_t j = 0; j < ensemble_.validation_windows; ++j) {
    const std::size_t origin = cut + j * H;
    const DataCuboid seen = time_window(history, 0, origin);
    windows.push_back({seen, time_window(history, origin, H), csnet::predict(seen, tuned),
                       var_block(seen)});
  }
  selection_ = select_weight(windows);
  model_ = ensemble_.refit ? train(history, config_, count_data_, init) : std::move(tuned);
  model_->ensemble_weight = selection_->weight.value();
}

void CsNetForecaster::adopt(TrainedModel model, const DataCuboid& history) {
  if (config_hash(model.config) != config_hash(config_)) {
    throw Error(Errc::IncompatibleModel, "model was trained under a different configuration");
  }
  if (model.e_len != history.e_len() || model.r_len != history.r_len()) {
    throw Error(Errc::IncompatibleModel,
                "model expects " + std::to_string(model.e_len) + "x" + std::to_string(model.r_len) +
                    " series, data has " + std::to_string(history.e_len()) + "x" +
                    std::to_string(history.r_len()));
  }
  if (config_.uses_var() && !model.ensemble_weight) {
    throw Error(Errc::IncompatibleModel, "ensemble variant model carries no blend weight");
  }
  selection_.reset();
  history_ = history;
  model_ = std::move(model);
}

ForecastBlock CsNetForecaster::predict(std::size_t horizon) {
  if (!model_ || !history_) throw Error(Errc::InvalidConfig, "predict called before fit");
  if (horizon != config_.horizon) {
    throw Error(Errc::ShapeMismatch, "network was built for horizon " +
                                         std::to_string(config_.horizon) + ", asked for " +
                                         std::to_string(horizon));
  }
  ForecastBlock net = csnet::predict(*history_, *model_);
  if (!config_.uses_var()) return net;
  ForecastBlock out =
      blend(net, var_block(*history_), EnsembleWeight(model_->ensemble_weight.value_or(1.0)));
  if (count_data_)
    for (auto& v : out.values()) v = std::max(v, 0.0);
  return out;
}

}  // namespace csnet
