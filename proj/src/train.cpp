#include "softs/train.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace softs {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::config, "learning_rate must be finite and non-negative");
  }
  if (epochs < 1) throw Error(ErrorCode::config, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::config, "batch_size must be >= 1");
  if (patience < 1) throw Error(ErrorCode::config, "patience must be >= 1");
}

namespace {

template <typename T>
void require_same(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what) {
  if (!(a.shape() == b.shape())) {
    throw Error(ErrorCode::dimension, std::string(what) + ": prediction " + a.shape().str() +
                                          " vs target " + b.shape().str());
  }
}

}  // namespace

template <typename T>
double mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target, BasicTensor<T>* grad) {
  require_same(pred, target, "mse");
  const std::size_t n = pred.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    sum += d * d;
  }
  if (grad != nullptr) {
    *grad = BasicTensor<T>(pred.shape());
    const T scale = T(2) / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) (*grad)[i] = scale * (pred[i] - target[i]);
  }
  return sum / static_cast<double>(n);
}

template <typename T>
double mae_metric(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  require_same(pred, target, "mae");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    sum += std::abs(static_cast<double>(pred[i]) - static_cast<double>(target[i]));
  return sum / static_cast<double>(pred.size());
}

double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0) {
  return lr0 * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                         static_cast<double>(total_epochs)));
}

template <typename T>
Adam<T>::Adam(ParamList<T> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor->size(), T(0));
    v_.emplace_back(p.tensor->size(), T(0));
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  for (const auto& p : params_) {
    const auto g = p.tensor->grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw Error(ErrorCode::non_finite, "adam: non-finite gradient in " + p.name + " at index " +
                                               std::to_string(i) + " (step " +
                                               std::to_string(steps_ + 1) + ")");
      }
    }
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    BasicTensor<T>& theta = *params_[k].tensor;
    const auto g = theta.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i];
      const double mi = beta1_ * m[i] + (1.0 - beta1_) * gi;
      const double vi = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + eps_);
      theta[i] = static_cast<T>(theta[i] - update);
    }
  }
}

Metrics evaluate(const SoftsModel<float>& model, const RawDataset& data, IndexRange range,
                 std::size_t batch_size) {
  const ModelConfig& cfg = model.config();
  if (data.channels() != cfg.channels) {
    throw Error(ErrorCode::dimension, "evaluate: model expects " + std::to_string(cfg.channels) +
                                          " channels, data has " + std::to_string(data.channels()));
  }
  if (window_count(range, cfg.lookback, cfg.horizon) == 0) {
    throw Error(ErrorCode::data, "evaluate: split holds no window");
  }
  BatchStream stream(data, range, cfg.lookback, cfg.horizon, batch_size, false, 0);
  double sq = 0.0, abs_sum = 0.0;
  std::size_t elements = 0;
  while (auto batch = stream.next()) {
    const Tensor pred = model.forward(batch->x, false, nullptr);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double d = static_cast<double>(pred[i]) - static_cast<double>(batch->y[i]);
      sq += d * d;
      abs_sum += std::abs(d);
    }
    elements += pred.size();
  }
  return {sq / static_cast<double>(elements), abs_sum / static_cast<double>(elements),
          stream.windows()};
}

namespace {

std::vector<std::vector<float>> snapshot(const ParamList<float>& params) {
  std::vector<std::vector<float>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.tensor->data().begin(), p.tensor->data().end());
  return out;
}

void restore(const ParamList<float>& params, const std::vector<std::vector<float>>& values) {
  for (std::size_t k = 0; k < params.size(); ++k)
    std::copy(values[k].begin(), values[k].end(), params[k].tensor->data().begin());
}

}  // namespace

TrainResult fit(SoftsModel<float>& model, const PreparedData& data, const TrainConfig& cfg,
                const EpochCallback& on_epoch) {
  cfg.validate();
  const ModelConfig& mc = model.config();
  if (data.scaled.channels() != mc.channels) {
    throw Error(ErrorCode::dimension, "fit: model expects " + std::to_string(mc.channels) +
                                          " channels, data has " +
                                          std::to_string(data.scaled.channels()));
  }
  const ParamList<float> params = model.parameters();
  Adam<float> adam(params, cfg.beta1, cfg.beta2, cfg.adam_eps);
  BatchStream train(data.scaled, data.ranges.train, mc.lookback, mc.horizon, cfg.batch_size, true,
                    mix_seed(cfg.seed, 1));
  Rng pooling_rng(mix_seed(cfg.seed, 2));

  TrainState state;
  TrainResult result;
  for (state.epoch = 0; state.epoch < cfg.epochs; ++state.epoch) {
    const double lr = cosine_lr(state.epoch, cfg.epochs, cfg.learning_rate);
    train.start_epoch(state.epoch);
    double loss_sum = 0.0;
    std::size_t samples = 0;
    SoftsModel<float>::Cache cache;
    while (auto batch = train.next()) {
      for (const auto& p : params) p.tensor->zero_grad();
      const Tensor pred = model.forward(batch->x, true, &pooling_rng, &cache);
      Tensor grad;
      const double loss = mse_loss(pred, batch->y, &grad);
      model.backward(cache, grad);
      adam.step(lr);
      loss_sum += loss * static_cast<double>(batch->starts.size());
      samples += batch->starts.size();
    }

    const Metrics val = evaluate(model, data.scaled, data.ranges.val);
    const EpochRecord record{state.epoch, lr, loss_sum / static_cast<double>(samples), val.mse,
                             val.mae};
    if (!std::isfinite(val.mse) || !std::isfinite(record.train_loss)) {
      throw Error(ErrorCode::divergence, "training diverged at epoch " +
                                             std::to_string(state.epoch) + " (train loss " +
                                             std::to_string(record.train_loss) + ", val mse " +
                                             std::to_string(val.mse) + ")");
    }
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);

    if (val.mse < state.best_val) {
      state.best_val = val.mse;
      state.best_epoch = state.epoch;
      state.best_params = snapshot(params);
      state.epochs_without_improvement = 0;
    } else if (++state.epochs_without_improvement >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  restore(params, state.best_params);
  result.best_val_mse = state.best_val;
  result.best_epoch = state.best_epoch;
  return result;
}

template double mse_loss<float>(const Tensor&, const Tensor&, Tensor*);
template double mse_loss<double>(const Tensor64&, const Tensor64&, Tensor64*);
template double mae_metric<float>(const Tensor&, const Tensor&);
template double mae_metric<double>(const Tensor64&, const Tensor64&);
template class Adam<float>;
template class Adam<double>;

}  // namespace softs
