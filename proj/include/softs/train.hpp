#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "softs/data.hpp"
#include "softs/model.hpp"
#include "softs/nn.hpp"
#include "softs/tensor.hpp"

namespace softs {

struct TrainConfig {
  double learning_rate = 3e-4;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::size_t patience = 3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 2024;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Mean of squared errors over every element. When `grad` is non-null it
// receives dLoss/dPrediction = 2 (pred - target) / n.
template <typename T>
double mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                BasicTensor<T>* grad = nullptr);

template <typename T>
double mae_metric(const BasicTensor<T>& pred, const BasicTensor<T>& target);

// lr0 * (1 + cos(pi * epoch / total)) / 2, stepped once per epoch.
double cosine_lr(std::size_t epoch, std::size_t total_epochs, double lr0);

// Adam with bias correction. Moment buffers are shaped like their parameters.
template <typename T>
class Adam {
 public:
  Adam(ParamList<T> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // Applies one update from the parameters' current gradients. A non-finite
  // gradient aborts before any parameter is touched.
  void step(double lr);

  std::size_t steps() const { return steps_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

 private:
  ParamList<T> params_;
  double beta1_, beta2_, eps_;
  std::size_t steps_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
  std::size_t windows = 0;
};

// Test-mode metrics over every window of `range`, in the dataset's (already
// standardized) units. Sums are accumulated per element in window order, so
// the result does not depend on `batch_size`.
Metrics evaluate(const SoftsModel<float>& model, const RawDataset& data, IndexRange range,
                 std::size_t batch_size = 64);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_mse = 0.0;
  double val_mae = 0.0;
};

struct TrainState {
  std::size_t epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::vector<std::vector<float>> best_params;
  std::size_t epochs_without_improvement = 0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double best_val_mse = 0.0;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains on data.ranges.train with validation-based early stopping and leaves
// the model holding the parameters of its best validation epoch.
TrainResult fit(SoftsModel<float>& model, const PreparedData& data, const TrainConfig& cfg,
                const EpochCallback& on_epoch = {});

}  // namespace softs
