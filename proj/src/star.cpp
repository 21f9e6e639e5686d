#include "softs/star.hpp"

#include <cmath>

namespace softs {

std::string_view to_string(PoolingKind kind) {
  switch (kind) {
    case PoolingKind::mean: return "mean";
    case PoolingKind::max: return "max";
    case PoolingKind::weighted: return "weighted";
    case PoolingKind::stochastic: return "stochastic";
  }
  return "unknown";
}

std::optional<PoolingKind> parse_pooling(std::string_view name) {
  if (name == "mean") return PoolingKind::mean;
  if (name == "max") return PoolingKind::max;
  if (name == "weighted") return PoolingKind::weighted;
  if (name == "stochastic") return PoolingKind::stochastic;
  return std::nullopt;
}

// --- Pooling -------------------------------------------------------------------

template <typename T>
Pooling<T>::Pooling(PoolingKind kind, std::size_t channels) : kind_(kind) {
  if (kind == PoolingKind::weighted) scores_ = BasicTensor<T>(Shape{channels});
}

template <typename T>
BasicTensor<T> Pooling<T>::channel_weights() const {
  return softmax_over_axis(scores_, 0);
}

template <typename T>
CoreRepresentation<T> Pooling<T>::forward(const BasicTensor<T>& a, bool training, Rng* rng,
                                          std::span<const std::uint32_t> replay) const {
  if (a.rank() != 3) {
    throw Error(ErrorCode::dimension, "pool: expected (batch x channels x dim), got " + a.shape().str());
  }
  const std::size_t batch = a.extent(0), channels = a.extent(1), dim = a.extent(2);
  if (channels == 0) throw Error(ErrorCode::empty_channels, "pool: no channels to aggregate");

  CoreRepresentation<T> core;
  core.values = BasicTensor<T>(Shape{batch, dim});
  BasicTensor<T>& out = core.values;

  switch (kind_) {
    case PoolingKind::mean: {
      const T inv = T(1) / static_cast<T>(channels);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c)
          for (std::size_t j = 0; j < dim; ++j) out.at(b, j) += a.at(b, c, j);
      for (T& v : out.data()) v *= inv;
      break;
    }
    case PoolingKind::max: {
      core.selected.assign(batch * dim, 0);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < dim; ++j) out.at(b, j) = a.at(b, 0, j);
        for (std::size_t c = 1; c < channels; ++c) {
          for (std::size_t j = 0; j < dim; ++j) {
            if (a.at(b, c, j) > out.at(b, j)) {
              out.at(b, j) = a.at(b, c, j);
              core.selected[b * dim + j] = static_cast<std::uint32_t>(c);
            }
          }
        }
      }
      break;
    }
    case PoolingKind::weighted: {
      if (scores_.size() != channels) {
        throw Error(ErrorCode::dimension, "weighted pool: " + std::to_string(scores_.size()) +
                                              " channel scores for " + std::to_string(channels) +
                                              " channels");
      }
      const BasicTensor<T> w = channel_weights();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c)
          for (std::size_t j = 0; j < dim; ++j) out.at(b, j) += w[c] * a.at(b, c, j);
      break;
    }
    case PoolingKind::stochastic: {
      core.probs = softmax_over_axis(a, 1);
      const BasicTensor<T>& p = core.probs;
      if (!training) {
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t j = 0; j < dim; ++j) out.at(b, j) += p.at(b, c, j) * a.at(b, c, j);
        break;
      }
      core.sampled = true;
      if (!replay.empty()) {
        if (replay.size() != batch * dim) {
          throw Error(ErrorCode::dimension, "pool: replayed selection has wrong size");
        }
        core.selected.assign(replay.begin(), replay.end());
      } else {
        if (rng == nullptr) {
          throw Error(ErrorCode::config, "pool: stochastic training requires a random stream");
        }
        core.selected.assign(batch * dim, 0);
        // Inverse-CDF draw per (batch, dimension), in row-major order.
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t j = 0; j < dim; ++j) {
            const double u = rng->uniform();
            double cumulative = 0.0;
            std::size_t pick = channels - 1;
            while (pick > 0 && p.at(b, pick, j) == T(0)) --pick;
            for (std::size_t c = 0; c < channels; ++c) {
              cumulative += static_cast<double>(p.at(b, c, j));
              if (u < cumulative) {
                pick = c;
                break;
              }
            }
            core.selected[b * dim + j] = static_cast<std::uint32_t>(pick);
          }
        }
      }
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < dim; ++j) {
          const std::uint32_t c = core.selected[b * dim + j];
          if (c >= channels) throw Error(ErrorCode::dimension, "pool: replayed channel out of range");
          out.at(b, j) = a.at(b, c, j);
        }
      break;
    }
  }
  debug_check_finite(out, "pool");
  return core;
}

template <typename T>
BasicTensor<T> Pooling<T>::backward(const BasicTensor<T>& a, const CoreRepresentation<T>& core,
                                    const BasicTensor<T>& g) {
  const std::size_t batch = a.extent(0), channels = a.extent(1), dim = a.extent(2);
  if (g.rank() != 2 || g.extent(0) != batch || g.extent(1) != dim) {
    throw Error(ErrorCode::dimension, "pool backward: gradient " + g.shape().str() +
                                          " does not match " + a.shape().str());
  }
  BasicTensor<T> da(a.shape());

  auto route_selected = [&] {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < dim; ++j) da.at(b, core.selected[b * dim + j], j) += g.at(b, j);
  };

  switch (kind_) {
    case PoolingKind::mean: {
      const T inv = T(1) / static_cast<T>(channels);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c)
          for (std::size_t j = 0; j < dim; ++j) da.at(b, c, j) = g.at(b, j) * inv;
      break;
    }
    case PoolingKind::max:
      route_selected();
      break;
    case PoolingKind::weighted: {
      const BasicTensor<T> w = channel_weights();
      BasicTensor<T> dw(Shape{channels});
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c)
          for (std::size_t j = 0; j < dim; ++j) {
            da.at(b, c, j) = w[c] * g.at(b, j);
            dw[c] += g.at(b, j) * a.at(b, c, j);
          }
      const BasicTensor<T> ds = softmax_backward(w, dw, 0);
      auto sg = scores_.grad();
      for (std::size_t c = 0; c < channels; ++c) sg[c] += ds[c];
      break;
    }
    case PoolingKind::stochastic: {
      if (core.sampled) {
        // Straight-through on the selected entries; no gradient through p.
        route_selected();
        break;
      }
      // o_j = sum_i p_ij A_ij  =>  d o_j / d A_kj = p_kj (1 + A_kj - o_j).
      const BasicTensor<T>& p = core.probs;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c)
          for (std::size_t j = 0; j < dim; ++j)
            da.at(b, c, j) =
                g.at(b, j) * p.at(b, c, j) * (T(1) + a.at(b, c, j) - core.values.at(b, j));
      break;
    }
  }
  return da;
}

template <typename T>
CoreRepresentation<T> pool(const BasicTensor<T>& activations, PoolingKind kind, bool training,
                           Rng* rng) {
  const std::size_t channels = activations.rank() == 3 ? activations.extent(1) : 0;
  return Pooling<T>(kind, channels).forward(activations, training, rng);
}

// --- StarBlock -------------------------------------------------------------------

template <typename T>
StarBlock<T>::StarBlock(std::size_t hidden, std::size_t core, std::size_t channels,
                        PoolingKind pooling, bool baseline)
    : hidden_(hidden), core_(core), baseline_(baseline) {
  if (baseline_) {
    mlp2_ = TwoLayerMlp<T>(hidden, hidden, hidden);
  } else {
    mlp1_ = TwoLayerMlp<T>(hidden, hidden, core);
    mlp2_ = TwoLayerMlp<T>(hidden + core, hidden, hidden);
    pooling_ = Pooling<T>(pooling, channels);
  }
}

template <typename T>
std::size_t StarBlock<T>::param_count() const {
  if (baseline_) return mlp2_.param_count();
  return mlp1_.param_count() + mlp2_.param_count() + pooling_.scores().size();
}

template <typename T>
void StarBlock<T>::init(std::uint64_t seed) {
  if (!baseline_) mlp1_.init(mix_seed(seed, 0));
  mlp2_.init(mix_seed(seed, 1));
}

template <typename T>
BasicTensor<T> StarBlock<T>::forward(const BasicTensor<T>& s, bool training, Rng* rng,
                                     Cache* cache, const Cache* replay) const {
  if (s.rank() != 3 || s.extent(2) != hidden_) {
    throw Error(ErrorCode::dimension, "star: expected (batch x channels x " +
                                          std::to_string(hidden_) + "), got " + s.shape().str());
  }
  BasicTensor<T> y;
  if (baseline_) {
    y = mlp2_.forward(s, cache ? &cache->mlp2 : nullptr);
  } else {
    const std::size_t batch = s.extent(0), channels = s.extent(1);
    BasicTensor<T> act = mlp1_.forward(s, cache ? &cache->mlp1 : nullptr);
    std::span<const std::uint32_t> fixed;
    if (replay != nullptr && replay->core.sampled) fixed = replay->core.selected;
    CoreRepresentation<T> core = pooling_.forward(act, training, rng, fixed);

    const std::size_t width = hidden_ + core_;
    BasicTensor<T> fused(Shape{batch, channels, width});
    for (std::size_t b = 0; b < batch; ++b) {
      const T* o = core.values.raw() + b * core_;
      for (std::size_t c = 0; c < channels; ++c) {
        T* row = fused.raw() + (b * channels + c) * width;
        std::copy_n(s.raw() + (b * channels + c) * hidden_, hidden_, row);
        std::copy_n(o, core_, row + hidden_);
      }
    }
    y = mlp2_.forward(fused, cache ? &cache->mlp2 : nullptr);
    if (cache != nullptr) {
      cache->activations = std::move(act);
      cache->core = std::move(core);
    }
  }
  T* out = y.raw();
  const T* in = s.raw();
  for (std::size_t i = 0; i < y.size(); ++i) out[i] += in[i];
  debug_check_finite(y, "star");
  return y;
}

template <typename T>
BasicTensor<T> StarBlock<T>::backward(const Cache& cache, const BasicTensor<T>& grad_out) {
  BasicTensor<T> ds = grad_out;
  if (baseline_) {
    const BasicTensor<T> d_mlp = mlp2_.backward(cache.mlp2, grad_out);
    for (std::size_t i = 0; i < ds.size(); ++i) ds[i] += d_mlp[i];
    return ds;
  }
  const BasicTensor<T> d_fused = mlp2_.backward(cache.mlp2, grad_out);
  const std::size_t batch = ds.extent(0), channels = ds.extent(1);
  const std::size_t width = hidden_ + core_;
  BasicTensor<T> d_core(Shape{batch, core_});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const T* row = d_fused.raw() + (b * channels + c) * width;
      T* dst = ds.raw() + (b * channels + c) * hidden_;
      for (std::size_t j = 0; j < hidden_; ++j) dst[j] += row[j];
      T* dc = d_core.raw() + b * core_;
      for (std::size_t j = 0; j < core_; ++j) dc[j] += row[hidden_ + j];
    }
  }
  const BasicTensor<T> d_act = pooling_.backward(cache.activations, cache.core, d_core);
  const BasicTensor<T> d_in = mlp1_.backward(cache.mlp1, d_act);
  for (std::size_t i = 0; i < ds.size(); ++i) ds[i] += d_in[i];
  return ds;
}

template <typename T>
void StarBlock<T>::collect(ParamList<T>& out, const std::string& prefix) {
  if (!baseline_) mlp1_.collect(out, prefix + ".mlp1");
  mlp2_.collect(out, prefix + ".mlp2");
  if (pooling_.has_weights()) out.push_back({prefix + ".lambda", &pooling_.scores()});
}

template class Pooling<float>;
template class Pooling<double>;
template class StarBlock<float>;
template class StarBlock<double>;
template CoreRepresentation<float> pool<float>(const BasicTensor<float>&, PoolingKind, bool, Rng*);
template CoreRepresentation<double> pool<double>(const BasicTensor<double>&, PoolingKind, bool,
                                                 Rng*);

}  // namespace softs
