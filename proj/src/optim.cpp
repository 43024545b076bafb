#include "panelnet/optim.hpp"

#include <cmath>

#include "panelnet/errors.hpp"

namespace panelnet {

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 std::int64_t t, const AdamConfig& cfg) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw ShapeError("adam: parameter, gradient and moment sizes differ");
  }
  if (t < 1) throw ConfigError("adam: step count starts at 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    param[i] = static_cast<T>(param[i] - cfg.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps));
  }
}

template <typename T>
Adam<T>::Adam(std::vector<nn::Parameter<T>>& params, const AdamConfig& cfg) : params_(&params), cfg_(cfg) {
  if (!(cfg.lr > 0) || !(cfg.beta1 >= 0 && cfg.beta1 < 1) || !(cfg.beta2 >= 0 && cfg.beta2 < 1) || !(cfg.eps > 0)) {
    throw ConfigError("adam: need lr > 0, betas in [0, 1) and eps > 0");
  }
  for (const auto& p : params) {
    m_.emplace_back(p.tensor.numel(), T(0));
    v_.emplace_back(p.tensor.numel(), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  auto& params = *params_;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("adam: non-finite gradient in '" + p.name + "' at step " + std::to_string(t_ + 1));
      }
    }
  }
  ++t_;
  std::vector<T> zeros;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& tensor = params[k].tensor;
    std::span<const T> g;
    if (tensor.has_grad()) {
      g = tensor.grad();
    } else {
      zeros.assign(tensor.numel(), T(0));
      g = zeros;
    }
    adam_update<T>(tensor.mutable_data(), g, m_[k], v_[k], t_, cfg_);
  }
}

template <typename T>
void Adam<T>::save(Checkpoint& ck) const {
  ck.add_u64("adam.step", static_cast<std::uint64_t>(t_));
  for (std::size_t k = 0; k < params_->size(); ++k) {
    const auto& name = (*params_)[k].name;
    const std::vector<std::uint32_t> dims{static_cast<std::uint32_t>(m_[k].size())};
    if constexpr (std::is_same_v<T, float>) {
      ck.add_f32("adam.m." + name, dims, m_[k]);
      ck.add_f32("adam.v." + name, dims, v_[k]);
    } else {
      ck.add_f64("adam.m." + name, dims, m_[k]);
      ck.add_f64("adam.v." + name, dims, v_[k]);
    }
  }
}

template <typename T>
void Adam<T>::load(const Checkpoint& ck) {
  t_ = static_cast<std::int64_t>(ck.u64("adam.step"));
  for (std::size_t k = 0; k < params_->size(); ++k) {
    const auto& name = (*params_)[k].name;
    auto m = ck.values<T>("adam.m." + name);
    auto v = ck.values<T>("adam.v." + name);
    if (m.size() != m_[k].size() || v.size() != v_[k].size()) {
      throw VersionError("checkpoint: optimizer state for '" + name + "' has the wrong size");
    }
    m_[k] = std::move(m);
    v_[k] = std::move(v);
  }
}

template void adam_update(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                          std::int64_t, const AdamConfig&);
template void adam_update(std::span<double>, std::span<const double>, std::span<double>,
                          std::span<double>, std::int64_t, const AdamConfig&);
template class Adam<float>;
template class Adam<double>;

}  // namespace panelnet
