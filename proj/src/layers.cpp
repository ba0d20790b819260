#include "pedintent/layers.hpp"

#include <cmath>

#include "pedintent/errors.hpp"

namespace pedintent {

template <typename T>
Tensor<T> ParamInit::uniform(Shape shape, double bound) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) {
    const double u = double(rng_() >> 11) * 0x1.0p-53;
    x = static_cast<T>((2.0 * u - 1.0) * bound);
  }
  return Tensor<T>(std::move(shape), std::move(v), true);
}

template <typename T>
Tensor<T> ParamInit::glorot(std::size_t fan_in, std::size_t fan_out) {
  return uniform<T>({fan_in, fan_out}, std::sqrt(6.0 / double(fan_in + fan_out)));
}

Activation parse_activation(std::string_view name) {
  if (name == "gelu") return Activation::kGelu;
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::kGelu: return "gelu";
    case Activation::kRelu: return "relu";
    case Activation::kIdentity: return "identity";
  }
  return "";
}

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation a) {
  switch (a) {
    case Activation::kGelu: return gelu(x);
    case Activation::kRelu: return relu(x);
    case Activation::kIdentity: return x;
  }
  return x;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, ForwardContext& ctx) {
  if (!ctx.training || rate <= 0.0) return x;
  if (ctx.rng == nullptr) throw ContractError("dropout in training mode needs an rng");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = double((*ctx.rng)() >> 11) * 0x1.0p-53 < rate ? T(0) : keep_scale;
  return mul(x, Tensor<T>(x.shape(), std::move(mask)));
}

template <typename T>
Linear<T> Linear<T>::create(std::size_t in, std::size_t out, ParamInit& init) {
  return {init.glorot<T>(in, out), Tensor<T>::zeros({out}, true)};
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

template <typename T>
LayerNorm<T> LayerNorm<T>::create(std::size_t dim) {
  return {Tensor<T>::full({dim}, T(1), true), Tensor<T>::zeros({dim}, true)};
}

template <typename T>
void LayerNorm<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

#define PEDINTENT_INSTANTIATE_LAYERS(T)                                        \
  template Tensor<T> ParamInit::uniform<T>(Shape, double);                     \
  template Tensor<T> ParamInit::glorot<T>(std::size_t, std::size_t);           \
  template Tensor<T> activate<T>(const Tensor<T>&, Activation);                \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, ForwardContext&);    \
  template struct Linear<T>;                                                   \
  template struct LayerNorm<T>;

PEDINTENT_INSTANTIATE_LAYERS(float)
PEDINTENT_INSTANTIATE_LAYERS(double)

}  // namespace pedintent
