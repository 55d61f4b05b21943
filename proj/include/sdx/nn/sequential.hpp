#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdx/autodiff/layers.hpp"
#include "sdx/autodiff/parameter.hpp"

namespace sdx {

enum class LayerKind { conv2d, conv2d_transpose, dense, batch_norm, activation, dropout, max_pool, flatten, reshape, upsample };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::conv2d_transpose: return "conv2d_transpose";
    case LayerKind::dense: return "dense";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::activation: return "activation";
    case LayerKind::dropout: return "dropout";
    case LayerKind::max_pool: return "max_pool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::reshape: return "reshape";
    case LayerKind::upsample: return "upsample";
  }
  return "?";
}

inline LayerKind parse_layer_kind(const std::string& s) {
  for (auto k : {LayerKind::conv2d, LayerKind::conv2d_transpose, LayerKind::dense, LayerKind::batch_norm,
                 LayerKind::activation, LayerKind::dropout, LayerKind::max_pool, LayerKind::flatten,
                 LayerKind::reshape, LayerKind::upsample})
    if (s == layer_kind_name(k)) return k;
  throw ConfigError("unknown layer kind '" + s + "'");
}

// One row of an architecture descriptor.
struct LayerSpec {
  LayerKind kind = LayerKind::flatten;
  std::int64_t units = 0;  // filters for convolutions, width for dense
  std::int64_t kernel_h = 1;
  std::int64_t kernel_w = 1;
  Stride stride{};
  Padding padding = Padding::same;
  ActivationKind activation = ActivationKind::linear;
  double alpha = 0.2;  // leaky-relu slope
  double rate = 0.0;   // dropout
  std::int64_t window = 2;
  Shape target;  // reshape target without the batch dim

  static LayerSpec conv(std::int64_t filters, std::int64_t k, std::int64_t s, Padding p = Padding::same) {
    LayerSpec l;
    l.kind = LayerKind::conv2d;
    l.units = filters;
    l.kernel_h = l.kernel_w = k;
    l.stride = {s, s};
    l.padding = p;
    return l;
  }
  static LayerSpec conv_transpose(std::int64_t filters, std::int64_t k, std::int64_t s) {
    LayerSpec l = conv(filters, k, s);
    l.kind = LayerKind::conv2d_transpose;
    return l;
  }
  static LayerSpec dense(std::int64_t units) {
    LayerSpec l;
    l.kind = LayerKind::dense;
    l.units = units;
    return l;
  }
  static LayerSpec act(ActivationKind a, double alpha = 0.2) {
    LayerSpec l;
    l.kind = LayerKind::activation;
    l.activation = a;
    l.alpha = alpha;
    return l;
  }
  static LayerSpec batch_norm() {
    LayerSpec l;
    l.kind = LayerKind::batch_norm;
    return l;
  }
  static LayerSpec dropout(double rate) {
    LayerSpec l;
    l.kind = LayerKind::dropout;
    l.rate = rate;
    return l;
  }
  static LayerSpec max_pool(std::int64_t window = 2) {
    LayerSpec l;
    l.kind = LayerKind::max_pool;
    l.window = window;
    return l;
  }
  static LayerSpec flatten() { return LayerSpec{}; }
  static LayerSpec reshape(Shape target) {
    LayerSpec l;
    l.kind = LayerKind::reshape;
    l.target = std::move(target);
    return l;
  }
  static LayerSpec upsample(std::int64_t f) {
    LayerSpec l;
    l.kind = LayerKind::upsample;
    l.stride = {f, f};
    return l;
  }
};

inline void to_json(nlohmann::json& j, const LayerSpec& l) {
  j = nlohmann::json{{"kind", layer_kind_name(l.kind)}};
  switch (l.kind) {
    case LayerKind::conv2d:
    case LayerKind::conv2d_transpose:
      j["filters"] = l.units;
      j["kernel"] = {l.kernel_h, l.kernel_w};
      j["stride"] = {l.stride.h, l.stride.w};
      j["padding"] = l.padding == Padding::same ? "same" : "valid";
      break;
    case LayerKind::dense: j["units"] = l.units; break;
    case LayerKind::activation:
      j["activation"] = activation_name(l.activation);
      if (l.activation == ActivationKind::leaky_relu) j["alpha"] = l.alpha;
      break;
    case LayerKind::dropout: j["rate"] = l.rate; break;
    case LayerKind::max_pool: j["window"] = l.window; break;
    case LayerKind::reshape: j["target"] = l.target; break;
    case LayerKind::upsample: j["factor"] = {l.stride.h, l.stride.w}; break;
    default: break;
  }
}

inline void from_json(const nlohmann::json& j, LayerSpec& l) {
  l = LayerSpec{};
  l.kind = parse_layer_kind(j.at("kind").get<std::string>());
  switch (l.kind) {
    case LayerKind::conv2d:
    case LayerKind::conv2d_transpose:
      l.units = j.at("filters").get<std::int64_t>();
      l.kernel_h = j.at("kernel").at(0).get<std::int64_t>();
      l.kernel_w = j.at("kernel").at(1).get<std::int64_t>();
      l.stride = {j.at("stride").at(0).get<std::int64_t>(), j.at("stride").at(1).get<std::int64_t>()};
      l.padding = j.value("padding", std::string("same")) == "valid" ? Padding::valid : Padding::same;
      break;
    case LayerKind::dense: l.units = j.at("units").get<std::int64_t>(); break;
    case LayerKind::activation:
      l.activation = parse_activation(j.at("activation").get<std::string>());
      l.alpha = j.value("alpha", 0.2);
      break;
    case LayerKind::dropout: l.rate = j.at("rate").get<double>(); break;
    case LayerKind::max_pool: l.window = j.value("window", std::int64_t{2}); break;
    case LayerKind::reshape: l.target = j.at("target").get<Shape>(); break;
    case LayerKind::upsample:
      l.stride = {j.at("factor").at(0).get<std::int64_t>(), j.at("factor").at(1).get<std::int64_t>()};
      break;
    default: break;
  }
}

struct ForwardOptions {
  Mode mode = Mode::eval;
  Rng* rng = nullptr;  // required for train-mode dropout
  // Evaluating the critic function itself for the gradient penalty: dropout
  // is skipped.
  bool penalty_path = false;
};

// Named tensor for checkpoint state.
template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

// Feed-forward stack built from a descriptor. Input shape excludes the batch
// dimension.
template <class T>
class Sequential {
 public:
  Sequential() = default;

  Sequential(std::vector<LayerSpec> specs, Shape input_shape, std::uint64_t seed)
      : specs_(std::move(specs)), input_shape_(std::move(input_shape)) {
    Rng rng(seed);
    Shape s = input_shape_;
    layers_.resize(specs_.size());
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      const auto& spec = specs_[i];
      auto& layer = layers_[i];
      const std::string prefix = "layer" + std::to_string(i);
      switch (spec.kind) {
        case LayerKind::conv2d:
        case LayerKind::conv2d_transpose: {
          require_rank(s, 3, i);
          const auto cin = s[2];
          const Shape kshape = spec.kind == LayerKind::conv2d
                                   ? Shape{spec.kernel_h, spec.kernel_w, cin, spec.units}
                                   : Shape{spec.kernel_h, spec.kernel_w, spec.units, cin};
          const double fan_in = static_cast<double>(spec.kernel_h * spec.kernel_w * cin);
          const double fan_out = static_cast<double>(spec.kernel_h * spec.kernel_w * spec.units);
          layer.weight = Parameter<T>(prefix + ".kernel", init_weight(kshape, fan_in, fan_out, i, rng));
          layer.bias = Parameter<T>(prefix + ".bias", Tensor<T>(Shape{spec.units}));
          break;
        }
        case LayerKind::dense: {
          require_rank(s, 1, i);
          const Shape wshape{s[0], spec.units};
          layer.weight = Parameter<T>(prefix + ".kernel", init_weight(wshape, static_cast<double>(s[0]),
                                                                      static_cast<double>(spec.units), i, rng));
          layer.bias = Parameter<T>(prefix + ".bias", Tensor<T>(Shape{spec.units}));
          break;
        }
        case LayerKind::batch_norm: {
          const auto c = s.back();
          layer.weight = Parameter<T>(prefix + ".gamma", Tensor<T>(Shape{c}, T(1)));
          layer.bias = Parameter<T>(prefix + ".beta", Tensor<T>(Shape{c}));
          layer.bn.running_mean = Tensor<T>(Shape{c}, T(0));
          layer.bn.running_var = Tensor<T>(Shape{c}, T(1));
          break;
        }
        default: break;
      }
      s = infer_shape(spec, s, i);
      shapes_.push_back(s);
    }
  }

  const std::vector<LayerSpec>& specs() const { return specs_; }
  const Shape& input_shape() const { return input_shape_; }
  Shape output_shape() const { return shapes_.empty() ? input_shape_ : shapes_.back(); }
  // Output shape (without batch) of every layer.
  const std::vector<Shape>& layer_shapes() const { return shapes_; }

  Var<T> forward(const Var<T>& x, const ForwardOptions& opt = {}) {
    Shape expect = input_shape_;
    expect.insert(expect.begin(), x.shape()[0]);
    if (x.shape() != expect)
      throw DimensionError("network input: expected " + shape_str(expect) + ", got " + shape_str(x.shape()));
    Var<T> h = x;
    for (std::size_t i = 0; i < specs_.size(); ++i) h = apply(i, h, opt);
    return h;
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& l : layers_) {
      if (l.weight) out.push_back(&*l.weight);
      if (l.bias) out.push_back(&*l.bias);
    }
    return out;
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& l : layers_) {
      if (l.weight) n += static_cast<std::int64_t>(l.weight->value().size());
      if (l.bias) n += static_cast<std::int64_t>(l.bias->value().size());
    }
    return n;
  }

  // First layer that cannot take part in a second-order gradient, if any.
  std::optional<std::string> unsupported_for_double_backward() const {
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      const auto& s = specs_[i];
      bool ok = false;
      switch (s.kind) {
        case LayerKind::conv2d:
        case LayerKind::dense:
        case LayerKind::dropout:
        case LayerKind::flatten:
        case LayerKind::reshape: ok = true; break;
        case LayerKind::activation:
          ok = s.activation == ActivationKind::linear || s.activation == ActivationKind::relu ||
               s.activation == ActivationKind::leaky_relu;
          break;
        default: ok = false;
      }
      if (!ok) {
        std::string name = layer_kind_name(s.kind);
        if (s.kind == LayerKind::activation) name += std::string("(") + activation_name(s.activation) + ")";
        return "layer " + std::to_string(i) + " [" + name + "]";
      }
    }
    return std::nullopt;
  }

  // Parameters, Adam moments and running statistics, in a stable order.
  std::vector<NamedTensor<T>> state(const std::string& prefix) const {
    std::vector<NamedTensor<T>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      for (const auto* p : {l.weight ? &*l.weight : nullptr, l.bias ? &*l.bias : nullptr}) {
        if (!p) continue;
        out.push_back({prefix + p->name(), p->value()});
        out.push_back({prefix + p->name() + "@adam_m",
                       p->adam_m_or_empty().empty() ? Tensor<T>(p->shape()) : p->adam_m_or_empty()});
        out.push_back({prefix + p->name() + "@adam_v",
                       p->adam_v_or_empty().empty() ? Tensor<T>(p->shape()) : p->adam_v_or_empty()});
      }
      if (specs_[i].kind == LayerKind::batch_norm) {
        out.push_back({prefix + "layer" + std::to_string(i) + ".running_mean", l.bn.running_mean});
        out.push_back({prefix + "layer" + std::to_string(i) + ".running_var", l.bn.running_var});
      }
    }
    return out;
  }

  std::vector<std::pair<std::string, long>> step_counts(const std::string& prefix) const {
    std::vector<std::pair<std::string, long>> out;
    for (const auto& l : layers_)
      for (const auto* p : {l.weight ? &*l.weight : nullptr, l.bias ? &*l.bias : nullptr})
        if (p) out.emplace_back(prefix + p->name(), p->step_count());
    return out;
  }

  // Restore from a name -> tensor lookup produced by state().
  template <class Lookup, class StepLookup>
  void load_state(const std::string& prefix, Lookup&& find, StepLookup&& step_of) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      auto& l = layers_[i];
      for (auto* p : {l.weight ? &*l.weight : nullptr, l.bias ? &*l.bias : nullptr}) {
        if (!p) continue;
        assign(p->value(), find(prefix + p->name()));
        assign(p->adam_m(), find(prefix + p->name() + "@adam_m"));
        assign(p->adam_v(), find(prefix + p->name() + "@adam_v"));
        p->set_step_count(step_of(prefix + p->name()));
        p->zero_grad();
      }
      if (specs_[i].kind == LayerKind::batch_norm) {
        assign(l.bn.running_mean, find(prefix + "layer" + std::to_string(i) + ".running_mean"));
        assign(l.bn.running_var, find(prefix + "layer" + std::to_string(i) + ".running_var"));
      }
    }
  }

  nlohmann::json descriptor() const {
    return nlohmann::json{{"input_shape", input_shape_}, {"layers", specs_}};
  }

  static Sequential from_descriptor(const nlohmann::json& j, std::uint64_t seed = 0) {
    return Sequential(j.at("layers").get<std::vector<LayerSpec>>(), j.at("input_shape").get<Shape>(), seed);
  }

 private:
  struct Layer {
    std::optional<Parameter<T>> weight;
    std::optional<Parameter<T>> bias;
    BatchNormState<T> bn;
  };

  static void assign(Tensor<T>& dst, const Tensor<T>& src) {
    if (dst.shape() != src.shape())
      throw DataError("checkpoint tensor shape " + shape_str(src.shape()) + " does not match model " +
                      shape_str(dst.shape()));
    dst = src;
  }

  static void require_rank(const Shape& s, std::size_t r, std::size_t i) {
    if (s.size() != r)
      throw DimensionError("layer " + std::to_string(i) + " expects rank-" + std::to_string(r) +
                           " input (without batch), got " + shape_str(s));
  }

  // He-uniform ahead of relu/leaky-relu, Glorot-uniform otherwise.
  Tensor<T> init_weight(const Shape& shape, double fan_in, double fan_out, std::size_t i, Rng& rng) const {
    ActivationKind next = ActivationKind::linear;
    for (std::size_t j = i + 1; j < specs_.size(); ++j) {
      const auto k = specs_[j].kind;
      if (k == LayerKind::activation) {
        next = specs_[j].activation;
        break;
      }
      if (k == LayerKind::conv2d || k == LayerKind::conv2d_transpose || k == LayerKind::dense) break;
    }
    const bool he = next == ActivationKind::relu || next == ActivationKind::leaky_relu;
    const double limit = he ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
    Tensor<T> w(shape);
    for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-limit, limit));
    return w;
  }

  static Shape infer_shape(const LayerSpec& spec, const Shape& s, std::size_t i) {
    switch (spec.kind) {
      case LayerKind::conv2d: {
        const auto g = detail::make_geometry(Shape{1, s[0], s[1], s[2]},
                                             Shape{spec.kernel_h, spec.kernel_w, s[2], spec.units}, spec.stride,
                                             spec.padding);
        return {g.oh, g.ow, g.co};
      }
      case LayerKind::conv2d_transpose: return {s[0] * spec.stride.h, s[1] * spec.stride.w, spec.units};
      case LayerKind::dense: return {spec.units};
      case LayerKind::max_pool:
        require_rank(s, 3, i);
        return {s[0] / spec.window, s[1] / spec.window, s[2]};
      case LayerKind::flatten: return {shape_numel(s)};
      case LayerKind::reshape:
        if (shape_numel(spec.target) != shape_numel(s))
          throw DimensionError("layer " + std::to_string(i) + ": cannot reshape " + shape_str(s) + " to " +
                               shape_str(spec.target));
        return spec.target;
      case LayerKind::upsample: return {s[0] * spec.stride.h, s[1] * spec.stride.w, s[2]};
      default: return s;
    }
  }

  Var<T> apply(std::size_t i, const Var<T>& h, const ForwardOptions& opt) {
    const auto& spec = specs_[i];
    auto& l = layers_[i];
    switch (spec.kind) {
      case LayerKind::conv2d:
        return add_bias(conv2d(h, l.weight->var(), spec.stride, spec.padding), l.bias->var());
      case LayerKind::conv2d_transpose:
        return add_bias(conv2d_transpose(h, l.weight->var(), spec.stride), l.bias->var());
      case LayerKind::dense: return add_bias(matmul(h, l.weight->var()), l.bias->var());
      case LayerKind::batch_norm: return batch_norm(h, l.weight->var(), l.bias->var(), l.bn, opt.mode);
      case LayerKind::activation: return activate(h, spec.activation, static_cast<T>(spec.alpha));
      case LayerKind::dropout: {
        if (opt.penalty_path || opt.mode == Mode::eval || spec.rate == 0.0) return h;
        if (!opt.rng) throw ConfigError("train-mode dropout requires an RNG");
        return dropout(h, spec.rate, opt.mode, *opt.rng);
      }
      case LayerKind::max_pool: return max_pool(h, spec.window);
      case LayerKind::flatten: return flatten(h);
      case LayerKind::reshape: {
        Shape s = spec.target;
        s.insert(s.begin(), h.shape()[0]);
        return reshape(h, s);
      }
      case LayerKind::upsample: return upsample_nearest(h, spec.stride);
    }
    return h;
  }

  std::vector<LayerSpec> specs_;
  Shape input_shape_;
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
};

}  // namespace sdx
