#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "memse/activation.hpp"
#include "memse/error.hpp"
#include "memse/linalg.hpp"

namespace memse {

struct Shape {
  Index channels = 0;
  Index height = 0;
  Index width = 0;

  Index size() const { return channels * height * width; }
  bool operator==(const Shape&) const = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

// Weights are [out][in][kh][kw], row-major.
struct ConvLayer {
  Index in_channels = 0;
  Index out_channels = 0;
  Index kernel_size = 0;
  Index stride = 1;
  Index padding = 0;
  std::vector<double> weights;
  std::optional<Vector> bias;

  double weight(Index o, Index i, Index ky, Index kx) const {
    return weights[static_cast<std::size_t>(((o * in_channels + i) * kernel_size + ky) * kernel_size + kx)];
  }
};

// Row = output neuron, column = input index.
struct LinearLayer {
  Matrix weights;
  std::optional<Vector> bias;
};

struct ActivationLayer {
  ActivationKind kind = ActivationKind::identity;
};

struct AvgPoolLayer {
  Index window = 2;
};

using LayerSpec = std::variant<ConvLayer, LinearLayer, ActivationLayer, AvgPoolLayer>;

struct NetworkSpec {
  Shape input_shape;
  std::vector<LayerSpec> layers;
};

namespace detail {

inline Index conv_out(Index in, Index k, Index stride, Index pad) {
  const Index span = in + 2 * pad - k;
  if (span < 0) return 0;
  return span / stride + 1;
}

}  // namespace detail

inline Shape output_shape(const LayerSpec& layer, const Shape& in) {
  struct Visitor {
    const Shape& in;
    Shape operator()(const ConvLayer& c) const {
      if (c.in_channels != in.channels)
        throw ShapeError("conv expects " + std::to_string(c.in_channels) + " input channels, got " + to_string(in));
      if (c.kernel_size <= 0 || c.stride <= 0 || c.padding < 0 || c.out_channels <= 0)
        throw ShapeError("conv geometry must be positive");
      const std::size_t expected =
          static_cast<std::size_t>(c.out_channels * c.in_channels * c.kernel_size * c.kernel_size);
      if (c.weights.size() != expected)
        throw ShapeError("conv weight count " + std::to_string(c.weights.size()) + " != " + std::to_string(expected));
      if (c.bias && c.bias->size() != c.out_channels) throw ShapeError("conv bias length mismatch");
      const Shape out{c.out_channels, detail::conv_out(in.height, c.kernel_size, c.stride, c.padding),
                      detail::conv_out(in.width, c.kernel_size, c.stride, c.padding)};
      if (out.height <= 0 || out.width <= 0) throw ShapeError("conv output would be empty for input " + to_string(in));
      return out;
    }
    Shape operator()(const LinearLayer& l) const {
      if (l.weights.cols() != in.size())
        throw ShapeError("linear expects " + std::to_string(l.weights.cols()) + " inputs, got " + to_string(in));
      if (l.weights.rows() <= 0) throw ShapeError("linear layer has no outputs");
      if (l.bias && l.bias->size() != l.weights.rows()) throw ShapeError("linear bias length mismatch");
      return {l.weights.rows(), 1, 1};
    }
    Shape operator()(const ActivationLayer&) const { return in; }
    Shape operator()(const AvgPoolLayer& p) const {
      if (p.window <= 0) throw ShapeError("pool window must be positive");
      if (in.height % p.window != 0 || in.width % p.window != 0)
        throw ShapeError("pool window " + std::to_string(p.window) + " does not divide " + to_string(in));
      return {in.channels, in.height / p.window, in.width / p.window};
    }
  };
  return std::visit(Visitor{in}, layer);
}

// Shape after every layer; throws on any inconsistency.
inline std::vector<Shape> infer_shapes(const NetworkSpec& spec) {
  if (spec.input_shape.size() <= 0) throw ShapeError("input shape must be non-empty");
  std::vector<Shape> shapes;
  shapes.reserve(spec.layers.size());
  Shape cur = spec.input_shape;
  bool has_linear = false;
  for (const auto& layer : spec.layers) {
    cur = output_shape(layer, cur);
    shapes.push_back(cur);
    has_linear |= std::holds_alternative<ConvLayer>(layer) || std::holds_alternative<LinearLayer>(layer);
  }
  if (!has_linear) throw ShapeError("network needs at least one conv or linear layer");
  return shapes;
}

inline void validate(const NetworkSpec& spec) { (void)infer_shapes(spec); }

// ---------------------------------------------------------------------------
// Lowered form: every stage acts on flattened (channel, row, col) vectors.

struct LinearStage {
  SparseRows weights;  // stored entries are the physical devices
  double w_max = 0.0;
  Vector bias;         // empty when absent
  Shape in_shape;
  Shape out_shape;
};

struct ActivationStage {
  ActivationKind kind = ActivationKind::identity;
  Shape shape;
};

struct PoolStage {
  SparseRows map;  // row-stochastic, window^2 entries of 1/window^2 per row
  Index window = 1;
  Shape in_shape;
  Shape out_shape;
};

using Stage = std::variant<LinearStage, ActivationStage, PoolStage>;

struct LoweredNetwork {
  Shape input_shape;
  std::vector<Stage> stages;

  Index input_size() const { return input_shape.size(); }

  Shape output_shape() const {
    if (stages.empty()) return input_shape;
    return std::visit(
        [](const auto& s) -> Shape {
          if constexpr (std::is_same_v<std::decay_t<decltype(s)>, ActivationStage>)
            return s.shape;
          else
            return s.out_shape;
        },
        stages.back());
  }

  Index output_size() const { return output_shape().size(); }

  std::vector<std::size_t> linear_stage_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < stages.size(); ++i)
      if (std::holds_alternative<LinearStage>(stages[i])) idx.push_back(i);
    return idx;
  }

  std::size_t linear_count() const { return linear_stage_indices().size(); }
};

// Block-Toeplitz unrolling of a convolution. Taps that land in the zero
// padding are not stored.
inline LinearStage lower_conv(const ConvLayer& c, const Shape& in, const Shape& out) {
  auto p = std::make_shared<SparsePattern>();
  p->rows = out.size();
  p->cols = in.size();
  std::vector<double> values;
  const std::size_t per_row = static_cast<std::size_t>(c.in_channels * c.kernel_size * c.kernel_size);
  p->row_ptr.reserve(static_cast<std::size_t>(out.size()) + 1);
  p->col.reserve(static_cast<std::size_t>(out.size()) * per_row);
  values.reserve(static_cast<std::size_t>(out.size()) * per_row);
  for (Index o = 0; o < out.channels; ++o)
    for (Index oy = 0; oy < out.height; ++oy)
      for (Index ox = 0; ox < out.width; ++ox) {
        for (Index i = 0; i < c.in_channels; ++i)
          for (Index ky = 0; ky < c.kernel_size; ++ky) {
            const Index iy = oy * c.stride - c.padding + ky;
            if (iy < 0 || iy >= in.height) continue;
            for (Index kx = 0; kx < c.kernel_size; ++kx) {
              const Index ix = ox * c.stride - c.padding + kx;
              if (ix < 0 || ix >= in.width) continue;
              p->col.push_back((i * in.height + iy) * in.width + ix);
              values.push_back(c.weight(o, i, ky, kx));
            }
          }
        p->row_ptr.push_back(p->nnz());
      }
  LinearStage st{SparseRows(std::move(p), std::move(values)), 0.0, Vector(), in, out};
  if (c.bias) {
    st.bias.resize(out.size());
    for (Index o = 0; o < out.channels; ++o)
      st.bias.segment(o * out.height * out.width, out.height * out.width).setConstant((*c.bias)[o]);
  }
  return st;
}

inline PoolStage lower_pool(Index s, const Shape& in, const Shape& out) {
  auto p = std::make_shared<SparsePattern>();
  p->rows = out.size();
  p->cols = in.size();
  const double w = 1.0 / static_cast<double>(s * s);
  std::vector<double> values;
  for (Index ch = 0; ch < out.channels; ++ch)
    for (Index oy = 0; oy < out.height; ++oy)
      for (Index ox = 0; ox < out.width; ++ox) {
        for (Index dy = 0; dy < s; ++dy)
          for (Index dx = 0; dx < s; ++dx) {
            p->col.push_back((ch * in.height + oy * s + dy) * in.width + ox * s + dx);
            values.push_back(w);
          }
        p->row_ptr.push_back(p->nnz());
      }
  return PoolStage{SparseRows(std::move(p), std::move(values)), s, in, out};
}

inline LoweredNetwork lower(const NetworkSpec& spec) {
  const auto shapes = infer_shapes(spec);
  LoweredNetwork net;
  net.input_shape = spec.input_shape;
  Shape in = spec.input_shape;
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const Shape out = shapes[li];
    const auto& layer = spec.layers[li];
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      net.stages.emplace_back(lower_conv(*c, in, out));
    } else if (const auto* l = std::get_if<LinearLayer>(&layer)) {
      LinearStage st{SparseRows::full(l->weights), 0.0, l->bias.value_or(Vector()), in, out};
      net.stages.emplace_back(std::move(st));
    } else if (const auto* a = std::get_if<ActivationLayer>(&layer)) {
      net.stages.emplace_back(ActivationStage{a->kind, out});
    } else {
      net.stages.emplace_back(lower_pool(std::get<AvgPoolLayer>(layer).window, in, out));
    }
    if (auto* st = std::get_if<LinearStage>(&net.stages.back())) {
      st->w_max = st->weights.max_abs();
      if (!(st->w_max > 0.0))
        throw ShapeError("layer " + std::to_string(li) + " has all-zero weights (W_max undefined)");
    }
    in = out;
  }
  return net;
}

// ---------------------------------------------------------------------------
// Noiseless evaluation.

inline Vector apply_activation(ActivationKind kind, const Vector& x) {
  if (kind == ActivationKind::identity) return x;
  Vector y(x.size());
  for (Index i = 0; i < x.size(); ++i) y[i] = apply(kind, x[i]);
  return y;
}

inline Vector forward_stage(const Stage& stage, const Vector& x) {
  if (const auto* l = std::get_if<LinearStage>(&stage)) {
    Vector y = multiply(l->weights, x);
    if (l->bias.size() != 0) y += l->bias;
    return y;
  }
  if (const auto* a = std::get_if<ActivationStage>(&stage)) return apply_activation(a->kind, x);
  return multiply(std::get<PoolStage>(stage).map, x);
}

// Output of every stage, in order.
inline std::vector<Vector> reference_forward(const LoweredNetwork& net, const Vector& x) {
  if (x.size() != net.input_size())
    throw ShapeError("input length " + std::to_string(x.size()) + " != " + std::to_string(net.input_size()));
  std::vector<Vector> out;
  out.reserve(net.stages.size());
  const Vector* cur = &x;
  for (const auto& st : net.stages) {
    out.push_back(forward_stage(st, *cur));
    cur = &out.back();
  }
  return out;
}

inline Vector reference_output(const LoweredNetwork& net, const Vector& x) {
  auto all = reference_forward(net, x);
  return all.empty() ? x : all.back();
}

}  // namespace memse
