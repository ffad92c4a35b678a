#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "acdmsr/conv.hpp"
#include "acdmsr/tensor.hpp"

namespace acdmsr {

// Named, ordered parameter tensors. Ordering is by name, which fixes the
// reduction and serialization order.
template <typename T>
using ParameterSet = std::map<std::string, BasicTensor<T>>;

// Tape of primitive operations recorded during one forward pass. Nodes are
// appended in evaluation order, so every node's inputs precede it.
template <typename T>
class Graph {
 public:
  using TensorT = BasicTensor<T>;

  struct Var {
    std::size_t id;
  };

  // Receives d(loss)/d(output) and accumulates into the inputs' gradients
  // (null entries are inputs that do not require gradients).
  using Backward = std::function<void(const TensorT& grad_out, std::vector<TensorT*>& grad_in)>;

  Var constant(TensorT value) { return push(std::move(value), {}, nullptr, false, "constant"); }

  Var parameter(const std::string& name, const TensorT& value) {
    Var v = push(value, {}, nullptr, true, "parameter");
    nodes_[v.id].param = name;
    return v;
  }

  Var record(TensorT value, std::vector<std::size_t> inputs, Backward backward, const char* op) {
    bool needs = false;
    for (auto i : inputs) needs = needs || nodes_.at(i).requires_grad;
    return push(std::move(value), std::move(inputs), needs ? std::move(backward) : nullptr, needs, op);
  }

  const TensorT& value(Var v) const { return nodes_.at(v.id).value; }
  std::size_t size() const { return nodes_.size(); }
  const char* op_name(Var v) const { return nodes_.at(v.id).op; }
  const std::vector<std::size_t>& inputs_of(Var v) const { return nodes_.at(v.id).inputs; }

  // d(loss)/d(p) for every parameter reachable from the loss. Parameters used
  // several times have their contributions summed.
  ParameterSet<T> reverse_gradients(Var loss) {
    const Node& ln = nodes_.at(loss.id);
    if (ln.value.size() != 1)
      fail(ErrorKind::shape, "loss must be scalar, got shape " + shape_str(ln.value.shape()));
    std::vector<std::unique_ptr<TensorT>> grads(loss.id + 1);
    grads[loss.id] = std::make_unique<TensorT>(ln.value.shape(), T(1));
    ParameterSet<T> out;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (!grads[i]) continue;
      Node& n = nodes_[i];
      if (!n.param.empty()) {
        auto it = out.find(n.param);
        if (it == out.end())
          out.emplace(n.param, std::move(*grads[i]));
        else
          for (std::size_t j = 0; j < it->second.size(); ++j) it->second[j] += (*grads[i])[j];
        continue;
      }
      if (!n.backward) continue;
      std::vector<TensorT*> gin(n.inputs.size(), nullptr);
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t in = n.inputs[k];
        if (!nodes_[in].requires_grad) continue;
        if (!grads[in]) grads[in] = std::make_unique<TensorT>(nodes_[in].value.shape());
        gin[k] = grads[in].get();
      }
      n.backward(*grads[i], gin);
      grads[i].reset();
    }
    return out;
  }

 private:
  struct Node {
    TensorT value;
    std::vector<std::size_t> inputs;
    Backward backward;
    bool requires_grad = false;
    const char* op = "";
    std::string param;
  };

  Var push(TensorT value, std::vector<std::size_t> inputs, Backward backward, bool requires_grad, const char* op) {
    nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward), requires_grad, op, {}});
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

// Primitive operations. Each records one node with its adjoint.
namespace ops {

template <typename T>
using Var = typename Graph<T>::Var;

template <typename T>
Var<T> add(Graph<T>& g, Var<T> a, Var<T> b) {
  auto out = zip(g.value(a), g.value(b), [](T x, T y) { return x + y; }, "add");
  return g.record(std::move(out), {a.id, b.id},
                  [](const BasicTensor<T>& go, std::vector<BasicTensor<T>*>& gi) {
                    for (auto* t : gi)
                      if (t)
                        for (std::size_t i = 0; i < go.size(); ++i) (*t)[i] += go[i];
                  },
                  "add");
}

template <typename T>
Var<T> sub(Graph<T>& g, Var<T> a, Var<T> b) {
  auto out = zip(g.value(a), g.value(b), [](T x, T y) { return x - y; }, "sub");
  return g.record(std::move(out), {a.id, b.id},
                  [](const BasicTensor<T>& go, std::vector<BasicTensor<T>*>& gi) {
                    if (gi[0])
                      for (std::size_t i = 0; i < go.size(); ++i) (*gi[0])[i] += go[i];
                    if (gi[1])
                      for (std::size_t i = 0; i < go.size(); ++i) (*gi[1])[i] -= go[i];
                  },
                  "sub");
}

template <typename T>
Var<T> mul(Graph<T>& g, Var<T> a, Var<T> b) {
  auto out = zip(g.value(a), g.value(b), [](T x, T y) { return x * y; }, "mul");
  // operands are copied: node storage may move as the tape grows
  return g.record(std::move(out), {a.id, b.id},
                  [av = g.value(a), bv = g.value(b)](const BasicTensor<T>& go, std::vector<BasicTensor<T>*>& gi) {
                    if (gi[0])
                      for (std::size_t i = 0; i < go.size(); ++i) (*gi[0])[i] += go[i] * bv[i];
                    if (gi[1])
                      for (std::size_t i = 0; i < go.size(); ++i) (*gi[1])[i] += go[i] * av[i];
                  },
                  "mul");
}

template <typename T>
Var<T> scale(Graph<T>& g, Var<T> a, T c) {
  auto out = map(g.value(a), [c](T x) { return c * x; });
  return g.record(std::move(out), {a.id},
                  [c](const BasicTensor<T>& go, std::vector<BasicTensor<T>*>& gi) {
                    for (std::size_t i = 0; i < go.size(); ++i) (*gi[0])[i] += c * go[i];
                  },
                  "scale");
}

// x * sigmoid(x)
template <typename T>
Var<T> silu(Graph<T>& g, Var<T> a) {
  const BasicTensor<T>& x = g.value(a);
  auto out = map(x, [](T v) { return v / (T(1) + std::exp(-v)); });
  return g.record(std::move(out), {a.id},
                  [x](const BasicTensor<T>& go, std::vector<BasicTensor<T>*>& gi) {
                    for (std::size_t i = 0; i < go.size(); ++i) {
                      const T s = T(1) / (T(1) + std::exp(-x[i]));
                      (*gi[0])[i] += go[i] * s * (T(1) + x[i] * (T(1) - s));
                    }
                  },
                  "silu");
}

template <typename T>
Var<T> abs(Graph<T>& g, Var<T> a) {
  const BasicTensor<T>& x = g.value(a);
  auto out = map(x, [](T v) { return std::abs(v); });
  return g.record(std::move(out), {a.id},
                  [x](const BasicTensor<T>& go, std::vector<BasicTensor<T>*>& gi) {
                    for (std::size_t i = 0; i < go.size(); ++i)
                      (*gi[0])[i] += go[i] * (x[i] > T(0) ? T(1) : (x[i] < T(0) ? T(-1) : T(0)));
                  },
                  "abs");
}

// Mean over all elements; accumulated in double.
template <typename T>
Var<T> mean(Graph<T>& g, Var<T> a) {
  const BasicTensor<T>& x = g.value(a);
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += double(x[i]);
  const std::size_t n = x.size();
  BasicTensor<T> out({1}, T(acc / double(n)));
  return g.record(std::move(out), {a.id},
                  [n](const BasicTensor<T>& go, std::vector<BasicTensor<T>*>& gi) {
                    const T d = go[0] / T(n);
                    for (std::size_t i = 0; i < n; ++i) (*gi[0])[i] += d;
                  },
                  "mean");
}

template <typename T>
Var<T> conv2d(Graph<T>& g, Var<T> x, Var<T> kernel, std::size_t stride = 1, Padding padding = Padding::reflect) {
  const ConvGeometry geo = conv_geometry(g.value(x).shape(), g.value(kernel).shape(), stride);
  auto cols = std::make_shared<std::vector<T>>();
  auto out = acdmsr::conv2d(g.value(x), g.value(kernel), stride, padding, cols.get());
  return g.record(std::move(out), {x.id, kernel.id},
                  [geo, padding, cols, w = g.value(kernel)](const BasicTensor<T>& go,
                                                            std::vector<BasicTensor<T>*>& gi) {
                    conv2d_backward(geo, padding, *cols, w, go, gi[0], gi[1]);
                  },
                  "conv2d");
}

// x: C x H x W, v: C. Adds v[c] to every pixel of channel c.
template <typename T>
Var<T> add_channel(Graph<T>& g, Var<T> x, Var<T> v) {
  const BasicTensor<T>& xv = g.value(x);
  const BasicTensor<T>& vv = g.value(v);
  if (xv.rank() != 3 || vv.size() != xv.dim(0))
    fail(ErrorKind::shape, "add_channel: " + shape_str(xv.shape()) + " with " + shape_str(vv.shape()));
  const std::size_t c = xv.dim(0), hw = xv.dim(1) * xv.dim(2);
  BasicTensor<T> out = xv;
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < hw; ++i) out[k * hw + i] += vv[k];
  return g.record(std::move(out), {x.id, v.id},
                  [c, hw](const BasicTensor<T>& go, std::vector<BasicTensor<T>*>& gi) {
                    if (gi[0])
                      for (std::size_t i = 0; i < go.size(); ++i) (*gi[0])[i] += go[i];
                    if (gi[1])
                      for (std::size_t k = 0; k < c; ++k) {
                        T s = 0;
                        for (std::size_t i = 0; i < hw; ++i) s += go[k * hw + i];
                        (*gi[1])[k] += s;
                      }
                  },
                  "add_channel");
}

// w: O x I, x: I -> O
template <typename T>
Var<T> linear(Graph<T>& g, Var<T> w, Var<T> x) {
  const BasicTensor<T>& wv = g.value(w);
  const BasicTensor<T>& xv = g.value(x);
  if (wv.rank() != 2 || wv.dim(1) != xv.size())
    fail(ErrorKind::shape, "linear: weight " + shape_str(wv.shape()) + " with input " + shape_str(xv.shape()));
  const std::size_t o = wv.dim(0), in = wv.dim(1);
  BasicTensor<T> out({o});
  for (std::size_t r = 0; r < o; ++r) {
    T s = 0;
    for (std::size_t c = 0; c < in; ++c) s += wv[r * in + c] * xv[c];
    out[r] = s;
  }
  return g.record(std::move(out), {w.id, x.id},
                  [wv, xv, o, in](const BasicTensor<T>& go, std::vector<BasicTensor<T>*>& gi) {
                    if (gi[0])
                      for (std::size_t r = 0; r < o; ++r)
                        for (std::size_t c = 0; c < in; ++c) (*gi[0])[r * in + c] += go[r] * xv[c];
                    if (gi[1])
                      for (std::size_t r = 0; r < o; ++r)
                        for (std::size_t c = 0; c < in; ++c) (*gi[1])[c] += go[r] * wv[r * in + c];
                  },
                  "linear");
}

// Nearest-neighbour x2 upsampling.
template <typename T>
Var<T> upsample2x(Graph<T>& g, Var<T> x) {
  const BasicTensor<T>& xv = g.value(x);
  if (xv.rank() != 3) fail(ErrorKind::shape, "upsample2x expects C x H x W, got " + shape_str(xv.shape()));
  const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  BasicTensor<T> out({c, 2 * h, 2 * w});
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t x2 = 0; x2 < 2 * w; ++x2) out.at(k, y, x2) = xv.at(k, y / 2, x2 / 2);
  return g.record(std::move(out), {x.id},
                  [c, h, w](const BasicTensor<T>& go, std::vector<BasicTensor<T>*>& gi) {
                    for (std::size_t k = 0; k < c; ++k)
                      for (std::size_t y = 0; y < 2 * h; ++y)
                        for (std::size_t x2 = 0; x2 < 2 * w; ++x2) gi[0]->at(k, y / 2, x2 / 2) += go.at(k, y, x2);
                  },
                  "upsample2x");
}

template <typename T>
Var<T> concat_channels(Graph<T>& g, Var<T> a, Var<T> b) {
  const BasicTensor<T>& av = g.value(a);
  const BasicTensor<T>& bv = g.value(b);
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2))
    fail(ErrorKind::shape, "concat_channels: " + shape_str(av.shape()) + " with " + shape_str(bv.shape()));
  std::vector<T> data(av.vec());
  data.insert(data.end(), bv.vec().begin(), bv.vec().end());
  const std::size_t na = av.size();
  BasicTensor<T> out({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)}, std::move(data));
  return g.record(std::move(out), {a.id, b.id},
                  [na](const BasicTensor<T>& go, std::vector<BasicTensor<T>*>& gi) {
                    if (gi[0])
                      for (std::size_t i = 0; i < na; ++i) (*gi[0])[i] += go[i];
                    if (gi[1])
                      for (std::size_t i = na; i < go.size(); ++i) (*gi[1])[i - na] += go[i];
                  },
                  "concat_channels");
}

template <typename T>
Var<T> mse(Graph<T>& g, Var<T> a, Var<T> b) {
  auto d = sub(g, a, b);
  return mean(g, mul(g, d, d));
}

template <typename T>
Var<T> mae(Graph<T>& g, Var<T> a, Var<T> b) {
  return mean(g, abs(g, sub(g, a, b)));
}

}  // namespace ops

}  // namespace acdmsr
