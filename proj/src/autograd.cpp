// Copyright 2026 The invmark Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "invmark/autograd.hpp"

#include <Eigen/Core>
#include <cmath>
#include <unordered_set>

#include "invmark/kernels.hpp"

namespace invmark::ag {
namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<std::shared_ptr<Node<T>>> parents,
                   std::function<void(Node<T>&)> fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(fn);
  }
  return Var<T>(std::move(node));
}

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " +
                         std::to_string(rank) + ", got " + shape_string(s));
  }
}

}  // namespace

template <typename T>
void Node<T>::accumulate(const Tensor<T>& g) {
  if (!requires_grad) return;
  if (grad.empty()) {
    grad = g;
    return;
  }
  T* dst = grad.data();
  const T* src = g.data();
  for (std::int64_t i = 0; i < grad.numel(); ++i) dst[i] += src[i];
}

template <typename T>
void Node<T>::accumulate(Tensor<T>&& g) {
  if (!requires_grad) return;
  if (grad.empty()) {
    grad = std::move(g);
    return;
  }
  T* dst = grad.data();
  const T* src = g.data();
  for (std::int64_t i = 0; i < grad.numel(); ++i) dst[i] += src[i];
}

template <typename T>
Var<T> Var<T>::constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return Var<T>(std::move(node));
}

template <typename T>
Var<T> Var<T>::parameter(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var<T>(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename T>
void backward(const Var<T>& root) {
  if (root.value().numel() != 1) {
    throw DimensionError("backward: root must be a scalar, got " +
                         shape_string(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node(), 0}};
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && parent->backward && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Tensor<T>(root.shape(), T(1)));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
    // Interior gradients are no longer needed once propagated.
    if (node != root.node() && node->backward) node->grad = Tensor<T>();
  }
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_result<T>(std::move(out), {a.shared(), b.shared()}, [](Node<T>& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(self.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_result<T>(std::move(out), {a.shared(), b.shared()}, [](Node<T>& self) {
    self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) {
      Tensor<T> g(self.grad.shape());
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = -self.grad[i];
      self.parents[1]->accumulate(std::move(g));
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_result<T>(std::move(out), {a.shared(), b.shared()}, [](Node<T>& self) {
    for (int k = 0; k < 2; ++k) {
      auto& target = self.parents[k];
      if (!target->requires_grad) continue;
      const auto& other = self.parents[1 - k]->value;
      Tensor<T> g(self.grad.shape());
      for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = self.grad[i] * other[i];
      target->accumulate(std::move(g));
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * factor;
  return make_result<T>(std::move(out), {a.shared()}, [factor](Node<T>& self) {
    Tensor<T> g(self.grad.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = self.grad[i] * factor;
    self.parents[0]->accumulate(std::move(g));
  });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(a.value()[i]);
  return make_result<T>(std::move(out), {a.shared()}, [](Node<T>& self) {
    Tensor<T> g(self.grad.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = self.grad[i] * self.value[i];
    self.parents[0]->accumulate(std::move(g));
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    out[i] = T(1) / (T(1) + std::exp(-a.value()[i]));
  }
  return make_result<T>(std::move(out), {a.shared()}, [](Node<T>& self) {
    Tensor<T> g(self.grad.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      const T s = self.value[i];
      g[i] = self.grad[i] * s * (T(1) - s);
    }
    self.parents[0]->accumulate(std::move(g));
  });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    const T v = a.value()[i];
    out[i] = v > 0 ? v : slope * v;
  }
  return make_result<T>(std::move(out), {a.shared()}, [slope](Node<T>& self) {
    const auto& x = self.parents[0]->value;
    Tensor<T> g(self.grad.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      g[i] = x[i] > 0 ? self.grad[i] : slope * self.grad[i];
    }
    self.parents[0]->accumulate(std::move(g));
  });
}

template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(a.value()[i], lo, hi);
  return make_result<T>(std::move(out), {a.shared()}, [lo, hi](Node<T>& self) {
    const auto& x = self.parents[0]->value;
    Tensor<T> g(self.grad.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      g[i] = (x[i] >= lo && x[i] <= hi) ? self.grad[i] : T(0);
    }
    self.parents[0]->accumulate(std::move(g));
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  auto out = a.value().reshaped(std::move(shape));
  return make_result<T>(std::move(out), {a.shared()}, [](Node<T>& self) {
    self.parents[0]->accumulate(self.grad.reshaped(self.parents[0]->value.shape()));
  });
}

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const Shape& first = parts[0].shape();
  require_rank(first, 4, "concat_channels");
  std::int64_t channels = 0;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::vector<std::int64_t> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    require_rank(s, 4, "concat_channels");
    if (s[0] != first[0] || s[2] != first[2] || s[3] != first[3]) {
      throw DimensionError("concat_channels: mismatched " + shape_string(s) +
                           " vs " + shape_string(first));
    }
    channels += s[1];
    widths.push_back(s[1]);
    parents.push_back(p.shared());
  }
  const std::int64_t batch = first[0];
  const std::int64_t plane = first[2] * first[3];
  Tensor<T> out({batch, channels, first[2], first[3]});
  for (std::int64_t n = 0; n < batch; ++n) {
    std::int64_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const T* src = parts[k].value().data() + n * widths[k] * plane;
      std::copy(src, src + widths[k] * plane,
                out.data() + (n * channels + offset) * plane);
      offset += widths[k];
    }
  }
  return make_result<T>(
      std::move(out), std::move(parents),
      [widths, batch, channels, plane](Node<T>& self) {
        std::int64_t offset = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          auto& parent = self.parents[k];
          if (parent->requires_grad) {
            Tensor<T> g(parent->value.shape());
            for (std::int64_t n = 0; n < batch; ++n) {
              const T* src = self.grad.data() + (n * channels + offset) * plane;
              std::copy(src, src + widths[k] * plane, g.data() + n * widths[k] * plane);
            }
            parent->accumulate(std::move(g));
          }
          offset += widths[k];
        }
      });
}

template <typename T>
Var<T> upsample_nearest2x(const Var<T>& a) {
  require_rank(a.shape(), 4, "upsample_nearest2x");
  const auto& s = a.shape();
  const std::int64_t planes = s[0] * s[1], h = s[2], w = s[3];
  Tensor<T> out({s[0], s[1], 2 * h, 2 * w});
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = a.value().data() + p * h * w;
    T* dst = out.data() + p * 4 * h * w;
    for (std::int64_t i = 0; i < 2 * h; ++i) {
      for (std::int64_t j = 0; j < 2 * w; ++j) dst[i * 2 * w + j] = src[(i / 2) * w + j / 2];
    }
  }
  return make_result<T>(std::move(out), {a.shared()}, [planes, h, w](Node<T>& self) {
    Tensor<T> g(self.parents[0]->value.shape());
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* src = self.grad.data() + p * 4 * h * w;
      T* dst = g.data() + p * h * w;
      for (std::int64_t i = 0; i < 2 * h; ++i) {
        for (std::int64_t j = 0; j < 2 * w; ++j) dst[(i / 2) * w + j / 2] += src[i * 2 * w + j];
      }
    }
    self.parents[0]->accumulate(std::move(g));
  });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& a) {
  require_rank(a.shape(), 4, "global_avg_pool");
  const auto& s = a.shape();
  const std::int64_t planes = s[0] * s[1], area = s[2] * s[3];
  Tensor<T> out({s[0], s[1]});
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = a.value().data() + p * area;
    T acc = 0;
    for (std::int64_t i = 0; i < area; ++i) acc += src[i];
    out[p] = acc / T(area);
  }
  return make_result<T>(std::move(out), {a.shared()}, [planes, area](Node<T>& self) {
    Tensor<T> g(self.parents[0]->value.shape());
    for (std::int64_t p = 0; p < planes; ++p) {
      const T v = self.grad[p] / T(area);
      std::fill(g.data() + p * area, g.data() + (p + 1) * area, v);
    }
    self.parents[0]->accumulate(std::move(g));
  });
}

template <typename T>
Var<T> channel_scale(const Var<T>& x, const Var<T>& s) {
  require_rank(x.shape(), 4, "channel_scale");
  const auto& xs = x.shape();
  if (s.shape() != Shape{xs[0], xs[1]}) {
    throw DimensionError("channel_scale: scale shape " + shape_string(s.shape()) +
                         " does not match " + shape_string(xs));
  }
  const std::int64_t planes = xs[0] * xs[1], area = xs[2] * xs[3];
  Tensor<T> out(xs);
  for (std::int64_t p = 0; p < planes; ++p) {
    const T f = s.value()[p];
    const T* src = x.value().data() + p * area;
    T* dst = out.data() + p * area;
    for (std::int64_t i = 0; i < area; ++i) dst[i] = src[i] * f;
  }
  return make_result<T>(std::move(out), {x.shared(), s.shared()}, [planes, area](Node<T>& self) {
    const auto& xv = self.parents[0]->value;
    const auto& sv = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      Tensor<T> g(xv.shape());
      for (std::int64_t p = 0; p < planes; ++p) {
        for (std::int64_t i = 0; i < area; ++i) {
          g[p * area + i] = self.grad[p * area + i] * sv[p];
        }
      }
      self.parents[0]->accumulate(std::move(g));
    }
    if (self.parents[1]->requires_grad) {
      Tensor<T> g(sv.shape());
      for (std::int64_t p = 0; p < planes; ++p) {
        T acc = 0;
        for (std::int64_t i = 0; i < area; ++i) acc += self.grad[p * area + i] * xv[p * area + i];
        g[p] = acc;
      }
      self.parents[1]->accumulate(std::move(g));
    }
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
              std::int64_t stride, std::int64_t pad) {
  require_rank(x.shape(), 4, "conv2d input");
  require_rank(weight.shape(), 4, "conv2d weight");
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  if (ws[1] != xs[1] || ws[2] != ws[3]) {
    throw DimensionError("conv2d: weight " + shape_string(ws) +
                         " incompatible with input " + shape_string(xs));
  }
  if (bias.defined() && bias.shape() != Shape{ws[0]}) {
    throw DimensionError("conv2d: bias shape " + shape_string(bias.shape()));
  }
  kernels::ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], stride, pad};
  Tensor<T> out({g.batch, g.out_channels, g.out_height(), g.out_width()});
  kernels::conv2d_forward<T>(g, x.value().data(), weight.value().data(),
                             bias.defined() ? bias.value().data() : nullptr, out.data());
  std::vector<std::shared_ptr<Node<T>>> parents{x.shared(), weight.shared()};
  if (bias.defined()) parents.push_back(bias.shared());
  return make_result<T>(std::move(out), std::move(parents), [g](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    Node<T>* bn = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
    Tensor<T> dx, dw, db;
    if (xn.requires_grad) dx = Tensor<T>(xn.value.shape());
    if (wn.requires_grad) dw = Tensor<T>(wn.value.shape());
    if (bn && bn->requires_grad) db = Tensor<T>(bn->value.shape());
    kernels::conv2d_backward<T>(g, xn.value.data(), wn.value.data(), self.grad.data(),
                                dx.empty() ? nullptr : dx.data(),
                                dw.empty() ? nullptr : dw.data(),
                                db.empty() ? nullptr : db.data());
    if (!dx.empty()) xn.accumulate(std::move(dx));
    if (!dw.empty()) wn.accumulate(std::move(dw));
    if (!db.empty()) bn->accumulate(std::move(db));
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  require_rank(x.shape(), 2, "linear input");
  require_rank(weight.shape(), 2, "linear weight");
  const std::int64_t batch = x.dim(0), in = x.dim(1), outs = weight.dim(0);
  if (weight.dim(1) != in || bias.shape() != Shape{outs}) {
    throw DimensionError("linear: weight " + shape_string(weight.shape()) +
                         " / bias " + shape_string(bias.shape()) +
                         " incompatible with input " + shape_string(x.shape()));
  }
  Tensor<T> out({batch, outs});
  {
    Eigen::Map<const RowMat<T>> xm(x.value().data(), batch, in);
    Eigen::Map<const RowMat<T>> wm(weight.value().data(), outs, in);
    Eigen::Map<RowMat<T>> om(out.data(), batch, outs);
    om.noalias() = xm * wm.transpose();
    for (std::int64_t n = 0; n < batch; ++n) {
      for (std::int64_t o = 0; o < outs; ++o) om(n, o) += bias.value()[o];
    }
  }
  return make_result<T>(
      std::move(out), {x.shared(), weight.shared(), bias.shared()},
      [batch, in, outs](Node<T>& self) {
        Eigen::Map<const RowMat<T>> dy(self.grad.data(), batch, outs);
        auto& xn = *self.parents[0];
        auto& wn = *self.parents[1];
        auto& bn = *self.parents[2];
        if (xn.requires_grad) {
          Tensor<T> g(xn.value.shape());
          Eigen::Map<RowMat<T>>(g.data(), batch, in).noalias() =
              dy * Eigen::Map<const RowMat<T>>(wn.value.data(), outs, in);
          xn.accumulate(std::move(g));
        }
        if (wn.requires_grad) {
          Tensor<T> g(wn.value.shape());
          Eigen::Map<RowMat<T>>(g.data(), outs, in).noalias() =
              dy.transpose() * Eigen::Map<const RowMat<T>>(xn.value.data(), batch, in);
          wn.accumulate(std::move(g));
        }
        if (bn.requires_grad) {
          Tensor<T> g(bn.value.shape());
          for (std::int64_t n = 0; n < batch; ++n) {
            for (std::int64_t o = 0; o < outs; ++o) g[o] += dy(n, o);
          }
          bn.accumulate(std::move(g));
        }
      });
}

template <typename T>
Var<T> haar_dwt(const Var<T>& x) {
  require_rank(x.shape(), 4, "haar_dwt");
  const auto& s = x.shape();
  if (s[2] % 2 != 0 || s[3] % 2 != 0) {
    throw DimensionError("haar_dwt: spatial dims must be even, got " + shape_string(s));
  }
  Tensor<T> out({s[0], 4 * s[1], s[2] / 2, s[3] / 2});
  kernels::haar_analysis<T>(s[0], s[1], s[2], s[3], x.value().data(), out.data());
  return make_result<T>(std::move(out), {x.shared()}, [s](Node<T>& self) {
    // The analysis matrix is orthonormal, so its transpose is the synthesis.
    Tensor<T> g(s);
    kernels::haar_synthesis<T>(s[0], s[1], s[2], s[3], self.grad.data(), g.data());
    self.parents[0]->accumulate(std::move(g));
  });
}

template <typename T>
Var<T> haar_iwt(const Var<T>& f) {
  require_rank(f.shape(), 4, "haar_iwt");
  const auto& s = f.shape();
  if (s[1] % 4 != 0) {
    throw DimensionError("haar_iwt: channel count must be divisible by 4, got " +
                         shape_string(s));
  }
  const Shape image{s[0], s[1] / 4, 2 * s[2], 2 * s[3]};
  Tensor<T> out(image);
  kernels::haar_synthesis<T>(image[0], image[1], image[2], image[3], f.value().data(),
                             out.data());
  return make_result<T>(std::move(out), {f.shared()}, [image](Node<T>& self) {
    Tensor<T> g(self.parents[0]->value.shape());
    kernels::haar_analysis<T>(image[0], image[1], image[2], image[3], self.grad.data(),
                              g.data());
    self.parents[0]->accumulate(std::move(g));
  });
}

template <typename T>
Var<T> ll_band(const Var<T>& f) {
  require_rank(f.shape(), 4, "ll_band");
  const auto& s = f.shape();
  if (s[1] % 4 != 0) {
    throw DimensionError("ll_band: channel count must be divisible by 4, got " +
                         shape_string(s));
  }
  const std::int64_t channels = s[1] / 4, plane = s[2] * s[3];
  const std::int64_t planes = s[0] * channels;
  Tensor<T> out({s[0], channels, s[2], s[3]});
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = f.value().data() + 4 * p * plane;
    std::copy(src, src + plane, out.data() + p * plane);
  }
  return make_result<T>(std::move(out), {f.shared()}, [planes, plane](Node<T>& self) {
    Tensor<T> g(self.parents[0]->value.shape());
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* src = self.grad.data() + p * plane;
      std::copy(src, src + plane, g.data() + 4 * p * plane);
    }
    self.parents[0]->accumulate(std::move(g));
  });
}

template <typename T>
Var<T> separable_filter(const Var<T>& x, std::span<const T> taps) {
  require_rank(x.shape(), 4, "separable_filter");
  if (taps.size() % 2 == 0) throw ConfigError("separable_filter: taps must have odd length");
  const auto& s = x.shape();
  const std::int64_t planes = s[0] * s[1];
  Tensor<T> out(s);
  kernels::separable_filter_reflect<T>(planes, s[2], s[3], taps, x.value().data(), out.data());
  std::vector<T> saved(taps.begin(), taps.end());
  return make_result<T>(std::move(out), {x.shared()}, [s, planes, saved](Node<T>& self) {
    Tensor<T> g(s);
    kernels::separable_filter_reflect_adjoint<T>(planes, s[2], s[3], saved,
                                                 self.grad.data(), g.data());
    self.parents[0]->accumulate(std::move(g));
  });
}

template <typename T>
Var<T> masked_replace(const Var<T>& x, const Tensor<T>& keep, const Tensor<T>& fill) {
  require_rank(x.shape(), 4, "masked_replace");
  require_same_shape(x.shape(), fill.shape(), "masked_replace fill");
  const auto& s = x.shape();
  if (keep.shape() != Shape{s[0], 1, s[2], s[3]}) {
    throw DimensionError("masked_replace: mask shape " + shape_string(keep.shape()));
  }
  const std::int64_t area = s[2] * s[3];
  Tensor<T> out(s);
  for (std::int64_t n = 0; n < s[0]; ++n) {
    for (std::int64_t c = 0; c < s[1]; ++c) {
      const std::int64_t base = (n * s[1] + c) * area;
      for (std::int64_t i = 0; i < area; ++i) {
        out[base + i] = keep[n * area + i] != T(0) ? x.value()[base + i] : fill[base + i];
      }
    }
  }
  return make_result<T>(std::move(out), {x.shared()}, [keep, s, area](Node<T>& self) {
    Tensor<T> g(s);
    for (std::int64_t n = 0; n < s[0]; ++n) {
      for (std::int64_t c = 0; c < s[1]; ++c) {
        const std::int64_t base = (n * s[1] + c) * area;
        for (std::int64_t i = 0; i < area; ++i) {
          g[base + i] = keep[n * area + i] != T(0) ? self.grad[base + i] : T(0);
        }
      }
    }
    self.parents[0]->accumulate(std::move(g));
  });
}

template <typename T>
Var<T> straight_through(const Var<T>& x, const Tensor<T>& value) {
  require_same_shape(x.shape(), value.shape(), "straight_through");
  return make_result<T>(Tensor<T>(value), {x.shared()}, [](Node<T>& self) {
    self.parents[0]->accumulate(self.grad);
  });
}

template <typename T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mse");
  const std::int64_t n = a.value().numel();
  if (n == 0) throw DimensionError("mse: empty input");
  T acc = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const T d = a.value()[i] - b.value()[i];
    acc += d * d;
  }
  Tensor<T> out({1}, acc / T(n));
  return make_result<T>(std::move(out), {a.shared(), b.shared()}, [n](Node<T>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    const T factor = T(2) * self.grad[0] / T(n);
    Tensor<T> g(av.shape());
    for (std::int64_t i = 0; i < n; ++i) g[i] = factor * (av[i] - bv[i]);
    if (self.parents[1]->requires_grad) {
      Tensor<T> gb(bv.shape());
      for (std::int64_t i = 0; i < n; ++i) gb[i] = -g[i];
      self.parents[1]->accumulate(std::move(gb));
    }
    self.parents[0]->accumulate(std::move(g));
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T acc = 0;
  for (T v : a.value().values()) acc += v;
  return make_result<T>(Tensor<T>({1}, acc), {a.shared()}, [](Node<T>& self) {
    self.parents[0]->accumulate(Tensor<T>(self.parents[0]->value.shape(), self.grad[0]));
  });
}

template <typename T>
Var<T> dot(const Var<T>& a, const Tensor<T>& weights) {
  require_same_shape(a.shape(), weights.shape(), "dot");
  T acc = 0;
  for (std::int64_t i = 0; i < a.value().numel(); ++i) acc += a.value()[i] * weights[i];
  return make_result<T>(Tensor<T>({1}, acc), {a.shared()}, [weights](Node<T>& self) {
    Tensor<T> g(weights.shape());
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] = weights[i] * self.grad[0];
    self.parents[0]->accumulate(std::move(g));
  });
}

#define INVMARK_INSTANTIATE_AG(T)                                                     \
  template struct Node<T>;                                                            \
  template class Var<T>;                                                              \
  template void backward<T>(const Var<T>&);                                           \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                               \
  template Var<T> sub<T>(const Var<T>&, const Var<T>&);                               \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                               \
  template Var<T> scale<T>(const Var<T>&, T);                                         \
  template Var<T> exp<T>(const Var<T>&);                                              \
  template Var<T> sigmoid<T>(const Var<T>&);                                          \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                    \
  template Var<T> clamp<T>(const Var<T>&, T, T);                                      \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                   \
  template Var<T> concat_channels<T>(std::span<const Var<T>>);                        \
  template Var<T> upsample_nearest2x<T>(const Var<T>&);                               \
  template Var<T> global_avg_pool<T>(const Var<T>&);                                  \
  template Var<T> channel_scale<T>(const Var<T>&, const Var<T>&);                     \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&,              \
                            std::int64_t, std::int64_t);                              \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);             \
  template Var<T> haar_dwt<T>(const Var<T>&);                                         \
  template Var<T> haar_iwt<T>(const Var<T>&);                                         \
  template Var<T> ll_band<T>(const Var<T>&);                                          \
  template Var<T> separable_filter<T>(const Var<T>&, std::span<const T>);             \
  template Var<T> masked_replace<T>(const Var<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Var<T> straight_through<T>(const Var<T>&, const Tensor<T>&);               \
  template Var<T> mse<T>(const Var<T>&, const Var<T>&);                               \
  template Var<T> sum<T>(const Var<T>&);                                              \
  template Var<T> dot<T>(const Var<T>&, const Tensor<T>&);

INVMARK_INSTANTIATE_AG(float)
INVMARK_INSTANTIATE_AG(double)

}  // namespace invmark::ag
