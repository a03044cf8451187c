#include "eventsr/autograd.hpp"

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace eventsr::ag
{

namespace
{

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;

Tensor & grad_of(Node & n)
{
  if (n.grad.shape != n.value.shape) n.grad = Tensor(n.value.shape, 0.0);
  return n.grad;
}

Var make(Tensor value, std::vector<Var> inputs, std::function<void(Node &)> bw)
{
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto & in : inputs) {
    if (in.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (const auto & in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(bw);
  }
  return Var::from_node(std::move(node));
}

void require_same(const Var & a, const Var & b, const char * op)
{
  if (!a.value().same_shape(b.value()))
    throw std::invalid_argument(
      std::string(op) + ": shape mismatch " + shape_string(a.value().shape) + " vs " +
      shape_string(b.value().shape));
}

void require_rank4(const Var & x, const char * op)
{
  if (x.value().rank() != 4) throw std::invalid_argument(std::string(op) + ": expected NCHW tensor");
}

template <class F>
Var unary(const Var & a, F f, std::function<double(double, double)> dfdx)
{
  Tensor out(a.value().shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = f(a.value().data[i]);
  return make(std::move(out), {a}, [dfdx](Node & self) {
    Node & in = *self.inputs[0];
    if (!in.requires_grad) return;
    Tensor & g = grad_of(in);
    for (std::size_t i = 0; i < g.size(); ++i)
      g.data[i] += self.grad.data[i] * dfdx(in.value.data[i], self.value.data[i]);
  });
}

}  // namespace

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>())
{
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::from_node(std::shared_ptr<Node> n)
{
  Var v;
  v.node_ = std::move(n);
  return v;
}

Tensor Var::grad() const
{
  if (node_->grad.shape == node_->value.shape) return node_->grad;
  return Tensor(node_->value.shape, 0.0);
}

void backward(const Var & root)
{
  if (root.value().size() != 1) throw std::invalid_argument("backward: root must hold one element");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node *> order;
  std::unordered_set<Node *> seen;
  std::vector<std::pair<Node *, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto & [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node * child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  grad_of(*root.node()).data[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node & n = **it;
    if (n.backward && n.grad.shape == n.value.shape) n.backward(n);
  }
}

Var add(const Var & a, const Var & b)
{
  require_same(a, b, "add");
  Tensor out(a.value().shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.value().data[i] + b.value().data[i];
  return make(std::move(out), {a, b}, [](Node & self) {
    for (auto & in : self.inputs) {
      if (!in->requires_grad) continue;
      Tensor & g = grad_of(*in);
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i];
    }
  });
}

Var sub(const Var & a, const Var & b)
{
  require_same(a, b, "sub");
  Tensor out(a.value().shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.value().data[i] - b.value().data[i];
  return make(std::move(out), {a, b}, [](Node & self) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node & in = *self.inputs[k];
      if (!in.requires_grad) continue;
      const double sign = k == 0 ? 1.0 : -1.0;
      Tensor & g = grad_of(in);
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += sign * self.grad.data[i];
    }
  });
}

Var mul(const Var & a, const Var & b)
{
  require_same(a, b, "mul");
  Tensor out(a.value().shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.value().data[i] * b.value().data[i];
  return make(std::move(out), {a, b}, [](Node & self) {
    Node & x = *self.inputs[0];
    Node & y = *self.inputs[1];
    if (x.requires_grad) {
      Tensor & g = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i] * y.value.data[i];
    }
    if (y.requires_grad) {
      Tensor & g = grad_of(y);
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i] * x.value.data[i];
    }
  });
}

Var scale(const Var & a, double s)
{
  return unary(a, [s](double v) { return s * v; }, [s](double, double) { return s; });
}

Var add_scalar(const Var & a, double s)
{
  return unary(a, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var sub_broadcast(const Var & a, const Var & s)
{
  if (s.value().size() != 1) throw std::invalid_argument("sub_broadcast: rhs must hold one element");
  const double sv = s.value().data[0];
  Tensor out(a.value().shape);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a.value().data[i] - sv;
  return make(std::move(out), {a, s}, [](Node & self) {
    Node & x = *self.inputs[0];
    Node & y = *self.inputs[1];
    double total = 0.0;
    for (double g : self.grad.data) total += g;
    if (x.requires_grad) {
      Tensor & g = grad_of(x);
      for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i];
    }
    if (y.requires_grad) grad_of(y).data[0] -= total;
  });
}

Var conv2d(const Var & x, const Var & w, const Var & b, int stride, int pad)
{
  require_rank4(x, "conv2d");
  const Tensor & xv = x.value();
  const Tensor & wv = w.value();
  if (wv.rank() != 4 || wv.dim(1) != xv.c() || wv.dim(2) != wv.dim(3))
    throw std::invalid_argument(
      "conv2d: weight " + shape_string(wv.shape) + " incompatible with input " +
      shape_string(xv.shape));
  if (b.value().rank() != 1 || b.value().dim(0) != wv.dim(0))
    throw std::invalid_argument("conv2d: bias shape mismatch");
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/pad");

  const int batch = xv.n(), cin = xv.c(), h = xv.h(), wd = xv.w();
  const int cout = wv.dim(0), k = wv.dim(2);
  const int ho = (h + 2 * pad - k) / stride + 1;
  const int wo = (wd + 2 * pad - k) / stride + 1;
  if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: input smaller than kernel");
  const int kk = cin * k * k;
  const int p = ho * wo;

  auto cols = std::make_shared<std::vector<RowMat>>(static_cast<std::size_t>(batch));
  Tensor out({batch, cout, ho, wo});
  // Products run on owned (aligned) matrices only: Eigen's vectorized kernels
  // split work by pointer alignment, and mapping heap memory of arbitrary
  // alignment would make results differ in the last bit between runs.
  const RowMat wm = ConstMap(wv.data.data(), cout, kk);
  for (int n = 0; n < batch; ++n) {
    RowMat & col = (*cols)[static_cast<std::size_t>(n)];
    col.setZero(kk, p);
    const double * xin = xv.data.data() + static_cast<std::size_t>(n) * cin * h * wd;
    for (int c = 0; c < cin; ++c) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          double * row = col.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * p;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= wd) continue;
              row[oy * wo + ox] = xin[(c * h + iy) * wd + ix];
            }
          }
        }
      }
    }
    RowMat prod;
    prod.noalias() = wm * col;
    double * o_ptr = out.data.data() + static_cast<std::size_t>(n) * cout * p;
    for (int o = 0; o < cout; ++o) {
      const double bias = b.value().data[static_cast<std::size_t>(o)];
      for (int i = 0; i < p; ++i) o_ptr[o * p + i] = prod(o, i) + bias;
    }
  }

  return make(std::move(out), {x, w, b}, [=](Node & self) {
    Node & xn = *self.inputs[0];
    Node & wn = *self.inputs[1];
    Node & bn = *self.inputs[2];
    const RowMat wmat = ConstMap(wn.value.data.data(), cout, kk);
    for (int n = 0; n < batch; ++n) {
      const double * g_ptr = self.grad.data.data() + static_cast<std::size_t>(n) * cout * p;
      const RowMat gout = ConstMap(g_ptr, cout, p);
      const RowMat & col = (*cols)[static_cast<std::size_t>(n)];
      if (wn.requires_grad) {
        RowMat gw;
        gw.noalias() = gout * col.transpose();
        double * dst = grad_of(wn).data.data();
        for (int i = 0; i < cout * kk; ++i) dst[i] += gw.data()[i];
      }
      if (bn.requires_grad) {
        Tensor & gb = grad_of(bn);
        for (int o = 0; o < cout; ++o) {
          double acc = 0.0;
          for (int i = 0; i < p; ++i) acc += g_ptr[o * p + i];
          gb.data[static_cast<std::size_t>(o)] += acc;
        }
      }
      if (xn.requires_grad) {
        RowMat gcol = wmat.transpose() * gout;
        double * gx = grad_of(xn).data.data() + static_cast<std::size_t>(n) * cin * h * wd;
        for (int c = 0; c < cin; ++c) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const double * row = gcol.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * p;
              for (int oy = 0; oy < ho; ++oy) {
                const int iy = oy * stride - pad + ky;
                if (iy < 0 || iy >= h) continue;
                for (int ox = 0; ox < wo; ++ox) {
                  const int ix = ox * stride - pad + kx;
                  if (ix < 0 || ix >= wd) continue;
                  gx[(c * h + iy) * wd + ix] += row[oy * wo + ox];
                }
              }
            }
          }
        }
      }
    }
  });
}

Var leaky_relu(const Var & x, double slope)
{
  return unary(
    x, [slope](double v) { return v > 0.0 ? v : slope * v; },
    [slope](double in, double) { return in > 0.0 ? 1.0 : slope; });
}

Var relu(const Var & x) { return leaky_relu(x, 0.0); }

Var sigmoid(const Var & x)
{
  return unary(
    x,
    [](double v) {
      if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
      const double e = std::exp(v);
      return e / (1.0 + e);
    },
    [](double, double out) { return out * (1.0 - out); });
}

Var log_sigmoid(const Var & x)
{
  // log σ(v) = min(v, 0) - log1p(exp(-|v|)); d/dv = σ(-v).
  return unary(
    x, [](double v) { return std::min(v, 0.0) - std::log1p(std::exp(-std::abs(v))); },
    [](double in, double) {
      if (in >= 0.0) {
        const double e = std::exp(-in);
        return e / (1.0 + e);
      }
      return 1.0 / (1.0 + std::exp(in));
    });
}

Var log(const Var & x)
{
  return unary(x, [](double v) { return std::log(v); }, [](double in, double) { return 1.0 / in; });
}

Var pixel_shuffle(const Var & x, int r)
{
  require_rank4(x, "pixel_shuffle");
  const Tensor & xv = x.value();
  if (r < 1 || xv.c() % (r * r) != 0)
    throw std::invalid_argument("pixel_shuffle: channels not divisible by r^2");
  const int batch = xv.n(), c = xv.c() / (r * r), h = xv.h(), w = xv.w();
  Tensor out({batch, c, h * r, w * r});
  // out[n, c, y*r+i, x*r+j] = in[n, c*r*r + i*r + j, y, x]
  auto index = [=](int n, int ch, int y, int xx, int i, int j) {
    const std::size_t src =
      ((static_cast<std::size_t>(n) * c * r * r + ch * r * r + i * r + j) * h + y) * w + xx;
    const std::size_t dst =
      ((static_cast<std::size_t>(n) * c + ch) * h * r + (y * r + i)) * (w * r) + xx * r + j;
    return std::pair{src, dst};
  };
  for (int n = 0; n < batch; ++n)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j) {
              auto [src, dst] = index(n, ch, y, xx, i, j);
              out.data[dst] = xv.data[src];
            }
  return make(std::move(out), {x}, [=](Node & self) {
    Node & in = *self.inputs[0];
    Tensor & g = grad_of(in);
    for (int n = 0; n < batch; ++n)
      for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx)
            for (int i = 0; i < r; ++i)
              for (int j = 0; j < r; ++j) {
                auto [src, dst] = index(n, ch, y, xx, i, j);
                g.data[src] += self.grad.data[dst];
              }
  });
}

Var global_avg_pool(const Var & x)
{
  require_rank4(x, "global_avg_pool");
  const Tensor & xv = x.value();
  const int batch = xv.n(), c = xv.c();
  const std::size_t plane = static_cast<std::size_t>(xv.h()) * xv.w();
  Tensor out({batch, c, 1, 1});
  for (std::size_t nc = 0; nc < static_cast<std::size_t>(batch) * c; ++nc) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += xv.data[nc * plane + i];
    out.data[nc] = s / static_cast<double>(plane);
  }
  return make(std::move(out), {x}, [plane](Node & self) {
    Tensor & g = grad_of(*self.inputs[0]);
    for (std::size_t nc = 0; nc < self.grad.size(); ++nc) {
      const double v = self.grad.data[nc] / static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) g.data[nc * plane + i] += v;
    }
  });
}

Var repeat_channels(const Var & x, int n)
{
  require_rank4(x, "repeat_channels");
  const Tensor & xv = x.value();
  if (xv.c() != 1) throw std::invalid_argument("repeat_channels: input must have one channel");
  const int batch = xv.n();
  const std::size_t plane = static_cast<std::size_t>(xv.h()) * xv.w();
  Tensor out({batch, n, xv.h(), xv.w()});
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < n; ++c)
      std::copy_n(
        xv.data.begin() + static_cast<std::ptrdiff_t>(b * plane), plane,
        out.data.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(b) * n + c) * plane));
  return make(std::move(out), {x}, [=](Node & self) {
    Tensor & g = grad_of(*self.inputs[0]);
    for (int b = 0; b < batch; ++b)
      for (int c = 0; c < n; ++c)
        for (std::size_t i = 0; i < plane; ++i)
          g.data[b * plane + i] += self.grad.data[(static_cast<std::size_t>(b) * n + c) * plane + i];
  });
}

Var sum(const Var & x)
{
  double s = 0.0;
  for (double v : x.value().data) s += v;
  return make(Tensor::scalar(s), {x}, [](Node & self) {
    Tensor & g = grad_of(*self.inputs[0]);
    for (double & v : g.data) v += self.grad.data[0];
  });
}

Var mean(const Var & x)
{
  const double n = static_cast<double>(x.value().size());
  double s = 0.0;
  for (double v : x.value().data) s += v;
  return make(Tensor::scalar(s / n), {x}, [n](Node & self) {
    Tensor & g = grad_of(*self.inputs[0]);
    for (double & v : g.data) v += self.grad.data[0] / n;
  });
}

Var rss_per_item(const Var & x)
{
  const Tensor & xv = x.value();
  if (xv.rank() < 1 || xv.dim(0) < 1) throw std::invalid_argument("rss_per_item: empty tensor");
  const int batch = xv.dim(0);
  const std::size_t per = xv.size() / static_cast<std::size_t>(batch);
  Tensor out({batch, 1, 1, 1});
  for (int b = 0; b < batch; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      const double v = xv.data[b * per + i];
      s += v * v;
    }
    out.data[static_cast<std::size_t>(b)] = std::sqrt(s);
  }
  return make(std::move(out), {x}, [batch, per](Node & self) {
    Node & in = *self.inputs[0];
    Tensor & g = grad_of(in);
    for (int b = 0; b < batch; ++b) {
      const double norm = self.value.data[static_cast<std::size_t>(b)];
      if (norm == 0.0) continue;
      const double f = self.grad.data[static_cast<std::size_t>(b)] / norm;
      for (std::size_t i = 0; i < per; ++i) g.data[b * per + i] += f * in.value.data[b * per + i];
    }
  });
}

Var tv_field(const Var & x)
{
  require_rank4(x, "tv_field");
  const Tensor & xv = x.value();
  const int planes = xv.n() * xv.c(), h = xv.h(), w = xv.w();
  Tensor out(xv.shape);
  for (int p = 0; p < planes; ++p) {
    const double * in = xv.data.data() + static_cast<std::size_t>(p) * h * w;
    double * o = out.data.data() + static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        double v = 0.0;
        if (y + 1 < h) v += in[(y + 1) * w + xx] - in[y * w + xx];
        if (xx + 1 < w) v += in[y * w + xx + 1] - in[y * w + xx];
        o[y * w + xx] = v;
      }
  }
  return make(std::move(out), {x}, [planes, h, w](Node & self) {
    Tensor & g = grad_of(*self.inputs[0]);
    for (int p = 0; p < planes; ++p) {
      const double * go = self.grad.data.data() + static_cast<std::size_t>(p) * h * w;
      double * gi = g.data.data() + static_cast<std::size_t>(p) * h * w;
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          const double v = go[y * w + xx];
          if (y + 1 < h) {
            gi[(y + 1) * w + xx] += v;
            gi[y * w + xx] -= v;
          }
          if (xx + 1 < w) {
            gi[y * w + xx + 1] += v;
            gi[y * w + xx] -= v;
          }
        }
    }
  });
}

}  // namespace eventsr::ag
