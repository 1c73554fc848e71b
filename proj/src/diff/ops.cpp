#include "supmae/diff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <type_traits>

#include "supmae/diff/parallel.hpp"

namespace supmae::diff {
namespace {

// Reductions accumulate in at least double precision, always left to right.
template <typename T>
using Acc = std::conditional_t<(sizeof(T) > sizeof(double)), T, double>;

template <typename T>
Graph<T>& graph_of(Var<T> a) {
  if (!a.valid()) fail(ErrorCategory::usage, "operation on a null variable");
  return *a.graph;
}

template <typename T>
Graph<T>& graph_of(Var<T> a, Var<T> b) {
  auto& g = graph_of(a);
  if (b.valid() && b.graph != &g) fail(ErrorCategory::usage, "operands live in different graphs");
  return g;
}

[[noreturn]] void dim_error(const std::string& op, const Shape& a, const Shape& b) {
  fail(ErrorCategory::dimension,
       op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

template <typename T>
std::shared_ptr<std::vector<T>> share(std::vector<T> v) {
  return std::make_shared<std::vector<T>>(std::move(v));
}

// c[m x n] += a[m x k] . b[k x n]
template <typename T>
void gemm_nn_acc(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  parallel_for(m, k * n, [=](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      T* __restrict crow = c + i * n;
      const T* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = arow[p];
        const T* __restrict brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

// c[m x k] += g[m x n] . b^T, b is [k x n]
template <typename T>
void gemm_nt_acc(std::size_t m, std::size_t n, std::size_t k, const T* g, const T* b, T* c) {
  std::vector<T> bt(n * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  gemm_nn_acc(m, n, k, g, bt.data(), c);
}

// c[k x n] += a^T . g, a is [m x k], g is [m x n]
template <typename T>
void gemm_tn_acc(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* g, T* c) {
  parallel_for(k, m * n, [=](std::size_t p0, std::size_t p1) {
    for (std::size_t i = 0; i < m; ++i) {
      const T* __restrict grow = g + i * n;
      for (std::size_t p = p0; p < p1; ++p) {
        const T av = a[i * k + p];
        T* __restrict crow = c + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * grow[j];
      }
    }
  });
}

template <typename T>
Shape with_last(const Shape& s, std::size_t last) {
  Shape out = s;
  out.back() = last;
  return out;
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  auto& g = graph_of(a, b);
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0]) dim_error("matmul", as, bs);
  const std::size_t m = as[0], k = as[1], n = bs[1];
  Tensor<T> out(Shape{m, n});
  gemm_nn_acc(m, k, n, a.value().data().data(), b.value().data().data(), out.data().data());
  const auto ia = a.id, ib = b.id;
  return g.record("matmul", {ia, ib}, std::move(out),
                  [ia, ib, m, k, n](std::span<const T> go, Graph<T>& gr) {
                    if (gr.requires_grad(ia)) {
                      gemm_nt_acc(m, n, k, go.data(), gr.value(ib).data().data(),
                                  gr.grad_buffer(ia).data());
                    }
                    if (gr.requires_grad(ib)) {
                      gemm_tn_acc(m, k, n, gr.value(ia).data().data(), go.data(),
                                  gr.grad_buffer(ib).data());
                    }
                  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> bias) {
  auto& g = graph_of(x, w);
  if (bias.valid() && bias.graph != &g) fail(ErrorCategory::usage, "bias lives in another graph");
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (ws.size() != 2 || xs.back() != ws[0]) dim_error("linear", xs, ws);
  const std::size_t k = ws[0], n = ws[1], m = x.value().size() / k;
  if (bias.valid() && (bias.shape().size() != 1 || bias.shape()[0] != n)) {
    dim_error("linear(bias)", ws, bias.shape());
  }
  Tensor<T> out(with_last<T>(xs, n));
  T* o = out.data().data();
  if (bias.valid()) {
    const T* bv = bias.value().data().data();
    for (std::size_t i = 0; i < m; ++i) std::copy(bv, bv + n, o + i * n);
  }
  gemm_nn_acc(m, k, n, x.value().data().data(), w.value().data().data(), o);
  std::vector<std::size_t> inputs{x.id, w.id};
  if (bias.valid()) inputs.push_back(bias.id);
  const auto ix = x.id, iw = w.id;
  const std::size_t ib = bias.valid() ? bias.id : SIZE_MAX;
  return g.record("linear", std::move(inputs), std::move(out),
                  [ix, iw, ib, m, k, n](std::span<const T> go, Graph<T>& gr) {
                    if (gr.requires_grad(ix)) {
                      gemm_nt_acc(m, n, k, go.data(), gr.value(iw).data().data(),
                                  gr.grad_buffer(ix).data());
                    }
                    if (gr.requires_grad(iw)) {
                      gemm_tn_acc(m, k, n, gr.value(ix).data().data(), go.data(),
                                  gr.grad_buffer(iw).data());
                    }
                    if (ib != SIZE_MAX && gr.requires_grad(ib)) {
                      auto gb = gr.grad_buffer(ib);
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) gb[j] += go[i * n + j];
                    }
                  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  auto& g = graph_of(a, b);
  if (a.shape() != b.shape()) dim_error("add", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  const auto ia = a.id, ib = b.id;
  return g.record("add", {ia, ib}, std::move(out), [ia, ib](std::span<const T> go, Graph<T>& gr) {
    for (auto id : {ia, ib}) {
      if (!gr.requires_grad(id)) continue;
      auto gi = gr.grad_buffer(id);
      for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  auto& g = graph_of(a, b);
  if (a.shape() != b.shape()) dim_error("sub", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  const auto ia = a.id, ib = b.id;
  return g.record("sub", {ia, ib}, std::move(out), [ia, ib](std::span<const T> go, Graph<T>& gr) {
    if (gr.requires_grad(ia)) {
      auto gi = gr.grad_buffer(ia);
      for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
    }
    if (gr.requires_grad(ib)) {
      auto gi = gr.grad_buffer(ib);
      for (std::size_t i = 0; i < go.size(); ++i) gi[i] -= go[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  auto& g = graph_of(a, b);
  if (a.shape() != b.shape()) dim_error("mul", a.shape(), b.shape());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  const auto ia = a.id, ib = b.id;
  return g.record("mul", {ia, ib}, std::move(out), [ia, ib](std::span<const T> go, Graph<T>& gr) {
    const auto& av = gr.value(ia);
    const auto& bv = gr.value(ib);
    if (gr.requires_grad(ia)) {
      auto gi = gr.grad_buffer(ia);
      for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i] * bv[i];
    }
    if (gr.requires_grad(ib)) {
      auto gi = gr.grad_buffer(ib);
      for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  auto& g = graph_of(a);
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * factor;
  const auto ia = a.id;
  return g.record("scale", {ia}, std::move(out), [ia, factor](std::span<const T> go, Graph<T>& gr) {
    auto gi = gr.grad_buffer(ia);
    for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i] * factor;
  });
}

template <typename T>
Var<T> add_broadcast(Var<T> x, Var<T> y) {
  auto& g = graph_of(x, y);
  const auto& xs = x.shape();
  const auto& ys = y.shape();
  if (ys.size() > xs.size() || !std::equal(ys.rbegin(), ys.rend(), xs.rbegin())) {
    dim_error("add_broadcast", xs, ys);
  }
  const std::size_t inner = y.value().size();
  const std::size_t reps = x.value().size() / inner;
  Tensor<T> out(xs);
  for (std::size_t r = 0; r < reps; ++r)
    for (std::size_t i = 0; i < inner; ++i)
      out[r * inner + i] = x.value()[r * inner + i] + y.value()[i];
  const auto ix = x.id, iy = y.id;
  return g.record("add_broadcast", {ix, iy}, std::move(out),
                  [ix, iy, inner, reps](std::span<const T> go, Graph<T>& gr) {
                    if (gr.requires_grad(ix)) {
                      auto gi = gr.grad_buffer(ix);
                      for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
                    }
                    if (gr.requires_grad(iy)) {
                      auto gi = gr.grad_buffer(iy);
                      for (std::size_t r = 0; r < reps; ++r)
                        for (std::size_t i = 0; i < inner; ++i) gi[i] += go[r * inner + i];
                    }
                  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  auto& g = graph_of(a);
  Acc<T> s = 0;
  for (auto v : a.value().data()) s += v;
  const auto ia = a.id;
  return g.record("sum", {ia}, Tensor<T>::scalar(static_cast<T>(s)),
                  [ia](std::span<const T> go, Graph<T>& gr) {
                    auto gi = gr.grad_buffer(ia);
                    for (auto& v : gi) v += go[0];
                  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  auto& g = graph_of(a);
  Acc<T> s = 0;
  for (auto v : a.value().data()) s += v;
  const std::size_t n = a.value().size();
  const auto ia = a.id;
  return g.record("mean", {ia}, Tensor<T>::scalar(static_cast<T>(s / static_cast<Acc<T>>(n))),
                  [ia, n](std::span<const T> go, Graph<T>& gr) {
                    auto gi = gr.grad_buffer(ia);
                    const T d = go[0] / static_cast<T>(n);
                    for (auto& v : gi) v += d;
                  });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  auto& g = graph_of(a);
  if (shape_numel(shape) != a.value().size()) dim_error("reshape", a.shape(), shape);
  const auto ia = a.id;
  return g.record("reshape", {ia}, a.value().reshaped(std::move(shape)),
                  [ia](std::span<const T> go, Graph<T>& gr) {
                    auto gi = gr.grad_buffer(ia);
                    for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
                  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  auto& g = graph_of(x, gamma);
  graph_of(x, beta);
  if (!(eps > 0)) fail(ErrorCategory::usage, "layer_norm: eps must be positive");
  const std::size_t d = x.value().last_dim();
  const Shape pd{d};
  if (gamma.shape() != pd) dim_error("layer_norm(gamma)", x.shape(), gamma.shape());
  if (beta.shape() != pd) dim_error("layer_norm(beta)", x.shape(), beta.shape());
  const std::size_t rows = x.value().size() / d;
  const T* xv = x.value().data().data();
  const T* gv = gamma.value().data().data();
  const T* bv = beta.value().data().data();
  Tensor<T> out(x.shape());
  std::vector<T> xhat(x.value().size());
  std::vector<T> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv + r * d;
    Acc<T> mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<Acc<T>>(d);
    Acc<T> var = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const Acc<T> c = xr[j] - mu;
      var += c * c;
    }
    var /= static_cast<Acc<T>>(d);
    const Acc<T> rs = 1.0 / std::sqrt(var + static_cast<Acc<T>>(eps));
    rstd[r] = static_cast<T>(rs);
    for (std::size_t j = 0; j < d; ++j) {
      const T xh = static_cast<T>((xr[j] - mu) * rs);
      xhat[r * d + j] = xh;
      out[r * d + j] = xh * gv[j] + bv[j];
    }
  }
  const auto ix = x.id, ig = gamma.id, ib = beta.id;
  auto sx = share(std::move(xhat));
  auto sr = share(std::move(rstd));
  return g.record(
      "layer_norm", {ix, ig, ib}, std::move(out),
      [ix, ig, ib, rows, d, sx, sr](std::span<const T> go, Graph<T>& gr) {
        const auto& xh = *sx;
        const T* gv = gr.value(ig).data().data();
        if (gr.requires_grad(ig)) {
          auto gg = gr.grad_buffer(ig);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += go[r * d + j] * xh[r * d + j];
        }
        if (gr.requires_grad(ib)) {
          auto gb = gr.grad_buffer(ib);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += go[r * d + j];
        }
        if (gr.requires_grad(ix)) {
          auto gx = gr.grad_buffer(ix);
          for (std::size_t r = 0; r < rows; ++r) {
            Acc<T> m1 = 0, m2 = 0;
            for (std::size_t j = 0; j < d; ++j) {
              const Acc<T> dxh = static_cast<Acc<T>>(go[r * d + j]) * gv[j];
              m1 += dxh;
              m2 += dxh * xh[r * d + j];
            }
            m1 /= static_cast<Acc<T>>(d);
            m2 /= static_cast<Acc<T>>(d);
            const Acc<T> rs = (*sr)[r];
            for (std::size_t j = 0; j < d; ++j) {
              const Acc<T> dxh = static_cast<Acc<T>>(go[r * d + j]) * gv[j];
              gx[r * d + j] += static_cast<T>(rs * (dxh - m1 - xh[r * d + j] * m2));
            }
          }
        }
      });
}

template <typename T>
Var<T> gelu(Var<T> x) {
  auto& g = graph_of(x);
  constexpr T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  constexpr T a = static_cast<T>(0.044715);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.value()[i];
    out[i] = static_cast<T>(0.5) * v * (T{1} + std::tanh(c * (v + a * v * v * v)));
  }
  const auto ix = x.id;
  return g.record("gelu", {ix}, std::move(out), [ix](std::span<const T> go, Graph<T>& gr) {
    const auto& xv = gr.value(ix);
    auto gi = gr.grad_buffer(ix);
    for (std::size_t i = 0; i < go.size(); ++i) {
      const T v = xv[i];
      const T t = std::tanh(c * (v + a * v * v * v));
      const T dt = c * (T{1} + T{3} * a * v * v);
      const T dy = static_cast<T>(0.5) * (T{1} + t) + static_cast<T>(0.5) * v * (T{1} - t * t) * dt;
      gi[i] += go[i] * dy;
    }
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  auto& g = graph_of(x);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(T{0}, x.value()[i]);
  const auto ix = x.id;
  return g.record("relu", {ix}, std::move(out), [ix](std::span<const T> go, Graph<T>& gr) {
    const auto& xv = gr.value(ix);
    auto gi = gr.grad_buffer(ix);
    for (std::size_t i = 0; i < go.size(); ++i)
      if (xv[i] > T{0}) gi[i] += go[i];
  });
}

namespace {

template <typename T>
void softmax_rows(const T* in, T* out, std::size_t rows, std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = in + r * n;
    T* y = out + r * n;
    T mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    Acc<T> s = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const Acc<T> e = std::exp(static_cast<Acc<T>>(x[j] - mx));
      y[j] = static_cast<T>(e);
      s += e;
    }
    const Acc<T> inv = 1.0 / s;
    for (std::size_t j = 0; j < n; ++j) y[j] = static_cast<T>(y[j] * inv);
  }
}

// gx += y * (go - <go, y>) per row
template <typename T>
void softmax_backward_rows(const T* y, const T* go, T* gx, std::size_t rows, std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r) {
    Acc<T> dot = 0;
    for (std::size_t j = 0; j < n; ++j) dot += static_cast<Acc<T>>(go[r * n + j]) * y[r * n + j];
    for (std::size_t j = 0; j < n; ++j)
      gx[r * n + j] += static_cast<T>(y[r * n + j] * (go[r * n + j] - dot));
  }
}

}  // namespace

template <typename T>
Var<T> softmax(Var<T> x) {
  auto& g = graph_of(x);
  const std::size_t n = x.value().last_dim();
  const std::size_t rows = x.value().size() / n;
  Tensor<T> out(x.shape());
  softmax_rows(x.value().data().data(), out.data().data(), rows, n);
  const auto ix = x.id;
  const std::size_t self = g.size();
  return g.record("softmax", {ix}, std::move(out),
                  [ix, self, rows, n](std::span<const T> go, Graph<T>& gr) {
                    softmax_backward_rows(gr.value(self).data().data(), go.data(),
                                          gr.grad_buffer(ix).data(), rows, n);
                  });
}

template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v) {
  auto& g = graph_of(q, k);
  graph_of(q, v);
  const auto& qs = q.shape();
  if (qs.size() < 2) dim_error("attention", qs, k.shape());
  if (k.shape() != qs) dim_error("attention(q,k)", qs, k.shape());
  if (v.shape() != qs) dim_error("attention(q,v)", qs, v.shape());
  const std::size_t dh = qs[qs.size() - 1];
  const std::size_t len = qs[qs.size() - 2];
  const std::size_t groups = q.value().size() / (len * dh);
  const T sc = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  const T* qv = q.value().data().data();
  const T* kv = k.value().data().data();
  const T* vv = v.value().data().data();
  Tensor<T> out(qs);
  std::vector<T> probs(groups * len * len);
  T* o = out.data().data();
  parallel_for(groups, len * len * dh, [&](std::size_t g0, std::size_t g1) {
    std::vector<T> scores(len * len);
    for (std::size_t gi = g0; gi < g1; ++gi) {
      const T* qg = qv + gi * len * dh;
      const T* kg = kv + gi * len * dh;
      const T* vg = vv + gi * len * dh;
      T* pg = probs.data() + gi * len * len;
      for (std::size_t i = 0; i < len; ++i)
        for (std::size_t j = 0; j < len; ++j) {
          T s = 0;
          for (std::size_t t = 0; t < dh; ++t) s += qg[i * dh + t] * kg[j * dh + t];
          scores[i * len + j] = s * sc;
        }
      softmax_rows(scores.data(), pg, len, len);
      gemm_nn_acc(len, len, dh, pg, vg, o + gi * len * dh);
    }
  });
  const auto iq = q.id, ik = k.id, iv = v.id;
  auto sp = share(std::move(probs));
  return g.record(
      "attention", {iq, ik, iv}, std::move(out),
      [iq, ik, iv, groups, len, dh, sc, sp](std::span<const T> go, Graph<T>& gr) {
        const T* qv = gr.value(iq).data().data();
        const T* kv = gr.value(ik).data().data();
        const T* vv = gr.value(iv).data().data();
        const bool need_q = gr.requires_grad(iq);
        const bool need_k = gr.requires_grad(ik);
        const bool need_v = gr.requires_grad(iv);
        T* gq = need_q ? gr.grad_buffer(iq).data() : nullptr;
        T* gk = need_k ? gr.grad_buffer(ik).data() : nullptr;
        T* gv = need_v ? gr.grad_buffer(iv).data() : nullptr;
        parallel_for(groups, len * len * dh, [&](std::size_t g0, std::size_t g1) {
          std::vector<T> dp(len * len), ds(len * len);
          for (std::size_t gi = g0; gi < g1; ++gi) {
            const std::size_t off = gi * len * dh;
            const T* pg = sp->data() + gi * len * len;
            const T* dog = go.data() + off;
            if (need_v) gemm_tn_acc(len, len, dh, pg, dog, gv + off);
            if (!need_q && !need_k) continue;
            // dP = dO . V^T
            for (std::size_t i = 0; i < len; ++i)
              for (std::size_t j = 0; j < len; ++j) {
                T s = 0;
                for (std::size_t t = 0; t < dh; ++t) s += dog[i * dh + t] * vv[off + j * dh + t];
                dp[i * len + j] = s;
              }
            std::fill(ds.begin(), ds.end(), T{0});
            softmax_backward_rows(pg, dp.data(), ds.data(), len, len);
            for (auto& x : ds) x *= sc;
            if (need_q) gemm_nn_acc(len, len, dh, ds.data(), kv + off, gq + off);
            if (need_k) gemm_tn_acc(len, len, dh, ds.data(), qv + off, gk + off);
          }
        });
      });
}

template <typename T>
Var<T> split_heads(Var<T> x, std::size_t heads) {
  auto& g = graph_of(x);
  const auto& xs = x.shape();
  if (xs.size() != 3 || heads == 0 || xs[2] % heads != 0) {
    dim_error("split_heads", xs, Shape{heads});
  }
  const std::size_t b = xs[0], len = xs[1], dh = xs[2] / heads;
  Tensor<T> out(Shape{b, heads, len, dh});
  const auto& xv = x.value();
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t t = 0; t < dh; ++t)
          out[((bi * heads + h) * len + l) * dh + t] = xv[(bi * len + l) * heads * dh + h * dh + t];
  const auto ix = x.id;
  return g.record("split_heads", {ix}, std::move(out),
                  [ix, b, len, heads, dh](std::span<const T> go, Graph<T>& gr) {
                    auto gi = gr.grad_buffer(ix);
                    for (std::size_t bi = 0; bi < b; ++bi)
                      for (std::size_t l = 0; l < len; ++l)
                        for (std::size_t h = 0; h < heads; ++h)
                          for (std::size_t t = 0; t < dh; ++t)
                            gi[(bi * len + l) * heads * dh + h * dh + t] +=
                                go[((bi * heads + h) * len + l) * dh + t];
                  });
}

template <typename T>
Var<T> merge_heads(Var<T> x) {
  auto& g = graph_of(x);
  const auto& xs = x.shape();
  if (xs.size() != 4) dim_error("merge_heads", xs, Shape{});
  const std::size_t b = xs[0], heads = xs[1], len = xs[2], dh = xs[3];
  Tensor<T> out(Shape{b, len, heads * dh});
  const auto& xv = x.value();
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t t = 0; t < dh; ++t)
          out[(bi * len + l) * heads * dh + h * dh + t] = xv[((bi * heads + h) * len + l) * dh + t];
  const auto ix = x.id;
  return g.record("merge_heads", {ix}, std::move(out),
                  [ix, b, len, heads, dh](std::span<const T> go, Graph<T>& gr) {
                    auto gi = gr.grad_buffer(ix);
                    for (std::size_t bi = 0; bi < b; ++bi)
                      for (std::size_t h = 0; h < heads; ++h)
                        for (std::size_t l = 0; l < len; ++l)
                          for (std::size_t t = 0; t < dh; ++t)
                            gi[((bi * heads + h) * len + l) * dh + t] +=
                                go[(bi * len + l) * heads * dh + h * dh + t];
                  });
}

template <typename T>
Var<T> slice_last(Var<T> x, std::size_t offset, std::size_t length) {
  auto& g = graph_of(x);
  const std::size_t d = x.value().last_dim();
  if (length == 0 || offset + length > d) {
    dim_error("slice_last", x.shape(), Shape{offset, length});
  }
  const std::size_t rows = x.value().size() / d;
  Tensor<T> out(with_last<T>(x.shape(), length));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < length; ++j) out[r * length + j] = x.value()[r * d + offset + j];
  const auto ix = x.id;
  return g.record("slice_last", {ix}, std::move(out),
                  [ix, rows, d, offset, length](std::span<const T> go, Graph<T>& gr) {
                    auto gi = gr.grad_buffer(ix);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t j = 0; j < length; ++j)
                        gi[r * d + offset + j] += go[r * length + j];
                  });
}

template <typename T>
Var<T> gather_rows(Var<T> table, const std::vector<std::size_t>& rows, Shape lead) {
  auto& g = graph_of(table);
  const auto& ts = table.shape();
  if (ts.size() != 2) dim_error("gather_rows", ts, lead);
  if (shape_numel(lead) != rows.size()) dim_error("gather_rows(index)", lead, Shape{rows.size()});
  const std::size_t n_rows = ts[0], d = ts[1];
  for (auto r : rows) {
    if (r >= n_rows) {
      fail(ErrorCategory::dimension, "gather_rows: row " + std::to_string(r) +
                                         " out of range for table " + shape_str(ts));
    }
  }
  Shape os = lead;
  os.push_back(d);
  Tensor<T> out(os);
  const T* tv = table.value().data().data();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(tv + rows[i] * d, tv + rows[i] * d + d, out.data().data() + i * d);
  const auto it = table.id;
  return g.record("gather_rows", {it}, std::move(out),
                  [it, rows, d](std::span<const T> go, Graph<T>& gr) {
                    auto gt = gr.grad_buffer(it);
                    for (std::size_t i = 0; i < rows.size(); ++i)
                      for (std::size_t j = 0; j < d; ++j) gt[rows[i] * d + j] += go[i * d + j];
                  });
}

template <typename T>
Var<T> mean_tokens(Var<T> x) {
  auto& g = graph_of(x);
  const auto& xs = x.shape();
  if (xs.size() != 3) dim_error("mean_tokens", xs, Shape{});
  const std::size_t b = xs[0], len = xs[1], d = xs[2];
  Tensor<T> out(Shape{b, d});
  std::vector<Acc<T>> acc(d);
  for (std::size_t bi = 0; bi < b; ++bi) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t j = 0; j < d; ++j) acc[j] += x.value()[(bi * len + l) * d + j];
    for (std::size_t j = 0; j < d; ++j) out[bi * d + j] = static_cast<T>(acc[j] / static_cast<Acc<T>>(len));
  }
  const auto ix = x.id;
  return g.record("mean_tokens", {ix}, std::move(out),
                  [ix, b, len, d](std::span<const T> go, Graph<T>& gr) {
                    auto gi = gr.grad_buffer(ix);
                    const T inv = T{1} / static_cast<T>(len);
                    for (std::size_t bi = 0; bi < b; ++bi)
                      for (std::size_t l = 0; l < len; ++l)
                        for (std::size_t j = 0; j < d; ++j)
                          gi[(bi * len + l) * d + j] += go[bi * d + j] * inv;
                  });
}

template <typename T>
Var<T> slice_tokens(Var<T> x, std::size_t start, std::size_t count) {
  auto& g = graph_of(x);
  const auto& xs = x.shape();
  if (xs.size() != 3 || count == 0 || start + count > xs[1]) {
    dim_error("slice_tokens", xs, Shape{start, count});
  }
  const std::size_t b = xs[0], len = xs[1], d = xs[2];
  Tensor<T> out(Shape{b, count, d});
  for (std::size_t bi = 0; bi < b; ++bi)
    std::copy_n(x.value().data().data() + (bi * len + start) * d, count * d,
                out.data().data() + bi * count * d);
  const auto ix = x.id;
  return g.record("slice_tokens", {ix}, std::move(out),
                  [ix, b, len, d, start, count](std::span<const T> go, Graph<T>& gr) {
                    auto gi = gr.grad_buffer(ix);
                    for (std::size_t bi = 0; bi < b; ++bi)
                      for (std::size_t i = 0; i < count * d; ++i)
                        gi[(bi * len + start) * d + i] += go[bi * count * d + i];
                  });
}

template <typename T>
Var<T> prepend_token(Var<T> token, Var<T> x) {
  auto& g = graph_of(token, x);
  const auto& xs = x.shape();
  if (xs.size() != 3 || token.shape() != Shape{xs[2]}) dim_error("prepend_token", token.shape(), xs);
  const std::size_t b = xs[0], len = xs[1], d = xs[2];
  Tensor<T> out(Shape{b, len + 1, d});
  for (std::size_t bi = 0; bi < b; ++bi) {
    T* o = out.data().data() + bi * (len + 1) * d;
    std::copy_n(token.value().data().data(), d, o);
    std::copy_n(x.value().data().data() + bi * len * d, len * d, o + d);
  }
  const auto it = token.id, ix = x.id;
  return g.record("prepend_token", {it, ix}, std::move(out),
                  [it, ix, b, len, d](std::span<const T> go, Graph<T>& gr) {
                    if (gr.requires_grad(it)) {
                      auto gt = gr.grad_buffer(it);
                      for (std::size_t bi = 0; bi < b; ++bi)
                        for (std::size_t j = 0; j < d; ++j) gt[j] += go[bi * (len + 1) * d + j];
                    }
                    if (gr.requires_grad(ix)) {
                      auto gi = gr.grad_buffer(ix);
                      for (std::size_t bi = 0; bi < b; ++bi)
                        for (std::size_t i = 0; i < len * d; ++i)
                          gi[bi * len * d + i] += go[bi * (len + 1) * d + d + i];
                    }
                  });
}

template <typename T>
Var<T> unshuffle_fill(Var<T> x, Var<T> fill, const std::vector<std::vector<std::size_t>>& order) {
  auto& g = graph_of(x, fill);
  const auto& xs = x.shape();
  if (xs.size() != 3 || fill.shape() != Shape{xs[2]}) dim_error("unshuffle_fill", xs, fill.shape());
  const std::size_t b = xs[0], vis = xs[1], d = xs[2];
  if (order.size() != b) {
    fail(ErrorCategory::contract, "unshuffle_fill: need one patch order per sample, got " +
                                      std::to_string(order.size()) + " for batch " +
                                      std::to_string(b));
  }
  const std::size_t n = order.front().size();
  for (const auto& o : order) {
    std::vector<bool> seen(n, false);
    if (o.size() != n || n < vis) {
      fail(ErrorCategory::contract, "unshuffle_fill: patch order length mismatch");
    }
    for (auto p : o) {
      if (p >= n || seen[p]) fail(ErrorCategory::contract, "unshuffle_fill: order is not a permutation");
      seen[p] = true;
    }
  }
  Tensor<T> out(Shape{b, n, d});
  const T* xv = x.value().data().data();
  const T* fv = fill.value().data().data();
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t j = 0; j < n; ++j) {
      const T* src = j < vis ? xv + (bi * vis + j) * d : fv;
      std::copy_n(src, d, out.data().data() + (bi * n + order[bi][j]) * d);
    }
  const auto ix = x.id, ifl = fill.id;
  return g.record("unshuffle_fill", {ix, ifl}, std::move(out),
                  [ix, ifl, b, vis, n, d, order](std::span<const T> go, Graph<T>& gr) {
                    const bool nx = gr.requires_grad(ix), nf = gr.requires_grad(ifl);
                    T* gx = nx ? gr.grad_buffer(ix).data() : nullptr;
                    T* gf = nf ? gr.grad_buffer(ifl).data() : nullptr;
                    for (std::size_t bi = 0; bi < b; ++bi)
                      for (std::size_t j = 0; j < n; ++j) {
                        const T* src = go.data() + (bi * n + order[bi][j]) * d;
                        if (j < vis) {
                          if (nx)
                            for (std::size_t t = 0; t < d; ++t) gx[(bi * vis + j) * d + t] += src[t];
                        } else if (nf) {
                          for (std::size_t t = 0; t < d; ++t) gf[t] += src[t];
                        }
                      }
                  });
}

template <typename T>
std::pair<std::vector<Acc<T>>, std::vector<Acc<T>>> column_moments(const Tensor<T>& x) {
  const std::size_t b = x.dim(0), d = x.dim(1);
  std::vector<Acc<T>> mean(d, 0), var(d, 0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += x[i * d + j];
  for (auto& v : mean) v /= static_cast<Acc<T>>(b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const Acc<T> c = x[i * d + j] - mean[j];
      var[j] += c * c;
    }
  for (auto& v : var) v /= static_cast<Acc<T>>(b);
  return {std::move(mean), std::move(var)};
}

template <typename T>
BatchMoments batch_moments(const Tensor<T>& x) {
  if (x.rank() != 2) dim_error("batch_moments", x.shape(), Shape{});
  auto [mean, var] = column_moments(x);
  return {std::vector<double>(mean.begin(), mean.end()), std::vector<double>(var.begin(), var.end())};
}

template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  auto& g = graph_of(x);
  const auto& xs = x.shape();
  if (xs.size() != 2) dim_error("batch_norm", xs, Shape{});
  const std::size_t b = xs[0], d = xs[1];
  if (b < 2) {
    fail(ErrorCategory::config, "batch-statistics normalization needs batch >= 2 in train mode");
  }
  const bool affine = gamma.valid();
  if (affine != beta.valid()) fail(ErrorCategory::usage, "batch_norm: gamma and beta go together");
  if (affine && (gamma.shape() != Shape{d} || beta.shape() != Shape{d})) {
    dim_error("batch_norm(affine)", xs, gamma.shape());
  }
  const auto [mean, var] = column_moments(x.value());
  std::vector<T> xhat(b * d);
  std::vector<T> rstd(d);
  Tensor<T> out(xs);
  for (std::size_t j = 0; j < d; ++j) rstd[j] = static_cast<T>(1 / std::sqrt(var[j] + eps));
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const T xh = static_cast<T>((x.value()[i * d + j] - mean[j]) * static_cast<Acc<T>>(rstd[j]));
      xhat[i * d + j] = xh;
      out[i * d + j] = affine ? xh * gamma.value()[j] + beta.value()[j] : xh;
    }
  std::vector<std::size_t> inputs{x.id};
  if (affine) {
    inputs.push_back(gamma.id);
    inputs.push_back(beta.id);
  }
  const auto ix = x.id;
  const std::size_t ig = affine ? gamma.id : SIZE_MAX, ib = affine ? beta.id : SIZE_MAX;
  auto sx = share(std::move(xhat));
  auto sr = share(std::move(rstd));
  return g.record(
      "batch_norm", std::move(inputs), std::move(out),
      [ix, ig, ib, b, d, sx, sr](std::span<const T> go, Graph<T>& gr) {
        const auto& xh = *sx;
        if (ig != SIZE_MAX && gr.requires_grad(ig)) {
          auto gg = gr.grad_buffer(ig);
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < d; ++j) gg[j] += go[i * d + j] * xh[i * d + j];
        }
        if (ib != SIZE_MAX && gr.requires_grad(ib)) {
          auto gb = gr.grad_buffer(ib);
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < d; ++j) gb[j] += go[i * d + j];
        }
        if (!gr.requires_grad(ix)) return;
        auto gx = gr.grad_buffer(ix);
        for (std::size_t j = 0; j < d; ++j) {
          const Acc<T> gam = ig != SIZE_MAX ? static_cast<Acc<T>>(gr.value(ig)[j]) : 1.0;
          Acc<T> m1 = 0, m2 = 0;
          for (std::size_t i = 0; i < b; ++i) {
            const Acc<T> dxh = go[i * d + j] * gam;
            m1 += dxh;
            m2 += dxh * xh[i * d + j];
          }
          m1 /= static_cast<Acc<T>>(b);
          m2 /= static_cast<Acc<T>>(b);
          for (std::size_t i = 0; i < b; ++i) {
            const Acc<T> dxh = go[i * d + j] * gam;
            gx[i * d + j] += static_cast<T>((*sr)[j] * (dxh - m1 - xh[i * d + j] * m2));
          }
        }
      });
}

template <typename T>
Var<T> batch_norm_eval(Var<T> x, const Tensor<T>& running_mean, const Tensor<T>& running_var,
                       Var<T> gamma, Var<T> beta, T eps) {
  auto& g = graph_of(x);
  const auto& xs = x.shape();
  if (xs.size() != 2) dim_error("batch_norm_eval", xs, Shape{});
  const std::size_t b = xs[0], d = xs[1];
  if (running_mean.shape() != Shape{d} || running_var.shape() != Shape{d}) {
    dim_error("batch_norm_eval(stats)", xs, running_mean.shape());
  }
  const bool affine = gamma.valid();
  if (affine != beta.valid()) fail(ErrorCategory::usage, "batch_norm_eval: gamma and beta go together");
  std::vector<T> rstd(d);
  for (std::size_t j = 0; j < d; ++j)
    rstd[j] = static_cast<T>(1.0 / std::sqrt(static_cast<Acc<T>>(running_var[j]) + eps));
  Tensor<T> out(xs);
  std::vector<T> xhat(b * d);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const T xh = (x.value()[i * d + j] - running_mean[j]) * rstd[j];
      xhat[i * d + j] = xh;
      out[i * d + j] = affine ? xh * gamma.value()[j] + beta.value()[j] : xh;
    }
  std::vector<std::size_t> inputs{x.id};
  if (affine) {
    inputs.push_back(gamma.id);
    inputs.push_back(beta.id);
  }
  const auto ix = x.id;
  const std::size_t ig = affine ? gamma.id : SIZE_MAX, ib = affine ? beta.id : SIZE_MAX;
  auto sx = share(std::move(xhat));
  auto sr = share(std::move(rstd));
  return g.record("batch_norm_eval", std::move(inputs), std::move(out),
                  [ix, ig, ib, b, d, sx, sr](std::span<const T> go, Graph<T>& gr) {
                    if (ig != SIZE_MAX && gr.requires_grad(ig)) {
                      auto gg = gr.grad_buffer(ig);
                      for (std::size_t i = 0; i < b; ++i)
                        for (std::size_t j = 0; j < d; ++j) gg[j] += go[i * d + j] * (*sx)[i * d + j];
                    }
                    if (ib != SIZE_MAX && gr.requires_grad(ib)) {
                      auto gb = gr.grad_buffer(ib);
                      for (std::size_t i = 0; i < b; ++i)
                        for (std::size_t j = 0; j < d; ++j) gb[j] += go[i * d + j];
                    }
                    if (!gr.requires_grad(ix)) return;
                    auto gx = gr.grad_buffer(ix);
                    for (std::size_t i = 0; i < b; ++i)
                      for (std::size_t j = 0; j < d; ++j) {
                        const T gam = ig != SIZE_MAX ? gr.value(ig)[j] : T{1};
                        gx[i * d + j] += go[i * d + j] * gam * (*sr)[j];
                      }
                  });
}

template <typename T>
Var<T> masked_mse(Var<T> pred, const Tensor<T>& target,
                  const std::vector<std::vector<std::size_t>>& masked) {
  auto& g = graph_of(pred);
  const auto& ps = pred.shape();
  const auto& ts = target.shape();
  if (ps.size() != 3 || ts.size() != 3 || ps[0] != ts[0] || ps[2] != ts[2]) {
    dim_error("masked_mse", ps, ts);
  }
  const std::size_t b = ps[0], n = ps[1], k = ps[2], m = ts[1];
  if (masked.size() != b) {
    fail(ErrorCategory::contract, "masked_mse: one masked index list per sample required");
  }
  for (const auto& idx : masked) {
    if (idx.size() != m) {
      fail(ErrorCategory::contract, "masked_mse: targets hold " + std::to_string(m) +
                                        " patches but plan masks " + std::to_string(idx.size()));
    }
    for (auto p : idx)
      if (p >= n) fail(ErrorCategory::contract, "masked_mse: masked index out of range");
  }
  const Acc<T> denom = static_cast<Acc<T>>(b * m * k);
  Acc<T> s = 0;
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t mi = 0; mi < m; ++mi)
      for (std::size_t j = 0; j < k; ++j) {
        const Acc<T> diff = static_cast<Acc<T>>(pred.value()[(bi * n + masked[bi][mi]) * k + j]) -
                         target[(bi * m + mi) * k + j];
        s += diff * diff;
      }
  const auto ip = pred.id;
  return g.record("masked_mse", {ip}, Tensor<T>::scalar(static_cast<T>(s / denom)),
                  [ip, target, masked, b, n, m, k, denom](std::span<const T> go, Graph<T>& gr) {
                    const auto& pv = gr.value(ip);
                    auto gp = gr.grad_buffer(ip);
                    const T c = static_cast<T>(2.0 * static_cast<Acc<T>>(go[0]) / denom);
                    for (std::size_t bi = 0; bi < b; ++bi)
                      for (std::size_t mi = 0; mi < m; ++mi) {
                        const std::size_t row = (bi * n + masked[bi][mi]) * k;
                        for (std::size_t j = 0; j < k; ++j)
                          gp[row + j] += c * (pv[row + j] - target[(bi * m + mi) * k + j]);
                      }
                  });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, const std::vector<int>& labels, T tau, T label_smoothing) {
  auto& g = graph_of(logits);
  const auto& ls = logits.shape();
  if (ls.size() != 2) dim_error("cross_entropy", ls, Shape{labels.size()});
  const std::size_t b = ls[0], kc = ls[1];
  if (labels.size() != b) dim_error("cross_entropy(labels)", ls, Shape{labels.size()});
  if (!(tau > 0)) fail(ErrorCategory::config, "cross_entropy: tau must be positive");
  if (label_smoothing < 0 || label_smoothing >= 1) {
    fail(ErrorCategory::config, "cross_entropy: label_smoothing must lie in [0,1)");
  }
  if (kc == 1 && label_smoothing > 0) {
    fail(ErrorCategory::config, "cross_entropy: label smoothing needs at least two classes");
  }
  for (auto y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= kc) {
      fail(ErrorCategory::data, "label " + std::to_string(y) + " outside [0," +
                                    std::to_string(kc) + ")");
    }
  }
  const Acc<T> on = 1.0 - static_cast<Acc<T>>(label_smoothing);
  const Acc<T> off = kc > 1 ? static_cast<Acc<T>>(label_smoothing) / static_cast<Acc<T>>(kc - 1) : 0.0;
  std::vector<T> probs(b * kc);
  Acc<T> total = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const T* z = logits.value().data().data() + i * kc;
    Acc<T> mx = z[0] / static_cast<Acc<T>>(tau);
    for (std::size_t j = 1; j < kc; ++j) mx = std::max(mx, z[j] / static_cast<Acc<T>>(tau));
    Acc<T> se = 0;
    for (std::size_t j = 0; j < kc; ++j) se += std::exp(z[j] / static_cast<Acc<T>>(tau) - mx);
    const Acc<T> lse = mx + std::log(se);
    Acc<T> li = 0;
    for (std::size_t j = 0; j < kc; ++j) {
      const Acc<T> zt = z[j] / static_cast<Acc<T>>(tau);
      const Acc<T> t = static_cast<std::size_t>(labels[i]) == j ? on : off;
      if (t != 0) li += t * (lse - zt);
      probs[i * kc + j] = static_cast<T>(std::exp(zt - lse));
    }
    total += li;
  }
  const auto il = logits.id;
  auto sp = share(std::move(probs));
  return g.record("cross_entropy", {il}, Tensor<T>::scalar(static_cast<T>(total / static_cast<Acc<T>>(b))),
                  [il, sp, labels, b, kc, on, off, tau](std::span<const T> go, Graph<T>& gr) {
                    auto gl = gr.grad_buffer(il);
                    const Acc<T> c = static_cast<Acc<T>>(go[0]) / (static_cast<Acc<T>>(tau) * static_cast<Acc<T>>(b));
                    for (std::size_t i = 0; i < b; ++i)
                      for (std::size_t j = 0; j < kc; ++j) {
                        const Acc<T> t = static_cast<std::size_t>(labels[i]) == j ? on : off;
                        gl[i * kc + j] += static_cast<T>(c * ((*sp)[i * kc + j] - t));
                      }
                  });
}

#define SUPMAE_INSTANTIATE_OPS(T)                                                               \
  template Var<T> matmul(Var<T>, Var<T>);                                                       \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                                               \
  template Var<T> add(Var<T>, Var<T>);                                                          \
  template Var<T> sub(Var<T>, Var<T>);                                                          \
  template Var<T> mul(Var<T>, Var<T>);                                                          \
  template Var<T> scale(Var<T>, T);                                                             \
  template Var<T> add_broadcast(Var<T>, Var<T>);                                                \
  template Var<T> sum(Var<T>);                                                                  \
  template Var<T> mean(Var<T>);                                                                 \
  template Var<T> reshape(Var<T>, Shape);                                                       \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                                        \
  template Var<T> gelu(Var<T>);                                                                 \
  template Var<T> relu(Var<T>);                                                                 \
  template Var<T> softmax(Var<T>);                                                              \
  template Var<T> attention(Var<T>, Var<T>, Var<T>);                                            \
  template Var<T> split_heads(Var<T>, std::size_t);                                             \
  template Var<T> merge_heads(Var<T>);                                                          \
  template Var<T> slice_last(Var<T>, std::size_t, std::size_t);                                \
  template Var<T> gather_rows(Var<T>, const std::vector<std::size_t>&, Shape);                  \
  template Var<T> mean_tokens(Var<T>);                                                          \
  template Var<T> slice_tokens(Var<T>, std::size_t, std::size_t);                               \
  template Var<T> prepend_token(Var<T>, Var<T>);                                                \
  template Var<T> unshuffle_fill(Var<T>, Var<T>, const std::vector<std::vector<std::size_t>>&); \
  template Var<T> batch_norm(Var<T>, Var<T>, Var<T>, T);                                        \
  template Var<T> batch_norm_eval(Var<T>, const Tensor<T>&, const Tensor<T>&, Var<T>, Var<T>,  \
                                  T);                                                           \
  template BatchMoments batch_moments(const Tensor<T>&);                                        \
  template Var<T> masked_mse(Var<T>, const Tensor<T>&,                                          \
                             const std::vector<std::vector<std::size_t>>&);                     \
  template Var<T> cross_entropy(Var<T>, const std::vector<int>&, T, T);

SUPMAE_INSTANTIATE_OPS(float)
SUPMAE_INSTANTIATE_OPS(double)
SUPMAE_INSTANTIATE_OPS(long double)

#undef SUPMAE_INSTANTIATE_OPS

}  // namespace supmae::diff
