// Copyright (c) 2026 The Mixer Authors
// SPDX-License-Identifier: Apache-2.0

#include "mixer/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mixer/gemm.hpp"

namespace mixer {

using gemm::Trans;

double gaussian_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double gaussian_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

template <class T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  m_nodes.push_back(Node{std::move(value), {}, {}, {}, false, false});
  return Var<T>(this, m_nodes.size() - 1);
}

template <class T>
Var<T> Graph<T>::param(std::string name, Tensor<T> value) {
  m_nodes.push_back(Node{std::move(value), {}, {}, std::move(name), true, true});
  return Var<T>(this, m_nodes.size() - 1);
}

template <class T>
Var<T> Graph<T>::record(Tensor<T> value, std::vector<std::size_t> inputs, Backward backward) {
  bool needs = false;
  for (auto id : inputs) {
    if (id >= m_nodes.size()) throw ContractError("graph input refers to a later node");
    needs = needs || m_nodes[id].requires_grad;
  }
  if (!needs) backward = nullptr;
  m_nodes.push_back(Node{std::move(value), std::move(inputs), std::move(backward), {}, needs, false});
  return Var<T>(this, m_nodes.size() - 1);
}

template <class T>
Tensor<T>& Graph<T>::grad_buffer(std::size_t id) {
  auto& slot = m_grads.at(id);
  if (!slot) slot.emplace(m_nodes[id].value.shape(), T(0));
  return *slot;
}

template <class T>
void Graph<T>::accumulate(std::size_t id, const Tensor<T>& g) {
  if (!m_nodes.at(id).requires_grad) return;
  auto& buf = grad_buffer(id);
  if (buf.shape() != g.shape()) {
    throw DimensionError("gradient shape " + shape_str(g.shape()) + " for node of shape " +
                         shape_str(buf.shape()));
  }
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

template <class T>
Gradients<T> Graph<T>::backward(Var<T> loss) {
  if (loss.graph() != this) throw ContractError("loss belongs to a different graph");
  const auto& lv = value(loss.id());
  if (lv.size() != 1) throw ContractError("grad() needs a scalar loss, got shape " + shape_str(lv.shape()));

  m_grads.assign(m_nodes.size(), std::nullopt);
  m_visits = 0;
  m_grads[loss.id()].emplace(lv.shape(), T(1));
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = m_nodes[id];
    if (!m_grads[id] || !node.backward) continue;
    node.backward(*this, *m_grads[id]);
    ++m_visits;
  }

  Gradients<T> out;
  for (std::size_t id = 0; id < m_nodes.size(); ++id) {
    const Node& node = m_nodes[id];
    if (!node.is_param) continue;
    Tensor<T> g = m_grads[id] ? *m_grads[id] : Tensor<T>(node.value.shape(), T(0));
    auto [it, inserted] = out.try_emplace(node.name, g);
    if (!inserted) {
      for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += g[i];
    }
  }
  return out;
}

namespace ops {

namespace {

template <class T>
Graph<T>& graph_of(Var<T> a) {
  if (!a.valid()) throw ContractError("operation on an empty Var");
  return *a.graph();
}

template <class T>
Graph<T>& graph_of(Var<T> a, Var<T> b) {
  if (a.graph() != b.graph() || !a.valid()) throw ContractError("operands belong to different graphs");
  return *a.graph();
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

}  // namespace

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Graph<T>& g = graph_of(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  const std::size_t ra = av.rank();
  const std::size_t rb = bv.rank();

  if ((ra == 2 || ra == 3) && rb == 2) {
    // [.., m, k] x [k, n]: leading axes of `a` fold into rows.
    const std::size_t k = av.shape().back();
    if (k != bv.dim(0)) shape_error("matmul", av.shape(), bv.shape());
    const std::size_t m = av.size() / k;
    const std::size_t n = bv.dim(1);
    Shape out_shape = av.shape();
    out_shape.back() = n;
    Tensor<T> out(out_shape);
    gemm::gemm(Trans::no, Trans::no, m, n, k, av.ptr(), bv.ptr(), out.ptr(), false);
    return g.record(std::move(out), {a.id(), b.id()},
                    [ia = a.id(), ib = b.id(), m, n, k](Graph<T>& gr, const Tensor<T>& go) {
                      if (gr.requires_grad(ia)) {
                        auto& da = gr.grad_buffer(ia);
                        gemm::gemm(Trans::no, Trans::yes, m, k, n, go.ptr(), gr.value(ib).ptr(), da.ptr(), true);
                      }
                      if (gr.requires_grad(ib)) {
                        auto& db = gr.grad_buffer(ib);
                        gemm::gemm(Trans::yes, Trans::no, k, n, m, gr.value(ia).ptr(), go.ptr(), db.ptr(), true);
                      }
                    });
  }

  if (ra == 2 && rb == 3) {
    // [m, k] x [B, k, n]: one shared left operand.
    const std::size_t m = av.dim(0);
    const std::size_t k = av.dim(1);
    const std::size_t batch = bv.dim(0);
    const std::size_t n = bv.dim(2);
    if (k != bv.dim(1)) shape_error("matmul", av.shape(), bv.shape());
    Tensor<T> out(Shape{batch, m, n});
    for (std::size_t i = 0; i < batch; ++i) {
      gemm::gemm(Trans::no, Trans::no, m, n, k, av.ptr(), bv.ptr() + i * k * n, out.ptr() + i * m * n, false);
    }
    return g.record(std::move(out), {a.id(), b.id()},
                    [ia = a.id(), ib = b.id(), m, n, k, batch](Graph<T>& gr, const Tensor<T>& go) {
                      const T* bp = gr.value(ib).ptr();
                      if (gr.requires_grad(ia)) {
                        auto& da = gr.grad_buffer(ia);
                        for (std::size_t i = 0; i < batch; ++i) {
                          gemm::gemm(Trans::no, Trans::yes, m, k, n, go.ptr() + i * m * n, bp + i * k * n,
                                     da.ptr(), true);
                        }
                      }
                      if (gr.requires_grad(ib)) {
                        auto& db = gr.grad_buffer(ib);
                        const T* ap = gr.value(ia).ptr();
                        for (std::size_t i = 0; i < batch; ++i) {
                          gemm::gemm(Trans::yes, Trans::no, k, n, m, ap, go.ptr() + i * m * n,
                                     db.ptr() + i * k * n, true);
                        }
                      }
                    });
  }

  shape_error("matmul", av.shape(), bv.shape());
}

template <class T>
Var<T> transpose(Var<T> a) {
  Graph<T>& g = graph_of(a);
  const Tensor<T>& av = a.value();
  if (av.rank() != 2 && av.rank() != 3) {
    throw DimensionError("transpose expects rank 2 or 3, got " + shape_str(av.shape()));
  }
  const std::size_t rows = av.shape()[av.rank() - 2];
  const std::size_t cols = av.shape().back();
  const std::size_t batch = av.size() / (rows * cols);
  auto swap = [rows, cols, batch](const Tensor<T>& src, T* dst, bool forward, bool add) {
    const std::size_t r = forward ? rows : cols;
    const std::size_t c = forward ? cols : rows;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* s = src.ptr() + b * r * c;
      T* d = dst + b * r * c;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          if (add) d[j * r + i] += s[i * c + j];
          else d[j * r + i] = s[i * c + j];
        }
    }
  };
  Shape out_shape = av.shape();
  std::swap(out_shape[out_shape.size() - 2], out_shape.back());
  Tensor<T> out(out_shape);
  swap(av, out.ptr(), true, false);
  return g.record(std::move(out), {a.id()}, [ia = a.id(), swap](Graph<T>& gr, const Tensor<T>& go) {
    swap(go, gr.grad_buffer(ia).ptr(), false, true);
  });
}

template <class T>
Var<T> reshape(Var<T> a, Shape shape) {
  Graph<T>& g = graph_of(a);
  if (shape_size(shape) != a.value().size()) shape_error("reshape", a.shape(), shape);
  return g.record(a.value().reshaped(std::move(shape)), {a.id()},
                  [ia = a.id()](Graph<T>& gr, const Tensor<T>& go) {
                    auto& da = gr.grad_buffer(ia);
                    for (std::size_t i = 0; i < go.size(); ++i) da[i] += go[i];
                  });
}

template <class T>
Var<T> gather(Var<T> a, IndexMap index, Shape shape) {
  Graph<T>& g = graph_of(a);
  const Tensor<T>& av = a.value();
  if (!index || index->size() != shape_size(shape)) {
    throw DimensionError("gather: index map size does not match output shape " + shape_str(shape));
  }
  Tensor<T> out(std::move(shape));
  const auto& idx = *index;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= av.size()) throw DimensionError("gather: index out of range for " + shape_str(av.shape()));
    out[i] = av[idx[i]];
  }
  return g.record(std::move(out), {a.id()}, [ia = a.id(), index](Graph<T>& gr, const Tensor<T>& go) {
    auto& da = gr.grad_buffer(ia);
    const auto& ix = *index;
    for (std::size_t i = 0; i < ix.size(); ++i) da[ix[i]] += go[i];
  });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  Graph<T>& g = graph_of(a, b);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.shape() != bv.shape()) shape_error("add", av.shape(), bv.shape());
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return g.record(std::move(out), {a.id(), b.id()}, [ia = a.id(), ib = b.id()](Graph<T>& gr, const Tensor<T>& go) {
    gr.accumulate(ia, go);
    gr.accumulate(ib, go);
  });
}

template <class T>
Var<T> add_bias(Var<T> x, Var<T> b) {
  Graph<T>& g = graph_of(x, b);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& bv = b.value();
  const auto& xs = xv.shape();
  const auto& bs = bv.shape();
  if (bs.size() > xs.size() || !std::equal(bs.begin(), bs.end(), xs.end() - bs.size())) {
    shape_error("add_bias", xs, bs);
  }
  const std::size_t inner = bv.size();
  const std::size_t outer = xv.size() / inner;
  Tensor<T> out = xv;
  for (std::size_t o = 0; o < outer; ++o) {
    T* row = out.ptr() + o * inner;
    for (std::size_t i = 0; i < inner; ++i) row[i] += bv[i];
  }
  return g.record(std::move(out), {x.id(), b.id()},
                  [ix = x.id(), ib = b.id(), inner, outer](Graph<T>& gr, const Tensor<T>& go) {
                    gr.accumulate(ix, go);
                    if (gr.requires_grad(ib)) {
                      auto& db = gr.grad_buffer(ib);
                      for (std::size_t o = 0; o < outer; ++o) {
                        const T* row = go.ptr() + o * inner;
                        for (std::size_t i = 0; i < inner; ++i) db[i] += row[i];
                      }
                    }
                  });
}

template <class T>
Var<T> add_bias_cols(Var<T> x, Var<T> b) {
  Graph<T>& g = graph_of(x, b);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& bv = b.value();
  if (xv.rank() < 2 || bv.rank() != 1 || bv.dim(0) != xv.shape()[xv.rank() - 2]) {
    shape_error("add_bias_cols", xv.shape(), bv.shape());
  }
  const std::size_t rows = bv.dim(0);
  const std::size_t cols = xv.shape().back();
  const std::size_t batch = xv.size() / (rows * cols);
  Tensor<T> out = xv;
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t r = 0; r < rows; ++r) {
      T* row = out.ptr() + (n * rows + r) * cols;
      for (std::size_t c = 0; c < cols; ++c) row[c] += bv[r];
    }
  return g.record(std::move(out), {x.id(), b.id()},
                  [ix = x.id(), ib = b.id(), rows, cols, batch](Graph<T>& gr, const Tensor<T>& go) {
                    gr.accumulate(ix, go);
                    if (gr.requires_grad(ib)) {
                      auto& db = gr.grad_buffer(ib);
                      for (std::size_t n = 0; n < batch; ++n)
                        for (std::size_t r = 0; r < rows; ++r) {
                          const T* row = go.ptr() + (n * rows + r) * cols;
                          T s = 0;
                          for (std::size_t c = 0; c < cols; ++c) s += row[c];
                          db[r] += s;
                        }
                    }
                  });
}

template <class T>
Var<T> mul_const(Var<T> x, Tensor<T> mask) {
  Graph<T>& g = graph_of(x);
  const Tensor<T>& xv = x.value();
  if (xv.shape() != mask.shape()) shape_error("mul_const", xv.shape(), mask.shape());
  Tensor<T> out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  auto saved = std::make_shared<const Tensor<T>>(std::move(mask));
  return g.record(std::move(out), {x.id()}, [ix = x.id(), saved](Graph<T>& gr, const Tensor<T>& go) {
    auto& dx = gr.grad_buffer(ix);
    const auto& m = *saved;
    for (std::size_t i = 0; i < go.size(); ++i) dx[i] += go[i] * m[i];
  });
}

template <class T>
Var<T> scale(Var<T> x, T s) {
  Graph<T>& g = graph_of(x);
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v *= s;
  return g.record(std::move(out), {x.id()}, [ix = x.id(), s](Graph<T>& gr, const Tensor<T>& go) {
    auto& dx = gr.grad_buffer(ix);
    for (std::size_t i = 0; i < go.size(); ++i) dx[i] += go[i] * s;
  });
}

template <class T>
Var<T> gelu(Var<T> x) {
  Graph<T>& g = graph_of(x);
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T v = xv[i];
    out[i] = v * T(0.5) * std::erfc(-v * inv_sqrt2);
  }
  return g.record(std::move(out), {x.id()}, [ix = x.id()](Graph<T>& gr, const Tensor<T>& go) {
    const Tensor<T>& xin = gr.value(ix);
    auto& dx = gr.grad_buffer(ix);
    constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
    for (std::size_t i = 0; i < go.size(); ++i) {
      const T v = xin[i];
      const T cdf = T(0.5) * std::erfc(-v * inv_sqrt2);
      const T pdf = std::exp(T(-0.5) * v * v) * inv_sqrt2pi;
      dx[i] += go[i] * (cdf + v * pdf);
    }
  });
}

template <class T>
Var<T> layernorm(Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
  Graph<T>& g = graph_of(x, gamma);
  graph_of(x, beta);
  const Tensor<T>& xv = x.value();
  const std::size_t c = xv.shape().back();
  if (xv.rank() == 0 || gamma.value().shape() != Shape{c} || beta.value().shape() != Shape{c}) {
    shape_error("layernorm", xv.shape(), gamma.value().shape());
  }
  const std::size_t rows = xv.size() / c;
  auto xhat = std::make_shared<Tensor<T>>(xv.shape());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  Tensor<T> out(xv.shape());
  const Tensor<T>& gv = gamma.value();
  const Tensor<T>& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.ptr() + r * c;
    T mean = 0;
    for (std::size_t i = 0; i < c; ++i) mean += in[i];
    mean /= T(c);
    T var = 0;
    for (std::size_t i = 0; i < c; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= T(c);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    T* xh = xhat->ptr() + r * c;
    T* o = out.ptr() + r * c;
    for (std::size_t i = 0; i < c; ++i) {
      xh[i] = (in[i] - mean) * rs;
      o[i] = gv[i] * xh[i] + bv[i];
    }
  }
  return g.record(std::move(out), {x.id(), gamma.id(), beta.id()},
                  [ix = x.id(), ig = gamma.id(), ib = beta.id(), xhat, rstd, rows, c](Graph<T>& gr,
                                                                                        const Tensor<T>& go) {
                    const Tensor<T>& gv = gr.value(ig);
                    if (gr.requires_grad(ig) || gr.requires_grad(ib)) {
                      Tensor<T> dg(Shape{c});
                      Tensor<T> db(Shape{c});
                      for (std::size_t r = 0; r < rows; ++r) {
                        const T* gor = go.ptr() + r * c;
                        const T* xh = xhat->ptr() + r * c;
                        for (std::size_t i = 0; i < c; ++i) {
                          dg[i] += gor[i] * xh[i];
                          db[i] += gor[i];
                        }
                      }
                      gr.accumulate(ig, dg);
                      gr.accumulate(ib, db);
                    }
                    if (gr.requires_grad(ix)) {
                      auto& dx = gr.grad_buffer(ix);
                      std::vector<T> dxhat(c);
                      for (std::size_t r = 0; r < rows; ++r) {
                        const T* gor = go.ptr() + r * c;
                        const T* xh = xhat->ptr() + r * c;
                        T mean_d = 0;
                        T mean_dx = 0;
                        for (std::size_t i = 0; i < c; ++i) {
                          dxhat[i] = gor[i] * gv[i];
                          mean_d += dxhat[i];
                          mean_dx += dxhat[i] * xh[i];
                        }
                        mean_d /= T(c);
                        mean_dx /= T(c);
                        T* dxr = dx.ptr() + r * c;
                        const T rs = (*rstd)[r];
                        for (std::size_t i = 0; i < c; ++i) dxr[i] += rs * (dxhat[i] - mean_d - xh[i] * mean_dx);
                      }
                    }
                  });
}

template <class T>
Var<T> mean_tokens(Var<T> x) {
  Graph<T>& g = graph_of(x);
  const Tensor<T>& xv = x.value();
  if (xv.rank() != 3) throw DimensionError("mean_tokens expects [B,S,C], got " + shape_str(xv.shape()));
  const std::size_t batch = xv.dim(0);
  const std::size_t s = xv.dim(1);
  const std::size_t c = xv.dim(2);
  Tensor<T> out(Shape{batch, c});
  for (std::size_t b = 0; b < batch; ++b) {
    T* o = out.ptr() + b * c;
    for (std::size_t t = 0; t < s; ++t) {
      const T* row = xv.ptr() + (b * s + t) * c;
      for (std::size_t i = 0; i < c; ++i) o[i] += row[i];
    }
    for (std::size_t i = 0; i < c; ++i) o[i] /= T(s);
  }
  return g.record(std::move(out), {x.id()}, [ix = x.id(), batch, s, c](Graph<T>& gr, const Tensor<T>& go) {
    auto& dx = gr.grad_buffer(ix);
    const T inv = T(1) / T(s);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < s; ++t) {
        T* row = dx.ptr() + (b * s + t) * c;
        const T* gb = go.ptr() + b * c;
        for (std::size_t i = 0; i < c; ++i) row[i] += gb[i] * inv;
      }
  });
}

template <class T>
Var<T> sum(Var<T> x) {
  Graph<T>& g = graph_of(x);
  return g.record(Tensor<T>::scalar(mixer::sum(x.value())), {x.id()},
                  [ix = x.id()](Graph<T>& gr, const Tensor<T>& go) {
                    auto& dx = gr.grad_buffer(ix);
                    const T s = go[0];
                    for (auto& v : dx.data()) v += s;
                  });
}

template <class T>
Var<T> softmax_xent(Var<T> logits, const Tensor<T>& targets) {
  Graph<T>& g = graph_of(logits);
  const Tensor<T>& lv = logits.value();
  if (lv.rank() != 2 || targets.shape() != lv.shape()) shape_error("softmax_xent", lv.shape(), targets.shape());
  const std::size_t batch = lv.dim(0);
  const std::size_t k = lv.dim(1);
  for (std::size_t b = 0; b < batch; ++b) {
    double s = 0;
    for (std::size_t j = 0; j < k; ++j) s += targets[b * k + j];
    if (std::abs(s - 1.0) > 1e-6) {
      throw ContractError("softmax_xent: target row " + std::to_string(b) + " sums to " + std::to_string(s));
    }
  }
  auto probs = std::make_shared<Tensor<T>>(lv.shape());
  T total = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const T* l = lv.ptr() + b * k;
    const T* t = targets.ptr() + b * k;
    T* p = probs->ptr() + b * k;
    const T mx = *std::max_element(l, l + k);
    T z = 0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(l[j] - mx);
    const T lse = mx + std::log(z);
    T row = 0;
    for (std::size_t j = 0; j < k; ++j) {
      p[j] = std::exp(l[j] - lse);
      if (t[j] != T(0)) row -= t[j] * (l[j] - lse);
    }
    total += row;
  }
  auto tgt = std::make_shared<const Tensor<T>>(targets);
  return g.record(Tensor<T>::scalar(total / T(batch)), {logits.id()},
                  [il = logits.id(), probs, tgt, batch](Graph<T>& gr, const Tensor<T>& go) {
                    auto& dl = gr.grad_buffer(il);
                    const T s = go[0] / T(batch);
                    for (std::size_t i = 0; i < dl.size(); ++i) dl[i] += s * ((*probs)[i] - (*tgt)[i]);
                  });
}

template <class T>
Var<T> channelwise_mix(Var<T> x, Var<T> w, Var<T> bias) {
  Graph<T>& g = graph_of(x, w);
  graph_of(x, bias);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  const Tensor<T>& bv = bias.value();
  if (xv.rank() != 3 || wv.rank() != 3 || wv.dim(0) != xv.dim(2) || wv.dim(2) != xv.dim(1)) {
    shape_error("channelwise_mix", xv.shape(), wv.shape());
  }
  const std::size_t batch = xv.dim(0);
  const std::size_t s = xv.dim(1);
  const std::size_t c = xv.dim(2);
  const std::size_t d = wv.dim(1);
  if (bv.shape() != Shape{c, d}) shape_error("channelwise_mix", wv.shape(), bv.shape());
  Tensor<T> out(Shape{batch, d, c});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t h = 0; h < d; ++h) {
        const T* wr = wv.ptr() + (i * d + h) * s;
        T acc = bv[i * d + h];
        for (std::size_t t = 0; t < s; ++t) acc += wr[t] * xv[(b * s + t) * c + i];
        out[(b * d + h) * c + i] = acc;
      }
  gemm::add_macs(static_cast<std::uint64_t>(batch) * c * d * s);
  return g.record(std::move(out), {x.id(), w.id(), bias.id()},
                  [ix = x.id(), iw = w.id(), ib = bias.id(), batch, s, c, d](Graph<T>& gr, const Tensor<T>& go) {
                    const Tensor<T>& xin = gr.value(ix);
                    const Tensor<T>& win = gr.value(iw);
                    const bool gx = gr.requires_grad(ix);
                    const bool gw = gr.requires_grad(iw);
                    const bool gb = gr.requires_grad(ib);
                    Tensor<T>* dx = gx ? &gr.grad_buffer(ix) : nullptr;
                    Tensor<T>* dw = gw ? &gr.grad_buffer(iw) : nullptr;
                    Tensor<T>* db = gb ? &gr.grad_buffer(ib) : nullptr;
                    for (std::size_t b = 0; b < batch; ++b)
                      for (std::size_t i = 0; i < c; ++i)
                        for (std::size_t h = 0; h < d; ++h) {
                          const T gv = go[(b * d + h) * c + i];
                          if (db) (*db)[i * d + h] += gv;
                          const T* wr = win.ptr() + (i * d + h) * s;
                          for (std::size_t t = 0; t < s; ++t) {
                            if (dx) (*dx)[(b * s + t) * c + i] += wr[t] * gv;
                            if (dw) (*dw)[(i * d + h) * s + t] += gv * xin[(b * s + t) * c + i];
                          }
                        }
                  });
}

#define MIXER_INSTANTIATE_OPS(T)                                   \
  template Var<T> matmul(Var<T>, Var<T>);                          \
  template Var<T> transpose(Var<T>);                               \
  template Var<T> reshape(Var<T>, Shape);                          \
  template Var<T> gather(Var<T>, IndexMap, Shape);                 \
  template Var<T> add(Var<T>, Var<T>);                             \
  template Var<T> add_bias(Var<T>, Var<T>);                        \
  template Var<T> add_bias_cols(Var<T>, Var<T>);                   \
  template Var<T> mul_const(Var<T>, Tensor<T>);                    \
  template Var<T> scale(Var<T>, T);                                \
  template Var<T> gelu(Var<T>);                                    \
  template Var<T> layernorm(Var<T>, Var<T>, Var<T>, T);            \
  template Var<T> mean_tokens(Var<T>);                             \
  template Var<T> sum(Var<T>);                                     \
  template Var<T> softmax_xent(Var<T>, const Tensor<T>&);          \
  template Var<T> channelwise_mix(Var<T>, Var<T>, Var<T>);

MIXER_INSTANTIATE_OPS(float)
MIXER_INSTANTIATE_OPS(double)

#undef MIXER_INSTANTIATE_OPS

}  // namespace ops

template class Graph<float>;
template class Graph<double>;

}  // namespace mixer
