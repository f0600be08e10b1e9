// SPDX-License-Identifier: Apache-2.0
#pragma once

// Define-by-run reverse-mode differentiation over dense 2-D tensors.
//
// A Graph records every operation in creation order; node ids are therefore a
// topological order and backward() simply walks them in reverse. Parameters
// enter the graph as leaves that point back at their owning Parameter, and
// backward() adds the leaf gradients into Parameter::grad, so calling it
// twice without zeroing accumulates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gdasjae/errors.hpp"
#include "gdasjae/tensor.hpp"

namespace gdasjae {

class Graph;

/// Handle to a node inside a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  struct Node {
    std::string op;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value) { return push("constant", {}, std::move(value), nullptr); }

  /// Leaf bound to `p`; the parameter must outlive the graph.
  Var parameter(Parameter& p) {
    Var v = push("parameter", {}, p.value, nullptr);
    nodes_[v.id].param = &p;
    return v;
  }

  Var push(std::string op, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward) {
    nodes_.push_back(Node{std::move(op), std::move(inputs), std::move(value), Tensor{}, std::move(backward),
                          nullptr});
    return Var{this, nodes_.size() - 1};
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const Tensor& grad(Var v) const { return nodes_.at(v.id).grad; }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient slot of node `id`, allocated (zeroed) on first touch.
  Tensor& grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.value.same_shape(n.grad)) n.grad = Tensor(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Reverse accumulation from a scalar `loss`; parameter leaves add their
  /// gradient into the bound Parameter.
  void backward(Var loss) {
    if (loss.graph != this) throw ContractError("backward: loss belongs to another graph");
    const Tensor& lv = nodes_.at(loss.id).value;
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ContractError("backward: loss must be scalar, got " + lv.shape());
    }
    for (auto& n : nodes_) n.grad = Tensor(n.value.rows(), n.value.cols());
    nodes_[loss.id].grad[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward) n.backward(*this, i);
    }
    for (std::size_t i = 0; i <= loss.id; ++i) {
      Node& n = nodes_[i];
      if (n.param != nullptr) n.param->grad += n.grad;
    }
  }

  void reset() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

namespace detail {

inline Graph& graph_of(Var a) {
  if (a.graph == nullptr) throw ContractError("operation on an unbound Var");
  return *a.graph;
}

inline Graph& graph_of(Var a, Var b) {
  if (a.graph != b.graph) throw ContractError("operands belong to different graphs");
  return graph_of(a);
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Graph& g = detail::graph_of(a, b);
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  if (A.cols() != B.rows()) {
    throw DimensionError("matmul: inner dimensions disagree " + A.shape() + " x " + B.shape());
  }
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = &C(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A(i, p);
      if (aip == 0.0) continue;
      const double* brow = &B(p, 0);
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  const std::size_t ia = a.id, ib = b.id;
  return g.push("matmul", {ia, ib}, std::move(C), [ia, ib, m, k, n](Graph& gr, std::size_t self) {
    const Tensor& dC = gr.node(self).grad;
    const Tensor& A = gr.node(ia).value;
    const Tensor& B = gr.node(ib).value;
    Tensor& dA = gr.grad_slot(ia);
    // dA = dC * B^T
    for (std::size_t i = 0; i < m; ++i) {
      const double* dcrow = &dC(i, 0);
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = &B(p, 0);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += dcrow[j] * brow[j];
        dA(i, p) += s;
      }
    }
    Tensor& dB = gr.grad_slot(ib);
    // dB = A^T * dC
    for (std::size_t i = 0; i < m; ++i) {
      const double* dcrow = &dC(i, 0);
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A(i, p);
        if (aip == 0.0) continue;
        double* dbrow = &dB(p, 0);
        for (std::size_t j = 0; j < n; ++j) dbrow[j] += aip * dcrow[j];
      }
    }
  });
}

inline Var add(Var a, Var b) {
  Graph& g = detail::graph_of(a, b);
  Tensor out = g.value(a);
  Tensor::require_same_shape(out, g.value(b), "add");
  out += g.value(b);
  const std::size_t ia = a.id, ib = b.id;
  return g.push("add", {ia, ib}, std::move(out), [ia, ib](Graph& gr, std::size_t self) {
    const Tensor& d = gr.node(self).grad;
    gr.grad_slot(ia) += d;
    gr.grad_slot(ib) += d;
  });
}

/// Sum of equally shaped tensors.
inline Var add_n(std::span<const Var> xs) {
  if (xs.empty()) throw ContractError("add_n: no operands");
  Var acc = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

/// x[m x n] + bias[1 x n] broadcast over rows.
inline Var add_bias(Var x, Var bias) {
  Graph& g = detail::graph_of(x, bias);
  const Tensor& X = g.value(x);
  const Tensor& B = g.value(bias);
  if (B.rows() != 1 || B.cols() != X.cols()) {
    throw DimensionError("add_bias: bias " + B.shape() + " does not broadcast over " + X.shape());
  }
  Tensor out = X;
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < X.cols(); ++j) out(i, j) += B(0, j);
  const std::size_t ix = x.id, ib = bias.id;
  return g.push("add_bias", {ix, ib}, std::move(out), [ix, ib](Graph& gr, std::size_t self) {
    const Tensor& d = gr.node(self).grad;
    gr.grad_slot(ix) += d;
    Tensor& db = gr.grad_slot(ib);
    for (std::size_t i = 0; i < d.rows(); ++i)
      for (std::size_t j = 0; j < d.cols(); ++j) db(0, j) += d(i, j);
  });
}

inline Var scale(Var a, double c) {
  Graph& g = detail::graph_of(a);
  Tensor out = g.value(a);
  for (double& v : out.values()) v *= c;
  const std::size_t ia = a.id;
  return g.push("scale", {ia}, std::move(out), [ia, c](Graph& gr, std::size_t self) {
    const Tensor& d = gr.node(self).grad;
    Tensor& da = gr.grad_slot(ia);
    for (std::size_t i = 0; i < d.size(); ++i) da[i] += c * d[i];
  });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  Graph& g = detail::graph_of(a, b);
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  Tensor::require_same_shape(A, B, "mul");
  Tensor out(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * B[i];
  const std::size_t ia = a.id, ib = b.id;
  return g.push("mul", {ia, ib}, std::move(out), [ia, ib](Graph& gr, std::size_t self) {
    const Tensor& d = gr.node(self).grad;
    const Tensor& A = gr.node(ia).value;
    const Tensor& B = gr.node(ib).value;
    {
      Tensor& da = gr.grad_slot(ia);
      for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] * B[i];
    }
    Tensor& db = gr.grad_slot(ib);
    for (std::size_t i = 0; i < d.size(); ++i) db[i] += d[i] * A[i];
  });
}

/// Sum of all entries, as a 1x1 tensor.
inline Var sum(Var a) {
  Graph& g = detail::graph_of(a);
  double s = 0.0;
  for (double v : g.value(a).values()) s += v;
  const std::size_t ia = a.id;
  return g.push("sum", {ia}, Tensor::scalar(s), [ia](Graph& gr, std::size_t self) {
    const double d = gr.node(self).grad[0];
    for (double& v : gr.grad_slot(ia).values()) v += d;
  });
}

inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  Graph& g = detail::graph_of(parts[0]);
  const std::size_t m = g.value(parts[0]).rows();
  std::size_t width = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;
  for (Var p : parts) {
    detail::graph_of(parts[0], p);
    const Tensor& t = g.value(p);
    if (t.rows() != m) {
      throw DimensionError("concat_cols: row count " + t.shape() + " vs " + g.value(parts[0]).shape());
    }
    ids.push_back(p.id);
    widths.push_back(t.cols());
    width += t.cols();
  }
  Tensor out(m, width);
  std::size_t off = 0;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const Tensor& t = g.value(Var{&g, ids[k]});
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(&t(i, 0), widths[k], &out(i, off));
    off += widths[k];
  }
  return g.push("concat_cols", ids, std::move(out), [ids, widths](Graph& gr, std::size_t self) {
    const Tensor& d = gr.node(self).grad;
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Tensor& dk = gr.grad_slot(ids[k]);
      for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j = 0; j < widths[k]; ++j) dk(i, j) += d(i, off + j);
      off += widths[k];
    }
  });
}

inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

/// y = x for x >= 0, slope * x otherwise; the derivative at 0 is taken as 1.
inline Var leaky_relu(Var x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw ContractError("leaky_relu: slope must lie in (0,1)");
  Graph& g = detail::graph_of(x);
  Tensor out = g.value(x);
  for (double& v : out.values())
    if (v < 0.0) v *= slope;
  const std::size_t ix = x.id;
  return g.push("leaky_relu", {ix}, std::move(out), [ix, slope](Graph& gr, std::size_t self) {
    const Tensor& d = gr.node(self).grad;
    const Tensor& X = gr.node(ix).value;
    Tensor& dx = gr.grad_slot(ix);
    for (std::size_t i = 0; i < d.size(); ++i) dx[i] += X[i] >= 0.0 ? d[i] : slope * d[i];
  });
}

/// Appends zero columns up to `target_width`.
inline Var pad_cols(Var x, std::size_t target_width) {
  Graph& g = detail::graph_of(x);
  const Tensor& X = g.value(x);
  if (target_width < X.cols()) {
    throw DimensionError("pad_cols: target width " + std::to_string(target_width) + " < input " + X.shape());
  }
  if (target_width == X.cols()) return x;
  const std::size_t w = X.cols();
  Tensor out(X.rows(), target_width);
  for (std::size_t i = 0; i < X.rows(); ++i) std::copy_n(&X(i, 0), w, &out(i, 0));
  const std::size_t ix = x.id;
  return g.push("pad_cols", {ix}, std::move(out), [ix, w](Graph& gr, std::size_t self) {
    const Tensor& d = gr.node(self).grad;
    Tensor& dx = gr.grad_slot(ix);
    for (std::size_t i = 0; i < d.rows(); ++i)
      for (std::size_t j = 0; j < w; ++j) dx(i, j) += d(i, j);
  });
}

/// Row r as a 1 x n tensor.
inline Var slice_row(Var x, std::size_t r) {
  Graph& g = detail::graph_of(x);
  const Tensor& X = g.value(x);
  if (r >= X.rows()) throw DimensionError("slice_row: row " + std::to_string(r) + " of " + X.shape());
  Tensor out = Tensor::row(X.row_view(r));
  const std::size_t ix = x.id;
  return g.push("slice_row", {ix}, std::move(out), [ix, r](Graph& gr, std::size_t self) {
    const Tensor& d = gr.node(self).grad;
    Tensor& dx = gr.grad_slot(ix);
    for (std::size_t j = 0; j < d.cols(); ++j) dx(r, j) += d(0, j);
  });
}

namespace detail {

inline void softmax_row(std::span<const double> in, std::span<double> out) {
  const double mx = *std::max_element(in.begin(), in.end());
  double z = 0.0;
  for (std::size_t j = 0; j < in.size(); ++j) {
    out[j] = std::exp(in[j] - mx);
    z += out[j];
  }
  for (double& v : out) v /= z;
}

}  // namespace detail

/// Row-wise softmax.
inline Var softmax_rows(Var x) {
  Graph& g = detail::graph_of(x);
  const Tensor& X = g.value(x);
  Tensor out(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.rows(); ++i)
    detail::softmax_row(X.row_view(i), out.values().subspan(i * X.cols(), X.cols()));
  const std::size_t ix = x.id;
  return g.push("softmax_rows", {ix}, std::move(out), [ix](Graph& gr, std::size_t self) {
    const Tensor& d = gr.node(self).grad;
    const Tensor& y = gr.node(self).value;
    Tensor& dx = gr.grad_slot(ix);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += d(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) dx(i, j) += y(i, j) * (d(i, j) - dot);
    }
  });
}

/// Straight-through estimator: the forward value is `hard`, the backward pass
/// hands the incoming gradient to `soft` unchanged.
inline Var straight_through(Var soft, Tensor hard) {
  Graph& g = detail::graph_of(soft);
  Tensor::require_same_shape(g.value(soft), hard, "straight_through");
  const std::size_t is = soft.id;
  return g.push("straight_through", {is}, std::move(hard), [is](Graph& gr, std::size_t self) {
    gr.grad_slot(is) += gr.node(self).grad;
  });
}

/// sum_k weights[0,k] * xs[k]; weights is 1 x K and every xs[k] has the same shape.
inline Var weighted_sum(std::span<const Var> xs, Var weights) {
  Graph& g = detail::graph_of(weights);
  const Tensor& W = g.value(weights);
  if (W.rows() != 1 || W.cols() != xs.size() || xs.empty()) {
    throw DimensionError("weighted_sum: weights " + W.shape() + " for " + std::to_string(xs.size()) + " inputs");
  }
  const Tensor& first = g.value(xs[0]);
  Tensor out(first.rows(), first.cols());
  std::vector<std::size_t> ids;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    detail::graph_of(weights, xs[k]);
    const Tensor& xk = g.value(xs[k]);
    Tensor::require_same_shape(first, xk, "weighted_sum");
    const double w = W(0, k);
    if (w != 0.0)
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * xk[i];
    ids.push_back(xs[k].id);
  }
  const std::size_t iw = weights.id;
  std::vector<std::size_t> inputs = ids;
  inputs.push_back(iw);
  return g.push("weighted_sum", std::move(inputs), std::move(out), [ids, iw](Graph& gr, std::size_t self) {
    const Tensor& d = gr.node(self).grad;
    const Tensor W = gr.node(iw).value;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const Tensor& xk = gr.node(ids[k]).value;
      double dot = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) dot += d[i] * xk[i];
      gr.grad_slot(iw)(0, k) += dot;
      const double w = W(0, k);
      if (w != 0.0) {
        Tensor& dx = gr.grad_slot(ids[k]);
        for (std::size_t i = 0; i < d.size(); ++i) dx[i] += w * d[i];
      }
    }
  });
}

/// Mean over rows of -log softmax(logits)[label].
inline Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  Graph& g = detail::graph_of(logits);
  const Tensor& X = g.value(logits);
  const std::size_t m = X.rows(), c = X.cols();
  if (m == 0) throw ContractError("softmax_cross_entropy: empty batch");
  if (labels.size() != m) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         X.shape());
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw ValidationError("softmax_cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                            std::to_string(i) + " outside [0," + std::to_string(c) + ")");
    }
  }
  Tensor probs(m, c);
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    auto row = X.row_view(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double logz = mx + std::log(z);
    loss += logz - row[labels[i]];
    for (std::size_t j = 0; j < c; ++j) probs(i, j) = std::exp(row[j] - logz);
  }
  loss /= static_cast<double>(m);
  std::vector<int> saved(labels.begin(), labels.end());
  const std::size_t ix = logits.id;
  return g.push("softmax_cross_entropy", {ix}, Tensor::scalar(loss),
                [ix, probs = std::move(probs), saved = std::move(saved)](Graph& gr, std::size_t self) {
                  const double d = gr.node(self).grad[0] / static_cast<double>(probs.rows());
                  Tensor& dx = gr.grad_slot(ix);
                  for (std::size_t i = 0; i < probs.rows(); ++i) {
                    for (std::size_t j = 0; j < probs.cols(); ++j) {
                      const double target = static_cast<int>(j) == saved[i] ? 1.0 : 0.0;
                      dx(i, j) += d * (probs(i, j) - target);
                    }
                  }
                });
}

/// Largest relative error between reverse-mode gradients and central finite
/// differences over every coordinate of `params`. `f` must rebuild its
/// computation on the supplied graph from the parameters' current values.
inline double grad_check(const std::function<Var(Graph&)>& f, std::span<Parameter* const> params, double eps) {
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    g.backward(f(g));
  }
  auto eval = [&f]() {
    Graph g;
    return g.value(f(g)).item();
  };
  double worst = 0.0;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + eps;
      const double up = eval();
      p->value[i] = orig - eps;
      const double down = eval();
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

/// Single-input form: `f` maps the graph leaf for `x` to a scalar.
inline double grad_check(const std::function<Var(Graph&, Var)>& f, const Tensor& x, double eps) {
  Parameter p("x", x);
  Parameter* ps[] = {&p};
  return grad_check([&](Graph& g) { return f(g, g.parameter(p)); }, ps, eps);
}

}  // namespace gdasjae
