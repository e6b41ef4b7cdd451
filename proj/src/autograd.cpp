#include "disenkgat/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "disenkgat/errors.hpp"

namespace disenkgat {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), Tensor{}, requires_grad, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape_ != this) throw std::logic_error("operand recorded on a different tape");
    needs = needs || nodes_[in.id_].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Tensor{}, needs, needs ? std::move(fn) : nullptr});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.shape() != n.value.shape() || n.grad.size() != n.value.size()) {
    n.grad = Tensor(n.value.shape(), 0.0);
  }
  return n.grad;
}

void Tape::backward(const Var& loss) {
  if (loss.tape_ != this) throw std::logic_error("loss recorded on a different tape");
  if (nodes_[loss.id_].value.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     shape_str(nodes_[loss.id_].value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor{};
  grad_buffer(loss.id_).fill(1.0);
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
}

Tensor Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id_];
  if (n.grad.empty() && !n.value.empty()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "sigmoid") return Activation::Sigmoid;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

namespace {

void require_same_shape(std::string_view op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

void require_rank(std::string_view op, const Var& x, std::size_t rank) {
  if (x.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_str(x.shape()));
  }
}

// Elementwise op; `df(x, y)` is the local derivative given input x and output y.
template <class F, class D>
Var elementwise(const Var& x, F f, D df) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  const std::size_t xid = x.id();
  Tensor yv = out;
  return x.tape().record(std::move(out), {x},
                         [xid, df, yv = std::move(yv)](Tape& t, const Tensor& g) {
                           const Tensor& xv = t.value(xid);
                           Tensor& gx = t.grad_buffer(xid);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             gx[i] += g[i] * df(xv[i], yv[i]);
                           }
                         });
}

}  // namespace

Var square(const Var& x) {
  return elementwise(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var exp(const Var& x) {
  return elementwise(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
  return elementwise(x, [](double v) { return std::log(v); },
                     [](double v, double) { return 1.0 / v; });
}

Var add(const Var& a, const Var& b) {
  require_same_shape("add", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record(std::move(out), {a, b}, [aid, bid](Tape& t, const Tensor& g) {
    if (t.requires_grad(aid)) {
      Tensor& ga = t.grad_buffer(aid);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(bid)) {
      Tensor& gb = t.grad_buffer(bid);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record(std::move(out), {a, b}, [aid, bid](Tape& t, const Tensor& g) {
    if (t.requires_grad(aid)) {
      Tensor& ga = t.grad_buffer(aid);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(bid)) {
      Tensor& gb = t.grad_buffer(bid);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record(std::move(out), {a, b}, [aid, bid](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(aid);
    const Tensor& bv = t.value(bid);
    // Both accumulations read the original values, so mul(x, x) is correct.
    if (t.requires_grad(aid)) {
      Tensor& ga = t.grad_buffer(aid);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(bid)) {
      Tensor& gb = t.grad_buffer(bid);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& x, double s) {
  Tensor out = x.value();
  for (double& v : out.data()) v *= s;
  const std::size_t xid = x.id();
  return x.tape().record(std::move(out), {x}, [xid, s](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += s * g[i];
  });
}

Var add_scalar(const Var& x, double s) {
  Tensor out = x.value();
  for (double& v : out.data()) v += s;
  const std::size_t xid = x.id();
  return x.tape().record(std::move(out), {x}, [xid](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var clamp(const Var& x, double lo, double hi) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::clamp(xv[i], lo, hi);
  const std::size_t xid = x.id();
  return x.tape().record(std::move(out), {x}, [xid, lo, hi](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(xid);
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] >= lo && xv[i] <= hi) gx[i] += g[i];
    }
  });
}

Var activate(const Var& x, Activation act) {
  if (act == Activation::Identity) return x;
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    switch (act) {
      case Activation::Tanh: out[i] = std::tanh(v); break;
      case Activation::Relu: out[i] = v > 0.0 ? v : 0.0; break;
      case Activation::Sigmoid: out[i] = 1.0 / (1.0 + std::exp(-v)); break;
      case Activation::Identity: out[i] = v; break;
    }
  }
  const std::size_t xid = x.id();
  Tensor yv = out;
  return x.tape().record(std::move(out), {x},
                         [xid, act, yv = std::move(yv)](Tape& t, const Tensor& g) {
                           const Tensor& xv = t.value(xid);
                           Tensor& gx = t.grad_buffer(xid);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             double d = 1.0;
                             switch (act) {
                               case Activation::Tanh: d = 1.0 - yv[i] * yv[i]; break;
                               case Activation::Relu: d = xv[i] > 0.0 ? 1.0 : 0.0; break;
                               case Activation::Sigmoid: d = yv[i] * (1.0 - yv[i]); break;
                               case Activation::Identity: break;
                             }
                             gx[i] += g[i] * d;
                           }
                         });
}

Var matmul(const Var& a, const Var& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = &out[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record(std::move(out), {a, b}, [aid, bid, m, k, n](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(aid);
    const Tensor& bv = t.value(bid);
    if (t.requires_grad(aid)) {
      // dA = G B^T
      Tensor& ga = t.grad_buffer(aid);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (t.requires_grad(bid)) {
      // dB = A^T G
      Tensor& gb = t.grad_buffer(bid);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
      }
    }
  });
}

Var diag_scale(const Var& w, const Var& x) {
  require_rank("diag_scale", w, 1);
  const std::size_t d = w.shape()[0];
  if (x.shape().empty() || x.shape().back() != d || x.shape().size() > 2) {
    throw ShapeError("diag_scale: diagonal " + shape_str(w.shape()) +
                     " does not match operand " + shape_str(x.shape()));
  }
  const Tensor& wv = w.value();
  Tensor out = x.value();
  const std::size_t rows = out.size() / d;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] *= wv[c];
  }
  const std::size_t wid = w.id(), xid = x.id();
  return w.tape().record(std::move(out), {w, x}, [wid, xid, d, rows](Tape& t, const Tensor& g) {
    const Tensor& wv = t.value(wid);
    const Tensor& xv = t.value(xid);
    if (t.requires_grad(wid)) {
      Tensor& gw = t.grad_buffer(wid);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < d; ++c) gw[c] += g[r * d + c] * xv[r * d + c];
      }
    }
    if (t.requires_grad(xid)) {
      Tensor& gx = t.grad_buffer(xid);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += g[r * d + c] * wv[c];
      }
    }
  });
}

Var softmax(const Var& x, std::size_t axis) {
  const Shape& s = x.shape();
  std::size_t groups = 0, len = 0, stride = 0, group_stride = 0;
  if (s.size() == 1 && axis == 0) {
    groups = 1; len = s[0]; stride = 1; group_stride = 0;
  } else if (s.size() == 2 && axis == 1) {
    groups = s[0]; len = s[1]; stride = 1; group_stride = s[1];
  } else if (s.size() == 2 && axis == 0) {
    groups = s[1]; len = s[0]; stride = s[1]; group_stride = 1;
  } else {
    throw ShapeError("softmax: unsupported axis " + std::to_string(axis) + " for shape " +
                     shape_str(s));
  }
  const Tensor& xv = x.value();
  Tensor out(s);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t base = gi * group_stride;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, xv[base + i * stride]);
    double z = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(xv[base + i * stride] - mx);
      out[base + i * stride] = e;
      z += e;
    }
    for (std::size_t i = 0; i < len; ++i) out[base + i * stride] /= z;
  }
  Tensor yv = out;
  const std::size_t xid = x.id();
  return x.tape().record(
      std::move(out), {x},
      [xid, yv = std::move(yv), groups, len, stride, group_stride](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_buffer(xid);
        for (std::size_t gi = 0; gi < groups; ++gi) {
          const std::size_t base = gi * group_stride;
          double dot = 0.0;
          for (std::size_t i = 0; i < len; ++i) {
            const std::size_t p = base + i * stride;
            dot += g[p] * yv[p];
          }
          for (std::size_t i = 0; i < len; ++i) {
            const std::size_t p = base + i * stride;
            gx[p] += yv[p] * (g[p] - dot);
          }
        }
      });
}

Var sum(const Var& x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  const std::size_t xid = x.id();
  return x.tape().record(Tensor::scalar(acc), {x}, [xid](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xid);
    const double gs = g[0];
    for (double& v : gx.data()) v += gs;
  });
}

Var mean(const Var& x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const std::size_t xid = x.id();
  return x.tape().record(std::move(out), {x}, [xid](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  for (const Var& p : parts) require_rank("concat", p, 2);
  const std::size_t rows0 = parts[0].shape()[0], cols0 = parts[0].shape()[1];
  std::size_t total = 0;
  for (const Var& p : parts) {
    const bool ok = axis == 0 ? p.shape()[1] == cols0 : p.shape()[0] == rows0;
    if (!ok || axis > 1) {
      throw ShapeError("concat: shape mismatch " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()) + " along axis " + std::to_string(axis));
    }
    total += p.shape()[axis];
  }
  const Shape out_shape = axis == 0 ? Shape{total, cols0} : Shape{rows0, total};
  Tensor out(out_shape);
  std::vector<std::size_t> ids, offsets, widths;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    const std::size_t r = pv.dim(0), c = pv.dim(1);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        if (axis == 0) out.at(off + i, j) = pv.at(i, j);
        else out.at(i, off + j) = pv.at(i, j);
      }
    }
    ids.push_back(p.id());
    offsets.push_back(off);
    widths.push_back(p.shape()[axis]);
    off += p.shape()[axis];
  }
  return parts[0].tape().record(
      std::move(out), parts,
      [ids, offsets, axis, out_shape](Tape& t, const Tensor& g) {
        for (std::size_t q = 0; q < ids.size(); ++q) {
          if (!t.requires_grad(ids[q])) continue;
          Tensor& gp = t.grad_buffer(ids[q]);
          const std::size_t r = gp.dim(0), c = gp.dim(1);
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
              gp.at(i, j) += axis == 0 ? g[(offsets[q] + i) * out_shape[1] + j]
                                       : g[i * out_shape[1] + offsets[q] + j];
            }
          }
        }
      });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
  require_rank("slice_cols", x, 2);
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (begin + count > cols) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of range for " + shape_str(x.shape()));
  }
  const Tensor& xv = x.value();
  Tensor out(Shape{rows, count});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < count; ++j) out.at(i, j) = xv.at(i, begin + j);
  }
  const std::size_t xid = x.id();
  return x.tape().record(std::move(out), {x},
                         [xid, rows, cols, begin, count](Tape& t, const Tensor& g) {
                           Tensor& gx = t.grad_buffer(xid);
                           for (std::size_t i = 0; i < rows; ++i) {
                             for (std::size_t j = 0; j < count; ++j) {
                               gx[i * cols + begin + j] += g[i * count + j];
                             }
                           }
                         });
}

Var gather_rows(const Var& x, const Index& idx) {
  require_rank("gather_rows", x, 2);
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  const Tensor& xv = x.value();
  Tensor out(Shape{idx.size(), cols});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(idx[i]) + " out of range for " +
                       shape_str(x.shape()));
    }
    std::copy_n(&xv[idx[i] * cols], cols, &out[i * cols]);
  }
  const std::size_t xid = x.id();
  return x.tape().record(std::move(out), {x}, [xid, idx, cols](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      double* dst = &gx[idx[i] * cols];
      const double* src = &g[i * cols];
      for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
    }
  });
}

Var scatter_add_rows(const Var& x, const Index& idx, std::size_t num_rows) {
  require_rank("scatter_add_rows", x, 2);
  const std::size_t cols = x.shape()[1];
  if (idx.size() != x.shape()[0]) {
    throw ShapeError("scatter_add_rows: " + std::to_string(idx.size()) +
                     " indices for operand " + shape_str(x.shape()));
  }
  const Tensor& xv = x.value();
  Tensor out(Shape{num_rows, cols});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= num_rows) throw ShapeError("scatter_add_rows: index out of range");
    double* dst = &out[idx[i] * cols];
    const double* src = &xv[i * cols];
    for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
  }
  const std::size_t xid = x.id();
  return x.tape().record(std::move(out), {x}, [xid, idx, cols](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double* src = &g[idx[i] * cols];
      double* dst = &gx[i * cols];
      for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
    }
  });
}

Var segment_softmax(const Var& logits, const Index& segment, std::size_t num_segments) {
  require_rank("segment_softmax", logits, 2);
  const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
  if (segment.size() != rows) {
    throw ShapeError("segment_softmax: " + std::to_string(segment.size()) +
                     " segment ids for operand " + shape_str(logits.shape()));
  }
  const Tensor& xv = logits.value();
  Tensor mx(Shape{num_segments, cols}, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < rows; ++i) {
    if (segment[i] >= num_segments) throw ShapeError("segment_softmax: segment id out of range");
    for (std::size_t c = 0; c < cols; ++c) {
      mx.at(segment[i], c) = std::max(mx.at(segment[i], c), xv.at(i, c));
    }
  }
  Tensor out(Shape{rows, cols});
  Tensor z(Shape{num_segments, cols}, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double e = std::exp(xv.at(i, c) - mx.at(segment[i], c));
      out.at(i, c) = e;
      z.at(segment[i], c) += e;
    }
  }
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t c = 0; c < cols; ++c) out.at(i, c) /= z.at(segment[i], c);
  }
  Tensor yv = out;
  const std::size_t xid = logits.id();
  return logits.tape().record(
      std::move(out), {logits},
      [xid, yv = std::move(yv), segment, num_segments, rows, cols](Tape& t, const Tensor& g) {
        Tensor dot(Shape{num_segments, cols}, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t c = 0; c < cols; ++c) {
            dot.at(segment[i], c) += g[i * cols + c] * yv.at(i, c);
          }
        }
        Tensor& gx = t.grad_buffer(xid);
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t c = 0; c < cols; ++c) {
            gx.at(i, c) += yv.at(i, c) * (g[i * cols + c] - dot.at(segment[i], c));
          }
        }
      });
}

Var tile_cols(const Var& x, std::size_t times) {
  require_rank("tile_cols", x, 2);
  const std::size_t rows = x.shape()[0], d = x.shape()[1];
  const Tensor& xv = x.value();
  Tensor out(Shape{rows, times * d});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t k = 0; k < times; ++k) {
      std::copy_n(&xv[i * d], d, &out[i * times * d + k * d]);
    }
  }
  const std::size_t xid = x.id();
  return x.tape().record(std::move(out), {x}, [xid, rows, d, times](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t k = 0; k < times; ++k) {
        for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[i * times * d + k * d + j];
      }
    }
  });
}

Var repeat_elements(const Var& x, std::size_t width) {
  require_rank("repeat_elements", x, 2);
  const std::size_t rows = x.shape()[0], k = x.shape()[1];
  const Tensor& xv = x.value();
  Tensor out(Shape{rows, k * width});
  for (std::size_t i = 0; i < rows * k; ++i) {
    std::fill_n(&out[i * width], width, xv[i]);
  }
  const std::size_t xid = x.id();
  return x.tape().record(std::move(out), {x}, [xid, rows, k, width](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < rows * k; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < width; ++j) acc += g[i * width + j];
      gx[i] += acc;
    }
  });
}

Var block_sum(const Var& x, std::size_t width) {
  require_rank("block_sum", x, 2);
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (width == 0 || cols % width != 0) {
    throw ShapeError("block_sum: width " + std::to_string(width) + " does not divide " +
                     shape_str(x.shape()));
  }
  const std::size_t k = cols / width;
  const Tensor& xv = x.value();
  Tensor out(Shape{rows, k});
  for (std::size_t i = 0; i < rows * k; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < width; ++j) acc += xv[i * width + j];
    out[i] = acc;
  }
  const std::size_t xid = x.id();
  return x.tape().record(std::move(out), {x}, [xid, rows, k, width](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < rows * k; ++i) {
      for (std::size_t j = 0; j < width; ++j) gx[i * width + j] += g[i];
    }
  });
}

namespace {

void corr_kernel(const double* a, const double* b, double* out, std::size_t d) {
  for (std::size_t k = 0; k < d; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const std::size_t j = k + i < d ? k + i : k + i - d;
      acc += a[i] * b[j];
    }
    out[k] = acc;
  }
}

// ga_i += sum_k g_k b_{(k+i) mod d};  gb_j += sum_k g_k a_{(j-k) mod d}
void corr_backward(const double* a, const double* b, const double* g, double* ga, double* gb,
                   std::size_t d) {
  for (std::size_t k = 0; k < d; ++k) {
    const double gk = g[k];
    if (gk == 0.0) continue;
    for (std::size_t i = 0; i < d; ++i) {
      const std::size_t j = k + i < d ? k + i : k + i - d;
      if (ga) ga[i] += gk * b[j];
      if (gb) gb[j] += gk * a[i];
    }
  }
}

}  // namespace

Tensor circular_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("circular_correlation: length mismatch " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  }
  Tensor out(Shape{a.size()});
  corr_kernel(a.data(), b.data(), out.data().data(), a.size());
  return out;
}

Var circular_correlation(const Var& a, const Var& b) {
  require_rank("circular_correlation", a, 1);
  require_same_shape("circular_correlation", a, b);
  return reshape(block_circular_correlation(reshape(a, {1, a.shape()[0]}),
                                            reshape(b, {1, b.shape()[0]}), a.shape()[0]),
                 {a.shape()[0]});
}

Var block_circular_correlation(const Var& a, const Var& b, std::size_t width) {
  require_rank("block_circular_correlation", a, 2);
  require_same_shape("block_circular_correlation", a, b);
  if (width == 0 || a.shape()[1] % width != 0) {
    throw ShapeError("block_circular_correlation: width " + std::to_string(width) +
                     " does not divide " + shape_str(a.shape()));
  }
  const std::size_t blocks = a.value().size() / width;
  Tensor out(a.shape());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t q = 0; q < blocks; ++q) {
    corr_kernel(&av[q * width], &bv[q * width], &out[q * width], width);
  }
  const std::size_t aid = a.id(), bid = b.id();
  return a.tape().record(std::move(out), {a, b}, [aid, bid, blocks, width](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(aid);
    const Tensor& bv = t.value(bid);
    double* ga = t.requires_grad(aid) ? t.grad_buffer(aid).data().data() : nullptr;
    double* gb = t.requires_grad(bid) ? t.grad_buffer(bid).data().data() : nullptr;
    for (std::size_t q = 0; q < blocks; ++q) {
      const std::size_t o = q * width;
      corr_backward(&av[o], &bv[o], &g[o], ga ? ga + o : nullptr, gb ? gb + o : nullptr, width);
    }
  });
}

namespace {

struct BlockScoreDims {
  std::size_t batch, count, blocks, width;
};

BlockScoreDims block_score_dims(std::string_view op, const Var& q, const Var& c,
                                std::size_t blocks) {
  require_rank(op, q, 2);
  require_rank(op, c, 2);
  if (q.shape()[1] != c.shape()[1] || blocks == 0 || q.shape()[1] % blocks != 0) {
    throw ShapeError(std::string(op) + ": queries " + shape_str(q.shape()) + " vs candidates " +
                     shape_str(c.shape()) + " with " + std::to_string(blocks) + " blocks");
  }
  return {q.shape()[0], c.shape()[0], blocks, q.shape()[1] / blocks};
}

}  // namespace

Var block_dot_scores(const Var& queries, const Var& candidates, std::size_t blocks) {
  const auto dims = block_score_dims("block_dot_scores", queries, candidates, blocks);
  const auto [bsz, n, kb, w] = dims;
  const std::size_t row = kb * w;
  const Tensor& qv = queries.value();
  const Tensor& cv = candidates.value();
  Tensor out(Shape{bsz, kb * n});
  for (std::size_t b = 0; b < bsz; ++b) {
    for (std::size_t k = 0; k < kb; ++k) {
      const double* qp = &qv[b * row + k * w];
      double* op = &out[(b * kb + k) * n];
      for (std::size_t c = 0; c < n; ++c) {
        const double* cp = &cv[c * row + k * w];
        double acc = 0.0;
        for (std::size_t j = 0; j < w; ++j) acc += qp[j] * cp[j];
        op[c] = acc;
      }
    }
  }
  const std::size_t qid = queries.id(), cid = candidates.id();
  return queries.tape().record(std::move(out), {queries, candidates},
                               [qid, cid, dims](Tape& t, const Tensor& g) {
    const auto [bsz, n, kb, w] = dims;
    const std::size_t row = kb * w;
    const Tensor& qv = t.value(qid);
    const Tensor& cv = t.value(cid);
    double* gq = t.requires_grad(qid) ? t.grad_buffer(qid).data().data() : nullptr;
    double* gc = t.requires_grad(cid) ? t.grad_buffer(cid).data().data() : nullptr;
    for (std::size_t b = 0; b < bsz; ++b) {
      for (std::size_t k = 0; k < kb; ++k) {
        const double* gp = &g[(b * kb + k) * n];
        const double* qp = &qv[b * row + k * w];
        for (std::size_t c = 0; c < n; ++c) {
          const double gs = gp[c];
          if (gs == 0.0) continue;
          const double* cp = &cv[c * row + k * w];
          if (gq) {
            double* dq = gq + b * row + k * w;
            for (std::size_t j = 0; j < w; ++j) dq[j] += gs * cp[j];
          }
          if (gc) {
            double* dc = gc + c * row + k * w;
            for (std::size_t j = 0; j < w; ++j) dc[j] += gs * qp[j];
          }
        }
      }
    }
  });
}

Var block_neg_l1_scores(const Var& queries, const Var& candidates, std::size_t blocks) {
  const auto dims = block_score_dims("block_neg_l1_scores", queries, candidates, blocks);
  const auto [bsz, n, kb, w] = dims;
  const std::size_t row = kb * w;
  const Tensor& qv = queries.value();
  const Tensor& cv = candidates.value();
  Tensor out(Shape{bsz, kb * n});
  for (std::size_t b = 0; b < bsz; ++b) {
    for (std::size_t k = 0; k < kb; ++k) {
      const double* qp = &qv[b * row + k * w];
      double* op = &out[(b * kb + k) * n];
      for (std::size_t c = 0; c < n; ++c) {
        const double* cp = &cv[c * row + k * w];
        double acc = 0.0;
        for (std::size_t j = 0; j < w; ++j) acc += std::abs(qp[j] - cp[j]);
        op[c] = -acc;
      }
    }
  }
  const std::size_t qid = queries.id(), cid = candidates.id();
  return queries.tape().record(std::move(out), {queries, candidates},
                               [qid, cid, dims](Tape& t, const Tensor& g) {
    const auto [bsz, n, kb, w] = dims;
    const std::size_t row = kb * w;
    const Tensor& qv = t.value(qid);
    const Tensor& cv = t.value(cid);
    double* gq = t.requires_grad(qid) ? t.grad_buffer(qid).data().data() : nullptr;
    double* gc = t.requires_grad(cid) ? t.grad_buffer(cid).data().data() : nullptr;
    for (std::size_t b = 0; b < bsz; ++b) {
      for (std::size_t k = 0; k < kb; ++k) {
        const double* gp = &g[(b * kb + k) * n];
        const double* qp = &qv[b * row + k * w];
        for (std::size_t c = 0; c < n; ++c) {
          const double gs = gp[c];
          if (gs == 0.0) continue;
          const double* cp = &cv[c * row + k * w];
          for (std::size_t j = 0; j < w; ++j) {
            const double diff = qp[j] - cp[j];
            const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            if (gq) gq[b * row + k * w + j] -= gs * sgn;
            if (gc) gc[c * row + k * w + j] += gs * sgn;
          }
        }
      }
    }
  });
}

Var block_weighted_sum(const Var& weights, const Var& scores) {
  require_rank("block_weighted_sum", weights, 2);
  require_rank("block_weighted_sum", scores, 2);
  const std::size_t bsz = weights.shape()[0], kb = weights.shape()[1];
  if (scores.shape()[0] != bsz || kb == 0 || scores.shape()[1] % kb != 0) {
    throw ShapeError("block_weighted_sum: weights " + shape_str(weights.shape()) +
                     " vs scores " + shape_str(scores.shape()));
  }
  const std::size_t n = scores.shape()[1] / kb;
  const Tensor& wv = weights.value();
  const Tensor& sv = scores.value();
  Tensor out(Shape{bsz, n});
  for (std::size_t b = 0; b < bsz; ++b) {
    for (std::size_t k = 0; k < kb; ++k) {
      const double wk = wv[b * kb + k];
      const double* sp = &sv[(b * kb + k) * n];
      double* op = &out[b * n];
      for (std::size_t c = 0; c < n; ++c) op[c] += wk * sp[c];
    }
  }
  const std::size_t wid = weights.id(), sid = scores.id();
  return weights.tape().record(std::move(out), {weights, scores},
                               [wid, sid, bsz, kb, n](Tape& t, const Tensor& g) {
    const Tensor& wv = t.value(wid);
    const Tensor& sv = t.value(sid);
    const bool need_w = t.requires_grad(wid), need_s = t.requires_grad(sid);
    for (std::size_t b = 0; b < bsz; ++b) {
      const double* gp = &g[b * n];
      for (std::size_t k = 0; k < kb; ++k) {
        const double* sp = &sv[(b * kb + k) * n];
        if (need_w) {
          double acc = 0.0;
          for (std::size_t c = 0; c < n; ++c) acc += gp[c] * sp[c];
          t.grad_buffer(wid)[b * kb + k] += acc;
        }
        if (need_s) {
          const double wk = wv[b * kb + k];
          double* gs = &t.grad_buffer(sid)[(b * kb + k) * n];
          for (std::size_t c = 0; c < n; ++c) gs[c] += wk * gp[c];
        }
      }
    }
  });
}

Var conv2d(const Var& input, const Var& kernel) {
  require_rank("conv2d", input, 3);
  require_rank("conv2d", kernel, 3);
  const std::size_t m = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  const std::size_t f = kernel.shape()[0], kh = kernel.shape()[1], kw = kernel.shape()[2];
  if (kh > h || kw > w || kh == 0 || kw == 0) {
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than input " +
                     shape_str(input.shape()));
  }
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  const Tensor& iv = input.value();
  const Tensor& kv = kernel.value();
  Tensor out(Shape{m, f, oh, ow});
  for (std::size_t s = 0; s < m; ++s) {
    const double* img = &iv[s * h * w];
    for (std::size_t q = 0; q < f; ++q) {
      const double* ker = &kv[q * kh * kw];
      double* o = &out[(s * f + q) * oh * ow];
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          double acc = 0.0;
          for (std::size_t i = 0; i < kh; ++i) {
            for (std::size_t j = 0; j < kw; ++j) acc += img[(y + i) * w + x + j] * ker[i * kw + j];
          }
          o[y * ow + x] = acc;
        }
      }
    }
  }
  const std::size_t iid = input.id(), kid = kernel.id();
  return input.tape().record(
      std::move(out), {input, kernel},
      [iid, kid, m, h, w, f, kh, kw, oh, ow](Tape& t, const Tensor& g) {
        const Tensor& iv = t.value(iid);
        const Tensor& kv = t.value(kid);
        double* gi = t.requires_grad(iid) ? t.grad_buffer(iid).data().data() : nullptr;
        double* gk = t.requires_grad(kid) ? t.grad_buffer(kid).data().data() : nullptr;
        for (std::size_t s = 0; s < m; ++s) {
          const double* img = &iv[s * h * w];
          for (std::size_t q = 0; q < f; ++q) {
            const double* ker = &kv[q * kh * kw];
            const double* go = &g[(s * f + q) * oh * ow];
            for (std::size_t y = 0; y < oh; ++y) {
              for (std::size_t x = 0; x < ow; ++x) {
                const double gs = go[y * ow + x];
                if (gs == 0.0) continue;
                for (std::size_t i = 0; i < kh; ++i) {
                  for (std::size_t j = 0; j < kw; ++j) {
                    if (gi) gi[s * h * w + (y + i) * w + x + j] += gs * ker[i * kw + j];
                    if (gk) gk[q * kh * kw + i * kw + j] += gs * img[(y + i) * w + x + j];
                  }
                }
              }
            }
          }
        }
      });
}

Var bce_with_logits(const Var& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape()) {
    throw ShapeError("bce_with_logits: logits " + shape_str(logits.shape()) + " vs targets " +
                     shape_str(targets.shape()));
  }
  const Tensor& xv = logits.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double x = xv[i];
    acc += std::max(x, 0.0) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  const std::size_t xid = logits.id();
  return logits.tape().record(Tensor::scalar(acc), {logits},
                              [xid, targets](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(xid);
    Tensor& gx = t.grad_buffer(xid);
    const double gs = g[0];
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double x = xv[i];
      const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      gx[i] += gs * (s - targets[i]);
    }
  });
}

Var pairwise_sq_dist(const Var& x) {
  require_rank("pairwise_sq_dist", x, 2);
  const std::size_t b = x.shape()[0], d = x.shape()[1];
  const Tensor& xv = x.value();
  Tensor out(Shape{b, b});
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = i + 1; j < b; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = xv[i * d + t] - xv[j * d + t];
        acc += diff * diff;
      }
      out.at(i, j) = acc;
      out.at(j, i) = acc;
    }
  }
  const std::size_t xid = x.id();
  return x.tape().record(std::move(out), {x}, [xid, b, d](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(xid);
    Tensor& gx = t.grad_buffer(xid);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < b; ++j) {
        if (i == j) continue;
        const double c = 2.0 * (g.at(i, j) + g.at(j, i));
        for (std::size_t q = 0; q < d; ++q) gx[i * d + q] += c * (xv[i * d + q] - xv[j * d + q]);
      }
    }
  });
}

namespace {

Tensor center_kernel(const Tensor& k) {
  const std::size_t b = k.dim(0);
  std::vector<double> row_mean(b, 0.0), col_mean(b, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      row_mean[i] += k.at(i, j);
      col_mean[j] += k.at(i, j);
      total += k.at(i, j);
    }
  }
  const double inv = 1.0 / static_cast<double>(b);
  Tensor out(k.shape());
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      out.at(i, j) = k.at(i, j) - row_mean[i] * inv - col_mean[j] * inv + total * inv * inv;
    }
  }
  return out;
}

}  // namespace

Var double_center(const Var& k) {
  require_rank("double_center", k, 2);
  if (k.shape()[0] != k.shape()[1]) {
    throw ShapeError("double_center: expected a square matrix, got " + shape_str(k.shape()));
  }
  const std::size_t kid = k.id();
  // Centering is linear and self-adjoint, so the adjoint of the gradient is H G H.
  return k.tape().record(center_kernel(k.value()), {k}, [kid](Tape& t, const Tensor& g) {
    const Tensor cg = center_kernel(g);
    Tensor& gk = t.grad_buffer(kid);
    for (std::size_t i = 0; i < cg.size(); ++i) gk[i] += cg[i];
  });
}

}  // namespace disenkgat
