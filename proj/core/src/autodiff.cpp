#include "maes/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace maes {

namespace {

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

// Lazy so the diagnostic string is only built on failure; ops sit on hot
// rollout paths.
#define MAES_REQUIRE(cond, op, detail_expr)        \
  do {                                             \
    if (!(cond)) shape_error(op, (detail_expr));   \
  } while (0)

Tensor zeros_like(const Tensor& t) {
  return t.rank() == 2 ? Tensor::zeros(t.rows(), t.cols()) : Tensor::zeros(t.size());
}

Tensor& ensure_grad(Node& n) {
  if (n.grad.empty()) n.grad = zeros_like(n.value);
  return n.grad;
}

// Adds into an input's gradient only when that input participates in the
// differentiable subgraph.
bool wants_grad(const NodePtr& n) { return n->needs_grad; }

std::size_t positive_mod(long long i, std::size_t n) {
  const long long m = static_cast<long long>(n);
  long long r = i % m;
  if (r < 0) r += m;
  return static_cast<std::size_t>(r);
}

}  // namespace

double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

double softplus_scalar(double x) {
  // log(1 + e^x) without overflow at either tail
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

Var Tape::emit(const char* op, Tensor value, std::vector<NodePtr> inputs,
               std::function<void(Node&)> backprop) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->value = std::move(value);
  if (recording_) {
    for (const NodePtr& in : inputs) {
      if (in->needs_grad) {
        node->needs_grad = true;
        break;
      }
    }
    node->inputs = std::move(inputs);
    if (node->needs_grad) node->backprop = std::move(backprop);
    order_.push_back(node);
  }
  return Var(node);
}

Var Tape::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->op = "constant";
  node->value = std::move(value);
  if (recording_) order_.push_back(node);
  return Var(node);
}

Var Tape::param(ParameterStore& store, std::string_view name) {
  const int idx = store.index_of(name);
  auto node = std::make_shared<Node>();
  node->op = "param";
  node->value = store.entry(idx).value;
  node->needs_grad = true;
  node->store = &store;
  node->param_index = idx;
  if (recording_) order_.push_back(node);
  return Var(node);
}

void Tape::backward(const Var& loss, ParameterStore& store) {
  if (!recording_) throw std::logic_error("Tape::backward: tape is not recording");
  if (!loss.valid() || !loss.value().is_scalar()) {
    throw std::invalid_argument("Tape::backward: loss must be a scalar produced on this tape");
  }

  store.zero_grads();
  for (const NodePtr& n : order_) n->grad = Tensor();

  ensure_grad(*loss.node())[0] = 1.0;

  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node& n = **it;
    if (n.backprop && n.needs_grad && !n.grad.empty()) n.backprop(n);
  }

  for (const NodePtr& n : order_) {
    if (n->param_index < 0 || n->grad.empty()) continue;
    if (n->store != &store) {
      throw std::logic_error("Tape::backward: parameter leaf belongs to a different store");
    }
    Tensor& g = store.entry(n->param_index).grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n->grad[i];
  }
}

// ---------------------------------------------------------------------------

Var add(Tape& tp, const Var& a, const Var& b) {
  MAES_REQUIRE(a.value().same_shape(b.value()), "add",
          "shape mismatch " + a.value().shape_str() + " vs " + b.value().shape_str());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return tp.emit("add", std::move(out), {a.node(), b.node()}, [](Node& n) {
    for (int k = 0; k < 2; ++k) {
      if (!wants_grad(n.inputs[k])) continue;
      Tensor& g = ensure_grad(*n.inputs[k]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

Var mul(Tape& tp, const Var& a, const Var& b) {
  MAES_REQUIRE(a.value().same_shape(b.value()), "mul",
          "shape mismatch " + a.value().shape_str() + " vs " + b.value().shape_str());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return tp.emit("mul", std::move(out), {a.node(), b.node()}, [](Node& n) {
    const Tensor& av = n.inputs[0]->value;
    const Tensor& bv = n.inputs[1]->value;
    if (wants_grad(n.inputs[0])) {
      Tensor& g = ensure_grad(*n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * bv[i];
    }
    if (wants_grad(n.inputs[1])) {
      Tensor& g = ensure_grad(*n.inputs[1]);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * av[i];
    }
  });
}

Var scale_shift(Tape& tp, const Var& x, double alpha, double beta) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * out[i] + beta;
  return tp.emit("scale_shift", std::move(out), {x.node()}, [alpha](Node& n) {
    if (!wants_grad(n.inputs[0])) return;
    Tensor& g = ensure_grad(*n.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += alpha * n.grad[i];
  });
}

Var sum(Tape& tp, const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return tp.emit("sum", Tensor::scalar(s), {x.node()}, [](Node& n) {
    if (!wants_grad(n.inputs[0])) return;
    Tensor& g = ensure_grad(*n.inputs[0]);
    const double gy = n.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy;
  });
}

Var mean_of(Tape& tp, std::span<const Var> xs) {
  MAES_REQUIRE(!xs.empty(), "mean_of", "no inputs");
  std::vector<NodePtr> ins;
  ins.reserve(xs.size());
  double s = 0.0;
  for (const Var& v : xs) {
    MAES_REQUIRE(v.value().is_scalar(), "mean_of", "input not scalar: " + v.value().shape_str());
    s += v.value()[0];
    ins.push_back(v.node());
  }
  const double inv = 1.0 / static_cast<double>(xs.size());
  return tp.emit("mean_of", Tensor::scalar(s * inv), std::move(ins), [inv](Node& n) {
    const double gy = n.grad[0] * inv;
    for (const NodePtr& in : n.inputs) {
      if (wants_grad(in)) ensure_grad(*in)[0] += gy;
    }
  });
}

Var matvec(Tape& tp, const Var& w, const Var& x) {
  const Tensor& W = w.value();
  const Tensor& X = x.value();
  MAES_REQUIRE(W.rank() == 2 && X.rank() == 1 && W.cols() == X.size(), "matvec",
          "shapes " + W.shape_str() + " * " + X.shape_str());
  const std::size_t m = W.rows(), nn = W.cols();
  Tensor out = Tensor::zeros(m);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* row = &W.data()[i * nn];
    for (std::size_t j = 0; j < nn; ++j) acc += row[j] * X[j];
    out[i] = acc;
  }
  return tp.emit("matvec", std::move(out), {w.node(), x.node()}, [m, nn](Node& n) {
    const Tensor& W = n.inputs[0]->value;
    const Tensor& X = n.inputs[1]->value;
    if (wants_grad(n.inputs[0])) {
      Tensor& gW = ensure_grad(*n.inputs[0]);
      for (std::size_t i = 0; i < m; ++i) {
        const double gy = n.grad[i];
        double* row = &gW.data()[i * nn];
        for (std::size_t j = 0; j < nn; ++j) row[j] += gy * X[j];
      }
    }
    if (wants_grad(n.inputs[1])) {
      Tensor& gX = ensure_grad(*n.inputs[1]);
      for (std::size_t i = 0; i < m; ++i) {
        const double gy = n.grad[i];
        const double* row = &W.data()[i * nn];
        for (std::size_t j = 0; j < nn; ++j) gX[j] += gy * row[j];
      }
    }
  });
}

Var vecmat(Tape& tp, const Var& x, const Var& m) {
  const Tensor& X = x.value();
  const Tensor& M = m.value();
  MAES_REQUIRE(X.rank() == 1 && M.rank() == 2 && M.rows() == X.size(), "vecmat",
          "shapes " + X.shape_str() + " * " + M.shape_str());
  const std::size_t rows = M.rows(), cols = M.cols();
  Tensor out = Tensor::zeros(cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const double wi = X[i];
    if (wi == 0.0) continue;
    const double* row = &M.data()[i * cols];
    for (std::size_t j = 0; j < cols; ++j) out[j] += wi * row[j];
  }
  return tp.emit("vecmat", std::move(out), {x.node(), m.node()}, [rows, cols](Node& n) {
    const Tensor& X = n.inputs[0]->value;
    const Tensor& M = n.inputs[1]->value;
    if (wants_grad(n.inputs[0])) {
      Tensor& gX = ensure_grad(*n.inputs[0]);
      for (std::size_t i = 0; i < rows; ++i) {
        double acc = 0.0;
        const double* row = &M.data()[i * cols];
        for (std::size_t j = 0; j < cols; ++j) acc += n.grad[j] * row[j];
        gX[i] += acc;
      }
    }
    if (wants_grad(n.inputs[1])) {
      Tensor& gM = ensure_grad(*n.inputs[1]);
      for (std::size_t i = 0; i < rows; ++i) {
        const double wi = X[i];
        if (wi == 0.0) continue;
        double* row = &gM.data()[i * cols];
        for (std::size_t j = 0; j < cols; ++j) row[j] += wi * n.grad[j];
      }
    }
  });
}

Var outer(Tape& tp, const Var& u, const Var& v) {
  const Tensor& U = u.value();
  const Tensor& V = v.value();
  MAES_REQUIRE(U.rank() == 1 && V.rank() == 1, "outer",
          "shapes " + U.shape_str() + ", " + V.shape_str());
  const std::size_t m = U.size(), nn = V.size();
  Tensor out = Tensor::zeros(m, nn);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < nn; ++j) out.at(i, j) = U[i] * V[j];
  }
  return tp.emit("outer", std::move(out), {u.node(), v.node()}, [m, nn](Node& n) {
    const Tensor& U = n.inputs[0]->value;
    const Tensor& V = n.inputs[1]->value;
    if (wants_grad(n.inputs[0])) {
      Tensor& gU = ensure_grad(*n.inputs[0]);
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < nn; ++j) acc += n.grad.at(i, j) * V[j];
        gU[i] += acc;
      }
    }
    if (wants_grad(n.inputs[1])) {
      Tensor& gV = ensure_grad(*n.inputs[1]);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < nn; ++j) gV[j] += n.grad.at(i, j) * U[i];
      }
    }
  });
}

Var concat(Tape& tp, std::span<const Var> parts) {
  MAES_REQUIRE(!parts.empty(), "concat", "no inputs");
  std::size_t total = 0;
  std::vector<NodePtr> ins;
  ins.reserve(parts.size());
  for (const Var& p : parts) {
    MAES_REQUIRE(p.value().rank() == 1, "concat", "input not a vector: " + p.value().shape_str());
    total += p.value().size();
    ins.push_back(p.node());
  }
  Tensor out = Tensor::zeros(total);
  std::size_t pos = 0;
  for (const Var& p : parts) {
    for (double v : p.value().data()) out[pos++] = v;
  }
  return tp.emit("concat", std::move(out), std::move(ins), [](Node& n) {
    std::size_t pos = 0;
    for (const NodePtr& in : n.inputs) {
      const std::size_t len = in->value.size();
      if (wants_grad(in)) {
        Tensor& g = ensure_grad(*in);
        for (std::size_t i = 0; i < len; ++i) g[i] += n.grad[pos + i];
      }
      pos += len;
    }
  });
}

Var slice(Tape& tp, const Var& x, std::size_t begin, std::size_t len) {
  const Tensor& X = x.value();
  MAES_REQUIRE(X.rank() == 1 && begin + len <= X.size(), "slice",
          "range [" + std::to_string(begin) + ", " + std::to_string(begin + len) +
              ") out of " + X.shape_str());
  Tensor out = Tensor::zeros(len);
  for (std::size_t i = 0; i < len; ++i) out[i] = X[begin + i];
  return tp.emit("slice", std::move(out), {x.node()}, [begin, len](Node& n) {
    if (!wants_grad(n.inputs[0])) return;
    Tensor& g = ensure_grad(*n.inputs[0]);
    for (std::size_t i = 0; i < len; ++i) g[begin + i] += n.grad[i];
  });
}

Var sigmoid(Tape& tp, const Var& x) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(out[i]);
  Tensor y = out;  // retained by the closure
  return tp.emit("sigmoid", std::move(out), {x.node()}, [y = std::move(y)](Node& n) {
    if (!wants_grad(n.inputs[0])) return;
    Tensor& g = ensure_grad(*n.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * y[i] * (1.0 - y[i]);
  });
}

Var tanh_op(Tape& tp, const Var& x) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  Tensor y = out;
  return tp.emit("tanh", std::move(out), {x.node()}, [y = std::move(y)](Node& n) {
    if (!wants_grad(n.inputs[0])) return;
    Tensor& g = ensure_grad(*n.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * (1.0 - y[i] * y[i]);
  });
}

Var softplus(Tape& tp, const Var& x) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = softplus_scalar(out[i]);
  return tp.emit("softplus", std::move(out), {x.node()}, [](Node& n) {
    if (!wants_grad(n.inputs[0])) return;
    const Tensor& X = n.inputs[0]->value;
    Tensor& g = ensure_grad(*n.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * sigmoid_scalar(X[i]);
  });
}

Var relu(Tape& tp, const Var& x) {
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return tp.emit("relu", std::move(out), {x.node()}, [](Node& n) {
    if (!wants_grad(n.inputs[0])) return;
    const Tensor& X = n.inputs[0]->value;
    Tensor& g = ensure_grad(*n.inputs[0]);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (X[i] > 0.0) g[i] += n.grad[i];
    }
  });
}

Var softmax(Tape& tp, const Var& x) {
  const Tensor& X = x.value();
  MAES_REQUIRE(X.rank() == 1, "softmax", "input not a vector: " + X.shape_str());
  double mx = X[0];
  for (double v : X.data()) mx = std::max(mx, v);
  Tensor out = Tensor::zeros(X.size());
  double z = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    out[i] = std::exp(X[i] - mx);
    z += out[i];
  }
  for (std::size_t i = 0; i < X.size(); ++i) out[i] /= z;
  Tensor y = out;
  return tp.emit("softmax", std::move(out), {x.node()}, [y = std::move(y)](Node& n) {
    if (!wants_grad(n.inputs[0])) return;
    Tensor& g = ensure_grad(*n.inputs[0]);
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += n.grad[i] * y[i];
    for (std::size_t i = 0; i < y.size(); ++i) g[i] += y[i] * (n.grad[i] - dot);
  });
}

Var circular_conv(Tape& tp, const Var& w, const Var& s, std::span<const int> offsets) {
  const Tensor& W = w.value();
  const Tensor& S = s.value();
  MAES_REQUIRE(W.rank() == 1 && S.rank() == 1 && S.size() == offsets.size(), "circular_conv",
          "attention " + W.shape_str() + ", kernel " + S.shape_str() + ", " +
              std::to_string(offsets.size()) + " offsets");
  const std::size_t n = W.size();
  std::vector<int> offs(offsets.begin(), offsets.end());
  Tensor out = Tensor::zeros(n);
  for (std::size_t k = 0; k < offs.size(); ++k) {
    const double sk = S[k];
    if (sk == 0.0) continue;
    // out[i] += sk * w[(i - o) mod n], written as two contiguous runs so the
    // inner loops carry no per-element modulo
    const std::size_t shift = positive_mod(offs[k], n);
    for (std::size_t i = shift; i < n; ++i) out[i] += sk * W[i - shift];
    for (std::size_t i = 0; i < shift; ++i) out[i] += sk * W[n - shift + i];
  }
  return tp.emit("circular_conv", std::move(out), {w.node(), s.node()},
                 [offs = std::move(offs), n](Node& nd) {
                   const Tensor& W = nd.inputs[0]->value;
                   const Tensor& S = nd.inputs[1]->value;
                   if (wants_grad(nd.inputs[0])) {
                     Tensor& gW = ensure_grad(*nd.inputs[0]);
                     for (std::size_t k = 0; k < offs.size(); ++k) {
                       const double sk = S[k];
                       if (sk == 0.0) continue;
                       for (std::size_t i = 0; i < n; ++i) {
                         gW[positive_mod(static_cast<long long>(i) - offs[k], n)] +=
                             sk * nd.grad[i];
                       }
                     }
                   }
                   if (wants_grad(nd.inputs[1])) {
                     Tensor& gS = ensure_grad(*nd.inputs[1]);
                     for (std::size_t k = 0; k < offs.size(); ++k) {
                       double acc = 0.0;
                       for (std::size_t i = 0; i < n; ++i) {
                         acc += nd.grad[i] *
                                W[positive_mod(static_cast<long long>(i) - offs[k], n)];
                       }
                       gS[k] += acc;
                     }
                   }
                 });
}

Var pow_eps(Tape& tp, const Var& x, const Var& gamma, double eps) {
  const Tensor& X = x.value();
  MAES_REQUIRE(gamma.value().is_scalar(), "pow_eps",
          "exponent not scalar: " + gamma.value().shape_str());
  const double g = gamma.value()[0];
  // Off-peak attention mass decays super-exponentially under sharpening and
  // can never grow back through convolution, so components this far below
  // the peak are dead weight: flushing them to exact zero lets the read,
  // write and shift kernels skip dead addresses on long rollouts. The floor
  // sits ~11 orders of magnitude below the tightest simplex tolerance.
  constexpr double kFlushFloor = 1e-20;
  const double at_zero_raw = std::pow(eps, g);
  const double at_zero = at_zero_raw < kFlushFloor ? 0.0 : at_zero_raw;
  Tensor out = Tensor::zeros(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double v = X[i] == 0.0 ? at_zero : std::pow(X[i] + eps, g);
    out[i] = v < kFlushFloor ? 0.0 : v;
  }
  Tensor y = out;
  return tp.emit("pow_eps", std::move(out), {x.node(), gamma.node()},
                 [eps, g, y = std::move(y)](Node& n) {
                   const Tensor& X = n.inputs[0]->value;
                   if (wants_grad(n.inputs[0])) {
                     Tensor& gx = ensure_grad(*n.inputs[0]);
                     const double deriv_at_zero = g * std::pow(eps, g - 1.0);
                     for (std::size_t i = 0; i < gx.size(); ++i) {
                       gx[i] += n.grad[i] * (X[i] == 0.0
                                                 ? deriv_at_zero
                                                 : g * std::pow(X[i] + eps, g - 1.0));
                     }
                   }
                   if (wants_grad(n.inputs[1])) {
                     Tensor& gg = ensure_grad(*n.inputs[1]);
                     const double log_at_zero = std::log(eps);
                     double acc = 0.0;
                     for (std::size_t i = 0; i < X.size(); ++i) {
                       acc += n.grad[i] * y[i] * (X[i] == 0.0 ? log_at_zero : std::log(X[i] + eps));
                     }
                     gg[0] += acc;
                   }
                 });
}

Var normalize_sum(Tape& tp, const Var& x) {
  const Tensor& X = x.value();
  double s = 0.0;
  for (double v : X.data()) s += v;
  MAES_REQUIRE(s > 0.0, "normalize_sum", "non-positive mass " + std::to_string(s));
  Tensor out = Tensor::zeros(X.size());
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (X[i] != 0.0) out[i] = X[i] / s;
  }
  Tensor y = out;
  return tp.emit("normalize_sum", std::move(out), {x.node()},
                 [s, y = std::move(y)](Node& n) {
                   if (!wants_grad(n.inputs[0])) return;
                   Tensor& g = ensure_grad(*n.inputs[0]);
                   double dot = 0.0;
                   for (std::size_t i = 0; i < y.size(); ++i) dot += n.grad[i] * y[i];
                   for (std::size_t i = 0; i < y.size(); ++i) g[i] += (n.grad[i] - dot) / s;
                 });
}

Var memory_write(Tape& tp, const Var& m, const Var& w, const Var& e, const Var& a) {
  const Tensor& M = m.value();
  const Tensor& W = w.value();
  const Tensor& E = e.value();
  const Tensor& A = a.value();
  MAES_REQUIRE(M.rank() == 2 && W.rank() == 1 && M.rows() == W.size(), "memory_write",
          "memory " + M.shape_str() + " vs attention " + W.shape_str());
  MAES_REQUIRE(E.rank() == 1 && A.rank() == 1 && E.size() == M.cols() && A.size() == M.cols(),
          "memory_write",
          "erase " + E.shape_str() + " / add " + A.shape_str() + " vs memory " + M.shape_str());
  const std::size_t rows = M.rows(), cols = M.cols();
  Tensor out = M;
  for (std::size_t i = 0; i < rows; ++i) {
    const double wi = W[i];
    if (wi == 0.0) continue;
    double* row = &out.data()[i * cols];
    for (std::size_t j = 0; j < cols; ++j) {
      row[j] = row[j] * (1.0 - wi * E[j]) + wi * A[j];
    }
  }
  return tp.emit(
      "memory_write", std::move(out), {m.node(), w.node(), e.node(), a.node()},
      [rows, cols](Node& n) {
        const Tensor& M = n.inputs[0]->value;
        const Tensor& W = n.inputs[1]->value;
        const Tensor& E = n.inputs[2]->value;
        const Tensor& A = n.inputs[3]->value;
        if (wants_grad(n.inputs[0])) {
          Tensor& gM = ensure_grad(*n.inputs[0]);
          for (std::size_t i = 0; i < rows; ++i) {
            const double wi = W[i];
            double* row = &gM.data()[i * cols];
            const double* gy = &n.grad.data()[i * cols];
            for (std::size_t j = 0; j < cols; ++j) row[j] += gy[j] * (1.0 - wi * E[j]);
          }
        }
        if (wants_grad(n.inputs[1])) {
          Tensor& gW = ensure_grad(*n.inputs[1]);
          for (std::size_t i = 0; i < rows; ++i) {
            const double* mrow = &M.data()[i * cols];
            const double* gy = &n.grad.data()[i * cols];
            double acc = 0.0;
            for (std::size_t j = 0; j < cols; ++j) acc += gy[j] * (A[j] - mrow[j] * E[j]);
            gW[i] += acc;
          }
        }
        if (wants_grad(n.inputs[2])) {
          Tensor& gE = ensure_grad(*n.inputs[2]);
          for (std::size_t i = 0; i < rows; ++i) {
            const double wi = W[i];
            if (wi == 0.0) continue;
            const double* mrow = &M.data()[i * cols];
            const double* gy = &n.grad.data()[i * cols];
            for (std::size_t j = 0; j < cols; ++j) gE[j] -= gy[j] * mrow[j] * wi;
          }
        }
        if (wants_grad(n.inputs[3])) {
          Tensor& gA = ensure_grad(*n.inputs[3]);
          for (std::size_t i = 0; i < rows; ++i) {
            const double wi = W[i];
            if (wi == 0.0) continue;
            const double* gy = &n.grad.data()[i * cols];
            for (std::size_t j = 0; j < cols; ++j) gA[j] += gy[j] * wi;
          }
        }
      });
}

Var bce_with_logits(Tape& tp, const Var& logits, const Tensor& targets, const Tensor& mask) {
  const Tensor& Z = logits.value();
  MAES_REQUIRE(Z.same_shape(targets) && Z.same_shape(mask), "bce_with_logits",
          "logits " + Z.shape_str() + ", targets " + targets.shape_str() + ", mask " +
              mask.shape_str());
  double mass = 0.0;
  for (double v : mask.data()) {
    MAES_REQUIRE(v == 0.0 || v == 1.0, "bce_with_logits", "mask values must be 0 or 1");
    mass += v;
  }
  MAES_REQUIRE(mass > 0.0, "bce_with_logits", "all-zero mask (mean undefined)");
  for (double v : targets.data()) {
    MAES_REQUIRE(v == 0.0 || v == 1.0, "bce_with_logits", "target values must be 0 or 1");
  }

  // max(z,0) - z*t + log(1 + exp(-|z|)); stable at both saturation tails
  double acc = 0.0;
  for (std::size_t i = 0; i < Z.size(); ++i) {
    if (mask[i] == 0.0) continue;
    const double z = Z[i];
    acc += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
  }
  const double inv_mass = 1.0 / mass;
  return tp.emit("bce_with_logits", Tensor::scalar(acc * inv_mass), {logits.node()},
                 [targets, mask, inv_mass](Node& n) {
                   if (!wants_grad(n.inputs[0])) return;
                   const Tensor& Z = n.inputs[0]->value;
                   Tensor& g = ensure_grad(*n.inputs[0]);
                   const double gy = n.grad[0] * inv_mass;
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     if (mask[i] == 0.0) continue;
                     g[i] += gy * (sigmoid_scalar(Z[i]) - targets[i]);
                   }
                 });
}

}  // namespace maes
