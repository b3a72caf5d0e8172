#include <algorithm>
#include <memory>

#include "mnm/autodiff.hpp"
#include "mnm/errors.hpp"

namespace mnm {

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(nodes_.size() - 1);
}

Var Tape::input(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, record_backward_});
  return Var(nodes_.size() - 1);
}

Var Tape::param(const Parameter& p) {
  auto it = param_leaves_.find(&p);
  if (it != param_leaves_.end()) return Var(it->second);
  nodes_.push_back(Node{p.value, {}, {}, &p, record_backward_});
  param_leaves_.emplace(&p, nodes_.size() - 1);
  return Var(nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, BackwardFn backward) {
  bool needs = false;
  if (record_backward_) {
    needs = std::any_of(inputs.begin(), inputs.end(),
                        [this](Var v) { return nodes_[v.id()].requires_grad; });
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, nullptr,
                        needs});
  return Var(nodes_.size() - 1);
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (n.grad.empty()) {
    require_same_shape(n.value, g, "accumulate");
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var output) {
  const Matrix& v = value(output);
  if (v.rows() != 1 || v.cols() != 1) {
    throw DimensionError("backward: implicit seed needs a 1x1 output, got " + v.shape_string());
  }
  backward(output, Matrix(1, 1, 1.0));
}

void Tape::backward(Var output, const Matrix& seed) {
  if (!record_backward_) throw Error("backward called on an evaluation-only tape");
  for (Node& n : nodes_) n.grad = Matrix();
  param_grads_.clear();
  accumulate(output, seed);
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.param != nullptr) {
      auto [it, inserted] = param_grads_.try_emplace(n.param, n.grad);
      if (!inserted) it->second += n.grad;
    } else if (n.backward) {
      // The closure may append to other nodes' grads; keep a stable copy.
      const Matrix g = n.grad;
      n.backward(*this, g);
    }
  }
}

const Matrix* Tape::param_grad(const Parameter& p) const {
  auto it = param_grads_.find(&p);
  return it == param_grads_.end() ? nullptr : &it->second;
}

void Tape::flush_param_grad(Parameter& p) const {
  if (const Matrix* g = param_grad(p)) {
    if (p.grad.empty()) p.grad = Matrix(p.value.rows(), p.value.cols());
    p.grad += *g;
  }
}

// ---------------------------------------------------------------------------

Var matmul(Tape& t, Var a, Var b) {
  return t.record(matmul(t.value(a), t.value(b)), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, matmul_grad_lhs(g, tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, matmul_grad_rhs(tp.value(a), g));
  });
}

Var add(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  require_same_shape(av, bv, "add");
  Matrix out = av;
  out += bv;
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var add_row(Tape& t, Var a, Var row) {
  const Matrix& av = t.value(a);
  const Matrix& rv = t.value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw DimensionError("add_row: " + av.shape_string() + " with row " + rv.shape_string());
  }
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += rv[c];
  return t.record(std::move(out), {a, row}, [a, row](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(row)) {
      Matrix gr(1, g.cols());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gr[c] += g(r, c);
      tp.accumulate(row, gr);
    }
  });
}

Var mul_row(Tape& t, Var a, Var row) {
  const Matrix& av = t.value(a);
  const Matrix& rv = t.value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw DimensionError("mul_row: " + av.shape_string() + " with row " + rv.shape_string());
  }
  Matrix out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= rv[c];
  return t.record(std::move(out), {a, row}, [a, row](Tape& tp, const Matrix& g) {
    const Matrix& av2 = tp.value(a);
    const Matrix& rv2 = tp.value(row);
    if (tp.requires_grad(a)) {
      Matrix ga = g;
      for (std::size_t r = 0; r < ga.rows(); ++r)
        for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) *= rv2[c];
      tp.accumulate(a, ga);
    }
    if (tp.requires_grad(row)) {
      Matrix gr(1, g.cols());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gr[c] += g(r, c) * av2(r, c);
      tp.accumulate(row, gr);
    }
  });
}

Var scale(Tape& t, Var a, double s) {
  Matrix out = t.value(a);
  for (double& v : out.values()) v *= s;
  return t.record(std::move(out), {a}, [a, s](Tape& tp, const Matrix& g) {
    Matrix ga = g;
    for (double& v : ga.values()) v *= s;
    tp.accumulate(a, ga);
  });
}

Var mul_const(Tape& t, Var a, const Matrix& c) {
  const Matrix& av = t.value(a);
  require_same_shape(av, c, "mul_const");
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  auto factors = std::make_shared<const Matrix>(c);
  return t.record(std::move(out), {a}, [a, factors](Tape& tp, const Matrix& g) {
    Matrix ga = g;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= (*factors)[i];
    tp.accumulate(a, ga);
  });
}

Var transpose(Tape& t, Var a) {
  return t.record(transpose(t.value(a)), {a},
                  [a](Tape& tp, const Matrix& g) { tp.accumulate(a, transpose(g)); });
}

Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double epsilon) {
  return t.record(layer_norm(t.value(x), t.value(gamma), t.value(beta), epsilon), {x, gamma, beta},
                  [x, gamma, beta, epsilon](Tape& tp, const Matrix& g) {
                    auto grads = layer_norm_backward(tp.value(x), tp.value(gamma), g, epsilon);
                    tp.accumulate(x, grads.dx);
                    tp.accumulate(gamma, grads.dgamma);
                    tp.accumulate(beta, grads.dbeta);
                  });
}

Var activation(Tape& t, Var x, Activation kind) {
  return t.record(activation(t.value(x), kind), {x}, [x, kind](Tape& tp, const Matrix& g) {
    tp.accumulate(x, activation_backward(tp.value(x), g, kind));
  });
}

Var masked_softmax_rows(Tape& t, Var z, const MaskBits& row_mask, const MaskBits& col_mask) {
  Matrix y = masked_softmax_rows(t.value(z), row_mask, col_mask);
  auto saved = std::make_shared<const Matrix>(y);
  return t.record(std::move(y), {z}, [z, saved](Tape& tp, const Matrix& g) {
    tp.accumulate(z, masked_softmax_rows_backward(*saved, g));
  });
}

Var masked_max_pool(Tape& t, Var x, const MaskBits& mask) {
  auto res = masked_max_pool(t.value(x), mask);
  auto argmax = std::make_shared<const std::vector<std::size_t>>(std::move(res.argmax));
  const std::size_t rows = t.value(x).rows();
  return t.record(std::move(res.value), {x}, [x, argmax, rows](Tape& tp, const Matrix& g) {
    tp.accumulate(x, masked_max_pool_backward(*argmax, g, rows));
  });
}

Var maximum(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  require_same_shape(av, bv, "maximum");
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] >= bv[i] ? av[i] : bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    const Matrix& av2 = tp.value(a);
    const Matrix& bv2 = tp.value(b);
    Matrix ga(g.rows(), g.cols());
    Matrix gb(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) (av2[i] >= bv2[i] ? ga : gb)[i] = g[i];
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

Var concat_cols(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = t.value(parts[0]).rows();
  std::size_t cols = 0;
  std::vector<std::size_t> widths;
  for (Var p : parts) {
    const Matrix& v = t.value(p);
    if (v.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + t.value(parts[0]).shape_string() +
                           " vs " + v.shape_string());
    }
    widths.push_back(v.cols());
    cols += v.cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Matrix& v = t.value(p);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + offset);
    offset += v.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [inputs, widths](Tape& tp, const Matrix& g) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (tp.requires_grad(inputs[k])) {
        Matrix gk(g.rows(), widths[k]);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) gk(r, c) = g(r, off + c);
        tp.accumulate(inputs[k], gk);
      }
      off += widths[k];
    }
  });
}

Var slice_cols(Tape& t, Var a, std::size_t begin, std::size_t count) {
  const Matrix& av = t.value(a);
  if (begin + count > av.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + av.shape_string());
  }
  if (begin == 0 && count == av.cols()) return a;
  Matrix out(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, begin + c);
  const std::size_t total = av.cols();
  return t.record(std::move(out), {a}, [a, begin, count, total](Tape& tp, const Matrix& g) {
    Matrix ga(g.rows(), total);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < count; ++c) ga(r, begin + c) = g(r, c);
    tp.accumulate(a, ga);
  });
}

Var stack_rows(Tape& t, std::span<const Var> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no inputs");
  const std::size_t cols = t.value(rows[0]).cols();
  std::vector<std::size_t> heights;
  std::size_t total = 0;
  for (Var r : rows) {
    const Matrix& v = t.value(r);
    if (v.cols() != cols) {
      throw DimensionError("stack_rows: column mismatch " + t.value(rows[0]).shape_string() +
                           " vs " + v.shape_string());
    }
    heights.push_back(v.rows());
    total += v.rows();
  }
  Matrix out(total, cols);
  std::size_t offset = 0;
  for (Var r : rows) {
    const Matrix& v = t.value(r);
    std::copy(v.values().begin(), v.values().end(), out.values().begin() + offset * cols);
    offset += v.rows();
  }
  std::vector<Var> inputs(rows.begin(), rows.end());
  return t.record(std::move(out), rows, [inputs, heights, cols](Tape& tp, const Matrix& g) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (tp.requires_grad(inputs[k])) {
        Matrix gk(heights[k], cols);
        std::copy(g.values().begin() + off * cols, g.values().begin() + (off + heights[k]) * cols,
                  gk.values().begin());
        tp.accumulate(inputs[k], gk);
      }
      off += heights[k];
    }
  });
}

Var repeat_rows(Tape& t, Var row, std::size_t n) {
  const Matrix& rv = t.value(row);
  if (rv.rows() != 1) throw DimensionError("repeat_rows: expected a row, got " + rv.shape_string());
  Matrix out(n, rv.cols());
  for (std::size_t r = 0; r < n; ++r) std::copy(rv.values().begin(), rv.values().end(), out.row(r).begin());
  return t.record(std::move(out), {row}, [row](Tape& tp, const Matrix& g) {
    Matrix gr(1, g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gr[c] += g(r, c);
    tp.accumulate(row, gr);
  });
}

Var reshape(Tape& t, Var a, std::size_t rows, std::size_t cols) {
  const Matrix& av = t.value(a);
  if (rows * cols != av.size()) {
    throw DimensionError("reshape: " + av.shape_string() + " to " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  Matrix out(rows, cols, std::vector<double>(av.values().begin(), av.values().end()));
  const std::size_t r0 = av.rows();
  const std::size_t c0 = av.cols();
  return t.record(std::move(out), {a}, [a, r0, c0](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix(r0, c0, std::vector<double>(g.values().begin(), g.values().end())));
  });
}

Var clamp(Tape& t, Var a, double lo, double hi) {
  Matrix out = t.value(a);
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  return t.record(std::move(out), {a}, [a, lo, hi](Tape& tp, const Matrix& g) {
    const Matrix& av = tp.value(a);
    Matrix ga = g;
    for (std::size_t i = 0; i < ga.size(); ++i)
      if (av[i] < lo || av[i] > hi) ga[i] = 0.0;
    tp.accumulate(a, ga);
  });
}

Var dot_const(Tape& t, Var a, const Matrix& weights) {
  const Matrix& av = t.value(a);
  require_same_shape(av, weights, "dot_const");
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * weights[i];
  auto w = std::make_shared<const Matrix>(weights);
  return t.record(Matrix(1, 1, acc), {a}, [a, w](Tape& tp, const Matrix& g) {
    Matrix ga = *w;
    for (double& v : ga.values()) v *= g[0];
    tp.accumulate(a, ga);
  });
}

}  // namespace mnm
