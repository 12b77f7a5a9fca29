#include "glumind/autodiff.hpp"

#include "glumind/errors.hpp"
#include "glumind/kernels.hpp"

#include <string>

namespace glumind {

namespace {

std::string shape_str(const Matrix& m) { return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]"; }

void require_same_shape(const char* op, Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  }
}

}  // namespace

const Matrix& Var::value() const { return tape->value(id); }
bool Var::requires_grad() const { return tape->requires_grad(id); }

double Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ContractError("item() on non-scalar node " + shape_str(v));
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), recording_, nullptr});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

Var Tape::record(Matrix value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  if (recording_) {
    for (const Var& v : inputs) needs = needs || requires_grad(v.id);
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs, needs ? std::move(fn) : nullptr});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0 && n.value.size() != 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var loss) {
  if (!recording_) throw ContractError("backward() on a non-recording tape");
  if (loss.tape != this) throw ContractError("loss was not produced on this tape");
  const Matrix& lv = value(loss.id);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward() needs a scalar loss, got " + shape_str(lv));
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[static_cast<std::size_t>(loss.id)].grad = Matrix::Ones(1, 1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(n.grad, *this);
  }
}

ParamBinding::ParamBinding(Tape& tape, const ParamStore& params) : tape_(&tape) {
  for (const auto& [name, t] : params) vars_.emplace(name, tape.leaf(t.data));
}

Var ParamBinding::operator[](std::string_view name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ContractError("parameter not bound: " + std::string(name));
  return it->second;
}

bool ParamBinding::contains(std::string_view name) const { return vars_.find(name) != vars_.end(); }

void ParamBinding::store_gradients(ParamStore& params) const {
  for (auto& [name, t] : params) {
    auto it = vars_.find(name);
    const Matrix* g = it == vars_.end() ? nullptr : &tape_->grad(it->second.id);
    if (g != nullptr && g->size() == t.data.size()) {
      t.grad = *g;
    } else {
      t.zero_grad();
    }
  }
}

void backward(Var loss, const ParamBinding& binding, ParamStore& params) {
  binding.tape().backward(loss);
  binding.store_gradients(params);
}

// ---- ops ------------------------------------------------------------------

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.value()) + " x " + shape_str(b.value()));
  }
  Matrix out = a.value() * b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](const Matrix& g, Tape& t) {
    if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
  });
}

Var transpose(Var a) {
  Matrix out = a.value().transpose();
  return a.tape->record(std::move(out), {a}, [a](const Matrix& g, Tape& t) { t.accumulate(a, g.transpose()); });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Matrix out = a.value() + b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](const Matrix& g, Tape& t) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Matrix out = a.value() - b.value();
  return a.tape->record(std::move(out), {a, b}, [a, b](const Matrix& g, Tape& t) {
    t.accumulate(a, g);
    if (b.requires_grad()) t.accumulate(b, -g);
  });
}

Var hadamard(Var a, Var b) {
  require_same_shape("hadamard", a, b);
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape->record(std::move(out), {a, b}, [a, b](const Matrix& g, Tape& t) {
    if (a.requires_grad()) t.accumulate(a, g.cwiseProduct(b.value()));
    if (b.requires_grad()) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value() * s;
  return a.tape->record(std::move(out), {a}, [a, s](const Matrix& g, Tape& t) { t.accumulate(a, g * s); });
}

Var square(Var a) {
  Matrix out = a.value().array().square().matrix();
  return a.tape->record(std::move(out), {a}, [a](const Matrix& g, Tape& t) {
    t.accumulate(a, 2.0 * g.cwiseProduct(a.value()));
  });
}

Var add_row(Var x, Var row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw ShapeError("add_row: row " + shape_str(row.value()) + " does not broadcast over " + shape_str(x.value()));
  }
  Matrix out = x.value().rowwise() + row.value().row(0);
  return x.tape->record(std::move(out), {x, row}, [x, row](const Matrix& g, Tape& t) {
    t.accumulate(x, g);
    if (row.requires_grad()) t.accumulate(row, g.colwise().sum());
  });
}

Var softmax_rows(Var x) {
  if (x.cols() < 1) throw ShapeError("softmax_rows needs at least one column");
  Matrix out = kernels::softmax_rows(x.value());
  // The closure reads the output through the id this node is about to get.
  const int self = static_cast<int>(x.tape->size());
  return x.tape->record(std::move(out), {x}, [x, self](const Matrix& g, Tape& t) {
    const Matrix& yv = t.value(self);
    const Eigen::VectorXd dots = g.cwiseProduct(yv).rowwise().sum();
    Matrix dx = yv.cwiseProduct(g - dots.replicate(1, g.cols()));
    t.accumulate(x, dx);
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  if (eps <= 0.0) throw ContractError("layer_norm eps must be positive");
  if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 || bias.cols() != x.cols()) {
    throw ShapeError("layer_norm: gain/bias must be 1 x " + std::to_string(x.cols()));
  }
  Matrix out = kernels::layer_norm(x.value(), gain.value(), bias.value(), eps);
  return x.tape->record(std::move(out), {x, gain, bias}, [x, gain, bias, eps](const Matrix& g, Tape& t) {
    const Matrix& xv = x.value();
    const Index c = xv.cols();
    Matrix xhat(xv.rows(), c);
    Eigen::VectorXd inv(xv.rows());
    for (Index r = 0; r < xv.rows(); ++r) {
      const double mu = xv.row(r).mean();
      const double var = (xv.row(r).array() - mu).square().mean();
      inv(r) = 1.0 / std::sqrt(var + eps);
      xhat.row(r) = (xv.row(r).array() - mu) * inv(r);
    }
    if (gain.requires_grad()) t.accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
    if (bias.requires_grad()) t.accumulate(bias, g.colwise().sum());
    if (x.requires_grad()) {
      Matrix dxhat = g.array().rowwise() * gain.value().row(0).array();
      Matrix dx(xv.rows(), c);
      for (Index r = 0; r < xv.rows(); ++r) {
        const double m1 = dxhat.row(r).mean();
        const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
        dx.row(r) = inv(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
      }
      t.accumulate(x, dx);
    }
  });
}

Var gelu(Var x) {
  Matrix out = kernels::gelu(x.value());
  return x.tape->record(std::move(out), {x}, [x](const Matrix& g, Tape& t) {
    Matrix d = x.value().unaryExpr([](double v) { return kernels::gelu_derivative(v); });
    t.accumulate(x, g.cwiseProduct(d));
  });
}

Var mean_pool_time(Var x, int factor) {
  Matrix out = kernels::mean_pool_time(x.value(), factor);
  return x.tape->record(std::move(out), {x}, [x, factor](const Matrix& g, Tape& t) {
    const Index rows = x.rows();
    Matrix dx(rows, x.cols());
    for (Index i = 0; i < rows; ++i) {
      const Index j = i / factor;
      const Index count = std::min<Index>(factor, rows - j * factor);
      dx.row(i) = g.row(j) / static_cast<double>(count);
    }
    t.accumulate(x, dx);
  });
}

Var repeat_upsample(Var x, int factor, Index target_len) {
  Matrix out = kernels::repeat_upsample(x.value(), factor, target_len);
  return x.tape->record(std::move(out), {x}, [x, factor](const Matrix& g, Tape& t) {
    Matrix dx = Matrix::Zero(x.rows(), x.cols());
    for (Index i = 0; i < g.rows(); ++i) dx.row(i / factor) += g.row(i);
    t.accumulate(x, dx);
  });
}

Var slice_cols(Var x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) + ") out of range for " +
                     shape_str(x.value()));
  }
  Matrix out = x.value().middleCols(start, count);
  return x.tape->record(std::move(out), {x}, [x, start, count](const Matrix& g, Tape& t) {
    Matrix dx = Matrix::Zero(x.rows(), x.cols());
    dx.middleCols(start, count) = g;
    t.accumulate(x, dx);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols needs at least one input");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts.front().tape->record(std::move(out), parts, [inputs](const Matrix& g, Tape& t) {
    Index off = 0;
    for (const Var& p : inputs) {
      if (p.requires_grad()) t.accumulate(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Var flatten(Var x) {
  const Index rows = x.rows();
  const Index cols = x.cols();
  Matrix out = Eigen::Map<const Matrix>(x.value().data(), 1, x.value().size());
  return x.tape->record(std::move(out), {x}, [x, rows, cols](const Matrix& g, Tape& t) {
    t.accumulate(x, Eigen::Map<const Matrix>(g.data(), rows, cols));
  });
}

Var sum(Var x) {
  Matrix out = Matrix::Constant(1, 1, x.value().sum());
  return x.tape->record(std::move(out), {x}, [x](const Matrix& g, Tape& t) {
    t.accumulate(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mean(Var x) {
  const auto n = static_cast<double>(x.value().size());
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / n);
}

Var mse(Var a, Var b) { return mean(square(sub(a, b))); }

}  // namespace glumind
