#include "protoner/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace protoner {

namespace detail {
void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite value");
}
}  // namespace detail

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, {}, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, {}, track_});
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var{this, it->second};
  if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
  nodes_.push_back(Node{{}, {}, &p, {}, track_});
  bound_.emplace(&p, nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.param ? n.param->value : n.value;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.param) return n.param->grad;
  if (n.grad.empty()) return Tensor(value(v.id).shape());
  return n.grad;
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.param) return n.param->grad;
  if (n.grad.empty()) n.grad = Tensor(value(id).shape());
  return n.grad;
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape != this) throw ContractError("operand recorded on a different tape");
    needs = needs || nodes_[in.id].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, nullptr, needs ? std::move(backward) : Backward{}, needs});
  return Var{this, nodes_.size() - 1};
}

void Tape::backward(Var root) {
  if (root.tape != this) throw ContractError("backward root belongs to a different tape");
  if (value(root.id).size() != 1) {
    throw ContractError("backward requires a scalar root, got " + value(root.id).shape().str());
  }
  for (Node& n : nodes_) {
    if (!n.param) n.grad = Tensor();
  }
  grad_slot(root.id)[0] += 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
}

namespace ops {
namespace {


void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
  }
}

template <typename F>
Var unary(Var a, F&& f, const char* name, Tape::Backward bw, bool check = false) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  if (check) detail::require_finite(out, name);
  const Var in[] = {a};
  return a.tape->record(std::move(out), in, std::move(bw));
}

}  // namespace

Var add(Var a, Var b) {
  require_same(a, b, "add");
  Tensor out = a.value();
  out.mat() += b.value().mat();
  const Var in[] = {a, b};
  return a.tape->record(std::move(out), in, [a, b](Tape& t, const Tensor& g) {
    if (t.needs_grad(a.id)) t.grad_slot(a.id).mat() += g.mat();
    if (t.needs_grad(b.id)) t.grad_slot(b.id).mat() += g.mat();
  });
}

Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  Tensor out = a.value();
  out.mat() -= b.value().mat();
  const Var in[] = {a, b};
  return a.tape->record(std::move(out), in, [a, b](Tape& t, const Tensor& g) {
    if (t.needs_grad(a.id)) t.grad_slot(a.id).mat() += g.mat();
    if (t.needs_grad(b.id)) t.grad_slot(b.id).mat() -= g.mat();
  });
}

Var add_row(Var a, Var row) {
  if (row.shape().rows != 1 || row.shape().cols != a.shape().cols) {
    throw DimensionError("add_row: expected 1x" + std::to_string(a.shape().cols) + " row, got " +
                         row.shape().str());
  }
  Tensor out = a.value();
  out.mat().rowwise() += row.value().mat().row(0);
  const Var in[] = {a, row};
  return a.tape->record(std::move(out), in, [a, row](Tape& t, const Tensor& g) {
    if (t.needs_grad(a.id)) t.grad_slot(a.id).mat() += g.mat();
    if (t.needs_grad(row.id)) t.grad_slot(row.id).mat() += g.mat().colwise().sum();
  });
}

Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  Tensor out = a.value();
  out.mat().array() *= b.value().mat().array();
  const Var in[] = {a, b};
  return a.tape->record(std::move(out), in, [a, b](Tape& t, const Tensor& g) {
    if (t.needs_grad(a.id)) t.grad_slot(a.id).mat().array() += g.mat().array() * t.value(b.id).mat().array();
    if (t.needs_grad(b.id)) t.grad_slot(b.id).mat().array() += g.mat().array() * t.value(a.id).mat().array();
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  out.mat() *= factor;
  const Var in[] = {a};
  return a.tape->record(std::move(out), in, [a, factor](Tape& t, const Tensor& g) {
    t.grad_slot(a.id).mat() += factor * g.mat();
  });
}

Var matmul(Var a, Var b) {
  if (a.shape().cols != b.shape().rows) {
    throw DimensionError("matmul: " + a.shape().str() + " x " + b.shape().str());
  }
  Tensor out(a.shape().rows, b.shape().cols);
  out.mat().noalias() = a.value().mat() * b.value().mat();
  detail::require_finite(out, "matmul");
  const Var in[] = {a, b};
  return a.tape->record(std::move(out), in, [a, b](Tape& t, const Tensor& g) {
    if (t.needs_grad(a.id)) t.grad_slot(a.id).mat().noalias() += g.mat() * t.value(b.id).mat().transpose();
    if (t.needs_grad(b.id)) t.grad_slot(b.id).mat().noalias() += t.value(a.id).mat().transpose() * g.mat();
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const std::size_t rows = parts[0].shape().rows;
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.shape().rows != rows) throw DimensionError("concat_cols: row count mismatch");
    cols += p.shape().cols;
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    out.mat().middleCols(offset, p.shape().cols) = p.value().mat();
    offset += p.shape().cols;
  }
  std::vector<Var> in(parts.begin(), parts.end());
  return parts[0].tape->record(std::move(out), in, [in](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (const Var& p : in) {
      const std::size_t c = t.value(p.id).cols();
      if (t.needs_grad(p.id)) t.grad_slot(p.id).mat() += g.mat().middleCols(off, c);
      off += c;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  const std::size_t cols = parts[0].shape().cols;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.shape().cols != cols) throw DimensionError("concat_rows: column count mismatch");
    rows += p.shape().rows;
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    out.mat().middleRows(offset, p.shape().rows) = p.value().mat();
    offset += p.shape().rows;
  }
  std::vector<Var> in(parts.begin(), parts.end());
  return parts[0].tape->record(std::move(out), in, [in](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (const Var& p : in) {
      const std::size_t r = t.value(p.id).rows();
      if (t.needs_grad(p.id)) t.grad_slot(p.id).mat() += g.mat().middleRows(off, r);
      off += r;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  if (begin >= end || end > a.shape().rows) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of " + a.shape().str());
  }
  Tensor out(end - begin, a.shape().cols);
  out.mat() = a.value().mat().middleRows(begin, end - begin);
  const Var in[] = {a};
  return a.tape->record(std::move(out), in, [a, begin, end](Tape& t, const Tensor& g) {
    t.grad_slot(a.id).mat().middleRows(begin, end - begin) += g.mat();
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  if (begin >= end || end > a.shape().cols) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of " + a.shape().str());
  }
  Tensor out(a.shape().rows, end - begin);
  out.mat() = a.value().mat().middleCols(begin, end - begin);
  const Var in[] = {a};
  return a.tape->record(std::move(out), in, [a, begin, end](Tape& t, const Tensor& g) {
    t.grad_slot(a.id).mat().middleCols(begin, end - begin) += g.mat();
  });
}

Var sum(Var a) {
  Tensor out = Tensor::scalar(a.value().mat().sum());
  const Var in[] = {a};
  return a.tape->record(std::move(out), in, [a](Tape& t, const Tensor& g) {
    t.grad_slot(a.id).mat().array() += g[0];
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  Tensor out = Tensor::scalar(a.value().mat().sum() / n);
  const Var in[] = {a};
  return a.tape->record(std::move(out), in, [a, n](Tape& t, const Tensor& g) {
    t.grad_slot(a.id).mat().array() += g[0] / n;
  });
}

Var tanh(Var a) {
  const std::size_t out_id = a.tape->size();
  return unary(a, [](double x) { return std::tanh(x); }, "tanh",
               [a, out_id](Tape& t, const Tensor& g) {
                 const Tensor& y = t.value(out_id);
                 t.grad_slot(a.id).mat().array() += g.mat().array() * (1.0 - y.mat().array().square());
               });
}

Var sigmoid(Var a) {
  const std::size_t out_id = a.tape->size();
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, "sigmoid",
               [a, out_id](Tape& t, const Tensor& g) {
                 const Tensor& y = t.value(out_id);
                 t.grad_slot(a.id).mat().array() += g.mat().array() * y.mat().array() * (1.0 - y.mat().array());
               });
}

Var exp(Var a) {
  const std::size_t out_id = a.tape->size();
  return unary(a, [](double x) { return std::exp(x); }, "exp",
               [a, out_id](Tape& t, const Tensor& g) {
                 t.grad_slot(a.id).mat().array() += g.mat().array() * t.value(out_id).mat().array();
               },
               true);
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, "log",
               [a](Tape& t, const Tensor& g) {
                 t.grad_slot(a.id).mat().array() += g.mat().array() / t.value(a.id).mat().array();
               },
               true);
}

Var softmax(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  auto xm = x.mat();
  auto om = out.mat();
  for (Eigen::Index r = 0; r < xm.rows(); ++r) {
    const double mx = xm.row(r).maxCoeff();
    om.row(r) = (xm.row(r).array() - mx).exp().matrix();
    om.row(r) /= om.row(r).sum();
  }
  detail::require_finite(out, "softmax");
  const std::size_t out_id = a.tape->size();
  const Var in[] = {a};
  return a.tape->record(std::move(out), in, [a, out_id](Tape& t, const Tensor& g) {
    const auto y = t.value(out_id).mat();
    auto gx = t.grad_slot(a.id).mat();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double dot = g.mat().row(r).dot(y.row(r));
      gx.row(r).array() += y.row(r).array() * (g.mat().row(r).array() - dot);
    }
  });
}

Var log_softmax(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  auto xm = x.mat();
  auto om = out.mat();
  for (Eigen::Index r = 0; r < xm.rows(); ++r) {
    const double mx = xm.row(r).maxCoeff();
    const double lse = mx + std::log((xm.row(r).array() - mx).exp().sum());
    om.row(r) = (xm.row(r).array() - lse).matrix();
  }
  detail::require_finite(out, "log_softmax");
  const std::size_t out_id = a.tape->size();
  const Var in[] = {a};
  return a.tape->record(std::move(out), in, [a, out_id](Tape& t, const Tensor& g) {
    const auto y = t.value(out_id).mat();
    auto gx = t.grad_slot(a.id).mat();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double gs = g.mat().row(r).sum();
      gx.row(r).array() += g.mat().row(r).array() - y.row(r).array().exp() * gs;
    }
  });
}

Var dropout(Var a, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("dropout rate must lie in [0, 1)");
  if (!a.tape->training() || rate == 0.0) return a;
  const double keep = 1.0 - rate;
  Tensor mask(a.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  Var m = a.tape->constant(std::move(mask));
  return mul(a, m);
}

Var squared_distance(Var a, Var b) {
  if (a.shape().cols != b.shape().cols) {
    throw DimensionError("squared_distance: width mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  const auto am = a.value().mat();
  const auto bm = b.value().mat();
  Tensor out(a.shape().rows, b.shape().rows);
  auto om = out.mat();
  for (Eigen::Index i = 0; i < am.rows(); ++i) {
    for (Eigen::Index k = 0; k < bm.rows(); ++k) om(i, k) = (am.row(i) - bm.row(k)).squaredNorm();
  }
  const Var in[] = {a, b};
  return a.tape->record(std::move(out), in, [a, b](Tape& t, const Tensor& g) {
    const auto am = t.value(a.id).mat();
    const auto bm = t.value(b.id).mat();
    const auto gm = g.mat();
    // d/da_i = 2 sum_k g_ik (a_i - b_k); d/db_k = -2 sum_i g_ik (a_i - b_k)
    if (t.needs_grad(a.id)) {
      auto ga = t.grad_slot(a.id).mat();
      ga.noalias() += 2.0 * (gm.rowwise().sum().asDiagonal() * am - gm * bm);
    }
    if (t.needs_grad(b.id)) {
      auto gb = t.grad_slot(b.id).mat();
      gb.noalias() += 2.0 * (gm.colwise().sum().transpose().asDiagonal() * bm - gm.transpose() * am);
    }
  });
}

Var gather_rows(Var table, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DimensionError("gather_rows: no indices");
  const auto tm = table.value().mat();
  Tensor out(indices.size(), table.shape().cols);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= table.shape().rows) throw DimensionError("gather_rows: index out of range");
    out.mat().row(r) = tm.row(indices[r]);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  const Var in[] = {table};
  return table.tape->record(std::move(out), in, [table, idx](Tape& t, const Tensor& g) {
    auto gt = t.grad_slot(table.id).mat();
    for (std::size_t r = 0; r < idx.size(); ++r) gt.row(idx[r]) += g.mat().row(r);
  });
}

Var pick(Var a, std::span<const std::size_t> index) {
  if (index.size() != a.shape().rows) throw DimensionError("pick: one index per row required");
  Tensor out(a.shape().rows, 1);
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= a.shape().cols) throw DimensionError("pick: column index out of range");
    out(r, 0) = a.value()(r, index[r]);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  const Var in[] = {a};
  return a.tape->record(std::move(out), in, [a, idx](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_slot(a.id);
    for (std::size_t r = 0; r < idx.size(); ++r) ga(r, idx[r]) += g(r, 0);
  });
}

Var broadcast(Var scalar, std::size_t rows, std::size_t cols) {
  if (scalar.shape().size() != 1) throw DimensionError("broadcast: operand must be 1x1");
  Tensor out(rows, cols, scalar.value()[0]);
  const Var in[] = {scalar};
  return scalar.tape->record(std::move(out), in, [scalar](Tape& t, const Tensor& g) {
    t.grad_slot(scalar.id)[0] += g.mat().sum();
  });
}

Var lstm(Var x, Var wx, Var wh, Var bias, bool reverse) {
  const std::size_t steps = x.shape().rows;
  const std::size_t hidden = wh.shape().rows;
  const std::size_t gates = 4 * hidden;
  if (wx.shape().rows != x.shape().cols || wx.shape().cols != gates || wh.shape().cols != gates ||
      bias.shape() != Shape{1, gates}) {
    throw DimensionError("lstm: inconsistent weights for input " + x.shape().str() + ": wx " +
                         wx.shape().str() + ", wh " + wh.shape().str() + ", bias " + bias.shape().str());
  }

  // Per-step activations [i f g o], cell states and hidden states, indexed by
  // input row.
  RowMajorMatrix act(steps, gates);
  act.noalias() = x.value().mat() * wx.value().mat();
  act.rowwise() += bias.value().mat().row(0);
  RowMajorMatrix cell(steps, hidden);
  Tensor out(steps, hidden);
  auto hm = out.mat();
  const auto whm = wh.value().mat();

  Eigen::RowVectorXd h_prev = Eigen::RowVectorXd::Zero(hidden);
  Eigen::RowVectorXd c_prev = Eigen::RowVectorXd::Zero(hidden);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t r = reverse ? steps - 1 - s : s;
    auto z = act.row(r);
    z.noalias() += h_prev * whm;
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    for (std::size_t j = 0; j < hidden; ++j) {
      z(j) = sig(z(j));
      z(hidden + j) = sig(z(hidden + j));
      z(2 * hidden + j) = std::tanh(z(2 * hidden + j));
      z(3 * hidden + j) = sig(z(3 * hidden + j));
    }
    for (std::size_t j = 0; j < hidden; ++j) {
      const double c = z(hidden + j) * c_prev(j) + z(j) * z(2 * hidden + j);
      cell(r, j) = c;
      hm(r, j) = z(3 * hidden + j) * std::tanh(c);
    }
    h_prev = hm.row(r);
    c_prev = cell.row(r);
  }

  const std::size_t out_id = x.tape->size();
  const Var in[] = {x, wx, wh, bias};
  return x.tape->record(
      std::move(out), in,
      [x, wx, wh, bias, reverse, steps, hidden, out_id, act = std::move(act),
       cell = std::move(cell)](Tape& t, const Tensor& g) {
        const auto hm = t.value(out_id).mat();
        const auto whm = t.value(wh.id).mat();
        RowMajorMatrix dz(steps, 4 * hidden);
        RowMajorMatrix h_before = RowMajorMatrix::Zero(steps, hidden);
        Eigen::RowVectorXd dh_next = Eigen::RowVectorXd::Zero(hidden);
        Eigen::RowVectorXd dc_next = Eigen::RowVectorXd::Zero(hidden);
        for (std::size_t s = steps; s-- > 0;) {
          const std::size_t r = reverse ? steps - 1 - s : s;
          const bool first = s == 0;
          const std::size_t prev = reverse ? r + 1 : r - 1;
          const auto a = act.row(r);
          for (std::size_t j = 0; j < hidden; ++j) {
            const double i = a(j), f = a(hidden + j), gg = a(2 * hidden + j), o = a(3 * hidden + j);
            const double c = cell(r, j);
            const double c_prev = first ? 0.0 : cell(prev, j);
            const double tc = std::tanh(c);
            const double dh = g(r, j) + dh_next(j);
            const double dc = dh * o * (1.0 - tc * tc) + dc_next(j);
            dz(r, j) = dc * gg * i * (1.0 - i);
            dz(r, hidden + j) = dc * c_prev * f * (1.0 - f);
            dz(r, 2 * hidden + j) = dc * i * (1.0 - gg * gg);
            dz(r, 3 * hidden + j) = dh * tc * o * (1.0 - o);
            dc_next(j) = dc * f;
          }
          dh_next.noalias() = dz.row(r) * whm.transpose();
          if (!first) h_before.row(r) = hm.row(prev);
        }
        if (t.needs_grad(x.id)) t.grad_slot(x.id).mat().noalias() += dz * t.value(wx.id).mat().transpose();
        if (t.needs_grad(wx.id)) t.grad_slot(wx.id).mat().noalias() += t.value(x.id).mat().transpose() * dz;
        if (t.needs_grad(wh.id)) t.grad_slot(wh.id).mat().noalias() += h_before.transpose() * dz;
        if (t.needs_grad(bias.id)) t.grad_slot(bias.id).mat() += dz.colwise().sum();
      });
}


Var lstm_final_batch(Var table, std::span<const std::vector<std::size_t>> sequences, Var wx, Var wh, Var bias,
                     bool reverse) {
  const std::size_t n = sequences.size();
  const std::size_t dim = table.shape().cols;
  const std::size_t hidden = wh.shape().rows;
  const std::size_t gates = 4 * hidden;
  if (n == 0) throw DimensionError("lstm_final_batch: no sequences");
  if (wx.shape() != Shape{dim, gates} || wh.shape().cols != gates || bias.shape() != Shape{1, gates}) {
    throw DimensionError("lstm_final_batch: inconsistent weights for inputs of width " + std::to_string(dim));
  }
  // Longest first, so the sequences still running at step t form a prefix.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (sequences[i].empty()) throw DimensionError("lstm_final_batch: empty sequence");
    for (std::size_t c : sequences[i]) {
      if (c >= table.shape().rows) throw DimensionError("lstm_final_batch: index out of range");
    }
    order[i] = i;
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sequences[a].size() > sequences[b].size(); });
  const std::size_t steps = sequences[order[0]].size();
  std::vector<std::size_t> active(steps, 0);
  for (std::size_t t = 0; t < steps; ++t) {
    while (active[t] < n && sequences[order[active[t]]].size() > t) ++active[t];
  }
  auto symbol = [&](std::size_t slot, std::size_t t) {
    const auto& seq = sequences[order[slot]];
    return reverse ? seq[seq.size() - 1 - t] : seq[t];
  };

  const auto tm = table.value().mat();
  const auto wxm = wx.value().mat();
  const auto whm = wh.value().mat();
  std::vector<RowMajorMatrix> inputs(steps), act(steps), cell(steps), hid(steps);
  RowMajorMatrix h = RowMajorMatrix::Zero(n, hidden);
  RowMajorMatrix c = RowMajorMatrix::Zero(n, hidden);
  for (std::size_t t = 0; t < steps; ++t) {
    const auto m = static_cast<Eigen::Index>(active[t]);
    inputs[t].resize(m, dim);
    for (Eigen::Index r = 0; r < m; ++r) inputs[t].row(r) = tm.row(symbol(r, t));
    RowMajorMatrix& z = act[t];
    z.noalias() = inputs[t] * wxm;
    z.noalias() += h.topRows(m) * whm;
    z.rowwise() += bias.value().mat().row(0);
    for (Eigen::Index r = 0; r < m; ++r) {
      for (std::size_t j = 0; j < hidden; ++j) {
        z(r, j) = 1.0 / (1.0 + std::exp(-z(r, j)));
        z(r, hidden + j) = 1.0 / (1.0 + std::exp(-z(r, hidden + j)));
        z(r, 2 * hidden + j) = std::tanh(z(r, 2 * hidden + j));
        z(r, 3 * hidden + j) = 1.0 / (1.0 + std::exp(-z(r, 3 * hidden + j)));
        const double cv = z(r, hidden + j) * c(r, j) + z(r, j) * z(r, 2 * hidden + j);
        c(r, j) = cv;
        h(r, j) = z(r, 3 * hidden + j) * std::tanh(cv);
      }
    }
    cell[t] = c.topRows(m);
    hid[t] = h.topRows(m);
  }
  Tensor out(n, hidden);
  for (std::size_t slot = 0; slot < n; ++slot) out.mat().row(order[slot]) = h.row(slot);

  struct Saved {
    std::vector<std::size_t> order, active, lengths;
    std::vector<std::vector<std::size_t>> symbols;  // per step, per active slot
    std::vector<RowMajorMatrix> inputs, act, cell, hid;
  };
  auto saved = std::make_shared<Saved>();
  saved->order = std::move(order);
  saved->active = std::move(active);
  for (std::size_t slot = 0; slot < n; ++slot) saved->lengths.push_back(sequences[saved->order[slot]].size());
  saved->symbols.resize(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t r = 0; r < saved->active[t]; ++r) {
      const auto& seq = sequences[saved->order[r]];
      saved->symbols[t].push_back(reverse ? seq[seq.size() - 1 - t] : seq[t]);
    }
  }
  saved->inputs = std::move(inputs);
  saved->act = std::move(act);
  saved->cell = std::move(cell);
  saved->hid = std::move(hid);

  const Var in[] = {table, wx, wh, bias};
  return table.tape->record(std::move(out), in, [table, wx, wh, bias, hidden, saved](Tape& t, const Tensor& g) {
    const Saved& sv = *saved;
    const std::size_t n = sv.order.size();
    const std::size_t steps = sv.act.size();
    const auto wxm = t.value(wx.id).mat();
    const auto whm = t.value(wh.id).mat();
    RowMajorMatrix dh = RowMajorMatrix::Zero(n, hidden);
    RowMajorMatrix dc = RowMajorMatrix::Zero(n, hidden);
    RowMajorMatrix gwx = RowMajorMatrix::Zero(wxm.rows(), wxm.cols());
    RowMajorMatrix gwh = RowMajorMatrix::Zero(whm.rows(), whm.cols());
    Eigen::RowVectorXd gb = Eigen::RowVectorXd::Zero(4 * hidden);
    const bool want_table = t.needs_grad(table.id);
    for (std::size_t step = steps; step-- > 0;) {
      const auto m = static_cast<Eigen::Index>(sv.active[step]);
      // Output gradient enters at each sequence's final step.
      for (Eigen::Index r = 0; r < m; ++r) {
        if (sv.lengths[r] == step + 1) dh.row(r) += g.mat().row(sv.order[r]);
      }
      const RowMajorMatrix& a = sv.act[step];
      RowMajorMatrix dz(m, 4 * hidden);
      for (Eigen::Index r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < hidden; ++j) {
          const double i = a(r, j), f = a(r, hidden + j), gg = a(r, 2 * hidden + j), o = a(r, 3 * hidden + j);
          const double cv = sv.cell[step](r, j);
          const double c_prev = step == 0 ? 0.0 : sv.cell[step - 1](r, j);
          const double tc = std::tanh(cv);
          const double dcv = dh(r, j) * o * (1.0 - tc * tc) + dc(r, j);
          dz(r, j) = dcv * gg * i * (1.0 - i);
          dz(r, hidden + j) = dcv * c_prev * f * (1.0 - f);
          dz(r, 2 * hidden + j) = dcv * i * (1.0 - gg * gg);
          dz(r, 3 * hidden + j) = dh(r, j) * tc * o * (1.0 - o);
          dc(r, j) = dcv * f;
        }
      }
      gwx.noalias() += sv.inputs[step].transpose() * dz;
      if (step > 0) gwh.noalias() += sv.hid[step - 1].topRows(m).transpose() * dz;
      gb += dz.colwise().sum();
      if (want_table) {
        const RowMajorMatrix dx = dz * wxm.transpose();
        auto gt = t.grad_slot(table.id).mat();
        for (Eigen::Index r = 0; r < m; ++r) gt.row(sv.symbols[step][r]) += dx.row(r);
      }
      dh.topRows(m).noalias() = dz * whm.transpose();
    }
    if (t.needs_grad(wx.id)) t.grad_slot(wx.id).mat() += gwx;
    if (t.needs_grad(wh.id)) t.grad_slot(wh.id).mat() += gwh;
    if (t.needs_grad(bias.id)) t.grad_slot(bias.id).mat().row(0) += gb;
  });
}

}  // namespace ops
}  // namespace protoner
