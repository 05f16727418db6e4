#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "protoner/rng.hpp"
#include "protoner/tensor.hpp"

namespace protoner {

/// A trainable tensor together with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }
};

enum class Mode { train, eval };

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Records a computation graph for one forward pass. Nodes are appended in
/// topological order, so reverse iteration is a valid backward schedule and
/// each node is visited exactly once.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  /// With track_gradients off, nothing is recorded for the reverse pass.
  explicit Tape(Mode mode = Mode::train, bool track_gradients = true) : mode_(mode), track_(track_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Mode mode() const { return mode_; }
  bool training() const { return mode_ == Mode::train; }

  /// Leaf without gradient tracking.
  Var constant(Tensor value);
  /// Leaf whose gradient is tracked on the tape (readable with grad()).
  Var variable(Tensor value);
  /// Leaf bound to a parameter; backward accumulates into p.grad. Binding the
  /// same parameter twice returns the same node.
  Var param(Parameter& p);

  const Tensor& value(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient of the last backward root with respect to a node.
  Tensor grad(Var v) const;

  /// Reverse pass from a scalar root. Intermediate gradients are reset at the
  /// start of every call; parameter gradients accumulate across calls.
  void backward(Var root);

  /// Gradient slot of an input node, zero-initialized on first access.
  Tensor& grad_slot(std::size_t id);

  Var record(Tensor value, std::span<const Var> inputs, Backward backward);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Parameter* param = nullptr;
    Backward backward;
    bool needs_grad = false;
  };

  Mode mode_;
  bool track_;
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
};

/// Differentiable operations. Every op checks operand shapes and throws
/// DimensionError on mismatch.
namespace ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// a (RxC) plus a 1xC row broadcast to every row.
Var add_row(Var a, Var row);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var matmul(Var a, Var b);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var sum(Var a);
Var mean(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
/// Row-wise softmax over the last dimension.
Var softmax(Var a);
Var log_softmax(Var a);
/// Inverted dropout: identity in eval mode or when rate == 0.
Var dropout(Var a, double rate, Rng& rng);
/// Pairwise squared Euclidean distances between rows: (RxM, KxM) -> RxK.
Var squared_distance(Var a, Var b);
/// Rows of a table selected by index (embedding lookup).
Var gather_rows(Var table, std::span<const std::size_t> indices);
/// a(r, index[r]) for each row r, as an Rx1 column.
Var pick(Var a, std::span<const std::size_t> index);
/// Broadcast a 1x1 scalar to rows x cols.
Var broadcast(Var scalar, std::size_t rows, std::size_t cols);

/// Single-direction LSTM over the rows of x (TxD). Gate blocks in wx (Dx4H),
/// wh (Hx4H) and bias (1x4H) are ordered input, forget, cell, output. Returns
/// the TxH hidden states in input order; when reverse is set the recurrence
/// runs from the last row to the first.
Var lstm(Var x, Var wx, Var wh, Var bias, bool reverse);

/// Final hidden state of an LSTM run over each sequence of table rows, as one
/// row per sequence (S x H). With reverse, each sequence is read back to
/// front, so its row is the state after the first symbol.
Var lstm_final_batch(Var table, std::span<const std::vector<std::size_t>> sequences, Var wx, Var wh, Var bias,
                     bool reverse);

}  // namespace ops

namespace detail {
void require_finite(const Tensor& t, const char* op);
}

}  // namespace protoner
