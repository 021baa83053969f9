#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mata/core/param_store.hpp"
#include "mata/core/tensor.hpp"

namespace mata::core {

// Dynamic reverse-mode tape, rebuilt on every forward pass. Ops validate
// shapes, compute values eagerly, and record a backward closure. A tensor
// whose inputs are all constants is itself a constant (no node recorded).
//
// Usage: watch parameters, build the forward graph, call backward on a scalar
// loss, read gradients. clear() invalidates all node ids. A Tape is confined
// to one thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a parameter as a tracked leaf; its gradient is collected by
  // gradients(). Under NoGrad the parameter enters as a constant.
  Tensor watch(const ParamStore& store, const std::string& name);

  // Tracks an arbitrary tensor as a leaf; gradient via grad_of().
  Tensor input(const Tensor& t);

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double c);
  Tensor add_scalar(const Tensor& a, double c);
  // x: [m x n], b: [n]; adds b to every row.
  Tensor add_rows(const Tensor& x, const Tensor& b);
  // v: [n] or [1 x n]; tiles it into [m x n].
  Tensor repeat_rows(const Tensor& v, std::size_t m);
  // axis 0 stacks rows (or joins vectors), axis 1 joins columns.
  Tensor concat(const Tensor& a, const Tensor& b, int axis);
  Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t nrows);
  Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t ncols);
  Tensor slice_vec(const Tensor& v, std::size_t off, std::size_t len);
  Tensor reshape(const Tensor& x, Shape shape);
  Tensor relu(const Tensor& x);
  Tensor leaky_relu(const Tensor& x, double slope);
  Tensor tanh(const Tensor& x);
  Tensor sigmoid(const Tensor& x);
  // log(max(x, 1e-12)); gradient is zero on the clamped region.
  Tensor log(const Tensor& x);
  Tensor exp(const Tensor& x);
  // Row-wise softmax with per-row max subtraction.
  Tensor softmax_rows(const Tensor& x);
  Tensor log_softmax_rows(const Tensor& x);
  // axis 0: column means [m x n] -> [n]; axis 1: row means -> [m].
  Tensor mean_axis(const Tensor& x, int axis);
  Tensor sum_all(const Tensor& x);
  Tensor mean_all(const Tensor& x);

  // Seeds d(loss)/d(loss) = 1 and runs closures in reverse creation order.
  // loss must be a scalar node of this tape. Resets previous gradients.
  void backward(const Tensor& loss);

  // Gradients aligned with `params` by name and shape; parameters that were
  // never watched or not reached by backward get zeros. Callers must pass the
  // same store they watched.
  ParamStore gradients(const ParamStore& params) const;

  // Gradient of a tracked tensor (zeros if unreached).
  std::vector<double> grad_of(const Tensor& t) const;

  void clear();
  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return recording_; }

  // RAII guard: ops inside the scope compute values but record nothing.
  struct NoGrad {
    explicit NoGrad(Tape& t) : tape(t), prev(t.recording_) { t.recording_ = false; }
    ~NoGrad() { tape.recording_ = prev; }
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;
    Tape& tape;
    bool prev;
  };

 private:
  struct Node {
    std::size_t numel = 0;
    std::function<void(Tape&)> back;  // empty for leaves
  };

  int push(std::size_t numel);
  std::vector<double>& gbuf(int id);
  void acc(int id, const double* g, std::size_t n);

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  std::vector<std::pair<std::string, int>> watched_;
  bool recording_ = true;
};

}  // namespace mata::core
