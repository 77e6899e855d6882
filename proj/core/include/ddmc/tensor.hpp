#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ddmc/errors.hpp"

namespace ddmc {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed, then data.size()
  bool requires_grad = false;

  // Tape bookkeeping; only meaningful while tape_epoch matches the epoch of
  // the tape that adopted this node.
  std::uint64_t tape_epoch = 0;
  int node_id = -1;
  bool tape_needs_grad = false;  // gradient flows through this node
  bool tape_produced = false;    // node is the output of a record

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

// Dense row-major tensor of doubles. Tensor is a shallow handle: copies share
// storage, ops allocate fresh outputs. Tensors that are not marked
// requires_grad and are not produced by tracked ops are plain immutable
// values and safe to share across computations.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from(Shape shape, std::vector<double> v);
  static Tensor scalar(double v);
  // Leaf with requires_grad set; the usual way to make a trainable parameter.
  static Tensor param(Shape shape, std::vector<double> v);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t rank() const { return std::int64_t(impl_->shape.size()); }
  std::int64_t numel() const { return std::int64_t(impl_->data.size()); }
  bool is_scalar() const { return numel() == 1; }
  // Rank-2 accessors.
  std::int64_t rows() const;
  std::int64_t cols() const;

  double value() const;  // scalar read; throws on numel != 1
  double at(std::int64_t i) const { return impl_->data[std::size_t(i)]; }
  double at(std::int64_t i, std::int64_t j) const {
    return impl_->data[std::size_t(i * cols() + j)];
  }

  const std::vector<double>& data() const { return impl_->data; }
  // In-place access, intended for leaf construction and optimizer updates.
  std::vector<double>& mutable_data() { return impl_->data; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool b) { impl_->requires_grad = b; }
  bool has_grad() const { return !impl_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad();

  // Deep copy with no grad tracking.
  Tensor detached() const;

  detail::TensorImpl* impl() const { return impl_.get(); }
  std::shared_ptr<detail::TensorImpl> impl_ptr() const { return impl_; }

 private:
  friend class Tape;
  static Tensor make(Shape shape, std::vector<double> v);
  std::shared_ptr<detail::TensorImpl> impl_;
};

// One reverse step: pushes the output node's gradient into the record's
// inputs. Forward values needed by the pull-back live in the closure.
struct TapeRecord {
  const char* op;
  std::vector<int> input_ids;
  int output_id;
  std::function<void()> backward;
};

// Ordered list of tracked operations. Ops append records while a TapeScope is
// active and at least one input carries gradient; without an active scope the
// same ops run eagerly and produce plain values. backward() visits records in
// reverse insertion order exactly once per call. Gradients of tape-internal
// nodes are reset at the start of each backward(); leaf gradients are not, so
// repeated calls accumulate into leaves.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void backward(const Tensor& loss);

  const std::vector<TapeRecord>& records() const { return records_; }
  std::size_t num_nodes() const { return nodes_.size(); }

  static Tape* current();

  // Used by op implementations.
  int adopt(const Tensor& t);
  bool tracks(const Tensor& t) const;
  void record(const char* op, const std::vector<Tensor>& inputs,
              const Tensor& output, std::function<void()> backward_fn);

 private:
  std::vector<TapeRecord> records_;
  std::vector<std::shared_ptr<detail::TensorImpl>> nodes_;
  std::uint64_t epoch_;
  friend class TapeScope;
};

// RAII: installs a tape as the recording target for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Convenience wrapper over Tape::current()->backward(loss).
void backward(const Tensor& loss);

// ---- operations ----------------------------------------------------------
// Binary elementwise ops accept equal shapes, a one-element operand on either
// side, or a {1,n} row against {m,n} on either side; gradients reduce over
// the broadcast axis.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor neg(const Tensor& x);
Tensor abs(const Tensor& x);          // subgradient 0 at 0
Tensor scale(const Tensor& x, double c);
Tensor xlogx(const Tensor& x);        // x*log(x), 0 -> 0; needs x >= 0

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor trace(const Tensor& x);

Tensor softmax(const Tensor& x, int axis);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor logistic(const Tensor& x);

Tensor slice_cols(const Tensor& x, std::int64_t c0, std::int64_t c1);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor tile_rows(const Tensor& row, std::int64_t n);

// Central-difference check of d f / d x at the given point. Returns the max
// over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|).
// f must be deterministic and is evaluated eagerly during the sweep.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double eps);

}  // namespace ddmc
