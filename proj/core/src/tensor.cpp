#include "ddmc/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <utility>

namespace ddmc {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "{";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += "}";
  return out;
}

namespace {

void check_shape(const Shape& s, const char* who) {
  if (s.empty()) throw DimensionError(std::string(who) + ": empty shape");
  for (auto d : s) {
    if (d <= 0)
      throw DimensionError(std::string(who) +
                           ": non-positive dimension in " + shape_str(s));
  }
}

std::atomic<std::uint64_t> g_tape_epoch{1};

thread_local Tape* g_current_tape = nullptr;

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::make(Shape shape, std::vector<double> v) {
  check_shape(shape, "Tensor");
  if (std::int64_t(v.size()) != shape_numel(shape))
    throw DimensionError("Tensor: data size " + std::to_string(v.size()) +
                         " does not match shape " + shape_str(shape));
  Tensor t;
  t.impl_ = std::make_shared<detail::TensorImpl>();
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(v);
  return t;
}

Tensor Tensor::zeros(Shape shape) {
  auto n = shape_numel(shape);
  return make(std::move(shape), std::vector<double>(std::size_t(n), 0.0));
}

Tensor Tensor::full(Shape shape, double v) {
  auto n = shape_numel(shape);
  return make(std::move(shape), std::vector<double>(std::size_t(n), v));
}

Tensor Tensor::from(Shape shape, std::vector<double> v) {
  return make(std::move(shape), std::move(v));
}

Tensor Tensor::scalar(double v) { return make({1}, {v}); }

Tensor Tensor::param(Shape shape, std::vector<double> v) {
  Tensor t = make(std::move(shape), std::move(v));
  t.impl_->requires_grad = true;
  return t;
}

std::int64_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows(): tensor is not rank-2");
  return impl_->shape[0];
}

std::int64_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols(): tensor is not rank-2");
  return impl_->shape[1];
}

double Tensor::value() const {
  if (numel() != 1)
    throw DimensionError("value(): tensor " + shape_str(shape()) +
                         " is not a scalar");
  return impl_->data[0];
}

const std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty())
    throw DimensionError("grad(): no gradient present; run backward first");
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0); }

Tensor Tensor::detached() const {
  return make(impl_->shape, impl_->data);
}

// ---- Tape -----------------------------------------------------------------

Tape::Tape() : epoch_(g_tape_epoch.fetch_add(1)) {}

Tape* Tape::current() { return g_current_tape; }

int Tape::adopt(const Tensor& t) {
  auto* impl = t.impl();
  if (impl->tape_epoch != epoch_) {
    impl->tape_epoch = epoch_;
    impl->node_id = int(nodes_.size());
    impl->tape_needs_grad = impl->requires_grad;
    impl->tape_produced = false;
    nodes_.push_back(t.impl_ptr());
  }
  return impl->node_id;
}

bool Tape::tracks(const Tensor& t) const {
  auto* impl = t.impl();
  return impl->requires_grad ||
         (impl->tape_epoch == epoch_ && impl->tape_needs_grad);
}

void Tape::record(const char* op, const std::vector<Tensor>& inputs,
                  const Tensor& output, std::function<void()> backward_fn) {
  TapeRecord rec;
  rec.op = op;
  rec.input_ids.reserve(inputs.size());
  for (const auto& in : inputs) rec.input_ids.push_back(adopt(in));
  rec.output_id = adopt(output);
  output.impl()->tape_needs_grad = true;
  output.impl()->tape_produced = true;
  rec.backward = std::move(backward_fn);
  records_.push_back(std::move(rec));
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw DimensionError("backward: loss " + shape_str(loss.shape()) +
                         " is not a scalar");
  auto* li = loss.impl();
  if (li->tape_epoch != epoch_ || !li->tape_needs_grad)
    throw DimensionError("backward: loss is not tracked by this tape");

  // Reset gradients of nodes produced on this tape; leaves keep theirs so
  // repeated calls accumulate.
  for (auto& n : nodes_) {
    if (n->tape_produced) n->grad.assign(n->data.size(), 0.0);
  }
  li->ensure_grad();
  li->grad[0] += 1.0;

  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    it->backward();
  }
}

TapeScope::TapeScope(Tape& tape) : prev_(g_current_tape) {
  g_current_tape = &tape;
}

TapeScope::~TapeScope() { g_current_tape = prev_; }

void backward(const Tensor& loss) {
  Tape* t = Tape::current();
  if (!t) throw DimensionError("backward: no active tape");
  t->backward(loss);
}

// ---- op plumbing ----------------------------------------------------------

namespace {

// Logical 2-D view: rank-1 {n} reads as one row.
struct View2 {
  std::int64_t r, c;
};

View2 view2(const Tensor& t) {
  if (t.rank() == 1) return {1, t.shape()[0]};
  if (t.rank() == 2) return {t.shape()[0], t.shape()[1]};
  throw DimensionError("elementwise broadcast needs rank <= 2, got " +
                       shape_str(t.shape()));
}

enum class Bcast { Same, AScalar, BScalar, ARow, BRow };

// Decide how a and b line up; the output takes the larger operand's shape.
Bcast plan_bcast(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Bcast::Same;
  if (b.numel() == 1) return Bcast::BScalar;
  if (a.numel() == 1) return Bcast::AScalar;
  View2 va = view2(a), vb = view2(b);
  if (vb.r == 1 && va.c == vb.c) return Bcast::BRow;
  if (va.r == 1 && va.c == vb.c) return Bcast::ARow;
  throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                       " and " + shape_str(b.shape()) + " do not broadcast");
}

bool want_record(const Tensor& a) {
  Tape* t = Tape::current();
  return t && t->tracks(a);
}

bool want_record(const Tensor& a, const Tensor& b) {
  Tape* t = Tape::current();
  return t && (t->tracks(a) || t->tracks(b));
}

void accumulate(detail::TensorImpl* impl, std::size_t i, double v) {
  impl->grad[i] += v;
}

// Binary elementwise with broadcast. F(a,b) -> out; DA and DB give the local
// partials as functions of (a, b, out).
template <class F, class DA, class DB>
Tensor ew_binary(const char* op, const Tensor& a, const Tensor& b, F f, DA dfa,
                 DB dfb) {
  Bcast bc = plan_bcast(op, a, b);
  const Tensor& big = (bc == Bcast::AScalar || bc == Bcast::ARow) ? b : a;
  const std::int64_t n = big.numel();
  std::vector<double> out(static_cast<std::size_t>(n));

  const auto& ad = a.data();
  const auto& bd = b.data();
  std::int64_t cols = 0;
  if (bc == Bcast::ARow || bc == Bcast::BRow) cols = view2(big).c;

  auto a_index = [bc, cols](std::int64_t i) -> std::int64_t {
    switch (bc) {
      case Bcast::AScalar: return 0;
      case Bcast::ARow: return i % cols;
      default: return i;
    }
  };
  auto b_index = [bc, cols](std::int64_t i) -> std::int64_t {
    switch (bc) {
      case Bcast::BScalar: return 0;
      case Bcast::BRow: return i % cols;
      default: return i;
    }
  };

  for (std::int64_t i = 0; i < n; ++i)
    out[std::size_t(i)] = f(ad[std::size_t(a_index(i))], bd[std::size_t(b_index(i))]);

  Tensor result = Tensor::from(big.shape(), std::move(out));
  if (want_record(a, b)) {
    Tape* tape = Tape::current();
    bool ga = tape->tracks(a), gb = tape->tracks(b);
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = result.impl_ptr();
    tape->record(op, {a, b}, result, [=]() {
      if (ga) ai->ensure_grad();
      if (gb) bi->ensure_grad();
      const auto& g = oi->grad;
      for (std::int64_t i = 0; i < n; ++i) {
        std::size_t ia = std::size_t(a_index(i)), ib = std::size_t(b_index(i));
        double av = ai->data[ia], bv = bi->data[ib], ov = oi->data[std::size_t(i)];
        if (ga) accumulate(ai.get(), ia, g[std::size_t(i)] * dfa(av, bv, ov));
        if (gb) accumulate(bi.get(), ib, g[std::size_t(i)] * dfb(av, bv, ov));
      }
    });
  }
  return result;
}

// Unary elementwise. D gives the local partial as a function of (x, out).
template <class F, class D>
Tensor ew_unary(const char* op, const Tensor& x, F f, D df) {
  const std::int64_t n = x.numel();
  std::vector<double> out(static_cast<std::size_t>(n));
  const auto& xd = x.data();
  for (std::int64_t i = 0; i < n; ++i) out[std::size_t(i)] = f(xd[std::size_t(i)]);
  Tensor result = Tensor::from(x.shape(), std::move(out));
  if (want_record(x)) {
    Tape* tape = Tape::current();
    auto xi = x.impl_ptr(), oi = result.impl_ptr();
    tape->record(op, {x}, result, [=]() {
      xi->ensure_grad();
      const auto& g = oi->grad;
      for (std::int64_t i = 0; i < n; ++i)
        xi->grad[std::size_t(i)] +=
            g[std::size_t(i)] * df(xi->data[std::size_t(i)], oi->data[std::size_t(i)]);
    });
  }
  return result;
}

// Raw kernels. C is always m x n and pre-zeroed by the caller; all three
// accumulate so backward can reuse them.
void mm_nn(const double* A, const double* B, double* C, std::int64_t m,
           std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    double* c = C + i * n;
    const double* arow = A + i * k;
    for (std::int64_t p = 0; p < k; ++p) {
      double av = arow[p];
      const double* brow = B + p * n;
      for (std::int64_t j = 0; j < n; ++j) c[j] += av * brow[j];
    }
  }
}

// C(m x q) += A(m x p) * B(q x p)^T
void mm_nt(const double* A, const double* B, double* C, std::int64_t m,
           std::int64_t p, std::int64_t q) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = A + i * p;
    double* crow = C + i * q;
    for (std::int64_t j = 0; j < q; ++j) {
      const double* brow = B + j * p;
      double s = 0.0;
      for (std::int64_t t = 0; t < p; ++t) s += arow[t] * brow[t];
      crow[j] += s;
    }
  }
}

// C(k x n) += A(m x k)^T * B(m x n)
void mm_tn(const double* A, const double* B, double* C, std::int64_t m,
           std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = A + i * k;
    const double* brow = B + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      double av = arow[p];
      double* crow = C + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

// ---- structural ops -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError("matmul: operands must be rank-2, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::int64_t m = a.shape()[0], k = a.shape()[1];
  const std::int64_t k2 = b.shape()[0], n = b.shape()[1];
  if (k != k2)
    throw DimensionError("matmul: inner dimensions disagree: " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = Tensor::zeros({m, n});
  mm_nn(a.data().data(), b.data().data(), out.mutable_data().data(), m, k, n);
  if (want_record(a, b)) {
    Tape* tape = Tape::current();
    bool ga = tape->tracks(a), gb = tape->tracks(b);
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    tape->record("matmul", {a, b}, out, [=]() {
      if (ga) {
        ai->ensure_grad();
        mm_nt(oi->grad.data(), bi->data.data(), ai->grad.data(), m, n, k);
      }
      if (gb) {
        bi->ensure_grad();
        mm_tn(ai->data.data(), oi->grad.data(), bi->grad.data(), m, k, n);
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2)
    throw DimensionError("transpose: operand must be rank-2, got " +
                         shape_str(x.shape()));
  const std::int64_t m = x.shape()[0], n = x.shape()[1];
  Tensor out = Tensor::zeros({n, m});
  {
    const auto& xd = x.data();
    auto& od = out.mutable_data();
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j)
        od[std::size_t(j * m + i)] = xd[std::size_t(i * n + j)];
  }
  if (want_record(x)) {
    Tape* tape = Tape::current();
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    tape->record("transpose", {x}, out, [=]() {
      xi->ensure_grad();
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j)
          xi->grad[std::size_t(i * n + j)] += oi->grad[std::size_t(j * m + i)];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, std::int64_t c0, std::int64_t c1) {
  if (x.rank() != 2)
    throw DimensionError("slice_cols: operand must be rank-2, got " +
                         shape_str(x.shape()));
  const std::int64_t m = x.shape()[0], n = x.shape()[1];
  if (c0 < 0 || c1 > n || c0 >= c1)
    throw DimensionError("slice_cols: range [" + std::to_string(c0) + "," +
                         std::to_string(c1) + ") invalid for " +
                         shape_str(x.shape()));
  const std::int64_t w = c1 - c0;
  Tensor out = Tensor::zeros({m, w});
  {
    const auto& xd = x.data();
    auto& od = out.mutable_data();
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < w; ++j)
        od[std::size_t(i * w + j)] = xd[std::size_t(i * n + c0 + j)];
  }
  if (want_record(x)) {
    Tape* tape = Tape::current();
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    tape->record("slice_cols", {x}, out, [=]() {
      xi->ensure_grad();
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < w; ++j)
          xi->grad[std::size_t(i * n + c0 + j)] += oi->grad[std::size_t(i * w + j)];
    });
  }
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[0] != b.shape()[0])
    throw DimensionError("concat_cols: need matching row counts, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::int64_t m = a.shape()[0], p = a.shape()[1], q = b.shape()[1];
  Tensor out = Tensor::zeros({m, p + q});
  {
    const auto& adv = a.data();
    const auto& bdv = b.data();
    auto& od = out.mutable_data();
    for (std::int64_t i = 0; i < m; ++i) {
      for (std::int64_t j = 0; j < p; ++j)
        od[std::size_t(i * (p + q) + j)] = adv[std::size_t(i * p + j)];
      for (std::int64_t j = 0; j < q; ++j)
        od[std::size_t(i * (p + q) + p + j)] = bdv[std::size_t(i * q + j)];
    }
  }
  if (want_record(a, b)) {
    Tape* tape = Tape::current();
    bool ga = tape->tracks(a), gb = tape->tracks(b);
    auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
    tape->record("concat_cols", {a, b}, out, [=]() {
      if (ga) ai->ensure_grad();
      if (gb) bi->ensure_grad();
      for (std::int64_t i = 0; i < m; ++i) {
        if (ga)
          for (std::int64_t j = 0; j < p; ++j)
            ai->grad[std::size_t(i * p + j)] += oi->grad[std::size_t(i * (p + q) + j)];
        if (gb)
          for (std::int64_t j = 0; j < q; ++j)
            bi->grad[std::size_t(i * q + j)] +=
                oi->grad[std::size_t(i * (p + q) + p + j)];
      }
    });
  }
  return out;
}

Tensor tile_rows(const Tensor& row, std::int64_t n) {
  View2 v = view2(row);
  if (v.r != 1)
    throw DimensionError("tile_rows: operand must be a single row, got " +
                         shape_str(row.shape()));
  if (n <= 0) throw DimensionError("tile_rows: non-positive row count");
  const std::int64_t c = v.c;
  Tensor out = Tensor::zeros({n, c});
  {
    const auto& rd = row.data();
    auto& od = out.mutable_data();
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < c; ++j) od[std::size_t(i * c + j)] = rd[std::size_t(j)];
  }
  if (want_record(row)) {
    Tape* tape = Tape::current();
    auto ri = row.impl_ptr(), oi = out.impl_ptr();
    tape->record("tile_rows", {row}, out, [=]() {
      ri->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < c; ++j)
          ri->grad[std::size_t(j)] += oi->grad[std::size_t(i * c + j)];
    });
  }
  return out;
}

// ---- elementwise ops ------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Tensor exp(const Tensor& x) {
  return ew_unary(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double o) { return o; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data())
    if (!(v > 0.0))
      throw DomainError("log: non-positive input " + std::to_string(v));
  return ew_unary(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor neg(const Tensor& x) {
  return ew_unary(
      "neg", x, [](double v) { return -v; },
      [](double, double) { return -1.0; });
}

Tensor abs(const Tensor& x) {
  return ew_unary(
      "abs", x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor scale(const Tensor& x, double c) {
  return ew_unary(
      "scale", x, [c](double v) { return c * v; },
      [c](double, double) { return c; });
}

Tensor xlogx(const Tensor& x) {
  for (double v : x.data())
    if (v < 0.0)
      throw DomainError("xlogx: negative input " + std::to_string(v));
  return ew_unary(
      "xlogx", x,
      [](double v) { return v == 0.0 ? 0.0 : v * std::log(v); },
      [](double v, double) { return v == 0.0 ? 0.0 : std::log(v) + 1.0; });
}

Tensor relu(const Tensor& x) {
  return ew_unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return ew_unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double o) { return 1.0 - o * o; });
}

Tensor logistic(const Tensor& x) {
  return ew_unary(
      "logistic", x,
      [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double o) { return o * (1.0 - o); });
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (want_record(x)) {
    Tape* tape = Tape::current();
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    tape->record("sum", {x}, out, [=]() {
      xi->ensure_grad();
      double g = oi->grad[0];
      for (auto& gv : xi->grad) gv += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  const double inv = 1.0 / double(x.numel());
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s * inv);
  if (want_record(x)) {
    Tape* tape = Tape::current();
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    tape->record("mean", {x}, out, [=]() {
      xi->ensure_grad();
      double g = oi->grad[0] * inv;
      for (auto& gv : xi->grad) gv += g;
    });
  }
  return out;
}

Tensor trace(const Tensor& x) {
  if (x.rank() != 2 || x.shape()[0] != x.shape()[1])
    throw DimensionError("trace: operand must be square, got " +
                         shape_str(x.shape()));
  const std::int64_t n = x.shape()[0];
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) s += x.data()[std::size_t(i * n + i)];
  Tensor out = Tensor::scalar(s);
  if (want_record(x)) {
    Tape* tape = Tape::current();
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    tape->record("trace", {x}, out, [=]() {
      xi->ensure_grad();
      double g = oi->grad[0];
      for (std::int64_t i = 0; i < n; ++i) xi->grad[std::size_t(i * n + i)] += g;
    });
  }
  return out;
}

// ---- softmax --------------------------------------------------------------

Tensor softmax(const Tensor& x, int axis) {
  if (x.rank() == 1) {
    if (axis != 0)
      throw DimensionError("softmax: axis " + std::to_string(axis) +
                           " invalid for rank-1");
  } else if (x.rank() == 2) {
    if (axis != 0 && axis != 1)
      throw DimensionError("softmax: axis " + std::to_string(axis) +
                           " invalid for rank-2");
  } else {
    throw DimensionError("softmax: operand must be rank-1 or rank-2, got " +
                         shape_str(x.shape()));
  }

  View2 v = view2(x);
  // Normalize along rows for axis==1 (and for rank-1); along columns for
  // axis==0 on rank-2.
  const bool row_wise = (x.rank() == 1) || (axis == 1);
  const std::int64_t slices = row_wise ? v.r : v.c;
  const std::int64_t len = row_wise ? v.c : v.r;
  auto at_idx = [row_wise, slices, len](std::int64_t s, std::int64_t i) {
    return std::size_t(row_wise ? s * len + i : i * slices + s);
  };

  std::vector<double> out(static_cast<std::size_t>(x.numel()));
  const auto& xd = x.data();
  for (std::int64_t s = 0; s < slices; ++s) {
    double mx = xd[at_idx(s, 0)];
    for (std::int64_t i = 1; i < len; ++i) mx = std::max(mx, xd[at_idx(s, i)]);
    double z = 0.0;
    for (std::int64_t i = 0; i < len; ++i) {
      double e = std::exp(xd[at_idx(s, i)] - mx);
      out[at_idx(s, i)] = e;
      z += e;
    }
    for (std::int64_t i = 0; i < len; ++i) out[at_idx(s, i)] /= z;
  }

  Tensor result = Tensor::from(x.shape(), std::move(out));
  if (want_record(x)) {
    Tape* tape = Tape::current();
    auto xi = x.impl_ptr(), oi = result.impl_ptr();
    tape->record("softmax", {x}, result, [=]() {
      xi->ensure_grad();
      for (std::int64_t s = 0; s < slices; ++s) {
        double dot = 0.0;
        for (std::int64_t i = 0; i < len; ++i)
          dot += oi->grad[at_idx(s, i)] * oi->data[at_idx(s, i)];
        for (std::int64_t i = 0; i < len; ++i)
          xi->grad[at_idx(s, i)] +=
              oi->data[at_idx(s, i)] * (oi->grad[at_idx(s, i)] - dot);
      }
    });
  }
  return result;
}

// ---- grad_check -----------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double eps) {
  if (!(eps > 0.0)) throw ConfigError("grad_check: eps must be positive");

  Tensor xp = x.detached();
  xp.set_requires_grad(true);
  std::vector<double> analytic(std::size_t(xp.numel()), 0.0);
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = f(xp);
    if (loss.numel() != 1)
      throw DimensionError("grad_check: f must return a scalar");
    tape.backward(loss);
    if (xp.has_grad()) analytic = xp.grad();
  }

  double max_err = 0.0;
  auto& xd = xp.mutable_data();
  for (std::size_t i = 0; i < xd.size(); ++i) {
    const double orig = xd[i];
    xd[i] = orig + eps;
    const double fp = f(xp).value();
    xd[i] = orig - eps;
    const double fm = f(xp).value();
    xd[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic[i];
    const double denom =
        std::max({1.0, std::fabs(a), std::fabs(numeric)});
    max_err = std::max(max_err, std::fabs(a - numeric) / denom);
  }
  return max_err;
}

}  // namespace ddmc
