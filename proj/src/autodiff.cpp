#include "spc/autodiff.hpp"

#include <cmath>

#include "spc/error.hpp"
#include "spc/kernels.hpp"

namespace spc::ad {

const Mat&
Var::value() const
{
  return tape->value(*this);
}

void
Tape::check_open() const
{
  if (done_)
    throw Error(Errc::kUseAfterBackward, "tape already consumed by backward()");
}

Var
Tape::input(Mat value)
{
  check_open();
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return {this, int(nodes_.size() - 1)};
}

Var
Tape::constant(Mat value)
{
  check_open();
  Node n;
  n.value = std::move(value);
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return {this, int(nodes_.size() - 1)};
}

Var
Tape::push(Mat value, std::vector<int> parents, Backward bw)
{
  check_open();
  Node n;
  n.value = std::move(value);
  for (int p : parents)
    n.requires_grad |= nodes_[size_t(p)].requires_grad;
  if (n.requires_grad)
    n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return {this, int(nodes_.size() - 1)};
}

Mat&
Tape::grad_slot(int id)
{
  Node& n = nodes_[size_t(id)];
  if (n.grad.empty() && !n.value.empty())
    n.grad = Mat(n.value.rows, n.value.cols);
  return n.grad;
}

void
Tape::accumulate(int id, const Mat& g)
{
  if (!nodes_[size_t(id)].requires_grad)
    return;
  Mat& slot = grad_slot(id);
  for (size_t i = 0; i < slot.size(); ++i)
    slot.data[i] += g.data[i];
}

void
Tape::accumulate_scaled(int id, const Mat& g, double s)
{
  if (!nodes_[size_t(id)].requires_grad)
    return;
  Mat& slot = grad_slot(id);
  for (size_t i = 0; i < slot.size(); ++i)
    slot.data[i] += s * g.data[i];
}

void
Tape::backward(Var out)
{
  check_open();
  const Mat& v = value(out);
  if (v.rows != 1 || v.cols != 1)
    throw Error(Errc::kInvalidArgument, "backward() needs a scalar output");
  done_ = true;
  if (!nodes_[size_t(out.id)].requires_grad)
    return;
  grad_slot(out.id).data[0] = 1.0;
  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[size_t(id)];
    if (!n.requires_grad || n.is_leaf || n.grad.empty())
      continue;
    n.backward(*this, id);
  }
}

Mat
Tape::grad(Var v) const
{
  const Node& n = nodes_[size_t(v.id)];
  if (n.grad.empty())
    return Mat(n.value.rows, n.value.cols);
  return n.grad;
}

std::vector<int>
Tape::select(const std::function<std::vector<int>()>& compute)
{
  if (replay_cursor_ < selections_.size())
    return selections_[replay_cursor_++];
  selections_.push_back(compute());
  replay_cursor_ = selections_.size();
  return selections_.back();
}

void
Tape::replay_selections_from(const Tape& other)
{
  selections_ = other.selections_;
  replay_cursor_ = 0;
}

//============================================================================

namespace {

  void
  require_same(Var a, Var b, const char* op)
  {
    if (a.tape != b.tape)
      throw Error(Errc::kInvalidArgument, std::string(op) + ": different tapes");
    if (!a.value().same_shape(b.value()))
      throw Error(Errc::kInvalidArgument, std::string(op) + ": shape mismatch");
  }

  template<typename F>
  Mat
  map(const Mat& a, F f)
  {
    Mat out(a.rows, a.cols);
    for (size_t i = 0; i < a.size(); ++i)
      out.data[i] = f(a.data[i]);
    return out;
  }

}  // namespace

Var
operator+(Var a, Var b)
{
  require_same(a, b, "add");
  Mat out(a.rows(), a.cols());
  kernels::axpby(1.0, a.value().data.data(), 1.0, b.value().data.data(),
                 out.data.data(), out.size());
  int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad_of(self));
    t.accumulate(ib, t.grad_of(self));
  });
}

Var
operator-(Var a, Var b)
{
  require_same(a, b, "sub");
  Mat out(a.rows(), a.cols());
  kernels::axpby(1.0, a.value().data.data(), -1.0, b.value().data.data(),
                 out.data.data(), out.size());
  int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad_of(self));
    t.accumulate_scaled(ib, t.grad_of(self), -1.0);
  });
}

Var
operator*(Var a, Var b)
{
  require_same(a, b, "mul");
  const Mat& av = a.value();
  const Mat& bv = b.value();
  Mat out(av.rows, av.cols);
  for (size_t i = 0; i < out.size(); ++i)
    out.data[i] = av.data[i] * bv.data[i];
  int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    const Mat& av = t.value({&t, ia});
    const Mat& bv = t.value({&t, ib});
    Mat ga(g.rows, g.cols), gb(g.rows, g.cols);
    for (size_t i = 0; i < g.size(); ++i) {
      ga.data[i] = g.data[i] * bv.data[i];
      gb.data[i] = g.data[i] * av.data[i];
    }
    t.accumulate(ia, ga);
    t.accumulate(ib, gb);
  });
}

Var
operator/(Var a, Var b)
{
  require_same(a, b, "div");
  const Mat& av = a.value();
  const Mat& bv = b.value();
  Mat out(av.rows, av.cols);
  for (size_t i = 0; i < out.size(); ++i)
    out.data[i] = av.data[i] / bv.data[i];
  int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    const Mat& av = t.value({&t, ia});
    const Mat& bv = t.value({&t, ib});
    Mat ga(g.rows, g.cols), gb(g.rows, g.cols);
    for (size_t i = 0; i < g.size(); ++i) {
      ga.data[i] = g.data[i] / bv.data[i];
      gb.data[i] = -g.data[i] * av.data[i] / (bv.data[i] * bv.data[i]);
    }
    t.accumulate(ia, ga);
    t.accumulate(ib, gb);
  });
}

Var
scale(Var a, double s)
{
  Mat out = map(a.value(), [s](double x) { return s * x; });
  int ia = a.id;
  return a.tape->push(std::move(out), {ia}, [ia, s](Tape& t, int self) {
    t.accumulate_scaled(ia, t.grad_of(self), s);
  });
}

Var
add_scalar(Var a, double s)
{
  Mat out = map(a.value(), [s](double x) { return x + s; });
  int ia = a.id;
  return a.tape->push(std::move(out), {ia}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.grad_of(self));
  });
}

Var
affine(double a, Var x, double b, Var y)
{
  require_same(x, y, "affine");
  Mat out(x.rows(), x.cols());
  kernels::axpby(a, x.value().data.data(), b, y.value().data.data(),
                 out.data.data(), out.size());
  int ix = x.id, iy = y.id;
  return x.tape->push(std::move(out), {ix, iy}, [ix, iy, a, b](Tape& t, int self) {
    t.accumulate_scaled(ix, t.grad_of(self), a);
    t.accumulate_scaled(iy, t.grad_of(self), b);
  });
}

Var
sqrt(Var a)
{
  Mat out = map(a.value(), [](double x) { return std::sqrt(x); });
  int ia = a.id;
  return a.tape->push(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    const Mat& y = t.value({&t, self});
    Mat ga(g.rows, g.cols);
    for (size_t i = 0; i < g.size(); ++i)
      ga.data[i] = y.data[i] > 0 ? g.data[i] * 0.5 / y.data[i] : 0.0;
    t.accumulate(ia, ga);
  });
}

Var
abs(Var a)
{
  Mat out = map(a.value(), [](double x) { return std::abs(x); });
  int ia = a.id;
  return a.tape->push(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    const Mat& x = t.value({&t, ia});
    Mat ga(g.rows, g.cols);
    for (size_t i = 0; i < g.size(); ++i) {
      double s = x.data[i] > 0 ? 1.0 : (x.data[i] < 0 ? -1.0 : 0.0);
      ga.data[i] = g.data[i] * s;
    }
    t.accumulate(ia, ga);
  });
}

Var
tanh(Var a)
{
  Mat out = map(a.value(), [](double x) { return std::tanh(x); });
  int ia = a.id;
  return a.tape->push(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    const Mat& y = t.value({&t, self});
    Mat ga(g.rows, g.cols);
    for (size_t i = 0; i < g.size(); ++i)
      ga.data[i] = g.data[i] * (1.0 - y.data[i] * y.data[i]);
    t.accumulate(ia, ga);
  });
}

Var
relu(Var a)
{
  Mat out = map(a.value(), [](double x) { return x > 0 ? x : 0.0; });
  int ia = a.id;
  return a.tape->push(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    const Mat& x = t.value({&t, ia});
    Mat ga(g.rows, g.cols);
    for (size_t i = 0; i < g.size(); ++i)
      ga.data[i] = x.data[i] > 0 ? g.data[i] : 0.0;
    t.accumulate(ia, ga);
  });
}

Var
sum(Var a)
{
  double s = 0;
  for (double v : a.value().data)
    s += v;
  Mat out(1, 1, s);
  int ia = a.id;
  return a.tape->push(std::move(out), {ia}, [ia](Tape& t, int self) {
    double g = t.grad_of(self).data[0];
    const Mat& x = t.value({&t, ia});
    t.accumulate(ia, Mat(x.rows, x.cols, g));
  });
}

Var
mean(Var a)
{
  const double n = double(a.value().size());
  if (n == 0)
    throw Error(Errc::kInvalidArgument, "mean of an empty matrix");
  return scale(sum(a), 1.0 / n);
}

Var
row_sum(Var a)
{
  const Mat& x = a.value();
  Mat out(x.rows, 1);
  for (size_t r = 0; r < x.rows; ++r) {
    double s = 0;
    for (double v : x.row(r))
      s += v;
    out(r, 0) = s;
  }
  int ia = a.id;
  return a.tape->push(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    const Mat& x = t.value({&t, ia});
    Mat ga(x.rows, x.cols);
    for (size_t r = 0; r < x.rows; ++r)
      for (size_t c = 0; c < x.cols; ++c)
        ga(r, c) = g(r, 0);
    t.accumulate(ia, ga);
  });
}

Var
row_norm(Var a)
{
  const Mat& x = a.value();
  Mat out(x.rows, 1);
  for (size_t r = 0; r < x.rows; ++r) {
    double s = 0;
    for (double v : x.row(r))
      s += v * v;
    out(r, 0) = std::sqrt(s);
  }
  int ia = a.id;
  return a.tape->push(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    const Mat& x = t.value({&t, ia});
    const Mat& y = t.value({&t, self});
    Mat ga(x.rows, x.cols);
    for (size_t r = 0; r < x.rows; ++r) {
      if (y(r, 0) == 0)
        continue;
      double s = g(r, 0) / y(r, 0);
      for (size_t c = 0; c < x.cols; ++c)
        ga(r, c) = s * x(r, c);
    }
    t.accumulate(ia, ga);
  });
}

Var
matmul(Var a, Var b)
{
  const Mat& av = a.value();
  const Mat& bv = b.value();
  if (a.tape != b.tape || av.cols != bv.rows)
    throw Error(Errc::kInvalidArgument, "matmul: shape mismatch");
  Mat out(av.rows, bv.cols);
  kernels::gemm_acc(av.data.data(), bv.data.data(), out.data.data(), av.rows,
                    av.cols, bv.cols);
  int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    const Mat& av = t.value({&t, ia});
    const Mat& bv = t.value({&t, ib});
    if (t.requires_grad({&t, ia})) {
      // dA = G * B^T
      Mat bt(bv.cols, bv.rows);
      for (size_t r = 0; r < bv.rows; ++r)
        for (size_t c = 0; c < bv.cols; ++c)
          bt(c, r) = bv(r, c);
      Mat& ga = t.grad_slot(ia);
      kernels::gemm_acc(g.data.data(), bt.data.data(), ga.data.data(), g.rows,
                        g.cols, bt.cols);
    }
    if (t.requires_grad({&t, ib})) {
      // dB = A^T * G
      Mat& gb = t.grad_slot(ib);
      kernels::gemm_tn_acc(av.data.data(), g.data.data(), gb.data.data(),
                           av.rows, av.cols, g.cols);
    }
  });
}

Var
add_row(Var a, Var row)
{
  const Mat& x = a.value();
  const Mat& r = row.value();
  if (a.tape != row.tape || r.rows != 1 || r.cols != x.cols)
    throw Error(Errc::kInvalidArgument, "add_row: shape mismatch");
  Mat out = x;
  for (size_t i = 0; i < x.rows; ++i)
    for (size_t c = 0; c < x.cols; ++c)
      out(i, c) += r(0, c);
  int ia = a.id, ir = row.id;
  return a.tape->push(std::move(out), {ia, ir}, [ia, ir](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    t.accumulate(ia, g);
    Mat gr(1, g.cols);
    for (size_t i = 0; i < g.rows; ++i)
      for (size_t c = 0; c < g.cols; ++c)
        gr(0, c) += g(i, c);
    t.accumulate(ir, gr);
  });
}

Var
mul_col(Var a, Var col)
{
  const Mat& x = a.value();
  const Mat& c = col.value();
  if (a.tape != col.tape || c.cols != 1 || c.rows != x.rows)
    throw Error(Errc::kInvalidArgument, "mul_col: shape mismatch");
  Mat out(x.rows, x.cols);
  for (size_t i = 0; i < x.rows; ++i)
    for (size_t k = 0; k < x.cols; ++k)
      out(i, k) = x(i, k) * c(i, 0);
  int ia = a.id, ic = col.id;
  return a.tape->push(std::move(out), {ia, ic}, [ia, ic](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    const Mat& x = t.value({&t, ia});
    const Mat& c = t.value({&t, ic});
    Mat ga(x.rows, x.cols), gc(c.rows, 1);
    for (size_t i = 0; i < x.rows; ++i)
      for (size_t k = 0; k < x.cols; ++k) {
        ga(i, k) = g(i, k) * c(i, 0);
        gc(i, 0) += g(i, k) * x(i, k);
      }
    t.accumulate(ia, ga);
    t.accumulate(ic, gc);
  });
}

Var
div_col(Var a, Var col)
{
  const Mat& x = a.value();
  const Mat& c = col.value();
  if (a.tape != col.tape || c.cols != 1 || c.rows != x.rows)
    throw Error(Errc::kInvalidArgument, "div_col: shape mismatch");
  Mat out(x.rows, x.cols);
  for (size_t i = 0; i < x.rows; ++i)
    for (size_t k = 0; k < x.cols; ++k)
      out(i, k) = x(i, k) / c(i, 0);
  int ia = a.id, ic = col.id;
  return a.tape->push(std::move(out), {ia, ic}, [ia, ic](Tape& t, int self) {
    const Mat& g = t.grad_of(self);
    const Mat& x = t.value({&t, ia});
    const Mat& c = t.value({&t, ic});
    Mat ga(x.rows, x.cols), gc(c.rows, 1);
    for (size_t i = 0; i < x.rows; ++i) {
      double inv = 1.0 / c(i, 0);
      for (size_t k = 0; k < x.cols; ++k) {
        ga(i, k) = g(i, k) * inv;
        gc(i, 0) -= g(i, k) * x(i, k) * inv * inv;
      }
    }
    t.accumulate(ia, ga);
    t.accumulate(ic, gc);
  });
}

Var
gather_rows(Var src, std::span<const int> idx)
{
  const Mat& x = src.value();
  for (int i : idx)
    if (i < 0 || size_t(i) >= x.rows)
      throw Error(Errc::kInvalidArgument, "gather_rows: index out of range");
  Mat out = spc::gather_rows(x, idx);
  int is = src.id;
  std::vector<int> rows(idx.begin(), idx.end());
  return src.tape->push(
    std::move(out), {is}, [is, rows = std::move(rows)](Tape& t, int self) {
      const Mat& g = t.grad_of(self);
      Mat& gs = t.grad_slot(is);
      for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < g.cols; ++c)
          gs(size_t(rows[r]), c) += g(r, c);
    });
}

Var
weighted_rows(Var w, std::span<const int> idx, Var src)
{
  const Mat& wv = w.value();
  const Mat& sv = src.value();
  if (w.tape != src.tape || idx.size() != wv.size())
    throw Error(Errc::kInvalidArgument, "weighted_rows: shape mismatch");
  for (int i : idx)
    if (i < 0 || size_t(i) >= sv.rows)
      throw Error(Errc::kInvalidArgument, "weighted_rows: index out of range");
  const size_t k = wv.cols;
  Mat out(wv.rows, sv.cols);
  for (size_t s = 0; s < wv.rows; ++s)
    for (size_t j = 0; j < k; ++j) {
      double a = wv(s, j);
      auto r = sv.row(size_t(idx[s * k + j]));
      for (size_t c = 0; c < sv.cols; ++c)
        out(s, c) += a * r[c];
    }
  int iw = w.id, is = src.id;
  std::vector<int> rows(idx.begin(), idx.end());
  return w.tape->push(
    std::move(out), {iw, is}, [iw, is, rows = std::move(rows)](Tape& t, int self) {
      const Mat& g = t.grad_of(self);
      const Mat& wv = t.value({&t, iw});
      const Mat& sv = t.value({&t, is});
      const size_t k = wv.cols;
      if (t.requires_grad({&t, iw})) {
        Mat& gw = t.grad_slot(iw);
        for (size_t s = 0; s < wv.rows; ++s)
          for (size_t j = 0; j < k; ++j) {
            auto r = sv.row(size_t(rows[s * k + j]));
            double d = 0;
            for (size_t c = 0; c < sv.cols; ++c)
              d += g(s, c) * r[c];
            gw(s, j) += d;
          }
      }
      if (t.requires_grad({&t, is})) {
        Mat& gs = t.grad_slot(is);
        for (size_t s = 0; s < wv.rows; ++s)
          for (size_t j = 0; j < k; ++j) {
            double a = wv(s, j);
            size_t r = size_t(rows[s * k + j]);
            for (size_t c = 0; c < sv.cols; ++c)
              gs(r, c) += a * g(s, c);
          }
      }
    });
}

Var
sinusoidal_embedding(Var t, size_t dim)
{
  const Mat& tv = t.value();
  if (tv.rows != 1 || tv.cols != 1 || dim < 2 || dim % 2 != 0)
    throw Error(Errc::kInvalidArgument, "sinusoidal_embedding: bad shape");
  const size_t half = dim / 2;
  std::vector<double> freq(half);
  for (size_t i = 0; i < half; ++i)
    freq[i] = std::exp(-std::log(10000.0) * double(i) / double(half));
  const double x = tv(0, 0);
  Mat out(1, dim);
  for (size_t i = 0; i < half; ++i) {
    out(0, 2 * i) = std::sin(x * freq[i]);
    out(0, 2 * i + 1) = std::cos(x * freq[i]);
  }
  int it = t.id;
  return t.tape->push(
    std::move(out), {it}, [it, freq = std::move(freq)](Tape& tp, int self) {
      const Mat& g = tp.grad_of(self);
      const double x = tp.value({&tp, it})(0, 0);
      double d = 0;
      for (size_t i = 0; i < freq.size(); ++i) {
        d += g(0, 2 * i) * freq[i] * std::cos(x * freq[i]);
        d -= g(0, 2 * i + 1) * freq[i] * std::sin(x * freq[i]);
      }
      tp.accumulate(it, Mat(1, 1, d));
    });
}

}  // namespace spc::ad
