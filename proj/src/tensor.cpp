#include "stylecal/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif
#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace stylecal {

namespace {

// Subnormal doubles stall the x86 FPU by two orders of magnitude, and
// gradients through saturated activations routinely underflow into that
// range, making iteration cost depend on the values flowing through the
// tape. Flushing subnormals to zero keeps throughput uniform; the magnitudes
// involved (< 1e-308) are far below anything the losses resolve.
//
// The tape also allocates and frees multi-megabyte buffers every iteration;
// with glibc's default thresholds each one becomes an mmap/munmap pair plus
// zero-fill page faults. Raising the thresholds keeps the buffers on the
// reused heap.
const bool kNumericEnv = [] {
#if defined(__SSE2__)
  _mm_setcsr(_mm_getcsr() | 0x8040);  // FTZ | DAZ
#endif
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return true;
}();

}  // namespace

int shape_size(const Shape& s) {
  int n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

namespace {

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw std::invalid_argument("shape mismatch in " + op + ": " + shape_str(a) +
                              " vs " + shape_str(b));
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

// Row-vector bias broadcast: b conforms to a when b is rank-1 of width
// cols(a) or rank-2 [1,cols(a)], and a is rank 2.
bool row_broadcastable(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2) return false;
  if (b.rank() == 1 && b.shape[0] == a.shape[1]) return true;
  if (b.rank() == 2 && b.shape[0] == 1 && b.shape[1] == a.shape[1]) return true;
  return false;
}

bool is_scalar(const Tensor& t) { return t.size() == 1; }

Tape* common_tape(const Tensor& a, const Tensor& b) {
  if (a.tape && b.tape && a.tape != b.tape)
    throw std::logic_error("tensors belong to different tapes");
  return a.tape ? a.tape : b.tape;
}

// Sum grad over rows to match a broadcast row vector / scalar input.
Array reduce_to(const Array& g, const Shape& out_shape, int input_size) {
  if (input_size == shape_size(out_shape)) return g;
  if (input_size == 1) {
    Array r(1);
    r[0] = g.sum();
    return r;
  }
  // row-vector case
  int cols = input_size;
  int rows = static_cast<int>(g.size()) / cols;
  Eigen::Map<const MatRM> gm(g.data(), rows, cols);
  Eigen::VectorXd col_sum = gm.colwise().sum();
  return Array(Eigen::Map<const Array>(col_sum.data(), cols));
}

}  // namespace

double Tensor::scalar() const {
  if (size() != 1) throw std::invalid_argument("scalar() on tensor of shape " + shape_str(shape));
  return data[0];
}

Tensor Tensor::zeros(Shape s) { return constant(std::move(s), 0.0); }

Tensor Tensor::constant(Shape s, double v) {
  int n = shape_size(s);
  return Tensor(std::move(s), Array::Constant(n, v));
}

Tensor Tensor::scalar_value(double v) { return constant({}, v); }

Tensor Tensor::row(const Eigen::VectorXd& v) {
  return Tensor({static_cast<int>(v.size())},
                Array(Eigen::Map<const Array>(v.data(), v.size())));
}

Tensor Tensor::from_mat(const MatRM& m) {
  return Tensor({static_cast<int>(m.rows()), static_cast<int>(m.cols())},
                Array(Eigen::Map<const Array>(m.data(), m.size())));
}

Tensor Tape::leaf(const Tensor& value) { return leaf(value.shape, value.data); }

Tensor Tape::leaf(Shape s, const Array& d) {
  if (shape_size(s) != d.size())
    throw std::invalid_argument("leaf data size does not match shape " + shape_str(s));
  Tensor t(std::move(s), d);
  t.tape = this;
  t.node = push({"leaf", t.shape, nullptr});
  return t;
}

int Tape::push(TapeNode node) {
  nodes_.push_back(std::move(node));
  grads_.emplace_back();
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::accumulate(int node_id, const Array& g) {
  Array& buf = grads_[node_id];
  if (buf.size() == 0)
    buf = g;
  else
    buf += g;
}

void Tape::backward(const Tensor& scalar_out) {
  if (scalar_out.size() != 1)
    throw std::invalid_argument("backward requires a scalar output, got shape " +
                                shape_str(scalar_out.shape));
  if (!scalar_out.tracked() || scalar_out.tape != this)
    throw std::logic_error("backward on a tensor not tracked by this tape");
  if (nodes_.empty()) throw std::logic_error("backward on empty tape");
  for (auto& g : grads_) g.resize(0);
  grads_[scalar_out.node] = Array::Constant(1, 1.0);
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    if (grads_[i].size() == 0) continue;
    if (nodes_[i].backward) nodes_[i].backward(*this, grads_[i]);
  }
}

const Array& Tape::grad(const Tensor& t) const {
  if (!t.tracked() || t.tape != this)
    throw std::logic_error("grad of a tensor not tracked by this tape");
  return grads_[t.node];
}

bool Tape::has_grad(const Tensor& t) const {
  return t.tracked() && t.tape == this && grads_[t.node].size() != 0;
}

namespace {

Tensor make_result(const std::string& op, Shape shape, Array data, Tape* tape,
                   std::function<void(Tape&, const Array&)> backward) {
  Tensor out(std::move(shape), std::move(data));
  if (tape) {
    out.tape = tape;
    out.node = tape->push({op, out.shape, std::move(backward)});
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  // commute so broadcastable side is b
  if ((is_scalar(a) && !is_scalar(b)) || row_broadcastable(b, a)) return add(b, a);
  Array out;
  if (same_shape(a.shape, b.shape)) {
    out = a.data + b.data;
  } else if (is_scalar(b)) {
    out = a.data + b.data[0];
  } else if (row_broadcastable(a, b)) {
    MatRM m = a.mat();
    m.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data.data(), b.size());
    out = Eigen::Map<const Array>(m.data(), m.size());
  } else {
    shape_error("add", a.shape, b.shape);
  }
  Tape* tape = common_tape(a, b);
  int an = a.node, bn = b.node;
  Shape osh = a.shape;
  int bsize = b.size();
  return make_result("add", a.shape, std::move(out), tape,
                     [an, bn, osh, bsize](Tape& t, const Array& g) {
                       if (an >= 0) t.accumulate(an, g);
                       if (bn >= 0) t.accumulate(bn, reduce_to(g, osh, bsize));
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Array out;
  if (same_shape(a.shape, b.shape)) {
    out = a.data - b.data;
  } else if (is_scalar(b)) {
    out = a.data - b.data[0];
  } else if (is_scalar(a)) {
    out = a.data[0] - b.data;
  } else if (row_broadcastable(a, b)) {
    MatRM m = a.mat();
    m.rowwise() -= Eigen::Map<const Eigen::RowVectorXd>(b.data.data(), b.size());
    out = Eigen::Map<const Array>(m.data(), m.size());
  } else {
    shape_error("sub", a.shape, b.shape);
  }
  Shape osh = is_scalar(a) && !is_scalar(b) ? b.shape : a.shape;
  Tape* tape = common_tape(a, b);
  int an = a.node, bn = b.node;
  int asize = a.size(), bsize = b.size();
  return make_result("sub", osh, std::move(out), tape,
                     [an, bn, asize, bsize, osh](Tape& t, const Array& g) {
                       if (an >= 0) t.accumulate(an, reduce_to(g, osh, asize));
                       if (bn >= 0) t.accumulate(bn, Array(-reduce_to(g, osh, bsize)));
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (is_scalar(a) && !is_scalar(b)) return mul(b, a);
  Array out;
  if (same_shape(a.shape, b.shape)) {
    out = a.data * b.data;
  } else if (is_scalar(b)) {
    out = a.data * b.data[0];
  } else {
    shape_error("elementwise-mul", a.shape, b.shape);
  }
  Tape* tape = common_tape(a, b);
  int an = a.node, bn = b.node;
  Array av = a.data, bv = b.data;
  Shape osh = a.shape;
  int bsize = b.size();
  return make_result("elementwise-mul", a.shape, std::move(out), tape,
                     [an, bn, av, bv, osh, bsize](Tape& t, const Array& g) {
                       if (an >= 0) {
                         if (bv.size() == 1)
                           t.accumulate(an, Array(g * bv[0]));
                         else
                           t.accumulate(an, Array(g * bv));
                       }
                       if (bn >= 0) {
                         Array gb = g * av;
                         t.accumulate(bn, reduce_to(gb, osh, bsize));
                       }
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    shape_error("matmul", a.shape, b.shape);
  MatRM out = a.mat() * b.mat();
  Tape* tape = common_tape(a, b);
  int an = a.node, bn = b.node;
  Array av = a.data, bv = b.data;
  int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  return make_result(
      "matmul", {m, n}, Array(Eigen::Map<const Array>(out.data(), out.size())), tape,
      [an, bn, av, bv, m, k, n](Tape& t, const Array& g) {
        Eigen::Map<const MatRM> gm(g.data(), m, n);
        if (an >= 0) {
          Eigen::Map<const MatRM> bm(bv.data(), k, n);
          MatRM ga = gm * bm.transpose();
          t.accumulate(an, Array(Eigen::Map<const Array>(ga.data(), ga.size())));
        }
        if (bn >= 0) {
          Eigen::Map<const MatRM> am(av.data(), m, k);
          MatRM gb = am.transpose() * gm;
          t.accumulate(bn, Array(Eigen::Map<const Array>(gb.data(), gb.size())));
        }
      });
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  Tape* tape = common_tape(a, b);
  int an = a.node, bn = b.node;
  if (a.rank() == 1 && b.rank() == 1 && axis == 0) {
    Array out(a.size() + b.size());
    out << a.data, b.data;
    int na = a.size(), nb = b.size();
    return make_result("concat", {na + nb}, std::move(out), tape,
                       [an, bn, na, nb](Tape& t, const Array& g) {
                         if (an >= 0) t.accumulate(an, Array(g.head(na)));
                         if (bn >= 0) t.accumulate(bn, Array(g.tail(nb)));
                       });
  }
  if (a.rank() != 2 || b.rank() != 2) shape_error("concat", a.shape, b.shape);
  if (axis == 1) {
    if (a.shape[0] != b.shape[0]) shape_error("concat", a.shape, b.shape);
    int r = a.shape[0], ca = a.shape[1], cb = b.shape[1];
    MatRM out(r, ca + cb);
    out << a.mat(), b.mat();
    return make_result(
        "concat", {r, ca + cb}, Array(Eigen::Map<const Array>(out.data(), out.size())),
        tape, [an, bn, r, ca, cb](Tape& t, const Array& g) {
          Eigen::Map<const MatRM> gm(g.data(), r, ca + cb);
          if (an >= 0) {
            MatRM ga = gm.leftCols(ca);
            t.accumulate(an, Array(Eigen::Map<const Array>(ga.data(), ga.size())));
          }
          if (bn >= 0) {
            MatRM gb = gm.rightCols(cb);
            t.accumulate(bn, Array(Eigen::Map<const Array>(gb.data(), gb.size())));
          }
        });
  }
  if (axis == 0) {
    if (a.shape[1] != b.shape[1]) shape_error("concat", a.shape, b.shape);
    int c = a.shape[1], ra = a.shape[0], rb = b.shape[0];
    Array out(a.size() + b.size());
    out << a.data, b.data;
    int na = a.size(), nb = b.size();
    return make_result("concat", {ra + rb, c}, std::move(out), tape,
                       [an, bn, na, nb](Tape& t, const Array& g) {
                         if (an >= 0) t.accumulate(an, Array(g.head(na)));
                         if (bn >= 0) t.accumulate(bn, Array(g.tail(nb)));
                       });
  }
  throw std::invalid_argument("concat: unsupported axis " + std::to_string(axis));
}

Tensor slice(const Tensor& t, int axis, int start, int len) {
  if (axis < 0 || axis >= std::max(1, t.rank()))
    throw std::invalid_argument("slice: bad axis " + std::to_string(axis));
  int dim = t.rank() == 0 ? 1 : t.shape[axis];
  if (start < 0 || len < 1 || start + len > dim)
    throw std::invalid_argument("slice: range [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") out of bounds for dim " +
                                std::to_string(dim));
  int tn = t.node;
  if (t.rank() == 1 || t.rank() == 0) {
    Array out = t.data.segment(start, len);
    int total = t.size();
    return make_result("slice", {len}, std::move(out), t.tape,
                       [tn, start, len, total](Tape& tp, const Array& g) {
                         if (tn < 0) return;
                         Array full = Array::Zero(total);
                         full.segment(start, len) = g;
                         tp.accumulate(tn, full);
                       });
  }
  int r = t.shape[0], c = t.shape[1];
  if (axis == 1) {
    MatRM out = t.mat().block(0, start, r, len);
    return make_result(
        "slice", {r, len}, Array(Eigen::Map<const Array>(out.data(), out.size())), t.tape,
        [tn, start, len, r, c](Tape& tp, const Array& g) {
          if (tn < 0) return;
          Eigen::Map<const MatRM> gm(g.data(), r, len);
          MatRM full = MatRM::Zero(r, c);
          full.block(0, start, r, len) = gm;
          tp.accumulate(tn, Array(Eigen::Map<const Array>(full.data(), full.size())));
        });
  }
  // axis == 0: contiguous rows
  Array out = t.data.segment(start * c, len * c);
  int total = t.size();
  int off = start * c, cnt = len * c;
  return make_result("slice", {len, c}, std::move(out), t.tape,
                     [tn, off, cnt, total](Tape& tp, const Array& g) {
                       if (tn < 0) return;
                       Array full = Array::Zero(total);
                       full.segment(off, cnt) = g;
                       tp.accumulate(tn, full);
                     });
}

Tensor sum(const Tensor& t) {
  Array out(1);
  out[0] = t.data.sum();
  int tn = t.node, n = t.size();
  return make_result("sum", {}, std::move(out), t.tape,
                     [tn, n](Tape& tp, const Array& g) {
                       if (tn >= 0) tp.accumulate(tn, Array(Array::Constant(n, g[0])));
                     });
}

Tensor mean(const Tensor& t) {
  Array out(1);
  out[0] = t.data.mean();
  int tn = t.node, n = t.size();
  return make_result("mean", {}, std::move(out), t.tape,
                     [tn, n](Tape& tp, const Array& g) {
                       if (tn >= 0)
                         tp.accumulate(tn, Array(Array::Constant(n, g[0] / n)));
                     });
}

namespace {

Tensor unary(const std::string& op, const Tensor& t, Array out,
             std::function<Array(const Array& g, const Array& saved)> back,
             Array saved) {
  int tn = t.node;
  return make_result(op, t.shape, std::move(out), t.tape,
                     [tn, back = std::move(back), saved = std::move(saved)](
                         Tape& tp, const Array& g) {
                       if (tn >= 0) tp.accumulate(tn, back(g, saved));
                     });
}

}  // namespace

Tensor tanh_op(const Tensor& t) {
  Array y = t.data.tanh();
  return unary("tanh", t, y,
               [](const Array& g, const Array& y) { return Array(g * (1.0 - y.square())); },
               y);
}

Tensor sigmoid(const Tensor& t) {
  Array y = 0.5 * (0.5 * t.data).tanh() + 0.5;  // stable logistic
  return unary("sigmoid", t, y,
               [](const Array& g, const Array& y) { return Array(g * y * (1.0 - y)); },
               y);
}

Tensor exp_op(const Tensor& t) {
  Array y = t.data.exp();
  return unary("exp", t, y,
               [](const Array& g, const Array& y) { return Array(g * y); }, y);
}

Tensor log_op(const Tensor& t) {
  Array y = t.data.log();
  return unary("log", t, y,
               [](const Array& g, const Array& x) { return Array(g / x); }, t.data);
}

Tensor softmax(const Tensor& t) {
  int r = t.rank() == 2 ? t.shape[0] : 1;
  int c = t.rank() == 2 ? t.shape[1] : t.size();
  MatRM p(r, c);
  Eigen::Map<const MatRM> x(t.data.data(), r, c);
  for (int i = 0; i < r; ++i) {
    Eigen::RowVectorXd e = (x.row(i).array() - x.row(i).maxCoeff()).exp();
    p.row(i) = e / e.sum();
  }
  Array out = Eigen::Map<const Array>(p.data(), p.size());
  int tn = t.node;
  Array pv = out;
  return make_result("softmax", t.shape, std::move(out), t.tape,
                     [tn, pv, r, c](Tape& tp, const Array& g) {
                       if (tn < 0) return;
                       Eigen::Map<const MatRM> gm(g.data(), r, c);
                       Eigen::Map<const MatRM> pm(pv.data(), r, c);
                       MatRM gx(r, c);
                       for (int i = 0; i < r; ++i) {
                         double dot = gm.row(i).dot(pm.row(i));
                         gx.row(i) = pm.row(i).array() * (gm.row(i).array() - dot);
                       }
                       tp.accumulate(tn, Array(Eigen::Map<const Array>(gx.data(), gx.size())));
                     });
}

Tensor negate(const Tensor& t) {
  return unary("negate", t, Array(-t.data),
               [](const Array& g, const Array&) { return Array(-g); }, Array());
}

Tensor scale(const Tensor& t, double c) {
  return unary("scale", t, Array(t.data * c),
               [c](const Array& g, const Array&) { return Array(g * c); }, Array());
}

Tensor square(const Tensor& t) {
  return unary("square", t, Array(t.data.square()),
               [](const Array& g, const Array& x) { return Array(g * 2.0 * x); }, t.data);
}

double grad_check(const std::function<Tensor(Tape&, std::vector<Tensor>&)>& fn,
                  const std::vector<Tensor>& point, double eps) {
  if (eps <= 0) throw std::invalid_argument("grad_check: eps must be positive");
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(point.size());
  for (const auto& p : point) leaves.push_back(tape.leaf(p));
  Tensor out = fn(tape, leaves);
  if (!out.data.allFinite()) throw std::runtime_error("grad_check: non-finite output");
  tape.backward(out);

  double max_err = 0.0;
  std::vector<Tensor> work = point;
  for (std::size_t i = 0; i < work.size(); ++i) {
    const Array* analytic = nullptr;
    Array zero;
    if (tape.has_grad(leaves[i])) {
      analytic = &tape.grad(leaves[i]);
    } else {
      zero = Array::Zero(work[i].size());
      analytic = &zero;
    }
    for (int j = 0; j < work[i].size(); ++j) {
      double orig = work[i].data[j];
      auto f_at = [&](double v) {
        work[i].data[j] = v;
        Tape t2;
        std::vector<Tensor> ws;
        for (auto& w : work) ws.push_back(t2.leaf(w));
        Tensor o = fn(t2, ws);
        if (!o.data.allFinite())
          throw std::runtime_error("grad_check: non-finite intermediate");
        return o.scalar();
      };
      double fp = f_at(orig + eps);
      double fm = f_at(orig - eps);
      work[i].data[j] = orig;
      double fd = (fp - fm) / (2 * eps);
      double err = std::abs((*analytic)[j] - fd) / std::max(1.0, std::abs(fd));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace stylecal
