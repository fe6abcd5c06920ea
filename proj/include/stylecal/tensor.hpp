#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

namespace stylecal {

using Shape = std::vector<int>;
using Array = Eigen::ArrayXd;
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

int shape_size(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

/// Dense 64-bit real array, flat row-major storage. Participates in
/// reverse-mode differentiation when attached to a tape.
struct Tensor {
  Shape shape;
  Array data;
  Tape* tape = nullptr;
  int node = -1;

  Tensor() = default;
  Tensor(Shape s, Array d) : shape(std::move(s)), data(std::move(d)) {}

  bool tracked() const { return tape != nullptr; }
  int size() const { return static_cast<int>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const { return rank() == 2 ? shape[0] : 1; }
  int cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 1); }

  Eigen::Map<const MatRM> mat() const {
    return Eigen::Map<const MatRM>(data.data(), rows(), cols());
  }
  double scalar() const;

  static Tensor zeros(Shape s);
  static Tensor constant(Shape s, double v);
  static Tensor scalar_value(double v);
  static Tensor row(const Eigen::VectorXd& v);
  static Tensor from_mat(const MatRM& m);
};

/// Append-only record of one forward operation: enough saved state to
/// push gradients back to its inputs.
struct TapeNode {
  std::string op;
  Shape out_shape;
  // Accumulates into tape gradient buffers for the node's inputs.
  std::function<void(Tape&, const Array& grad_out)> backward;
};

/// Single-writer tape. Node ids are topologically ordered by construction;
/// backward() visits them exactly once in reverse.
class Tape {
 public:
  Tensor leaf(const Tensor& value);
  Tensor leaf(Shape s, const Array& d);

  int push(TapeNode node);
  void accumulate(int node_id, const Array& g);

  // Seeds d(scalar)/d(scalar) = 1 and runs the reverse sweep.
  void backward(const Tensor& scalar_out);

  const Array& grad(const Tensor& t) const;
  bool has_grad(const Tensor& t) const;
  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  std::vector<TapeNode> nodes_;
  std::vector<Array> grads_;
};

// Elementwise binary ops. add/sub broadcast a trailing row vector or a
// scalar on either side; mul broadcasts scalars only.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor slice(const Tensor& t, int axis, int start, int len);

Tensor sum(const Tensor& t);
Tensor mean(const Tensor& t);

Tensor tanh_op(const Tensor& t);
Tensor sigmoid(const Tensor& t);
Tensor exp_op(const Tensor& t);
Tensor log_op(const Tensor& t);
Tensor softmax(const Tensor& t);  // row-wise for rank 2
Tensor negate(const Tensor& t);
Tensor scale(const Tensor& t, double c);
Tensor square(const Tensor& t);

/// Central-difference gradient check. `fn` must rebuild its computation on
/// the given tape from the leaf tensors it is handed. Returns the max over
/// all coordinates of |analytic - fd| / max(1, |fd|).
double grad_check(
    const std::function<Tensor(Tape&, std::vector<Tensor>&)>& fn,
    const std::vector<Tensor>& point, double eps);

}  // namespace stylecal
