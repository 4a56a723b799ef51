#pragma once

// Dense float64 tensors with a tape-based reverse-mode differentiator.
//
// Tensors are immutable values. An operation is recorded on the thread's
// active Tape only when at least one operand is tracked by that tape, so
// forward passes over constants cost nothing extra.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace ge {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tape;

class Tensor {
 public:
  static constexpr std::size_t kNoNode = static_cast<std::size_t>(-1);

  // Scalar zero.
  Tensor();
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_->size(); }
  std::size_t rank() const { return shape_.size(); }
  std::span<const double> data() const { return *data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  // Value of a one-element tensor.
  double item() const;

  // Copy of the values with no tape attachment.
  Tensor detached() const { return Tensor(Shared{}, shape_, data_); }
  std::vector<double> to_vector() const { return *data_; }

  // True when this tensor is a node of the thread's active tape.
  bool tracked() const;
  std::size_t node() const { return node_; }
  std::uint64_t tape_id() const { return tape_id_; }

 private:
  friend class Tape;
  struct Shared {};
  Tensor(Shared, Shape shape, std::shared_ptr<const std::vector<double>> data)
      : shape_(std::move(shape)), data_(std::move(data)) {}

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  std::uint64_t tape_id_ = 0;
  std::size_t node_ = kNoNode;
};

// Local gradient rule of a recorded operation: given dLoss/dOutput, add
// dLoss/dInput_i into grad_inputs[i]. A span is empty when input i does
// not need a gradient.
using BackwardFn = std::function<void(std::span<const double> grad_output,
                                      std::span<const std::span<double>> grad_inputs)>;

class Gradients {
 public:
  // Gradient of the loss with respect to a watched leaf.
  const Tensor& of(const Tensor& leaf) const;
  bool contains(const Tensor& leaf) const;
  std::size_t size() const { return by_node_.size(); }

 private:
  friend class Tape;
  std::uint64_t tape_id_ = 0;
  std::unordered_map<std::size_t, Tensor> by_node_;
};

// Append-only record of operations. Constructing a Tape makes it the
// active tape of the current thread until it is destroyed; tapes nest.
// One forward+backward pass owns one tape.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  // Registers a trainable leaf and returns the tracked copy.
  Tensor watch(const Tensor& leaf);

  // Reverse sweep from a scalar loss. Consumes the tape.
  Gradients backward(const Tensor& loss);

  bool owns(const Tensor& t) const { return t.tape_id_ == id_ && t.node_ != Tensor::kNoNode; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Used by op implementations; see record_op.
  Tensor record(Shape shape, std::shared_ptr<const std::vector<double>> data,
                std::vector<std::size_t> inputs, BackwardFn backward);

 private:
  struct Node {
    Shape shape;
    std::vector<std::size_t> inputs;  // kNoNode for constant operands
    BackwardFn backward;              // empty for leaves
    bool leaf = false;
  };

  std::vector<Node> nodes_;
  std::uint64_t id_;
  Tape* previous_;
  bool consumed_ = false;
};

// Builds the result of an operation, checks it is finite, and records it on
// the active tape if any of `inputs` is tracked.
Tensor record_op(const char* name, Shape shape, std::vector<double> data,
                 std::initializer_list<const Tensor*> inputs, BackwardFn backward);

// ---- arithmetic -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

enum class Elementwise { add, sub, mul, scale, elu, tanh, sigmoid };

// Second operand: none (unary kinds), a same-shape tensor (add/sub/mul) or
// a scalar (scale, and add/sub/mul with a constant).
using Operand = std::variant<std::monostate, Tensor, double>;

Tensor elementwise(Elementwise kind, const Tensor& a, const Operand& b = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor elu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// Mean of squared differences (a scalar).
Tensor mse(const Tensor& a, const Tensor& b);
// Mean of absolute differences (a scalar).
Tensor mean_abs_diff(const Tensor& a, const Tensor& b);
// Sum of squares.
Tensor sq_l2(const Tensor& a);
Tensor sum(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
// Rows [begin, end) along the leading dimension.
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
// Stacks equal-shape tensors along a new leading dimension.
Tensor stack(std::span<const Tensor> parts);

// max over coordinates of |AD - central difference| / max(1, |central difference|).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double step = 1e-5);

}  // namespace ge
