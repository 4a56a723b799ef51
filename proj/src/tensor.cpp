#include "ge/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ge/error.hpp"

namespace ge {

namespace {

thread_local Tape* t_current_tape = nullptr;
std::atomic<std::uint64_t> g_next_tape_id{1};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor -----------------------------------------------------------------

Tensor::Tensor() : data_(std::make_shared<const std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape_));
  }
  if (data.size() != ge::numel(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + to_string(shape_));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  auto n = ge::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + to_string(shape_));
  return (*data_)[0];
}

bool Tensor::tracked() const {
  auto* tape = Tape::current();
  return tape != nullptr && tape->owns(*this);
}

// ---- Gradients --------------------------------------------------------------

const Tensor& Gradients::of(const Tensor& leaf) const {
  if (leaf.tape_id() == tape_id_) {
    auto it = by_node_.find(leaf.node());
    if (it != by_node_.end()) return it->second;
  }
  throw ContractError("no gradient recorded for tensor of shape " + to_string(leaf.shape()));
}

bool Gradients::contains(const Tensor& leaf) const {
  return leaf.tape_id() == tape_id_ && by_node_.count(leaf.node()) != 0;
}

// ---- Tape -------------------------------------------------------------------

Tape::Tape() : id_(g_next_tape_id++), previous_(t_current_tape) { t_current_tape = this; }

Tape::~Tape() { t_current_tape = previous_; }

Tape* Tape::current() { return t_current_tape; }

Tensor Tape::watch(const Tensor& leaf) {
  if (consumed_) throw ContractError("watch() on a consumed tape");
  nodes_.push_back(Node{leaf.shape(), {}, {}, true});
  Tensor out(Tensor::Shared{}, leaf.shape_, leaf.data_);
  out.tape_id_ = id_;
  out.node_ = nodes_.size() - 1;
  return out;
}

Tensor Tape::record(Shape shape, std::shared_ptr<const std::vector<double>> data,
                    std::vector<std::size_t> inputs, BackwardFn backward) {
  if (consumed_) throw ContractError("recording on a consumed tape");
  nodes_.push_back(Node{shape, std::move(inputs), std::move(backward), false});
  Tensor out(Tensor::Shared{}, std::move(shape), std::move(data));
  out.tape_id_ = id_;
  out.node_ = nodes_.size() - 1;
  return out;
}

Gradients Tape::backward(const Tensor& loss) {
  if (consumed_) throw ContractError("backward() called twice on the same tape");
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (!owns(loss)) throw ContractError("backward(): loss is not recorded on this tape");
  consumed_ = true;

  std::vector<std::vector<double>> grads(nodes_.size());
  grads[loss.node()] = {1.0};
  std::vector<std::span<double>> spans;
  for (std::size_t i = loss.node() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (grads[i].empty() || node.leaf) continue;
    spans.assign(node.inputs.size(), std::span<double>());
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      auto in = node.inputs[k];
      if (in == Tensor::kNoNode) continue;
      if (grads[in].empty()) grads[in].assign(ge::numel(nodes_[in].shape), 0.0);
      spans[k] = grads[in];
    }
    node.backward(grads[i], spans);
    grads[i].clear();
    grads[i].shrink_to_fit();
  }

  Gradients out;
  out.tape_id_ = id_;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].leaf) continue;
    auto& g = grads[i];
    if (g.empty()) g.assign(ge::numel(nodes_[i].shape), 0.0);
    out.by_node_.emplace(i, Tensor(nodes_[i].shape, std::move(g)));
  }
  return out;
}

Tensor record_op(const char* name, Shape shape, std::vector<double> data,
                 std::initializer_list<const Tensor*> inputs, BackwardFn backward) {
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericError(std::string(name) + ": non-finite result");
  }
  auto* tape = Tape::current();
  std::vector<std::size_t> ids;
  bool any = false;
  if (tape != nullptr) {
    ids.reserve(inputs.size());
    for (const Tensor* t : inputs) {
      bool own = tape->owns(*t);
      any = any || own;
      ids.push_back(own ? t->node() : Tensor::kNoNode);
    }
  }
  if (!any) return Tensor(std::move(shape), std::move(data));
  if (data.size() != ge::numel(shape)) throw DimensionError(std::string(name) + ": bad result size");
  return tape->record(std::move(shape), std::make_shared<const std::vector<double>>(std::move(data)),
                      std::move(ids), std::move(backward));
}

// ---- ops --------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  const auto r = a.shape()[0], k = a.shape()[1], c = b.shape()[1];
  std::vector<double> out(r * c);
  ConstMap ma(a.data().data(), r, k), mb(b.data().data(), k, c);
  MutMap(out.data(), r, c).noalias() = ma * mb;
  return record_op("matmul", {r, c}, std::move(out), {&a, &b},
                   [a, b, r, k, c](std::span<const double> g, std::span<const std::span<double>> gi) {
                     ConstMap mg(g.data(), r, c);
                     if (!gi[0].empty()) {
                       MutMap(gi[0].data(), r, k).noalias() += mg * ConstMap(b.data().data(), k, c).transpose();
                     }
                     if (!gi[1].empty()) {
                       MutMap(gi[1].data(), k, c).noalias() += ConstMap(a.data().data(), r, k).transpose() * mg;
                     }
                   });
}

namespace {

template <typename F>
std::vector<double> map_values(const Tensor& a, F f) {
  std::vector<double> out(a.numel());
  auto d = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(d[i]);
  return out;
}

Tensor binary(Elementwise kind, const Tensor& a, const Tensor& b) {
  const char* name = kind == Elementwise::add ? "add" : kind == Elementwise::sub ? "sub" : "mul";
  require_same_shape(name, a, b);
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  switch (kind) {
    case Elementwise::add:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
      return record_op("add", a.shape(), std::move(out), {&a, &b},
                       [](std::span<const double> g, std::span<const std::span<double>> gi) {
                         for (auto s : gi)
                           for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[i];
                       });
    case Elementwise::sub:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
      return record_op("sub", a.shape(), std::move(out), {&a, &b},
                       [](std::span<const double> g, std::span<const std::span<double>> gi) {
                         for (std::size_t i = 0; i < gi[0].size(); ++i) gi[0][i] += g[i];
                         for (std::size_t i = 0; i < gi[1].size(); ++i) gi[1][i] -= g[i];
                       });
    case Elementwise::mul:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
      return record_op("mul", a.shape(), std::move(out), {&a, &b},
                       [a, b](std::span<const double> g, std::span<const std::span<double>> gi) {
                         auto x = a.data(), y = b.data();
                         for (std::size_t i = 0; i < gi[0].size(); ++i) gi[0][i] += g[i] * y[i];
                         for (std::size_t i = 0; i < gi[1].size(); ++i) gi[1][i] += g[i] * x[i];
                       });
    default:
      throw ContractError("binary(): not a binary kind");
  }
}

Tensor with_scalar(Elementwise kind, const Tensor& a, double s) {
  switch (kind) {
    case Elementwise::add:
    case Elementwise::sub: {
      double shift = kind == Elementwise::add ? s : -s;
      return record_op("add_scalar", a.shape(), map_values(a, [shift](double v) { return v + shift; }),
                       {&a}, [](std::span<const double> g, std::span<const std::span<double>> gi) {
                         for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i];
                       });
    }
    case Elementwise::mul:
    case Elementwise::scale:
      return record_op("scale", a.shape(), map_values(a, [s](double v) { return v * s; }), {&a},
                       [s](std::span<const double> g, std::span<const std::span<double>> gi) {
                         for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += s * g[i];
                       });
    default:
      throw ContractError("elementwise: unary kind given a scalar operand");
  }
}

Tensor unary(Elementwise kind, const Tensor& a) {
  switch (kind) {
    case Elementwise::elu:
      return record_op("elu", a.shape(),
                       map_values(a, [](double v) { return v > 0.0 ? v : std::expm1(v); }), {&a},
                       [a](std::span<const double> g, std::span<const std::span<double>> gi) {
                         auto x = a.data();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           gi[0][i] += g[i] * (x[i] > 0.0 ? 1.0 : std::exp(x[i]));
                       });
    case Elementwise::tanh: {
      auto out = map_values(a, [](double v) { return std::tanh(v); });
      auto y = std::make_shared<std::vector<double>>(out);
      return record_op("tanh", a.shape(), std::move(out), {&a},
                       [y](std::span<const double> g, std::span<const std::span<double>> gi) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           gi[0][i] += g[i] * (1.0 - (*y)[i] * (*y)[i]);
                       });
    }
    case Elementwise::sigmoid: {
      auto out = map_values(a, [](double v) { return 1.0 / (1.0 + std::exp(-v)); });
      auto y = std::make_shared<std::vector<double>>(out);
      return record_op("sigmoid", a.shape(), std::move(out), {&a},
                       [y](std::span<const double> g, std::span<const std::span<double>> gi) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           gi[0][i] += g[i] * (*y)[i] * (1.0 - (*y)[i]);
                       });
    }
    default:
      throw ContractError("elementwise: binary kind needs a second operand");
  }
}

}  // namespace

Tensor elementwise(Elementwise kind, const Tensor& a, const Operand& b) {
  if (std::holds_alternative<Tensor>(b)) {
    if (kind == Elementwise::scale) throw ContractError("scale takes a scalar factor");
    return binary(kind, a, std::get<Tensor>(b));
  }
  if (std::holds_alternative<double>(b)) return with_scalar(kind, a, std::get<double>(b));
  return unary(kind, a);
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::mul, a, b); }
Tensor scale(const Tensor& a, double s) { return elementwise(Elementwise::scale, a, s); }
Tensor elu(const Tensor& a) { return elementwise(Elementwise::elu, a); }
Tensor tanh(const Tensor& a) { return elementwise(Elementwise::tanh, a); }
Tensor sigmoid(const Tensor& a) { return elementwise(Elementwise::sigmoid, a); }

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same_shape("mse", a, b);
  const double n = static_cast<double>(a.numel());
  auto x = a.data(), y = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
  return record_op("mse", {}, {acc / n}, {&a, &b},
                   [a, b, n](std::span<const double> g, std::span<const std::span<double>> gi) {
                     auto x = a.data(), y = b.data();
                     const double c = 2.0 * g[0] / n;
                     for (std::size_t i = 0; i < gi[0].size(); ++i) gi[0][i] += c * (x[i] - y[i]);
                     for (std::size_t i = 0; i < gi[1].size(); ++i) gi[1][i] -= c * (x[i] - y[i]);
                   });
}

Tensor mean_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape("mean_abs_diff", a, b);
  const double n = static_cast<double>(a.numel());
  auto x = a.data(), y = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += std::abs(x[i] - y[i]);
  return record_op("mean_abs_diff", {}, {acc / n}, {&a, &b},
                   [a, b, n](std::span<const double> g, std::span<const std::span<double>> gi) {
                     auto x = a.data(), y = b.data();
                     const double c = g[0] / n;
                     for (std::size_t i = 0; i < x.size(); ++i) {
                       double d = x[i] - y[i];
                       double s = d > 0.0 ? c : (d < 0.0 ? -c : 0.0);
                       if (!gi[0].empty()) gi[0][i] += s;
                       if (!gi[1].empty()) gi[1][i] -= s;
                     }
                   });
}

Tensor sq_l2(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v * v;
  return record_op("sq_l2", {}, {acc}, {&a},
                   [a](std::span<const double> g, std::span<const std::span<double>> gi) {
                     auto x = a.data();
                     for (std::size_t i = 0; i < x.size(); ++i) gi[0][i] += 2.0 * g[0] * x[i];
                   });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return record_op("sum", {}, {acc}, {&a},
                   [](std::span<const double> g, std::span<const std::span<double>> gi) {
                     for (auto& v : gi[0]) v += g[0];
                   });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
  }
  return record_op("reshape", std::move(shape), a.to_vector(), {&a},
                   [](std::span<const double> g, std::span<const std::span<double>> gi) {
                     for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i];
                   });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() == 0 || begin >= end || end > a.shape()[0]) {
    throw DimensionError("slice_rows: bad range on " + to_string(a.shape()));
  }
  const std::size_t row = a.numel() / a.shape()[0];
  Shape shape = a.shape();
  shape[0] = end - begin;
  auto d = a.data();
  std::vector<double> out(d.begin() + begin * row, d.begin() + end * row);
  return record_op("slice_rows", std::move(shape), std::move(out), {&a},
                   [begin, row](std::span<const double> g, std::span<const std::span<double>> gi) {
                     for (std::size_t i = 0; i < g.size(); ++i) gi[0][begin * row + i] += g[i];
                   });
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("stack: no tensors");
  const Shape& inner = parts[0].shape();
  const std::size_t row = parts[0].numel();
  std::vector<double> out;
  out.reserve(row * parts.size());
  for (const auto& p : parts) {
    if (p.shape() != inner) throw DimensionError("stack: mixed shapes");
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  Shape shape{parts.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());

  // record_op takes an initializer list, so tracked stacks go through the tape directly.
  auto* tape = Tape::current();
  std::vector<std::size_t> ids;
  bool any = false;
  if (tape != nullptr) {
    for (const auto& p : parts) {
      bool own = tape->owns(p);
      any = any || own;
      ids.push_back(own ? p.node() : Tensor::kNoNode);
    }
  }
  if (!any) return Tensor(std::move(shape), std::move(out));
  return tape->record(std::move(shape), std::make_shared<const std::vector<double>>(std::move(out)),
                      std::move(ids),
                      [row](std::span<const double> g, std::span<const std::span<double>> gi) {
                        for (std::size_t k = 0; k < gi.size(); ++k)
                          for (std::size_t i = 0; i < gi[k].size(); ++i) gi[k][i] += g[k * row + i];
                      });
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step) {
  Tensor analytic;
  {
    Tape tape;
    Tensor xw = tape.watch(x);
    Tensor y = f(xw);
    if (y.numel() != 1) throw ContractError("grad_check: f must return a scalar");
    if (!std::isfinite(y.item())) throw NumericError("grad_check: f is not finite at x");
    if (!tape.owns(y)) return 0.0;  // f does not depend on x
    analytic = tape.backward(y).of(xw);
  }
  auto base = x.to_vector();
  double worst = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto probe = base;
    probe[i] = base[i] + step;
    double up = f(Tensor(x.shape(), probe)).item();
    probe[i] = base[i] - step;
    double down = f(Tensor(x.shape(), probe)).item();
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("grad_check: f is not finite near coordinate " + std::to_string(i));
    }
    double fd = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

}  // namespace ge
