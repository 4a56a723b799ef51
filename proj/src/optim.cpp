#include "ge/optim.hpp"

#include <cmath>
#include <string>

#include "ge/error.hpp"

namespace ge {

namespace {

void check_grads(const char* op, const std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size())
    throw DimensionError(std::string(op) + ": " + std::to_string(params.size()) + " params but " +
                         std::to_string(grads.size()) + " gradients");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape())
      throw DimensionError(std::string(op) + ": param " + std::to_string(i) + " has shape " +
                           to_string(params[i].shape()) + ", gradient " + to_string(grads[i].shape()));
    for (double g : grads[i].data())
      if (!std::isfinite(g)) throw NumericError(std::string(op) + ": non-finite gradient for param " + std::to_string(i));
  }
}

}  // namespace

void adam_step(AdamState& s, std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  check_grads("adam_step", params, grads);
  if (s.m.empty()) {
    for (const auto& p : params) {
      s.m.emplace_back(p.numel(), 0.0);
      s.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (s.m.size() != params.size()) throw DimensionError("adam_step: state tracks a different parameter count");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (s.m[i].size() != params[i].numel())
      throw DimensionError("adam_step: moment size mismatch for param " + std::to_string(i));

  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = grads[i].data();
    auto theta = params[i].to_vector();
    auto& m = s.m[i];
    auto& v = s.v[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = s.beta1 * m[j] + (1.0 - s.beta1) * g[j];
      v[j] = s.beta2 * v[j] + (1.0 - s.beta2) * g[j] * g[j];
      theta[j] -= s.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + s.epsilon);
      if (!std::isfinite(theta[j])) throw NumericError("adam_step: parameter became non-finite");
    }
    params[i] = Tensor(params[i].shape(), std::move(theta));
  }
}

void sgd_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, double lr) {
  check_grads("sgd_step", params, grads);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].to_vector();
    auto g = grads[i].data();
    for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= lr * g[j];
    params[i] = Tensor(params[i].shape(), std::move(theta));
  }
}

}  // namespace ge
