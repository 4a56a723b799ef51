#include "ge/lasso.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <numbers>

#include "ge/error.hpp"
#include "ge/rng.hpp"

namespace ge {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

Eigen::Map<const Mat> as_mat(const Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.shape()[0]), static_cast<Eigen::Index>(t.shape()[1])};
}

Eigen::Map<const Vec> as_vec(const Tensor& t) { return {t.data().data(), static_cast<Eigen::Index>(t.numel())}; }

Tensor from_vec(const Vec& v) { return Tensor({static_cast<std::size_t>(v.size())}, {v.data(), v.data() + v.size()}); }

void shrink(Vec& v, double tau) {
  for (auto& x : v) x = x > tau ? x - tau : (x < -tau ? x + tau : 0.0);
}

double objective(const Eigen::Map<const Mat>& a, const Eigen::Map<const Vec>& b, const Vec& beta, double alpha) {
  return (a * beta - b).squaredNorm() + alpha * beta.lpNorm<1>();
}

void check_problem(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2) throw DimensionError("lasso: A must be a matrix, got " + to_string(a.shape()));
  if (b.numel() != a.shape()[0])
    throw DimensionError("lasso: A has " + std::to_string(a.shape()[0]) + " rows but b has " + std::to_string(b.numel()));
}

}  // namespace

Dictionary build_dct_dictionary(std::size_t height, std::size_t width, int oc, std::size_t channels) {
  if (height < 1 || width < 1 || oc < 1 || channels < 1) throw ConfigError("dct dictionary: sizes must be >= 1");
  auto atoms = [oc](std::size_t n) {
    const std::size_t p = static_cast<std::size_t>(oc) * n;
    Mat d(n, p);
    for (std::size_t k = 0; k < p; ++k) {
      for (std::size_t i = 0; i < n; ++i) d(i, k) = std::cos(std::numbers::pi * k * (2.0 * i + 1.0) / (2.0 * p));
      d.col(k).normalize();
    }
    return d;
  };
  const Mat dy = atoms(height), dx = atoms(width);
  const std::size_t plane = height * width, pp = dy.cols() * dx.cols();
  std::vector<double> psi(channels * plane * channels * pp, 0.0);
  const std::size_t cols = channels * pp;
  for (std::size_t c = 0; c < channels; ++c)
    for (Eigen::Index ky = 0; ky < dy.cols(); ++ky)
      for (Eigen::Index kx = 0; kx < dx.cols(); ++kx) {
        const std::size_t col = c * pp + ky * dx.cols() + kx;
        for (std::size_t y = 0; y < height; ++y)
          for (std::size_t x = 0; x < width; ++x) psi[(c * plane + y * width + x) * cols + col] = dy(y, ky) * dx(x, kx);
      }
  return {Tensor({channels * plane, cols}, std::move(psi)), channels, height, width, oc};
}

Tensor soft_threshold(const Tensor& v, double tau) {
  if (tau < 0.0) throw ConfigError("soft_threshold: tau must be >= 0");
  auto out = v.to_vector();
  for (auto& x : out) x = x > tau ? x - tau : (x < -tau ? x + tau : 0.0);
  return Tensor(v.shape(), std::move(out));
}

double lasso_objective(const Tensor& a, const Tensor& b, const Tensor& beta, double alpha) {
  check_problem(a, b);
  if (beta.numel() != a.shape()[1]) throw DimensionError("lasso_objective: beta length does not match A");
  return objective(as_mat(a), as_vec(b), as_vec(beta), alpha);
}

double spectral_norm_sq(const Tensor& a, std::size_t iterations, std::uint64_t seed) {
  const auto m = as_mat(a);
  Rng rng(seed);
  Vec v(m.cols());
  for (auto& x : v) x = rng.normal();
  double lambda = 0.0;
  for (std::size_t i = 0; i < std::max<std::size_t>(iterations, 1); ++i) {
    v.normalize();
    Vec w = m.transpose() * (m * v);
    lambda = v.dot(w);
    if (w.norm() == 0.0) return 0.0;
    v = w;
  }
  return lambda;
}

LassoResult lasso_solve(const Tensor& a_t, const Tensor& b_t, const LassoConfig& cfg) {
  check_problem(a_t, b_t);
  if (!(cfg.alpha > 0.0)) throw ConfigError("lasso: alpha must be positive");
  if (cfg.step < 0.0) throw ConfigError("lasso: step must be positive");
  const auto a = as_mat(a_t);
  const auto b = as_vec(b_t);
  double step = cfg.step;
  if (step == 0.0) {
    // Power iteration approaches the top eigenvalue from below; pad it.
    const double l = 1.05 * spectral_norm_sq(a_t, cfg.power_iterations);
    step = l > 0.0 ? 1.0 / (2.0 * l) : 1.0;
  }

  LassoResult out;
  out.step = step;
  Vec beta = Vec::Zero(a.cols()), y = beta;
  double f = objective(a, b, beta, cfg.alpha), t = 1.0;
  out.objective.push_back(f);
  auto check = [&](double before, double after, std::size_t it) {
    if (after > before + 1e-12 * std::max(1.0, std::abs(before)))
      throw ConfigError("lasso: objective increased at iteration " + std::to_string(it) + " (" + std::to_string(before) +
                        " -> " + std::to_string(after) + "); step size " + std::to_string(step) + " is too large");
  };

  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    const Vec& base = cfg.fista ? y : beta;
    Vec z = base - step * 2.0 * (a.transpose() * (a * base - b));
    shrink(z, step * cfg.alpha);
    const double fz = objective(a, b, z, cfg.alpha);
    double f_next = fz;
    if (cfg.fista) {
      // Monotone variant: keep the better of the prox point and the last iterate.
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      Vec next = fz <= f ? z : beta;
      f_next = std::min(fz, f);
      y = next + (t / t_next) * (z - next) + ((t - 1.0) / t_next) * (next - beta);
      beta = std::move(next);
      t = t_next;
    } else {
      check(f, fz, it);
      beta = std::move(z);
    }
    out.objective.push_back(f_next);
    const double prev = f;
    f = f_next;
    if (cfg.tolerance > 0.0 && prev - f <= cfg.tolerance * std::max(1.0, std::abs(prev)) && !cfg.fista) break;
  }
  out.beta = from_vec(beta);
  out.x_hat = out.beta;
  return out;
}

LassoResult lasso_solve(const Tensor& a, const Tensor& b, const Dictionary& dict, const LassoConfig& cfg) {
  if (a.rank() != 2 || a.shape()[1] != dict.p())
    throw DimensionError("lasso: A must have one column per dictionary atom (" + std::to_string(dict.p()) + ")");
  auto out = lasso_solve(a, b, cfg);
  Vec x = as_mat(dict.psi) * as_vec(out.beta);
  out.x_hat = Tensor({dict.channels, dict.height, dict.width}, {x.data(), x.data() + x.size()});
  return out;
}

Tensor compose_sensing(const Tensor& phi, const Dictionary& dict) {
  if (phi.rank() != 2 || phi.shape()[1] != dict.n())
    throw DimensionError("compose_sensing: sensing matrix needs " + std::to_string(dict.n()) + " columns");
  Mat ap = as_mat(phi) * as_mat(dict.psi);
  return Tensor({phi.shape()[0], dict.p()}, {ap.data(), ap.data() + ap.size()});
}

Tensor pseudo_inverse_apply(const Dictionary& dict, const Tensor& x) {
  if (x.numel() != dict.n()) throw DimensionError("pseudo_inverse_apply: x length must equal dictionary rows");
  const auto psi = as_mat(dict.psi);
  Mat gram = psi * psi.transpose();
  gram.diagonal().array() += 1e-10;
  Vec c = psi.transpose() * gram.ldlt().solve(as_vec(x).eval());
  return from_vec(c);
}

}  // namespace ge
