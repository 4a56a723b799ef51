#include "ge/lasso.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ge/error.hpp"
#include "lasso_oracle.hpp"
#include "test_util.hpp"

namespace ge {
namespace {

double col_dot(const Tensor& psi, std::size_t i, std::size_t j) {
  const std::size_t n = psi.shape()[0], p = psi.shape()[1];
  double s = 0.0;
  for (std::size_t r = 0; r < n; ++r) s += psi[r * p + i] * psi[r * p + j];
  return s;
}

TEST(Dictionary, OrthonormalAtOvercompletenessOne) {
  auto d = build_dct_dictionary(4, 4, 1);
  ASSERT_EQ(d.p(), 16u);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) EXPECT_NEAR(col_dot(d.psi, i, j), i == j ? 1.0 : 0.0, 1e-10);
  for (std::size_t r = 0; r < 16; ++r) EXPECT_NEAR(d.psi[r * 16], 0.25, 1e-15);  // DC atom
}

TEST(Dictionary, UnitColumnsAndClosedForm) {
  auto d = build_dct_dictionary(6, 5, 2, 2);
  EXPECT_EQ(d.n(), 60u);
  EXPECT_EQ(d.p(), 2u * 12 * 10);
  for (std::size_t j = 0; j < d.p(); ++j) EXPECT_NEAR(col_dot(d.psi, j, j), 1.0, 1e-10);
  // atom (ky, kx) in channel 1 at pixel (y, x)
  auto atom = [](std::size_t k, std::size_t i, std::size_t n, std::size_t p) {
    double norm = 0.0;
    for (std::size_t t = 0; t < n; ++t) norm += std::pow(std::cos(std::numbers::pi * k * (2.0 * t + 1) / (2.0 * p)), 2);
    return std::cos(std::numbers::pi * k * (2.0 * i + 1) / (2.0 * p)) / std::sqrt(norm);
  };
  for (std::size_t ky : {0u, 3u, 11u})
    for (std::size_t kx : {0u, 7u, 9u})
      for (std::size_t y : {0u, 2u, 5u})
        for (std::size_t x : {1u, 4u}) {
          const std::size_t row = 30 + y * 5 + x, col = 120 + ky * 10 + kx;
          EXPECT_NEAR(d.psi[row * d.p() + col], atom(ky, y, 6, 12) * atom(kx, x, 5, 10), 1e-12);
          EXPECT_EQ(d.psi[(y * 5 + x) * d.p() + col], 0.0);  // other channel block
        }
}

TEST(SoftThreshold, Examples) {
  Tensor v({3}, {0.05, -0.3, 0.7});
  EXPECT_EQ(soft_threshold(v, 0.0).to_vector(), v.to_vector());
  auto s = soft_threshold(v, 0.1);
  EXPECT_EQ(s[0], 0.0);
  EXPECT_NEAR(s[1], -0.2, 1e-15);
  EXPECT_NEAR(s[2], 0.6, 1e-15);
}

TEST(LassoSolve, ZeroData) {
  Tensor a = testing::random_tensor({5, 8}, 1);
  auto r = lasso_solve(a, Tensor::zeros({5}), LassoConfig{});
  for (double v : r.beta.data()) EXPECT_EQ(v, 0.0);
}

TEST(LassoSolve, OrthonormalDesignShrinksByHalfAlpha) {
  auto q = build_dct_dictionary(3, 3, 1).psi;  // orthonormal 9x9
  std::vector<double> beta0(9, 0.0);
  beta0[1] = 2.0;
  beta0[4] = -1.5;
  beta0[7] = 0.9;
  std::vector<double> b(9, 0.0);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) b[i] += q[i * 9 + j] * beta0[j];
  LassoConfig cfg;
  cfg.alpha = 0.1;
  cfg.iterations = 200;
  auto r = lasso_solve(q, Tensor({9}, b), cfg);
  for (int j = 0; j < 9; ++j) {
    const double want = beta0[j] == 0.0 ? 0.0 : beta0[j] - 0.05 * (beta0[j] > 0 ? 1 : -1);
    EXPECT_NEAR(r.beta[j], want, 1e-10) << j;
  }
}

TEST(LassoSolve, MatchesExhaustiveSolver) {
  Rng rng(8);
  for (int t = 0; t < 30; ++t) {
    const std::size_t p = rng.uniform_int(3, 9), m = rng.uniform_int(2, 10);
    Tensor a = testing::random_tensor({m, p}, rng), b = testing::random_tensor({m}, rng);
    const double alpha = rng.uniform(0.01, 0.5);
    LassoConfig cfg;
    cfg.alpha = alpha;
    cfg.iterations = 200000;
    cfg.tolerance = 1e-15;
    auto r = lasso_solve(a, b, cfg);
    auto exact = testing::exact_lasso(a, b, alpha);
    EXPECT_LT(lasso_objective(a, b, r.beta, alpha) - exact.objective, 1e-6) << "instance " << t;
    EXPECT_GE(lasso_objective(a, b, r.beta, alpha) - exact.objective, -1e-9);
  }
}

TEST(LassoSolve, RecoversSupportUnderGaussianDesign) {
  Rng rng(3);
  const std::size_t p = 12, s = 2, m = static_cast<std::size_t>(std::ceil(4 * s * std::log(p)));
  // A random design can violate the irrepresentable condition, in which case
  // even the exact minimizer picks up extra atoms; most draws do not.
  int recovered = 0;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> a(m * p);
    for (auto& v : a) v = rng.normal() / std::sqrt(static_cast<double>(m));
    std::vector<double> beta0(p, 0.0);
    std::size_t i = rng.uniform_int(0, p - 1), j = (i + 1 + rng.uniform_int(0, p - 2)) % p;
    beta0[i] = rng.uniform(1.0, 2.0);
    beta0[j] = -rng.uniform(1.0, 2.0);
    std::vector<double> b(m, 0.0);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < p; ++c) b[r] += a[r * p + c] * beta0[c];
    LassoConfig cfg;
    cfg.alpha = 0.01;
    cfg.iterations = 20000;
    auto res = lasso_solve(Tensor({m, p}, a), Tensor({m}, b), cfg);
    auto exact = testing::exact_lasso(Tensor({m, p}, a), Tensor({m}, b), cfg.alpha);
    bool same = true;
    for (std::size_t c = 0; c < p; ++c) {
      EXPECT_EQ(res.beta[c] != 0.0, exact.beta[c] != 0.0) << "trial " << t << " coef " << c;
      same = same && (res.beta[c] != 0.0) == (beta0[c] != 0.0);
    }
    recovered += same;
  }
  EXPECT_GE(recovered, 16);
}

TEST(LassoSolve, ObjectiveMonotoneAndLargeAlphaGivesZero) {
  Tensor a = testing::random_tensor({6, 10}, 4), b = testing::random_tensor({6}, 5);
  for (bool fista : {false, true}) {
    LassoConfig cfg;
    cfg.fista = fista;
    cfg.iterations = 300;
    auto r = lasso_solve(a, b, cfg);
    for (std::size_t i = 1; i < r.objective.size(); ++i) EXPECT_LE(r.objective[i], r.objective[i - 1] + 1e-12);
  }
  LassoConfig big;
  big.alpha = 1e6;
  for (double v : lasso_solve(a, b, big).beta.to_vector()) EXPECT_EQ(v, 0.0);
}

TEST(LassoSolve, OversizedStepIsAConfigError) {
  Tensor a = testing::random_tensor({6, 6}, 4, 1.0, 2.0), b = testing::random_tensor({6}, 5);
  LassoConfig cfg;
  cfg.step = 10.0;
  EXPECT_THROW(lasso_solve(a, b, cfg), ConfigError);
  EXPECT_THROW(lasso_solve(a, Tensor::zeros({5}), LassoConfig{}), DimensionError);
}

TEST(SpectralNorm, MatchesDiagonal) {
  Tensor a({3, 3}, {3, 0, 0, 0, -2, 0, 0, 0, 1});
  EXPECT_NEAR(spectral_norm_sq(a, 200), 9.0, 1e-9);
}

TEST(PseudoInverse, Identities) {
  auto ortho = build_dct_dictionary(3, 4, 1);
  Tensor x = testing::random_tensor({12}, 1);
  auto c = pseudo_inverse_apply(ortho, x);
  for (std::size_t j = 0; j < 12; ++j) {
    double want = 0.0;
    for (std::size_t r = 0; r < 12; ++r) want += ortho.psi[r * 12 + j] * x[r];
    EXPECT_NEAR(c[j], want, 1e-8);
  }
  auto over = build_dct_dictionary(6, 6, 2);
  Tensor y = testing::random_tensor({36}, 2);
  auto cy = pseudo_inverse_apply(over, y);
  for (std::size_t r = 0; r < 36; ++r) {
    double back = 0.0;
    for (std::size_t j = 0; j < over.p(); ++j) back += over.psi[r * over.p() + j] * cy[j];
    EXPECT_NEAR(back, y[r], 1e-8);
  }
  for (double v : pseudo_inverse_apply(over, Tensor::zeros({36})).to_vector()) EXPECT_EQ(v, 0.0);
}

TEST(LassoSolve, DictionaryPipelineShapes) {
  auto d = build_dct_dictionary(4, 4, 2);
  Rng rng(1);
  std::vector<double> phi(8 * 16);
  for (auto& v : phi) v = rng.normal() / std::sqrt(8.0);
  Tensor x = testing::random_tensor({16}, 3);
  Tensor ap = compose_sensing(Tensor({8, 16}, phi), d);
  EXPECT_EQ(ap.shape(), (Shape{8, 64}));
  std::vector<double> b(8, 0.0);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 16; ++j) b[i] += phi[i * 16 + j] * x[j];
  auto r = lasso_solve(ap, Tensor({8}, b), d, LassoConfig{});
  EXPECT_EQ(r.x_hat.shape(), (Shape{1, 4, 4}));
}

}  // namespace
}  // namespace ge
