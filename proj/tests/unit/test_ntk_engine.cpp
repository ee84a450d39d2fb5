#include <doctest.h>

#include <random>

#include "ntkdfl/error.hpp"
#include "ntkdfl/ntk.hpp"
#include "oracles.hpp"

using namespace ntkdfl;

namespace {

JacobianStack dense_stack(const Matrix& values, std::size_t outputs) {
  JacobianStack s;
  s.outputs = outputs;
  s.rows = static_cast<std::size_t>(values.rows()) / outputs;
  s.values = values;
  s.row_owner.assign(s.rows, 0);
  return s;
}

Matrix gram_loops(const JacobianStack& s) {
  const long n = static_cast<long>(s.rows), d2 = static_cast<long>(s.outputs);
  Matrix h(n, n);
  for (long m = 0; m < n; ++m)
    for (long q = 0; q < n; ++q) {
      double acc = 0.0;
      for (long j = 0; j < d2; ++j)
        for (long p = 0; p < s.values.cols(); ++p) acc += s.values(m * d2 + j, p) * s.values(q * d2 + j, p);
      h(m, q) = acc / static_cast<double>(d2);
    }
  return h;
}

std::vector<long> range_grid(long hi) {
  std::vector<long> g;
  for (long t = 0; t <= hi; ++t) g.push_back(t);
  return g;
}

}  // namespace

TEST_CASE("gram") {
  std::mt19937_64 gen(3);
  SUBCASE("all-ones single row") {
    CHECK(gram(dense_stack(Matrix::Ones(2, 3), 2)).h(0, 0) == doctest::Approx(3.0));
  }
  SUBCASE("identical rows give a constant rank-1 kernel") {
    Matrix v(4, 5);
    const Matrix block = oracle::random_matrix(gen, 2, 5);
    v << block, block;
    const Kernel k = gram(dense_stack(v, 2));
    CHECK(k.h.isApprox(Matrix::Constant(2, 2, k.h(0, 0)), 1e-14));
  }
  SUBCASE("random stack matches the double loop") {
    for (int trial = 0; trial < 5; ++trial) {
      const JacobianStack s = dense_stack(oracle::random_matrix(gen, 12, 7), 3);
      CHECK((gram(s).h - gram_loops(s)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("factored MLP kernel matches the dense route") {
    const ModelDims d{6, 5, 3};
    const WeightVector w = oracle::random_vector(gen, static_cast<long>(d.param_count()));
    const Matrix x = oracle::random_matrix(gen, 9, 6);
    const MlpJacobian fj(d, w, x);
    CHECK((gram(fj).h - gram_loops(fj.to_dense())).cwiseAbs().maxCoeff() < 1e-11);
  }
  SUBCASE("symmetric and PSD") {
    for (int trial = 0; trial < 5; ++trial) {
      const Kernel k = gram(dense_stack(oracle::random_matrix(gen, 30, 4), 3));
      CHECK(k.h == k.h.transpose());
      const KernelSpectrum s = KernelSpectrum::decompose(k);
      CHECK(s.eigenvalues.minCoeff() >= -1e-8 * s.eigenvalues.maxCoeff());
    }
  }
  SUBCASE("non-finite entries are rejected") {
    Matrix v = Matrix::Ones(2, 2);
    v(0, 0) = std::nan("");
    CHECK_THROWS_AS(gram(dense_stack(v, 2)), Error);
  }
}

TEST_CASE("decompose repairs tiny negative eigenvalues only") {
  Kernel ok{Matrix::Zero(2, 2)};
  ok.h << 1.0, 0.0, 0.0, -1e-12;
  CHECK(KernelSpectrum::decompose(ok).eigenvalues.minCoeff() == 0.0);
  Kernel bad{Matrix::Zero(2, 2)};
  bad.h << 1.0, 0.0, 0.0, -1e-3;
  try {
    KernelSpectrum::decompose(bad);
    FAIL("expected a numerical error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Numerical);
  }
}

TEST_CASE("expm_sym") {
  std::mt19937_64 gen(8);
  const Kernel k{oracle::random_psd(gen, 5)};
  CHECK(expm_sym(k, 0.0).isApprox(Matrix::Identity(5, 5), 1e-14));

  Kernel diag{Matrix::Zero(2, 2)};
  diag.h.diagonal() << 1.0, 2.0;
  const Matrix e = expm_sym(diag, 1.0);
  CHECK(e(0, 0) == doctest::Approx(std::exp(-1.0)));
  CHECK(e(1, 1) == doctest::Approx(std::exp(-2.0)));
  CHECK(std::abs(e(0, 1)) < 1e-15);

  CHECK((expm_sym(k, 0.3) - oracle::expm_taylor(k.h, 0.3)).cwiseAbs().maxCoeff() < 1e-9);
  for (int trial = 0; trial < 5; ++trial) {
    const Kernel r{oracle::random_psd(gen, 8)};
    CHECK((expm_sym(r, 0.7) - oracle::expm_taylor(r.h, 0.7)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((expm_sym(r, 0.4 + 0.9) - expm_sym(r, 0.4) * expm_sym(r, 0.9)).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("evolve_residuals") {
  std::mt19937_64 gen(12);
  const long n = 3;
  const Kernel k{oracle::random_psd(gen, n) + 0.5 * Matrix::Identity(n, n)};
  const Matrix y = oracle::random_matrix(gen, n, 2);
  const Matrix f0 = oracle::random_matrix(gen, n, 2);

  SUBCASE("t = 0 returns f0") {
    const auto s = evolve_residuals(k, y, f0, 0.1, {0}, 3);
    CHECK((s.at(0) - f0).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("positive definite kernel contracts monotonically") {
    const auto s = evolve_residuals(k, y, f0, 1.0, {0, 10, 20, 40, 80, 160}, 3);
    double prev = 1e300;
    for (const auto& [t, f] : s) {
      const double r = (f - y).norm();
      CHECK(r < prev);
      prev = r;
    }
    CHECK(prev < 1e-6);
  }
  SUBCASE("close to the discrete iteration for small steps") {
    // |(1 - a)^t - exp(-a t)| <= 0.019 for a <= 0.1, so the gap stays under
    // 2% of the initial residual along the whole trajectory
    const KernelSpectrum sp = KernelSpectrum::decompose(k);
    const double lmax = sp.eigenvalues.maxCoeff();
    for (double a : {0.1, 0.03}) {
      const double eta = a * static_cast<double>(n) / lmax;
      Matrix f = f0;
      for (long t = 1; t <= 60; ++t) {
        f -= eta / static_cast<double>(n) * k.h * (f - y);
        const Matrix exact = evolve_residuals(sp, y, f0, eta, {t}, n).at(t);
        CHECK((exact - f).norm() / (f0 - y).norm() < 0.02);
      }
    }
  }
  SUBCASE("argument checks") {
    CHECK_THROWS_AS(evolve_residuals(k, y, f0, -1.0, {1}, 3), Error);
    CHECK_THROWS_AS(evolve_residuals(k, y, f0, 0.1, {}, 3), Error);
    CHECK_THROWS_AS(evolve_residuals(k, y, f0, 0.1, {5, 1}, 3), Error);
    CHECK_THROWS_AS(evolve_residuals(k, y.topRows(2), f0, 0.1, {1}, 3), Error);
  }
}

TEST_CASE("accumulate_R") {
  std::mt19937_64 gen(21);
  const long n = 4;
  const Kernel k{oracle::random_psd(gen, n)};
  const KernelSpectrum sp = KernelSpectrum::decompose(k);
  const Matrix y = oracle::random_matrix(gen, n, 3);
  const Matrix f0 = oracle::random_matrix(gen, n, 3);
  const double eta = 0.05;

  SUBCASE("t = 1 is a single term") {
    const Matrix want = eta / (4.0 * 3.0) * (y - f0);
    CHECK((accumulate_R(sp, y, f0, eta, 1, 4) - want).cwiseAbs().maxCoeff() < 1e-15);
    const auto series = evolve_residuals(sp, y, f0, eta, {0}, 4);
    CHECK((accumulate_R(y, series, eta, 1, 4, 3) - want).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("zero residual gives zero") {
    ResidualSeries series;
    for (long u = 0; u < 5; ++u) series.emplace(u, y);
    CHECK(accumulate_R(y, series, eta, 5, 4, 3).isZero());
    CHECK(accumulate_R(sp, y, y, eta, 5, 4).isZero());
  }
  SUBCASE("closed form equals the literal sum") {
    const auto series = evolve_residuals(sp, y, f0, eta, range_grid(40), 4);
    CHECK((accumulate_R(sp, y, f0, eta, 40, 4) - accumulate_R(y, series, eta, 40, 4, 3)).cwiseAbs().maxCoeff() <
          1e-12);
  }
  SUBCASE("geometric series on a diagonal kernel") {
    Kernel dk{Matrix::Zero(3, 3)};
    dk.h.diagonal() << 0.0, 0.7, 2.5;
    const KernelSpectrum ds = KernelSpectrum::decompose(dk);
    const Matrix yy = Matrix::Ones(3, 1);
    const Matrix ff = Matrix::Zero(3, 1);
    const long t = 800;
    const double e = 0.01, nt = 3.0;
    const Matrix r = accumulate_R(ds, yy, ff, e, t, 3);
    for (long i = 0; i < 3; ++i) {
      const double a = e / nt * dk.h(i, i);
      const double series = a == 0.0 ? static_cast<double>(t) : (1.0 - std::exp(-a * t)) / (1.0 - std::exp(-a));
      CHECK(std::abs(r(i, 0) - e / nt * series) < 1e-9);
    }
  }
  SUBCASE("missing evaluations are reported") {
    const auto series = evolve_residuals(sp, y, f0, eta, {0, 1, 3}, 4);
    try {
      accumulate_R(y, series, eta, 4, 4, 3);
      FAIL("expected MissingEvaluation");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MissingEvaluation);
    }
  }
}

TEST_CASE("recover_weights") {
  std::mt19937_64 gen(4);
  const WeightVector base = oracle::random_vector(gen, 5);
  const JacobianStack s = dense_stack(oracle::random_matrix(gen, 6, 5), 2);
  CHECK(recover_weights(s, Matrix::Zero(3, 2), base) == base);

  JacobianStack unit = dense_stack(Matrix::Zero(1, 5), 1);
  unit.values(0, 2) = 1.0;
  Matrix r(1, 1);
  r << 0.25;
  WeightVector want = base;
  want[2] += 0.25;
  CHECK(recover_weights(unit, r, base) == want);
  CHECK_THROWS_AS(recover_weights(s, Matrix::Zero(2, 2), base), Error);
}

TEST_CASE("one evolution step at t = 1 equals a gradient step on the mse") {
  std::mt19937_64 gen(31);
  const ModelDims d{4, 6, 3};
  const WeightVector w = oracle::random_vector(gen, static_cast<long>(d.param_count()));
  Batch b;
  b.inputs = oracle::random_matrix(gen, 10, 4);
  b.targets = Matrix::Zero(10, 3);
  for (long i = 0; i < 10; ++i) {
    b.labels.push_back(static_cast<int>(i % 3));
    b.targets(i, i % 3) = 1.0;
  }
  const double eta = 0.3;
  const MlpJacobian j(d, w, b.inputs);
  const EvolutionResult res = evolve(j, b.targets, j.outputs(), w, eta, {1});
  const WeightVector gd = w - eta * loss_gradient(d, w, b, Loss::MeanSquared);
  CHECK((res.new_weights - gd).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("fixed-Jacobian model reproduces the closed-form dynamics") {
  // With J_{n,j} = e_j (x) phi_n every output sees the same kernel H, so
  // f0 + J (w - w_base) = f0 + H R for the recovered weights.
  std::mt19937_64 gen(17);
  const long n = 10, d2 = 3, p = 6;
  const Matrix phi = oracle::random_matrix(gen, n, p, 0.5);
  Matrix values = Matrix::Zero(n * d2, d2 * p);
  for (long r = 0; r < n; ++r)
    for (long j = 0; j < d2; ++j) values.block(r * d2 + j, j * p, 1, p) = phi.row(r);
  const JacobianStack s = dense_stack(values, static_cast<std::size_t>(d2));
  const Kernel k = gram(s);
  CHECK((k.h - phi * phi.transpose()).cwiseAbs().maxCoeff() < 1e-12);

  const KernelSpectrum sp = KernelSpectrum::decompose(k);
  const Matrix y = oracle::random_matrix(gen, n, d2);
  const Matrix f0 = oracle::random_matrix(gen, n, d2);
  const WeightVector base = oracle::random_vector(gen, d2 * p);
  const double eta = 0.2;
  for (long t : {1L, 7L, 50L, 300L}) {
    const Matrix r = accumulate_R(sp, y, f0, eta, t, static_cast<std::size_t>(n));
    const WeightVector w = recover_weights(s, r, base);
    Matrix implied(n, d2);
    for (long m = 0; m < n; ++m)
      implied.row(m) = (f0.row(m).transpose() + s.slice(static_cast<std::size_t>(m)) * (w - base)).transpose();
    // literal sum over every integer u < t of the exponential-map residuals
    const auto series = evolve_residuals(sp, y, f0, eta, range_grid(t), static_cast<std::size_t>(n));
    const Matrix r_literal = accumulate_R(y, series, eta, t, static_cast<std::size_t>(n), static_cast<std::size_t>(d2));
    const Matrix iterated = f0 + k.h * r_literal;
    CHECK((implied - iterated).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((implied - (f0 + k.h * r)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("select_timestep") {
  const Matrix y = Matrix::Zero(1, 1);
  auto series_with = [&](std::vector<std::pair<long, double>> pts) {
    ResidualSeries s;
    for (auto [t, v] : pts) s.emplace(t, Matrix::Constant(1, 1, std::sqrt(v)));
    return s;
  };
  CHECK(select_timestep(series_with({{100, 0.9}, {200, 0.5}, {300, 0.1}}), y).t_star == 300);
  CHECK(select_timestep(series_with({{100, 0.5}, {200, 0.2}, {300, 0.2}}), y).t_star == 200);

  std::mt19937_64 gen(6);
  const Kernel k{oracle::random_psd(gen, 6)};
  const Matrix yy = oracle::random_matrix(gen, 6, 2);
  const Matrix f0 = oracle::random_matrix(gen, 6, 2);
  const std::vector<long> grid{100, 200, 300, 400, 500, 600, 700, 800};
  const auto series = evolve_residuals(k, yy, f0, 0.01, grid, 6);
  long best_t = -1;
  double best = 1e300;
  for (long t : grid) {
    const double loss = (series.at(t) - yy).squaredNorm() / 12.0;
    if (loss < best) {
      best = loss;
      best_t = t;
    }
  }
  CHECK(select_timestep(series, yy).t_star == best_t);
  CHECK_THROWS_AS(select_timestep(ResidualSeries{}, yy), Error);
}

TEST_CASE("finite-width model tracks its linearization for small updates") {
  std::mt19937_64 gen(41);
  const ModelDims d{5, 20, 3};
  const WeightVector w = init_weights(3, d, InitScheme::Shared, 0);
  const Matrix x = oracle::random_matrix(gen, 12, 5);
  Matrix y = Matrix::Zero(12, 3);
  for (long i = 0; i < 12; ++i) y(i, i % 3) = 1.0;
  const MlpJacobian j(d, w, x);
  const EvolutionResult res = evolve(j, y, j.outputs(), w, 0.01, {100});
  const Matrix linear = j.outputs() + j.apply(res.new_weights - w);
  const Matrix actual = forward(d, res.new_weights, x);
  const Matrix moved = linear - j.outputs();
  CHECK((actual - linear).norm() <= 0.05 * std::max(moved.norm(), 1e-12) + 1e-12);
}
