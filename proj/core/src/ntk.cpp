#include "ntkdfl/ntk.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <lapacke.h>

#include "ntkdfl/error.hpp"

namespace ntkdfl {

namespace {

constexpr double kNegativeEigenTolerance = 1e-8;

void check_series_shapes(std::size_t n, const Matrix& targets, const Matrix& f0) {
  require(static_cast<std::size_t>(targets.rows()) == n && targets.rows() == f0.rows() &&
              targets.cols() == f0.cols(),
          ErrorCode::DimensionMismatch, "targets, evaluations and kernel disagree in shape");
}

// sum_{u<t} exp(-u a) for a >= 0.
double geometric_sum(double a, long t) {
  if (a == 0.0) return static_cast<double>(t);
  return std::expm1(-a * static_cast<double>(t)) / std::expm1(-a);
}

}  // namespace

Kernel gram(const JacobianStack& stack) {
  require(static_cast<std::size_t>(stack.values.rows()) == stack.rows * stack.outputs,
          ErrorCode::DimensionMismatch, "Jacobian stack shape is inconsistent");
  require(stack.values.allFinite(), ErrorCode::Numerical, "Jacobian stack has non-finite entries");
  const auto n = static_cast<Eigen::Index>(stack.rows);
  Kernel k{Matrix::Zero(n, n)};
  const Matrix all = stack.values * stack.values.transpose();
  const auto d2 = static_cast<Eigen::Index>(stack.outputs);
  for (Eigen::Index m = 0; m < n; ++m)
    for (Eigen::Index q = 0; q < n; ++q)
      k.h(m, q) = all.block(m * d2, q * d2, d2, d2).trace() / static_cast<double>(d2);
  k.h = 0.5 * (k.h + k.h.transpose());
  return k;
}

Kernel gram(const MlpJacobian& stack) { return Kernel{stack.gram()}; }

KernelSpectrum KernelSpectrum::decompose(const Kernel& kernel) {
  const auto n = static_cast<lapack_int>(kernel.h.rows());
  require(kernel.h.rows() == kernel.h.cols(), ErrorCode::DimensionMismatch, "kernel is not square");
  KernelSpectrum s;
  s.eigenvectors = kernel.h;
  s.eigenvalues.resize(n);
  if (n == 0) return s;
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n, s.eigenvectors.data(), n,
                                         s.eigenvalues.data());
  require(info == 0, ErrorCode::Numerical,
          "symmetric eigendecomposition failed (info=" + std::to_string(info) + ")");

  const double top = std::max(0.0, s.eigenvalues.maxCoeff());
  for (auto& lambda : s.eigenvalues) {
    if (lambda >= 0.0) continue;
    require(lambda >= -kNegativeEigenTolerance * top, ErrorCode::Numerical,
            "kernel is not positive semidefinite (eigenvalue " + std::to_string(lambda) + ")");
    lambda = 0.0;
  }
  return s;
}

Matrix expm_sym(const KernelSpectrum& spectrum, double s) {
  const Vector scale = (-s * spectrum.eigenvalues.array()).exp().matrix();
  return spectrum.eigenvectors * scale.asDiagonal() * spectrum.eigenvectors.transpose();
}

Matrix expm_sym(const Kernel& kernel, double s) {
  return expm_sym(KernelSpectrum::decompose(kernel), s);
}

ResidualSeries evolve_residuals(const KernelSpectrum& spectrum, const Matrix& targets,
                                const Matrix& f0, double eta, const std::vector<long>& t_grid,
                                std::size_t n_tilde) {
  check_series_shapes(spectrum.size(), targets, f0);
  require(eta > 0.0, ErrorCode::InvalidArgument, "eta must be positive");
  require(!t_grid.empty() && std::is_sorted(t_grid.begin(), t_grid.end()) && t_grid.front() >= 0,
          ErrorCode::InvalidArgument, "timestep grid must be nonempty, ascending and nonnegative");
  require(n_tilde > 0, ErrorCode::InvalidArgument, "stack has no rows");

  // Work in the eigenbasis: f(t) = Y - Q exp(-s t Lambda) Q^T (Y - f0).
  const Matrix& q = spectrum.eigenvectors;
  const Matrix coeff = q.transpose() * (targets - f0);
  const double rate = eta / static_cast<double>(n_tilde);

  ResidualSeries out;
  for (long t : t_grid) {
    const Vector decay = (-rate * static_cast<double>(t) * spectrum.eigenvalues.array()).exp().matrix();
    out.emplace(t, targets - q * (decay.asDiagonal() * coeff));
  }
  return out;
}

ResidualSeries evolve_residuals(const Kernel& kernel, const Matrix& targets, const Matrix& f0,
                                double eta, const std::vector<long>& t_grid, std::size_t n_tilde) {
  return evolve_residuals(KernelSpectrum::decompose(kernel), targets, f0, eta, t_grid, n_tilde);
}

Matrix accumulate_R(const Matrix& targets, const ResidualSeries& series, double eta, long t,
                    std::size_t n_tilde, std::size_t outputs) {
  require(t >= 0, ErrorCode::InvalidArgument, "timestep must be nonnegative");
  Matrix sum = Matrix::Zero(targets.rows(), targets.cols());
  for (long u = 0; u < t; ++u) {
    auto it = series.find(u);
    require(it != series.end(), ErrorCode::MissingEvaluation,
            "no evaluation stored for timestep " + std::to_string(u));
    sum += targets - it->second;
  }
  return eta / (static_cast<double>(n_tilde) * static_cast<double>(outputs)) * sum;
}

Matrix accumulate_R(const KernelSpectrum& spectrum, const Matrix& targets, const Matrix& f0,
                    double eta, long t, std::size_t n_tilde) {
  check_series_shapes(spectrum.size(), targets, f0);
  require(t >= 0, ErrorCode::InvalidArgument, "timestep must be nonnegative");
  const double rate = eta / static_cast<double>(n_tilde);
  Vector g(spectrum.eigenvalues.size());
  for (Eigen::Index k = 0; k < g.size(); ++k) g[k] = geometric_sum(rate * spectrum.eigenvalues[k], t);

  const Matrix& q = spectrum.eigenvectors;
  const Matrix summed = q * (g.asDiagonal() * (q.transpose() * (targets - f0)));
  return eta / (static_cast<double>(n_tilde) * static_cast<double>(targets.cols())) * summed;
}

WeightVector recover_weights(const JacobianStack& stack, const Matrix& r, const WeightVector& w_base) {
  require(static_cast<std::size_t>(r.rows()) == stack.rows &&
              static_cast<std::size_t>(r.cols()) == stack.outputs &&
              w_base.size() == stack.values.cols(),
          ErrorCode::DimensionMismatch, "R, stack and base weights disagree in shape");
  WeightVector w = w_base;
  for (std::size_t n = 0; n < stack.rows; ++n)
    w.noalias() += stack.slice(n).transpose() * r.row(static_cast<Eigen::Index>(n)).transpose();
  return w;
}

WeightVector recover_weights(const MlpJacobian& stack, const Matrix& r, const WeightVector& w_base) {
  require(static_cast<std::size_t>(w_base.size()) == stack.dims().param_count(),
          ErrorCode::DimensionMismatch, "base weights do not match the stack's model");
  return w_base + stack.transpose_apply(r);
}

TimestepChoice select_timestep(const ResidualSeries& series, const Matrix& targets) {
  require(!series.empty(), ErrorCode::InvalidArgument, "empty residual series");
  TimestepChoice out;
  const double norm = static_cast<double>(targets.rows()) * static_cast<double>(targets.cols());
  double best = 0.0;
  bool first = true;
  for (const auto& [t, f] : series) {
    const double loss = (f - targets).squaredNorm() / norm;
    out.loss_curve.emplace(t, loss);
    // std::map iterates ascending, so strict < keeps the smaller t on ties
    if (first || loss < best) {
      best = loss;
      out.t_star = t;
      first = false;
    }
  }
  return out;
}

EvolutionResult evolve(const MlpJacobian& stack, const Matrix& targets, const Matrix& f0,
                       const WeightVector& w_base, double eta, const std::vector<long>& t_grid) {
  const std::size_t n = stack.rows();
  const KernelSpectrum spectrum = KernelSpectrum::decompose(gram(stack));

  EvolutionResult res;
  res.f_series = evolve_residuals(spectrum, targets, f0, eta, t_grid, n);
  TimestepChoice choice = select_timestep(res.f_series, targets);
  res.chosen_t = choice.t_star;
  res.loss_curve = std::move(choice.loss_curve);
  res.r = accumulate_R(spectrum, targets, f0, eta, res.chosen_t, n);
  res.new_weights = recover_weights(stack, res.r, w_base);
  require(res.new_weights.allFinite(), ErrorCode::Numerical, "evolved weights are not finite");
  return res;
}

}  // namespace ntkdfl
