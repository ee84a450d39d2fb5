#pragma once

// Empirical NTK weight evolution.
//
// A client holding a Jacobian stack J (rows x output x d), targets Y and
// current evaluations f0 evolves in closed form:
//
//   H          = (1/output) <J(x_m), J(x_n)>_F
//   f(t)       = (I - E(t)) Y + E(t) f0,          E(t) = exp(-(eta t / N) H)
//   R(t)       = eta / (N output) * sum_{u<t} (Y - f(u))
//   w(t)       = w_base + sum_j J_j^T R_j(t)
//
// N is the number of stacked rows. The exponent is negative so that f(t)
// contracts towards Y; the sum over u is evaluated per eigendirection as a
// geometric series.

#include <cstddef>
#include <map>
#include <string_view>
#include <vector>

#include "ntkdfl/mlp.hpp"

namespace ntkdfl {

/// Symmetric PSD Gram matrix.
struct Kernel {
  Matrix h;

  std::size_t size() const { return static_cast<std::size_t>(h.rows()); }
};

Kernel gram(const JacobianStack& stack);
Kernel gram(const MlpJacobian& stack);

/// Eigendecomposition H = Q diag(lambda) Q^T with PSD repair: eigenvalues in
/// [-1e-8 lambda_max, 0) are clamped to zero, anything more negative raises a
/// Numerical error.
struct KernelSpectrum {
  Vector eigenvalues;   // ascending
  Matrix eigenvectors;  // columns

  static KernelSpectrum decompose(const Kernel& kernel);

  std::size_t size() const { return static_cast<std::size_t>(eigenvalues.size()); }
};

/// exp(-s H).
Matrix expm_sym(const Kernel& kernel, double s);
Matrix expm_sym(const KernelSpectrum& spectrum, double s);

/// Predictions f(t) for every t in the grid, keyed by t.
using ResidualSeries = std::map<long, Matrix>;

ResidualSeries evolve_residuals(const KernelSpectrum& spectrum, const Matrix& targets,
                                const Matrix& f0, double eta, const std::vector<long>& t_grid,
                                std::size_t n_tilde);
ResidualSeries evolve_residuals(const Kernel& kernel, const Matrix& targets, const Matrix& f0,
                                double eta, const std::vector<long>& t_grid, std::size_t n_tilde);

/// R(t) by the literal sum over u = 0..t-1; the series must hold every one of
/// those u (MissingEvaluation otherwise).
Matrix accumulate_R(const Matrix& targets, const ResidualSeries& series, double eta, long t,
                    std::size_t n_tilde, std::size_t outputs);

/// R(t) in closed form, equal to the literal sum under the dynamics above.
Matrix accumulate_R(const KernelSpectrum& spectrum, const Matrix& targets, const Matrix& f0,
                    double eta, long t, std::size_t n_tilde);

WeightVector recover_weights(const JacobianStack& stack, const Matrix& r, const WeightVector& w_base);
WeightVector recover_weights(const MlpJacobian& stack, const Matrix& r, const WeightVector& w_base);

struct TimestepChoice {
  long t_star = 0;
  std::map<long, double> loss_curve;   // (1/(N output)) ||f(t) - Y||_F^2
};

/// Lowest-loss timestep, ties towards the smaller t.
TimestepChoice select_timestep(const ResidualSeries& series, const Matrix& targets);

struct EvolutionResult {
  ResidualSeries f_series;
  long chosen_t = 0;
  std::map<long, double> loss_curve;
  Matrix r;                 // R(chosen_t)
  WeightVector new_weights;
};

/// gram -> decompose -> evolve -> select -> accumulate -> recover for one stack.
EvolutionResult evolve(const MlpJacobian& stack, const Matrix& targets, const Matrix& f0,
                       const WeightVector& w_base, double eta, const std::vector<long>& t_grid);

/// Logged in run manifests.
constexpr std::string_view kExponentConvention = "f(t) = (I - exp(-(eta*t/N)H)) Y + exp(-(eta*t/N)H) f0";

}  // namespace ntkdfl
