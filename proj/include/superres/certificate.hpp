#pragma once

// Dual certificate construction for one-dimensional problems.
//
// With K_P(t, u) = sum_i p_i psi(s_i, t) psi(s_i, u), the candidate
//
//     Qt(t) = sum_i alpha_i K_P(t, t_i) + beta_i d2 K_P(t, t_i)
//
// interpolates w and w' at the sources when (alpha; beta) solves the limit
// system K (alpha; beta) = (w(t_1..t_M); w'(t_1..t_M)) with
// K = sum_s p_s v(s) v(s)^T. Either Qt or 2w - Qt stays below w away from
// the sources; that function certifies optimality of the true measure.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "superres/core.hpp"

namespace superres {

/// Kernel K_P and its partial derivatives for a fixed PSF and sampling measure.
class KernelEval {
 public:
  KernelEval(std::shared_ptr<const PSFModel> psf, SamplingMeasure P);

  const PSFModel& psf() const noexcept { return *psf_; }
  const SamplingMeasure& sampling() const noexcept { return P_; }

  /// sum_i p_i d^dt psi(s_i, t) d^du psi(s_i, u), derivatives in the source slot.
  double kernel(double t, double u, int dt, int du) const;
  double w(double t) const;
  double w_prime(double t) const;

  /// v(s) = (psi(s,t_1..t_M), d/dt psi(s,t_1..t_M)).
  Eigen::VectorXd v(double s, const std::vector<double>& locations) const;
  /// kappa(t) = (1/w(t)) sum_s p_s psi(s, t) v(s).
  Eigen::VectorXd kappa(double t, const std::vector<double>& locations) const;

 private:
  std::shared_ptr<const PSFModel> psf_;
  SamplingMeasure P_;
};

double kernel(const KernelEval& ke, double t, double u, int dt, int du);

/// 2M x 2M limit matrix [K, d2K; d1K, d1d2K] with rows t_j and columns t_i.
Eigen::MatrixXd build_limit_matrix(const KernelEval& ke, const std::vector<double>& locations);

/// 2M x 2M matrix of the system that interpolates w at t_j -/+ eps.
Eigen::MatrixXd build_eps_matrix(const KernelEval& ke, const std::vector<double>& locations,
                                 double eps);
/// Right-hand side of the eps system.
Eigen::VectorXd build_eps_rhs(const KernelEval& ke, const std::vector<double>& locations,
                              double eps);

enum class CertificateBranch { direct, reflected, invalid };

std::string to_string(CertificateBranch b);

struct MarginReport {
  std::size_t grid_points = 0;
  /// min of w - Q over grid points farther than `exclusion` from every source.
  double off_support_min_margin = 0.0;
  /// Same, divided by w pointwise.
  double off_support_min_relative_margin = 0.0;
  /// max of Q - w over the whole grid (<= 0 up to rounding for a valid certificate).
  double max_violation = 0.0;
  double exclusion = 0.0;
  double max_w = 0.0;
  /// max_i |Q(t_i) - w(t_i)| / w(t_i)
  double interpolation_residual = 0.0;
  /// max_i |Q'(t_i) - w'(t_i)|
  double derivative_residual = 0.0;
  /// Relative residual of the linear solve.
  double system_residual = 0.0;
};

struct Certificate {
  std::vector<double> locations;
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;
  /// p_s (1 - q(s)) per sample, so that w - Qt = sum_s slack_s psi(s, .).
  Eigen::VectorXd slack;
  CertificateBranch branch = CertificateBranch::invalid;
  MarginReport margin;
  std::vector<std::string> warnings;

  bool valid() const noexcept { return branch != CertificateBranch::invalid; }
};

/// Builds and verifies the certificate for the given (sorted, distinct) sources.
/// Throws ConditionFailure("independence") when the sample matrix V (whose
/// Gram matrix is the limit matrix) has sigma_min <= 1e-10 sigma_max. A
/// certificate with no valid branch is returned, not thrown.
Certificate solve_certificate(const KernelEval& ke, const std::vector<double>& locations,
                              const Domain& domain);

/// Qt(t) (direct branch) or 2w(t) - Qt(t) (reflected branch).
double certificate_value(const Certificate& cert, const KernelEval& ke, double t);
/// w(t) - Q(t) for the chosen branch, evaluated without cancellation.
double certificate_slack(const Certificate& cert, const KernelEval& ke, double t);
/// The unreflected interpolant Qt(t).
double certificate_raw_value(const Certificate& cert, const KernelEval& ke, double t);
double certificate_raw_derivative(const Certificate& cert, const KernelEval& ke, double t);

/// Uniform grid plus 100 points in a 1e-3 neighborhood of each source.
std::vector<double> verification_grid(const Domain& domain, const std::vector<double>& locations,
                                      std::size_t uniform_points = 10000);

struct ConditionReport {
  double positivity_min_w = 0.0;
  double independence_min_singular = 0.0;
  double independence_max_singular = 0.0;
  double determinantal_min_absdet = 0.0;
  bool determinantal_sign_consistent = false;
  std::size_t samples_tested = 0;
  double rho = 0.0;
  std::vector<std::string> warnings;
};

/// Default rho: half the smallest source gap, capped at 0.1 * |domain|.
double default_rho(const std::vector<double>& locations, const Domain& domain);

/// det Lambda(p_1..p_{2M+1}) with columns (kappa(p_j); 1); p sorted ascending first.
double lambda_determinant(const KernelEval& ke, const std::vector<double>& locations,
                          std::vector<double> p);

/// Numerical check of positivity, independence and the determinantal condition.
/// Half of the n_random tuples place two points in each (t_i - rho, t_i + rho)
/// plus one free point; the rest are unconstrained.
ConditionReport check_conditions(const KernelEval& ke, const std::vector<double>& locations,
                                 const Domain& domain, std::size_t n_random, double rho,
                                 std::uint64_t seed = 0);

}  // namespace superres
