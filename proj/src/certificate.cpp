#include "superres/certificate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "superres/rng.hpp"

namespace superres {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void require_sorted_distinct(const std::vector<double>& locations, const char* who) {
  if (locations.empty()) throw InvalidArgument(std::string(who) + ": at least one location required");
  for (std::size_t i = 0; i < locations.size(); ++i) {
    if (!std::isfinite(locations[i])) throw InvalidArgument(std::string(who) + ": non-finite location");
    if (i > 0 && !(locations[i - 1] < locations[i])) {
      throw InvalidArgument(std::string(who) + ": locations must be sorted and distinct");
    }
  }
}

double min_gap(const std::vector<double>& locations) {
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < locations.size(); ++i) gap = std::min(gap, locations[i] - locations[i - 1]);
  return gap;
}

// Rows sqrt(p_s) v(s)^T. Its Gram matrix is the limit matrix, so the
// singular values of the limit matrix are the squares of these.
MatrixXd weighted_design(const KernelEval& ke, const std::vector<double>& locations) {
  const auto& pts = ke.sampling().points();
  const auto& ws = ke.sampling().weights();
  MatrixXd A(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(2 * locations.size()));
  for (std::size_t k = 0; k < pts.size(); ++k) {
    A.row(static_cast<Eigen::Index>(k)) = std::sqrt(ws[k]) * ke.v(pts[k].x, locations).transpose();
  }
  return A;
}

// Singular values of the limit matrix, descending, zero-padded when there
// are fewer samples than unknowns.
VectorXd limit_singular_values(const MatrixXd& design) {
  const VectorXd sv = Eigen::JacobiSVD<MatrixXd>(design).singularValues();
  VectorXd out = VectorXd::Zero(design.cols());
  out.head(sv.size()) = sv.cwiseAbs2();
  return out;
}

}  // namespace

KernelEval::KernelEval(std::shared_ptr<const PSFModel> psf, SamplingMeasure P)
    : psf_(std::move(psf)), P_(std::move(P)) {
  if (!psf_) throw InvalidArgument("KernelEval: null PSF");
  if (psf_->dim() != 1 || P_.dim() != 1) {
    throw Unsupported("KernelEval: the certificate construction is one-dimensional");
  }
}

double KernelEval::kernel(double t, double u, int dt, int du) const {
  if ((dt != 0 && dt != 1) || (du != 0 && du != 1)) {
    throw InvalidArgument("kernel: derivative orders must be 0 or 1");
  }
  const auto& pts = P_.points();
  const auto& ws = P_.weights();
  const Point pt(t);
  const Point pu(u);
  double acc = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double a = dt == 0 ? psf_->eval(pts[i], pt) : psf_->deriv_t(pts[i], pt).x;
    const double b = du == 0 ? psf_->eval(pts[i], pu) : psf_->deriv_t(pts[i], pu).x;
    acc += ws[i] * a * b;
  }
  return acc;
}

double KernelEval::w(double t) const { return weight(*psf_, P_, Point(t)); }

double KernelEval::w_prime(double t) const { return weight_deriv(*psf_, P_, Point(t)).x; }

VectorXd KernelEval::v(double s, const std::vector<double>& locations) const {
  const auto M = static_cast<Eigen::Index>(locations.size());
  VectorXd out(2 * M);
  for (Eigen::Index i = 0; i < M; ++i) {
    const Point ti(locations[static_cast<std::size_t>(i)]);
    out(i) = psf_->eval(Point(s), ti);
    out(M + i) = psf_->deriv_t(Point(s), ti).x;
  }
  return out;
}

VectorXd KernelEval::kappa(double t, const std::vector<double>& locations) const {
  const auto M = static_cast<Eigen::Index>(locations.size());
  VectorXd out = VectorXd::Zero(2 * M);
  const auto& pts = P_.points();
  const auto& ws = P_.weights();
  double wt = 0.0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const double psi = psf_->eval(pts[k], Point(t));
    wt += ws[k] * psi;
    out += (ws[k] * psi) * v(pts[k].x, locations);
  }
  return out / wt;
}

double kernel(const KernelEval& ke, double t, double u, int dt, int du) {
  return ke.kernel(t, u, dt, du);
}

MatrixXd build_limit_matrix(const KernelEval& ke, const std::vector<double>& locations) {
  require_sorted_distinct(locations, "build_limit_matrix");
  const auto M = static_cast<Eigen::Index>(locations.size());
  MatrixXd K(2 * M, 2 * M);
  for (Eigen::Index j = 0; j < M; ++j) {
    const double tj = locations[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < M; ++i) {
      const double ti = locations[static_cast<std::size_t>(i)];
      K(j, i) = ke.kernel(tj, ti, 0, 0);
      K(j, M + i) = ke.kernel(tj, ti, 0, 1);
      K(M + j, i) = ke.kernel(tj, ti, 1, 0);
      K(M + j, M + i) = ke.kernel(tj, ti, 1, 1);
    }
  }
  return K;
}

namespace {

void check_eps(const std::vector<double>& locations, double eps) {
  require_sorted_distinct(locations, "build_eps_matrix");
  if (!std::isfinite(eps) || eps <= 0.0) throw InvalidArgument("build_eps_matrix: eps must be > 0");
  if (locations.size() > 1 && eps >= 0.5 * min_gap(locations)) {
    throw InvalidArgument("build_eps_matrix: eps must be below half the smallest source gap");
  }
}

}  // namespace

MatrixXd build_eps_matrix(const KernelEval& ke, const std::vector<double>& locations, double eps) {
  check_eps(locations, eps);
  const auto M = static_cast<Eigen::Index>(locations.size());
  MatrixXd K(2 * M, 2 * M);
  for (Eigen::Index j = 0; j < M; ++j) {
    const double tj = locations[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < M; ++i) {
      const double ti = locations[static_cast<std::size_t>(i)];
      const double k_minus = ke.kernel(tj - eps, ti, 0, 0);
      const double d_minus = ke.kernel(tj - eps, ti, 0, 1);
      K(j, i) = k_minus;
      K(j, M + i) = d_minus;
      K(M + j, i) = (ke.kernel(tj + eps, ti, 0, 0) - k_minus) / (2.0 * eps);
      K(M + j, M + i) = (ke.kernel(tj + eps, ti, 0, 1) - d_minus) / (2.0 * eps);
    }
  }
  return K;
}

VectorXd build_eps_rhs(const KernelEval& ke, const std::vector<double>& locations, double eps) {
  check_eps(locations, eps);
  const auto M = static_cast<Eigen::Index>(locations.size());
  VectorXd rhs(2 * M);
  for (Eigen::Index j = 0; j < M; ++j) {
    const double tj = locations[static_cast<std::size_t>(j)];
    const double w_minus = ke.w(tj - eps);
    rhs(j) = w_minus;
    rhs(M + j) = (ke.w(tj + eps) - w_minus) / (2.0 * eps);
  }
  return rhs;
}

std::string to_string(CertificateBranch b) {
  switch (b) {
    case CertificateBranch::direct: return "direct";
    case CertificateBranch::reflected: return "reflected";
    case CertificateBranch::invalid: return "invalid";
  }
  return "invalid";
}

std::vector<double> verification_grid(const Domain& domain, const std::vector<double>& locations,
                                      std::size_t uniform_points) {
  std::vector<double> grid;
  grid.reserve(uniform_points + 100 * locations.size());
  const double lo = domain.lo(0);
  const double hi = domain.hi(0);
  for (std::size_t i = 0; i < uniform_points; ++i) {
    grid.push_back(uniform_points == 1 ? 0.5 * (lo + hi)
                                       : lo + (hi - lo) * static_cast<double>(i) /
                                                  static_cast<double>(uniform_points - 1));
  }
  constexpr double kNeighborhood = 1e-3;
  for (double t : locations) {
    for (int k = 0; k < 100; ++k) {
      const double x = t - kNeighborhood + 2.0 * kNeighborhood * k / 99.0;
      if (x >= lo && x <= hi) grid.push_back(x);
    }
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

Certificate solve_certificate(const KernelEval& ke, const std::vector<double>& locations,
                              const Domain& domain) {
  require_sorted_distinct(locations, "solve_certificate");
  if (domain.dim() != 1) throw Unsupported("solve_certificate: one-dimensional domains only");
  const auto M = static_cast<Eigen::Index>(locations.size());
  Certificate cert;
  cert.locations = locations;
  if (ke.sampling().size() <= 2 * locations.size()) {
    cert.warnings.push_back("sample count does not exceed 2M; uniqueness of the recovered measure is not guaranteed");
  }

  // (alpha; beta) = K^{-1} (w; w') is the weighted least-squares fit of the
  // constant 1 by the columns of v, since K = V^T P V and (w; w') = V^T P 1.
  // Working with V instead of K halves the condition number in log scale and
  // gives w - Qt = sum_s p_s (1 - q(s)) psi(s, .) directly from the residual.
  const MatrixXd A = weighted_design(ke, locations);
  const VectorXd sv = limit_singular_values(A);
  if (!(std::sqrt(sv(sv.size() - 1)) > 1e-10 * std::sqrt(sv(0)))) {
    throw ConditionFailure("independence", "independence: limit matrix is numerically singular");
  }
  const auto& ws = ke.sampling().weights();
  VectorXd b(A.rows());
  for (Eigen::Index k = 0; k < A.rows(); ++k) b(k) = std::sqrt(ws[static_cast<std::size_t>(k)]);
  const VectorXd coef = A.colPivHouseholderQr().solve(b);
  cert.alpha = coef.head(M);
  cert.beta = coef.tail(M);
  const VectorXd resid = b - A * coef;
  cert.slack = resid.cwiseProduct(b);

  const MatrixXd K = build_limit_matrix(ke, locations);
  VectorXd rhs(2 * M);
  for (Eigen::Index j = 0; j < M; ++j) {
    rhs(j) = ke.w(locations[static_cast<std::size_t>(j)]);
    rhs(M + j) = ke.w_prime(locations[static_cast<std::size_t>(j)]);
  }
  cert.margin.system_residual = (K * coef - rhs).norm() / rhs.norm();

  // Dense grid scan of w - Qt.
  const std::vector<double> grid = verification_grid(domain, locations);
  const auto& pts = ke.sampling().points();
  std::vector<double> w_vals(grid.size());
  std::vector<double> diff(grid.size());
  double min_diff = std::numeric_limits<double>::infinity();
  double max_diff = -std::numeric_limits<double>::infinity();
  double max_w = 0.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const Point t(grid[g]);
    double d = 0.0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      d += cert.slack(static_cast<Eigen::Index>(k)) * ke.psf().eval(pts[k], t);
    }
    w_vals[g] = ke.w(grid[g]);
    diff[g] = d;
    min_diff = std::min(min_diff, diff[g]);
    max_diff = std::max(max_diff, diff[g]);
    max_w = std::max(max_w, w_vals[g]);
  }
  constexpr double kBranchTol = 1e-9;
  double sign = 0.0;
  if (min_diff >= -kBranchTol) {
    cert.branch = CertificateBranch::direct;
    sign = 1.0;
  } else if (-max_diff >= -kBranchTol) {
    cert.branch = CertificateBranch::reflected;
    sign = -1.0;
  } else {
    cert.branch = CertificateBranch::invalid;
    sign = std::abs(min_diff) <= std::abs(max_diff) ? 1.0 : -1.0;
  }

  // Margins of the effective certificate: w - Q = sign * (w - Qt).
  MarginReport& m = cert.margin;
  m.grid_points = grid.size();
  m.max_w = max_w;
  m.exclusion = 1e-4 * domain.extent();
  m.off_support_min_margin = std::numeric_limits<double>::infinity();
  m.off_support_min_relative_margin = std::numeric_limits<double>::infinity();
  m.max_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double margin = sign * diff[g];
    m.max_violation = std::max(m.max_violation, -margin);
    const bool near_source = std::any_of(locations.begin(), locations.end(), [&](double t) {
      return std::abs(grid[g] - t) < m.exclusion;
    });
    if (!near_source) {
      m.off_support_min_margin = std::min(m.off_support_min_margin, margin);
      m.off_support_min_relative_margin = std::min(m.off_support_min_relative_margin, margin / w_vals[g]);
    }
  }
  for (double t : locations) {
    const double wt = ke.w(t);
    m.interpolation_residual =
        std::max(m.interpolation_residual, std::abs(certificate_value(cert, ke, t) - wt) / wt);
    const double dq = certificate_raw_derivative(cert, ke, t);
    const double dq_eff = cert.branch == CertificateBranch::reflected ? 2.0 * ke.w_prime(t) - dq : dq;
    m.derivative_residual = std::max(m.derivative_residual, std::abs(dq_eff - ke.w_prime(t)));
  }
  return cert;
}

double certificate_raw_value(const Certificate& cert, const KernelEval& ke, double t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < cert.locations.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    acc += cert.alpha(ii) * ke.kernel(t, cert.locations[i], 0, 0) +
           cert.beta(ii) * ke.kernel(t, cert.locations[i], 0, 1);
  }
  return acc;
}

double certificate_raw_derivative(const Certificate& cert, const KernelEval& ke, double t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < cert.locations.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    acc += cert.alpha(ii) * ke.kernel(t, cert.locations[i], 1, 0) +
           cert.beta(ii) * ke.kernel(t, cert.locations[i], 1, 1);
  }
  return acc;
}

double certificate_slack(const Certificate& cert, const KernelEval& ke, double t) {
  if (cert.slack.size() != static_cast<Eigen::Index>(ke.sampling().size())) {
    throw InvalidArgument("certificate_slack: certificate was built for another sampling");
  }
  const auto& pts = ke.sampling().points();
  double acc = 0.0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    acc += cert.slack(static_cast<Eigen::Index>(k)) * ke.psf().eval(pts[k], Point(t));
  }
  return cert.branch == CertificateBranch::reflected ? -acc : acc;
}

double certificate_value(const Certificate& cert, const KernelEval& ke, double t) {
  const double raw = certificate_raw_value(cert, ke, t);
  return cert.branch == CertificateBranch::reflected ? 2.0 * ke.w(t) - raw : raw;
}

double default_rho(const std::vector<double>& locations, const Domain& domain) {
  const double cap = 0.1 * domain.extent();
  if (locations.size() < 2) return cap;
  return std::min(0.5 * min_gap(locations), cap);
}

double lambda_determinant(const KernelEval& ke, const std::vector<double>& locations,
                          std::vector<double> p) {
  const auto M = static_cast<Eigen::Index>(locations.size());
  if (p.size() != locations.size() * 2 + 1) {
    throw InvalidArgument("lambda_determinant: need 2M+1 points");
  }
  std::sort(p.begin(), p.end());
  MatrixXd L(2 * M + 1, 2 * M + 1);
  for (Eigen::Index j = 0; j < 2 * M + 1; ++j) {
    L.col(j).head(2 * M) = ke.kappa(p[static_cast<std::size_t>(j)], locations);
    L(2 * M, j) = 1.0;
  }
  return L.partialPivLu().determinant();
}

ConditionReport check_conditions(const KernelEval& ke, const std::vector<double>& locations,
                                 const Domain& domain, std::size_t n_random, double rho,
                                 std::uint64_t seed) {
  require_sorted_distinct(locations, "check_conditions");
  if (n_random == 0) throw InvalidArgument("check_conditions: n_random must be >= 1");
  if (!std::isfinite(rho) || rho <= 0.0) throw InvalidArgument("check_conditions: rho must be > 0");
  ConditionReport report;
  report.rho = rho;
  if (ke.sampling().size() <= 2 * locations.size()) {
    report.warnings.push_back("sample count does not exceed 2M; uniqueness is not guaranteed");
  }

  report.positivity_min_w = std::numeric_limits<double>::infinity();
  for (double t : verification_grid(domain, {}, 10000)) {
    report.positivity_min_w = std::min(report.positivity_min_w, ke.w(t));
  }

  const VectorXd sv = limit_singular_values(weighted_design(ke, locations));
  report.independence_max_singular = sv(0);
  report.independence_min_singular = sv(sv.size() - 1);

  const std::size_t M = locations.size();
  const double lo = domain.lo(0);
  const double hi = domain.hi(0);
  double min_abs = std::numeric_limits<double>::infinity();
  int first_sign = 0;
  bool consistent = true;
  for (std::size_t trial = 0; trial < n_random; ++trial) {
    Rng rng = Rng::substream(seed, trial);
    std::vector<double> p;
    p.reserve(2 * M + 1);
    auto fresh = [&](double a, double b) {
      for (;;) {
        const double x = rng.uniform(a, b);
        if (x > a && std::find(p.begin(), p.end(), x) == p.end()) return x;
      }
    };
    if (trial < n_random / 2 + n_random % 2) {
      for (double t : locations) {
        const double a = std::max(lo, t - rho);
        const double b = std::min(hi, t + rho);
        p.push_back(fresh(a, b));
        p.push_back(fresh(a, b));
      }
      p.push_back(fresh(lo, hi));
    } else {
      for (std::size_t k = 0; k < 2 * M + 1; ++k) p.push_back(fresh(lo, hi));
    }
    const double det = lambda_determinant(ke, locations, p);
    min_abs = std::min(min_abs, std::abs(det));
    const int s = det > 0.0 ? 1 : (det < 0.0 ? -1 : 0);
    if (s == 0) {
      consistent = false;
    } else if (first_sign == 0) {
      first_sign = s;
    } else if (s != first_sign) {
      consistent = false;
    }
  }
  report.determinantal_min_absdet = min_abs;
  report.determinantal_sign_consistent = consistent;
  report.samples_tested = n_random;
  return report;
}

}  // namespace superres
