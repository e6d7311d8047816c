#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "superres/certificate.hpp"
#include "superres/rng.hpp"

using namespace superres;

namespace {

KernelEval grid_kernel(std::size_t n, double sigma = 0.1) {
  return KernelEval(std::make_shared<GaussianPSF>(sigma), SamplingMeasure::uniform_grid(Domain::unit(1), n));
}

KernelEval sym_kernel() {
  return KernelEval(std::make_shared<GaussianPSF>(1.0),
                    SamplingMeasure::counting({Point(-1.5), Point(-0.5), Point(0.5), Point(1.5)}));
}

}  // namespace

TEST_CASE("kernel examples and finite differences") {
  auto psf = std::make_shared<GaussianPSF>(0.3);
  KernelEval one(psf, SamplingMeasure::counting({Point(0.2)}));
  const double p = psf->eval(Point(0.2), Point(0.5));
  CHECK(kernel(one, 0.5, 0.5, 0, 0) == doctest::Approx(p * p).epsilon(1e-15));
  CHECK(std::abs(kernel(sym_kernel(), 0.0, 0.0, 1, 0)) < 1e-15);

  auto ke = grid_kernel(30);
  Rng rng(4);
  const double h = 1e-6;
  for (int k = 0; k < 100; ++k) {
    const double t = rng.uniform(), u = rng.uniform();
    for (int dt = 0; dt <= 1; ++dt) {
      for (int du = 0; du <= 1; ++du) {
        if (dt == 0) {
          const double fd = (kernel(ke, t + h, u, 0, du) - kernel(ke, t - h, u, 0, du)) / (2 * h);
          const double an = kernel(ke, t, u, 1, du);
          CHECK(std::abs(an - fd) <= 1e-6 * (1 + std::abs(an)) * 100);
        }
        if (du == 0) {
          const double fd = (kernel(ke, t, u + h, dt, 0) - kernel(ke, t, u - h, dt, 0)) / (2 * h);
          const double an = kernel(ke, t, u, dt, 1);
          CHECK(std::abs(an - fd) <= 1e-6 * (1 + std::abs(an)) * 100);
        }
        CHECK(std::abs(kernel(ke, t, u, dt, du) - kernel(ke, u, t, du, dt)) <= 1e-12);
      }
    }
  }
}

TEST_CASE("kernel rejects 2D input") {
  CHECK_THROWS_AS(KernelEval(std::make_shared<GaussianPSF>(0.1, 2), SamplingMeasure::pixel_grid(Domain::unit(2), 4)),
                  Unsupported);
  CHECK_THROWS_AS(KernelEval(std::make_shared<GaussianPSF>(0.1), SamplingMeasure::pixel_grid(Domain::unit(2), 4)),
                  Unsupported);
}

TEST_CASE("limit matrix") {
  auto psf = std::make_shared<GaussianPSF>(0.3);
  KernelEval one(psf, SamplingMeasure::counting({Point(0.2)}));
  auto K1 = build_limit_matrix(one, {0.5});
  const double p = psf->eval(Point(0.2), Point(0.5));
  const double dp = psf->deriv_t(Point(0.2), Point(0.5)).x;
  CHECK(K1(0, 0) == doctest::Approx(p * p));
  CHECK(K1(0, 1) == doctest::Approx(p * dp));
  CHECK(K1(1, 1) == doctest::Approx(dp * dp));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(K1);
  CHECK(svd.singularValues()(1) <= 1e-12 * svd.singularValues()(0));

  auto ke = grid_kernel(100);
  const std::vector<double> locs{0.2, 0.45, 0.5, 0.8};
  auto K = build_limit_matrix(ke, locs);
  CHECK((K - K.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
  CHECK(es.eigenvalues()(0) > 0.0);

  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(8, 8);
  for (std::size_t i = 0; i < ke.sampling().size(); ++i) {
    const Eigen::VectorXd v = ke.v(ke.sampling().points()[i].x, locs);
    sum += ke.sampling().weights()[i] * v * v.transpose();
  }
  CHECK((sum - K).cwiseAbs().maxCoeff() <= 1e-12 * K.cwiseAbs().maxCoeff());
  CHECK_THROWS_AS(build_limit_matrix(ke, {0.3, 0.3}), InvalidArgument);
}

TEST_CASE("eps system converges to the limit system") {
  KernelEval ke(std::make_shared<GaussianPSF>(1.0),
                SamplingMeasure::uniform_grid(Domain::interval(-3, 3), 25));
  const std::vector<double> locs{-0.7, 0.4};
  auto K = build_limit_matrix(ke, locs);
  // Rows are taken at t - eps, so the error is first order in eps.
  const double scale = K.cwiseAbs().maxCoeff();
  auto Ke = build_eps_matrix(ke, locs, 1e-4);
  const double err4 = (K - Ke).cwiseAbs().maxCoeff();
  const double err5 = (K - build_eps_matrix(ke, locs, 1e-5)).cwiseAbs().maxCoeff();
  CHECK(err4 <= 10 * 1e-4 * scale);
  CHECK(err5 <= 10 * 1e-5 * scale);
  CHECK(err5 < 0.2 * err4);
  CHECK(std::abs(Ke.determinant()) > 0.0);
  CHECK_THROWS_AS(build_eps_matrix(ke, locs, 0.6), InvalidArgument);
  CHECK_THROWS_AS(build_eps_matrix(ke, locs, 0.0), InvalidArgument);
}

TEST_CASE("symmetric single source certificate") {
  auto ke = sym_kernel();
  const Domain dom = Domain::interval(-3, 3);
  auto cert = solve_certificate(ke, {0.0}, dom);
  REQUIRE(cert.valid());
  CHECK(std::abs(cert.beta(0)) <= 1e-12);
  CHECK(cert.alpha(0) == doctest::Approx(ke.w(0.0) / kernel(ke, 0.0, 0.0, 0, 0)).epsilon(1e-10));
  for (double d : {0.1, 0.7, 1.9}) {
    CHECK(std::abs(certificate_value(cert, ke, d) - certificate_value(cert, ke, -d)) <= 1e-10);
  }
}

TEST_CASE("certificate interpolates and stays below w") {
  auto ke = grid_kernel(100);
  const Domain dom = Domain::unit(1);
  const std::vector<double> locs{0.2, 0.5, 0.8};
  auto cert = solve_certificate(ke, locs, dom);
  REQUIRE(cert.valid());
  CHECK(cert.margin.off_support_min_margin > 0.0);
  for (double t : locs) {
    CHECK(std::abs(certificate_value(cert, ke, t) - ke.w(t)) <= 1e-8 * ke.w(t));
    CHECK(std::abs(certificate_raw_derivative(cert, ke, t) - ke.w_prime(t)) <= 1e-8);
  }
  double maxw = 0;
  for (double t : verification_grid(dom, {}, 10000)) maxw = std::max(maxw, ke.w(t));
  for (double t : verification_grid(dom, {}, 10000)) {
    const double slack = certificate_slack(cert, ke, t);
    CHECK(-slack <= 1e-9 * maxw);
    if (slack <= 1e-8) {
      double gap = INFINITY;
      for (double s : locs) gap = std::min(gap, std::abs(t - s));
      CHECK(gap <= 1e-4);
    }
  }

  // Qt(t) as an explicit sum over the samples of q(s) psi(s, t).
  Rng rng(8);
  for (int k = 0; k < 50; ++k) {
    const double t = rng.uniform();
    double acc = 0;
    for (std::size_t i = 0; i < ke.sampling().size(); ++i) {
      const Point s = ke.sampling().points()[i];
      double q = 0;
      for (std::size_t j = 0; j < locs.size(); ++j) {
        q += cert.alpha(j) * ke.psf().eval(s, Point(locs[j])) + cert.beta(j) * ke.psf().deriv_t(s, Point(locs[j])).x;
      }
      acc += ke.sampling().weights()[i] * q * ke.psf().eval(s, Point(t));
    }
    CHECK(std::abs(certificate_raw_value(cert, ke, t) - acc) <= 1e-12 * (1 + std::abs(acc)));
  }
}

TEST_CASE("certificates without separation") {
  auto ke = grid_kernel(100);
  for (const std::vector<double>& locs : {std::vector<double>{0.45, 0.46}, std::vector<double>{0.3, 0.305, 0.7}}) {
    auto cert = solve_certificate(ke, locs, Domain::unit(1));
    CHECK(cert.valid());
    CHECK(cert.margin.interpolation_residual <= 1e-8);
    CHECK(cert.margin.off_support_min_margin > 0.0);
  }
}

TEST_CASE("rank deficient sampling fails independence") {
  auto ke = grid_kernel(2);
  CHECK_THROWS_AS(solve_certificate(ke, {0.3, 0.7}, Domain::unit(1)), ConditionFailure);
  try {
    solve_certificate(ke, {0.3, 0.7}, Domain::unit(1));
  } catch (const ConditionFailure& e) {
    CHECK(e.condition() == "independence");
  }
  KernelEval one(std::make_shared<GaussianPSF>(0.1), SamplingMeasure::counting({Point(0.5)}));
  auto rep = check_conditions(one, {0.4}, Domain::unit(1), 10, 0.05);
  CHECK(rep.independence_min_singular == 0.0);
  CHECK_FALSE(rep.warnings.empty());
}

TEST_CASE("check conditions for a Gaussian") {
  auto ke = grid_kernel(100);
  const std::vector<double> locs{0.3, 0.6};
  const double rho = default_rho(locs, Domain::unit(1));
  CHECK(rho == doctest::Approx(0.1));
  auto rep = check_conditions(ke, locs, Domain::unit(1), 1000, rho, 7);
  CHECK(rep.samples_tested == 1000);
  CHECK(rep.positivity_min_w > 0.0);
  CHECK(rep.independence_min_singular > 0.0);
  CHECK(rep.determinantal_sign_consistent);
  CHECK(rep.determinantal_min_absdet > 0.0);
  CHECK_THROWS_AS(check_conditions(ke, locs, Domain::unit(1), 0, rho), InvalidArgument);
}

TEST_CASE("lambda determinant sorts its points") {
  auto ke = grid_kernel(100);
  const std::vector<double> locs{0.4};
  CHECK(lambda_determinant(ke, locs, {0.1, 0.5, 0.9}) == lambda_determinant(ke, locs, {0.9, 0.1, 0.5}));
}

TEST_CASE("verification grid") {
  auto g = verification_grid(Domain::unit(1), {0.5}, 10000);
  CHECK(g.size() >= 10000);
  CHECK(std::is_sorted(g.begin(), g.end()));
  int near = 0;
  for (double t : g) near += std::abs(t - 0.5) <= 1e-3;
  CHECK(near >= 100);
}
