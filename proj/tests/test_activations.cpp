#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "varinit/activations.hpp"

using namespace varinit;

TEST_CASE("relu and identity basics") {
  Matrix x(1, 2);
  x << -1, 2;
  Matrix y = apply(ActivationKind::relu(), x);
  CHECK(y(0, 0) == 0.0);
  CHECK(y(0, 1) == 2.0);
  CHECK((apply(ActivationKind::identity(), x) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("elu closed form at -1") {
  CHECK(apply_scalar(ActivationKind::elu(1.0), -1.0) ==
        doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-12));
}

TEST_CASE("derivative trivial points") {
  CHECK(derivative_scalar(ActivationKind::relu(), 2.0) == 1.0);
  CHECK(derivative_scalar(ActivationKind::relu(), -2.0) == 0.0);
  CHECK(derivative_scalar(ActivationKind::relu(), 0.0) == 0.0);  // one-sided
  CHECK(derivative_scalar(ActivationKind::tanh(), 0.0) == doctest::Approx(1.0));
}

TEST_CASE("derivatives match central finite differences") {
  RandomSource rng(9);
  const double h = 1e-6;
  for (const ActivationKind& f :
       {ActivationKind::tanh(), ActivationKind::elu(1.0),
        ActivationKind::gelu(), ActivationKind::identity()}) {
    for (int i = 0; i < 64; ++i) {
      double x = 3.0 * rng.normal();
      double fd = (apply_scalar(f, x + h) - apply_scalar(f, x - h)) / (2 * h);
      double an = derivative_scalar(f, x);
      CHECK(std::abs(fd - an) / std::max(1.0, std::abs(an)) < 1e-6);
    }
  }
}

TEST_CASE("adjustment factors match independent reference values") {
  const double pi = 3.14159265358979323846;
  const double e = std::exp(1.0);
  // Phi(-1) and Phi(-2) for the ELU closed forms.
  const double phi_m1 = 0.5 * std::erfc(1.0 / std::sqrt(2.0));
  const double phi_m2 = 0.5 * std::erfc(2.0 / std::sqrt(2.0));
  struct Row {
    ActivationKind f;
    double fwd, bwd, tol;
  };
  // Closed forms: ELU(1) forward = 1 + e^2 Phi(-2) - 2 sqrt(e) Phi(-1),
  // ELU(1) backward = 1/2 + e^2 Phi(-2), GELU backward expands to
  // E[Phi^2] + 2 E[z phi Phi] + E[z^2 phi^2] = 1/3 + 2/(3 sqrt(3) pi).
  // The GELU forward and tanh entries have no elementary closed form; the
  // constants below are pinned by quadrature and Monte Carlo agreeing to
  // better than 4 digits.
  for (const Row& r :
       {Row{ActivationKind::identity(), 1.0, 1.0, 1e-9},
        Row{ActivationKind::relu(), 0.5, 0.5, 1e-6},
        Row{ActivationKind::gelu(), 0.42522,
            1.0 / 3.0 + 2.0 / (3.0 * std::sqrt(3.0) * pi), 1e-3},
        Row{ActivationKind::tanh(), 0.39429, 0.46440, 1e-3},
        Row{ActivationKind::elu(1.0),
            1.0 + e * e * phi_m2 - 2.0 * std::sqrt(e) * phi_m1,
            0.5 + e * e * phi_m2, 1e-3}}) {
    AdjustmentFactors q = adjustment_factors(r.f, FactorMethod::Quadrature);
    CHECK(std::abs(q.forward - r.fwd) <= r.tol);
    CHECK(std::abs(q.backward - r.bwd) <= r.tol);
  }
}

TEST_CASE("quadrature and monte carlo agree within 0.002") {
  for (const ActivationKind& f :
       {ActivationKind::identity(), ActivationKind::relu(),
        ActivationKind::tanh(), ActivationKind::elu(1.0),
        ActivationKind::gelu()}) {
    AdjustmentFactors q = adjustment_factors(f, FactorMethod::Quadrature);
    AdjustmentFactors m = adjustment_factors(f, FactorMethod::MonteCarlo);
    CHECK(std::abs(q.forward - m.forward) < 0.002);
    CHECK(std::abs(q.backward - m.backward) < 0.002);
  }
}

TEST_CASE("relu forward factor is exactly one half") {
  AdjustmentFactors a = adjustment_factors(ActivationKind::relu(),
                                           FactorMethod::Analytic);
  CHECK(a.forward == 0.5);
  AdjustmentFactors q = adjustment_factors(ActivationKind::relu(),
                                           FactorMethod::Quadrature);
  CHECK(std::abs(q.forward - 0.5) < 0.001);
}

TEST_CASE("analytic request without closed form falls back to quadrature") {
  AdjustmentFactors a = adjustment_factors(ActivationKind::tanh(),
                                           FactorMethod::Analytic);
  CHECK(a.source == FactorMethod::Quadrature);
  AdjustmentFactors i = adjustment_factors(ActivationKind::identity(),
                                           FactorMethod::Analytic);
  CHECK(i.source == FactorMethod::Analytic);
  CHECK(i.forward == 1.0);
  CHECK(i.backward == 1.0);
}

TEST_CASE("default factors are one half") {
  AdjustmentFactors d = default_adjustment_factors();
  CHECK(d.forward == 0.5);
  CHECK(d.backward == 0.5);
}

TEST_CASE("gauss-hermite integrates gaussian moments exactly") {
  // E[z^2] = 1, E[z^4] = 3 under N(0,1).
  double m2 = quadrature::gaussian_expectation([](double z) { return z * z; });
  double m4 =
      quadrature::gaussian_expectation([](double z) { return z * z * z * z; });
  CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m4 == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(ActivationKind::elu(-1.0), InvalidSpecError);
  CHECK_THROWS_AS(ActivationKind::gelu(0.0, 0.0), InvalidSpecError);
  CHECK_THROWS_AS(parse_activation("swish"), InvalidSpecError);
}
