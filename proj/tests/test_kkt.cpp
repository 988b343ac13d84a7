#include <doctest.h>

#include <cmath>

#include "ecodrive/errors.hpp"
#include "ecodrive/kkt.hpp"
#include "support.hpp"

using namespace ecodrive;
using testing_support::default_problem;
using testing_support::default_solve;

TEST_CASE("constraint values") {
  const auto& p = default_problem();
  Trajectory t;
  t.samples = {{0.0, 0.0, 0.0, 1.0}, {1.0, 0.5, 1.0, 0.0}, {2.0, 1000.0, 0.0, -1.0}};
  const ConstraintValues g = constraint_values(t, p);
  CHECK(g.g1[0] == 0.0);
  CHECK(g.g2[0] == -2.0);
  CHECK(g.g3[0] == 0.0);
  CHECK(g.g3[1] == -1.0);
  CHECK(g.g1[2] == -2.0);
  CHECK(g.g2[2] == 0.0);
  CHECK(g.g4 == 0.0);
  CHECK(g.g5 == 0.0);
  CHECK_THROWS_AS(constraint_values(Trajectory{}, p), ArgumentError);
}

TEST_CASE("generalized lagrangian") {
  const auto& p = default_problem();
  const auto& s = default_solve();
  const auto grad = value_gradients(s.field, s.rollout);
  Multipliers m = Multipliers::zeros(s.rollout.size());
  const auto plain = generalized_lagrangian(s.rollout, grad, m, p);
  for (std::size_t i = 0; i < plain.size(); i += 50) {
    const auto& x = s.rollout.samples[i];
    CHECK(plain[i] == doctest::Approx(hamiltonian({x.x, x.v, x.t}, x.u, grad[i], p)));
  }

  SUBCASE("lambda4 shifts every sample by lambda4 * g4") {
    Multipliers shifted = m;
    shifted.lambda4 = 2.5;
    const double g4 = constraint_values(s.rollout, p).g4;
    const auto l = generalized_lagrangian(s.rollout, grad, shifted, p);
    for (std::size_t i = 0; i < l.size(); i += 50) CHECK(l[i] - plain[i] == doctest::Approx(2.5 * g4));
  }
  SUBCASE("active g3 with zero relaxing variable contributes nothing") {
    Trajectory rest;
    rest.samples = {{0.0, 0.0, 0.0, 0.0}, {0.1, 0.0, 0.0, 0.0}};
    Multipliers r = Multipliers::zeros(2);
    r.lambda3 = {4.0, 4.0};
    const std::vector<std::pair<double, double>> g0{{0.0, 0.0}, {0.0, 0.0}};
    const auto l = generalized_lagrangian(rest, g0, r, p);
    CHECK(l[0] == 0.0);
    CHECK(l[1] == 0.0);
  }
  SUBCASE("misalignment") {
    Multipliers short_m = Multipliers::zeros(s.rollout.size() - 1);
    CHECK_THROWS_AS(generalized_lagrangian(s.rollout, grad, short_m, p), ArgumentError);
    auto short_grad = grad;
    short_grad.pop_back();
    CHECK_THROWS_AS(generalized_lagrangian(s.rollout, short_grad, m, p), ArgumentError);
  }
}

TEST_CASE("fitted multipliers on the default rollout") {
  const auto& p = default_problem();
  const auto& s = default_solve();
  const Multipliers m = fit_multipliers(s.rollout, s.field, p);
  const ConstraintValues g = constraint_values(s.rollout, p);
  bool exact_complementarity = true;
  bool nonnegative = m.lambda4 >= 0.0 && m.lambda5 >= 0.0;
  bool relaxed = true;
  for (std::size_t i = 0; i < s.rollout.size(); ++i) {
    exact_complementarity = exact_complementarity && m.lambda1[i] * g.g1[i] == 0.0 &&
                            m.lambda2[i] * g.g2[i] == 0.0 && m.lambda3[i] * g.g3[i] == 0.0;
    nonnegative = nonnegative && m.lambda1[i] >= 0.0 && m.lambda2[i] >= 0.0 && m.lambda3[i] >= 0.0;
    const double gi[3] = {g.g1[i], g.g2[i], g.g3[i]};
    const double ri[3] = {m.gamma1[i], m.gamma2[i], m.gamma3[i]};
    for (int k = 0; k < 3; ++k) {
      if (gi[k] < 0.0) relaxed = relaxed && std::abs(gi[k] + ri[k] * ri[k]) <= 1e-12 * std::max(1.0, -gi[k]);
    }
    // Saturated power with x2 + A Jv < 0: lambda1 takes the whole deficit.
    if (s.rollout.samples[i].u == 1.0) {
      const double v = s.rollout.samples[i].v;
      const double jv = value_gradients(s.field, s.rollout)[i].second;
      if (v + jv < 0.0) CHECK(m.lambda1[i] == doctest::Approx(-(v + jv)));
    }
  }
  CHECK(exact_complementarity);
  CHECK(nonnegative);
  CHECK(relaxed);
  CHECK_FALSE(m.degenerate);

  const KktResiduals r = kkt_residuals(s.rollout, s.field, m, p);
  CHECK(r.complementarity == 0.0);
  CHECK(r.dual == 0.0);
  CHECK(r.relaxation <= 1e-12);
  CHECK(r.primal_ok);
  CHECK_FALSE(r.g4_flagged);
  CHECK_FALSE(r.g5_flagged);
  CHECK(r.stationarity_pass_fraction >= 0.90);
  CHECK(r.lagrangian_rate.size() == s.rollout.size() - 1);
}

TEST_CASE("strictly inactive constraints give zero multipliers") {
  const auto& p = default_problem();
  const auto& s = default_solve();
  Trajectory cruise;
  for (int i = 0; i <= 100; ++i) cruise.samples.push_back({0.1 * i, 100.0 + i, 10.0, i % 2 ? 0.5 : -0.5});
  const Multipliers m = fit_multipliers(cruise, s.field, p);
  for (std::size_t i = 0; i < cruise.size(); ++i) {
    CHECK(m.lambda1[i] == 0.0);
    CHECK(m.lambda2[i] == 0.0);
    CHECK(m.lambda3[i] == 0.0);
  }
}

TEST_CASE("zero multipliers on a feasible trajectory") {
  const auto& p = default_problem();
  const auto& s = default_solve();
  const KktResiduals r = kkt_residuals(s.rollout, s.field, Multipliers::zeros(s.rollout.size()), p);
  CHECK(r.complementarity == 0.0);
  CHECK(r.dual == 0.0);
  for (double x : r.stationarity) CHECK(x >= 0.0);
}

TEST_CASE("terminal speed miss is flagged") {
  const auto& p = default_problem();
  const auto& s = default_solve();
  Trajectory t = s.rollout;
  t.samples.back().v = 3.0;
  const KktResiduals r = kkt_residuals(t, s.field, fit_multipliers(t, s.field, p), p);
  CHECK(r.g5_flagged);
  CHECK(r.g5 == doctest::Approx(3.0));
}

TEST_CASE("injected negative speed is reported at its exact magnitude") {
  const auto& p = default_problem();
  const auto& s = default_solve();
  for (double injected : {0.25, 1.0, 3.75}) {
    Trajectory t = s.rollout;
    t.samples[t.size() / 2].v = -injected;
    const KktResiduals r = kkt_residuals(t, s.field, Multipliers::zeros(t.size()), p);
    CHECK(r.primal_violation == injected);
    CHECK_FALSE(r.primal_ok);
    CHECK(r.lagrangian_rate.empty());
  }
}
