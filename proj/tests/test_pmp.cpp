#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

#include "ecodrive/errors.hpp"
#include "ecodrive/pmp.hpp"
#include "support.hpp"

using namespace ecodrive;
using testing_support::default_problem;
using testing_support::default_solve;

namespace {

// Traction s = u, no resistance, flat: the affine Hamiltonian of the five-case analysis.
ProblemSpec affine_problem() {
  ProblemSpec p;
  p.vehicle.davis = {0.0, 0.0, 0.0};
  p.controls = ControlSet::three_level();
  p.penalties.terminal_kappa = 1.0;
  return p;
}

}  // namespace

TEST_CASE("local hamiltonian arithmetic") {
  const ProblemSpec flat = default_problem();
  CHECK(local_hamiltonian({0.0, 10.0, 0.0}, 0.0, {0.0, 2.0}, 1.0, flat) == doctest::Approx(-0.3));
  CHECK(local_hamiltonian({0.0, 3.0, 0.0}, 1.0, {0.0, 5.0}, 1.0, affine_problem()) == doctest::Approx(2.0));
  // u <= 0 drops the fuel term: only the psi terms remain.
  const double h = local_hamiltonian({0.0, 10.0, 0.0}, -0.5, {0.7, 0.0}, 1.0, flat);
  CHECK(h == doctest::Approx(7.0));
}

TEST_CASE("classify_control examples") {
  CHECK(classify_control(5.0, 3.0) == ControlCase::full_power);
  CHECK(classify_control(1.0, 3.0) == ControlCase::coast);
  CHECK(classify_control(-1.0, 3.0) == ControlCase::full_brake);
  CHECK(classify_control(3.0, 3.0) == ControlCase::hold_singular);
  CHECK(classify_control(0.0, 3.0) == ControlCase::partial_brake_singular);
  CHECK(std::string(to_string(ControlCase::full_power)) == "FULL_POWER");
  CHECK(implied_setting(ControlCase::hold_singular) == std::nullopt);
  CHECK(implied_setting(ControlCase::full_brake) == -1.0);
}

TEST_CASE("classify_control partitions the half-plane") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> psi(-40.0, 40.0), speed(0.0, 30.0);
  for (int i = 0; i < 20000; ++i) {
    const double p2 = psi(rng);
    const double v = speed(rng);
    const ControlCase c = classify_control(p2, v);
    CHECK(c == classify_control(p2, v));
    const double eps = singular_tolerance(v);
    switch (c) {
      case ControlCase::full_power: CHECK(p2 > v + eps); break;
      case ControlCase::hold_singular: CHECK(std::abs(p2 - v) <= eps); break;
      case ControlCase::coast: CHECK((p2 > eps && p2 < v - eps)); break;
      case ControlCase::partial_brake_singular: CHECK(std::abs(p2) <= eps); break;
      case ControlCase::full_brake: CHECK(p2 < -eps); break;
    }
  }
}

TEST_CASE("five-case labels agree with the affine Hamiltonian argmax") {
  const ProblemSpec p = affine_problem();
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> psi(-30.0, 30.0), speed(0.01, 25.0);
  std::size_t compared = 0;
  std::size_t agreed = 0;
  for (int i = 0; i < 20000; ++i) {
    const double p2 = psi(rng);
    const double v = speed(rng);
    const auto implied = implied_setting(classify_control(p2, v));
    if (!implied) continue;
    double best_u = 0.0;
    double best_h = -1e300;
    for (double u : {0.0, -1.0, 1.0}) {
      const double h = local_hamiltonian({0.0, v, 0.0}, u, {0.0, p2}, 1.0, p);
      if (h > best_h) {
        best_h = h;
        best_u = u;
      }
    }
    ++compared;
    if (best_u == *implied) ++agreed;
  }
  CHECK(compared >= 10000);
  CHECK(agreed == compared);
}

TEST_CASE("scaling a0 and psi leaves the argmax unchanged") {
  const auto& p = default_problem();
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> psi(-20.0, 20.0), speed(0.0, 24.0), scale(0.1, 50.0);
  for (int i = 0; i < 2000; ++i) {
    const State s{500.0, speed(rng), 0.0};
    const std::pair<double, double> ps{psi(rng), psi(rng)};
    const double k = scale(rng);
    double best_u = 0.0;
    double best_ku = 0.0;
    double best = -1e300;
    double best_k = -1e300;
    for (double u : p.controls.settings()) {
      const double h = local_hamiltonian(s, u, ps, 1.0, p);
      const double hk = local_hamiltonian(s, u, {k * ps.first, k * ps.second}, k, p);
      CHECK(hk == doctest::Approx(k * h).epsilon(1e-9));
      if (h > best) {
        best = h;
        best_u = u;
      }
      if (hk > best_k) {
        best_k = hk;
        best_ku = u;
      }
    }
    CHECK(best_u == best_ku);
  }
}

TEST_CASE("adjoint terminal condition and flat-grade psi1") {
  const auto& p = default_problem();
  const auto& s = default_solve();
  const AdjointPath adj = integrate_adjoint(s.rollout, p);
  REQUIRE(adj.size() == s.rollout.size());
  CHECK(adj.samples.back().psi1 == 0.0);
  CHECK(adj.samples.back().psi2 == 0.0);
  for (std::size_t i = 0; i < adj.size(); ++i) {
    CHECK(adj.samples[i].psi1 == 0.0);
    CHECK(adj.samples[i].t == s.rollout.samples[i].t);
  }
  const AdjointPath shifted = integrate_adjoint(s.rollout, p, 1.0, {0.25, -0.5});
  CHECK(shifted.samples.back().psi2 == -0.5);
  CHECK(shifted.samples.front().psi1 == 0.25);
}

TEST_CASE("adjoint is affine in the terminal costate") {
  const auto& p = default_problem();
  const auto& s = default_solve();
  const AdjointPath base = integrate_adjoint(s.rollout, p, 1.0, {0.0, 0.0});
  const AdjointPath a = integrate_adjoint(s.rollout, p, 1.0, {0.3, 0.0});
  const AdjointPath b = integrate_adjoint(s.rollout, p, 1.0, {0.0, 0.2});
  const AdjointPath ab = integrate_adjoint(s.rollout, p, 1.0, {0.3, 0.2});
  for (std::size_t i = 0; i < base.size(); i += 37) {
    const double sum = a.samples[i].psi2 + b.samples[i].psi2 - base.samples[i].psi2;
    CHECK(ab.samples[i].psi2 == doctest::Approx(sum).epsilon(1e-9));
  }
}

TEST_CASE("adjoint rejects inadmissible trajectories") {
  const auto& p = default_problem();
  Trajectory bad;
  bad.samples = {{0.0, 0.0, 1.0, 0.0}, {0.1, 0.1, -0.5, 0.0}};
  CHECK_THROWS_AS(integrate_adjoint(bad, p), ArgumentError);
  CHECK_THROWS_AS(integrate_adjoint(Trajectory{}, p), ArgumentError);
  CHECK_THROWS_AS(integrate_adjoint(default_solve().rollout, p, 0.0), ArgumentError);
}

TEST_CASE("maximum principle on a single terminal sample with zero costate") {
  const auto& p = default_problem();
  for (double u : {-1.0, -0.5, 0.0}) {
    Trajectory t;
    t.samples = {{p.trip.horizon, p.trip.length, 0.0, u}};
    const AdjointPath adj = integrate_adjoint(t, p);
    const PmpReport r = check_maximum_principle(t, adj, p);
    CHECK(r.pass_fraction == 1.0);
    CHECK(r.worst_gap == 0.0);
  }
}

TEST_CASE("maximum principle report invariants and misalignment") {
  const auto& p = default_problem();
  const auto& s = default_solve();
  const AdjointPath adj = integrate_adjoint(s.rollout, p);
  const PmpReport r = check_maximum_principle(s.rollout, adj, p);
  CHECK(r.pass_fraction >= 0.0);
  CHECK(r.pass_fraction <= 1.0);
  for (const auto& ps : r.samples) CHECK(ps.gap >= 0.0);
  AdjointPath shorter = adj;
  shorter.samples.pop_back();
  CHECK_THROWS_AS(check_maximum_principle(s.rollout, shorter, p), ArgumentError);
}

TEST_CASE("corrupting the braking phase is detected") {
  // A costate that makes every applied control of the rollout the maximizer,
  // so the clean pair passes everywhere.
  const auto& p = default_problem();
  const auto& s = default_solve();
  AdjointPath adj;
  for (const auto& sample : s.rollout.samples) {
    double psi2 = 0.5 * sample.v;  // coast
    if (sample.u > 0.0) psi2 = sample.v + 1.0;
    if (sample.u < 0.0) psi2 = -1.0;
    adj.samples.push_back({sample.t, 0.0, psi2});
  }
  Trajectory clean = s.rollout;
  for (auto& sample : clean.samples) {
    // Only the extreme settings are maximizers.
    if (sample.u > 0.0) sample.u = 1.0;
    if (sample.u < 0.0) sample.u = -1.0;
  }
  REQUIRE(check_maximum_principle(clean, adj, p).pass_fraction == 1.0);

  Trajectory corrupted = clean;
  double begin = -1.0;
  double end = -1.0;
  std::size_t flipped = 0;
  for (auto& sample : corrupted.samples) {
    if (sample.u < 0.0 && sample.v > 0.0) {
      sample.u = 1.0;
      ++flipped;
      if (begin < 0.0) begin = sample.t;
      end = sample.t;
    }
  }
  REQUIRE(flipped > 0);
  const PmpReport bad = check_maximum_principle(corrupted, adj, p);
  CHECK(bad.pass_fraction == doctest::Approx(1.0 - static_cast<double>(flipped) / corrupted.size()));
  bool covered = false;
  for (const auto& span : bad.failing_spans) covered = covered || (span.begin <= begin && span.end >= end);
  CHECK(covered);
}

TEST_CASE("global hamiltonian") {
  const auto& p = default_problem();
  Trajectory coast;
  for (int i = 0; i <= 50; ++i) coast.samples.push_back({0.1 * i, 0.0, 5.0, i % 3 == 0 ? -1.0 : 0.0});
  AdjointPath zero;
  for (const auto& sample : coast.samples) zero.samples.push_back({sample.t, 0.0, 0.0});
  CHECK(global_hamiltonian(coast, zero, 0.0, p) == 0.0);

  const auto& s = default_solve();
  const AdjointPath adj = integrate_adjoint(s.rollout, p);
  const double base = global_hamiltonian(s.rollout, adj, 0.0, p);
  CHECK(global_hamiltonian(s.rollout, adj, 3.5, p) - base == doctest::Approx(3.5));
}

TEST_CASE("global hamiltonian agrees with a finer quadrature") {
  // The same trajectory sampled ten times more densely: replay the rollout
  // controls with a ten times smaller step.
  const auto& p = default_problem();
  const auto& s = default_solve();
  Trajectory fine;
  State st{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i + 1 < s.rollout.size(); ++i) {
    const double h = (s.rollout.samples[i + 1].t - s.rollout.samples[i].t) / 10.0;
    const double u = s.rollout.samples[i].u;
    for (int k = 0; k < 10; ++k) {
      st.t = s.rollout.samples[i].t + k * h;
      fine.samples.push_back({st.t, st.x, st.v, u});
      st = step(st, u, h, p.vehicle);
    }
  }
  fine.samples.push_back({s.rollout.back().t, st.x, st.v, s.rollout.back().u});
  CHECK(std::abs(fine.back().x - s.rollout.back().x) < 1e-3);

  const auto term = fit_terminal_costate(s.rollout, s.field, p, 1.0, 12.0, 108.0);
  const double coarse = global_hamiltonian(s.rollout, integrate_adjoint(s.rollout, p, 1.0, term), 0.0, p);
  const double refined = global_hamiltonian(fine, integrate_adjoint(fine, p, 1.0, term), 0.0, p);
  CHECK(std::abs(coarse - refined) <= 0.005 * std::abs(refined));
}

TEST_CASE("adjoint-value link") {
  const auto& p = default_problem();
  const auto& s = default_solve();
  SUBCASE("constant value field matches a zero costate") {
    ValueField flat(s.grid, 0, s.grid.t.count - 1);
    const AdjointPath zero = integrate_adjoint(s.rollout, p, 1.0, {0.0, 0.0});
    AdjointPath zeros = zero;
    for (auto& a : zeros.samples) a.psi1 = a.psi2 = 0.0;
    const LinkReport r = verify_adjoint_value_link(flat, zeros, s.rollout, p);
    CHECK(r.compared > 0);
    CHECK(r.median == 0.0);
    CHECK(r.max == 0.0);
  }
  SUBCASE("fitted terminal costate on the default rollout") {
    const auto term = fit_terminal_costate(s.rollout, s.field, p, 1.0, 12.0, 108.0);
    const LinkReport r = verify_adjoint_value_link(s.field, integrate_adjoint(s.rollout, p, 1.0, term), s.rollout, p);
    CHECK(r.compared > 100);
    CHECK(r.excluded > 0);
    CHECK(r.median <= 0.10);
  }
}
