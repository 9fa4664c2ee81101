#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"

using namespace oss;
using oss::testing::random_instance;

TEST_CASE("build_subspace without engineering constraints spans z = Gu u") {
  Rng rng(2);
  DcGains gains;
  gains.Gu = rng.gaussian_matrix(3, 2);
  gains.Gw = rng.gaussian_matrix(3, 1);
  const OssProblem prob = make_oss_problem(
      ConvexFunction::quadratic(Matrix::Identity(2, 2), Vector::Zero(2)),
      ConvexFunction::zero(3), Matrix::Zero(0, 3), Matrix::Zero(0, 2), Matrix::Zero(0, 1));
  const FeasibleSubspace fs = build_subspace(gains, prob);
  CHECK(fs.q == 2);
  CHECK((fs.Tz - gains.Gu * fs.Tu).norm() <= 1e-10);
}

TEST_CASE("build_subspace on a seeded constrained instance") {
  const auto inst = random_instance(17, 4, 3, 2, 1);
  const FeasibleSubspace fs = build_subspace(inst.gains, inst.problem);
  CHECK(fs.q == 2);  // m - nc with full-row-rank N
  Matrix T(fs.Tz.rows() + fs.Tu.rows(), fs.q);
  T << fs.Tz, fs.Tu;
  CHECK((fs.stack * T).norm() <= 1e-10);
  CHECK_FALSE(fs.rank_warning);
}

TEST_CASE("subspace defining equation and particular solution over 100 seeds") {
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng shape_rng(seed + 9000);
    const int m = 2 + static_cast<int>(shape_rng.uniform(0, 3));
    const int r = 1 + static_cast<int>(shape_rng.uniform(0, 3));
    const int nc = static_cast<int>(shape_rng.uniform(0, std::min(m, 3)));
    const auto inst = random_instance(seed, m, r, nc, 1);
    const FeasibleSubspace fs = build_subspace(inst.gains, inst.problem);
    Matrix T(r + m, fs.q);
    T << fs.Tz, fs.Tu;
    CHECK((fs.stack * T).norm() <= 1e-10);
    CHECK(fs.q + nc == m);
    const Vector w = Vector::Constant(1, 0.8);
    Vector sol(r + m);
    sol << fs.z0(w), fs.u0(w);
    CHECK((fs.stack * sol - fs.rhs_map * w).norm() <= 1e-10);
    CHECK((fs.Tz - inst.gains.Gu * fs.Tu).norm() <= 1e-9);
  }
}

TEST_CASE("make_subspace_with_basis validates the defining equation") {
  const auto inst = random_instance(4, 4, 3, 1, 1);
  const FeasibleSubspace fs = build_subspace(inst.gains, inst.problem);
  const FeasibleSubspace again =
      make_subspace_with_basis(inst.gains, inst.problem, fs.Tz, fs.Tu);
  CHECK(again.q == fs.q);
  CHECK_THROWS_AS(make_subspace_with_basis(inst.gains, inst.problem,
                                           fs.Tz + Matrix::Ones(fs.Tz.rows(), fs.q),
                                           fs.Tu),
                  InvalidInputError);
}

TEST_CASE("lemma 1 on a full-column-rank Gu instance") {
  Rng rng(8);
  DcGains gains;
  gains.Gu = rng.gaussian_matrix(5, 3);  // tall: full column rank a.s.
  gains.Gw = rng.gaussian_matrix(5, 1);
  const OssProblem prob = make_oss_problem(
      ConvexFunction::quadratic(Matrix::Identity(3, 3), Vector::Zero(3)),
      ConvexFunction::zero(5), Matrix::Zero(0, 5), Matrix::Zero(0, 3), Matrix::Zero(0, 1));
  const FeasibleSubspace fs = build_subspace(gains, prob);
  const Lemma1Report rep = lemma1_report(fs, gains);
  CHECK(rep.tu_full_column_rank);
  CHECK(rep.gu_full_column_rank);
  CHECK(rep.tz_full_column_rank);
  CHECK(rep.range_tu_in_range_gut);
}

TEST_CASE("lemma 1 item (ii) equivalence on its domain of validity") {
  // The rank/range equivalence holds for tall Gu, and for wide Gu without
  // input-coupled engineering constraints; both polarities are exercised.
  int both_true = 0, both_false = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Rng shape_rng(seed + 5123);
    const bool tall = shape_rng.uniform() < 0.5;
    const int m = 2 + static_cast<int>(shape_rng.uniform(0, 3));
    const int r = tall ? m + static_cast<int>(shape_rng.uniform(0, 3))
                       : 1 + static_cast<int>(shape_rng.uniform(0, m - 1));
    const int nc = tall ? static_cast<int>(shape_rng.uniform(0, 2)) : 0;
    const auto inst = random_instance(seed, m, r, nc, 1);
    const FeasibleSubspace fs = build_subspace(inst.gains, inst.problem);
    const Lemma1Report rep = lemma1_report(fs, inst.gains);
    CHECK(rep.tu_full_column_rank);
    CHECK(rep.tz_full_column_rank == rep.range_tu_in_range_gut);
    if (rep.gu_full_column_rank) CHECK(rep.tz_full_column_rank);
    if (rep.gu_full_row_rank && rep.item_iv_candidate_exists) {
      CHECK(rep.item_iv_defining_residual <= 1e-10);
    }
    (rep.tz_full_column_rank ? both_true : both_false)++;
  }
  CHECK(both_true > 0);
  CHECK(both_false > 0);
}

TEST_CASE("range inclusion is strictly stronger than Tz rank for coupled constraints") {
  // Wide Gu with an input-coupled constraint: Tz can be square invertible
  // while Tu leaves the row space of Gu. The report exposes both facts
  // separately rather than conflating them.
  DcGains gains;
  gains.Gu = (Matrix(1, 2) << 1, 1).finished();
  gains.Gw = Matrix::Zero(1, 1);
  const Matrix Hz = Matrix::Zero(1, 1);
  const Matrix Hu = (Matrix(1, 2) << 1, -2).finished();
  const OssProblem prob = make_oss_problem(
      ConvexFunction::quadratic(Matrix::Identity(2, 2), Vector::Zero(2)),
      ConvexFunction::zero(1), Hz, Hu, Matrix::Zero(1, 1));
  const FeasibleSubspace fs = build_subspace(gains, prob);
  REQUIRE(fs.q == 1);
  const Lemma1Report rep = lemma1_report(fs, gains);
  CHECK(rep.tz_full_column_rank);
  CHECK_FALSE(rep.range_tu_in_range_gut);
}

TEST_CASE("lemma 1 item (iv) on the hand-checkable wide Gu") {
  DcGains gains;
  gains.Gu = Matrix::Zero(1, 2);
  gains.Gu(0, 0) = 1;  // Gu = [1 0], full row rank
  gains.Gw = Matrix::Zero(1, 1);
  const OssProblem prob = make_oss_problem(
      ConvexFunction::quadratic(Matrix::Identity(2, 2), Vector::Zero(2)),
      ConvexFunction::zero(1), Matrix::Zero(0, 1), Matrix::Zero(0, 2), Matrix::Zero(0, 1));
  const FeasibleSubspace fs = build_subspace(gains, prob);
  const Lemma1Report rep = lemma1_report(fs, gains);
  REQUIRE(rep.gu_full_row_rank);
  REQUIRE(rep.item_iv_candidate_exists);
  CHECK(rep.item_iv_candidate_cols == 1);
  CHECK(rep.item_iv_defining_residual <= 1e-10);
  // Candidate Tu = Gu^+ X is proportional to (1, 0)'.
  CHECK(std::abs(rep.item_iv_Tu(1, 0)) <= 1e-12);
  CHECK(std::abs(std::abs(rep.item_iv_Tu(0, 0)) - std::abs(rep.item_iv_Tz(0, 0))) <= 1e-12);
}

TEST_CASE("om1 has a fixed point exactly at the oracle optimizer") {
  const auto inst = random_instance(25, 4, 3, 2, 1);
  const Vector w = Vector::Constant(1, 1.3);
  const KktPoint point = solve_reference(inst.problem, inst.gains, w);
  const Om1State state{point.mu_star, 2.0};
  const Om1Output out =
      om1_step(state, inst.problem, inst.gains, point.z_star, point.u_star, w);
  CHECK(out.mu_dot.norm() <= 1e-8);
  CHECK(out.e.norm() <= 1e-8);
}

TEST_CASE("om1 reduces to the plain gradient without constraints") {
  DcGains gains;
  gains.Gu = Matrix::Zero(1, 2);
  gains.Gw = Matrix::Zero(1, 0);
  const OssProblem prob = make_oss_problem(
      ConvexFunction::quadratic(Matrix::Identity(2, 2), Vector::Zero(2)),
      ConvexFunction::zero(1), Matrix::Zero(0, 1), Matrix::Zero(0, 2), Matrix::Zero(0, 0));
  Rng rng(3);
  const Vector u = rng.gaussian_vector(2);
  const Om1Output out = om1_step(Om1State{Vector::Zero(0), 1.0}, prob, gains,
                                 Vector::Zero(1), u, Vector::Zero(0));
  CHECK((out.e - u).norm() == 0.0);
}

TEST_CASE("om1 integrates the exact constraint violation") {
  const auto inst = random_instance(31, 3, 2, 1, 1);
  const Vector w = Vector::Constant(1, 0.4);
  const KktPoint point = solve_reference(inst.problem, inst.gains, w);
  Vector z = point.z_star;
  const double delta = 0.37;
  // Perturb z so the engineering constraint is violated by exactly delta.
  const Vector dir = inst.problem.Hz.row(0).transpose() /
                     inst.problem.Hz.row(0).squaredNorm();
  z += delta * dir;
  const double tau = 2.5;
  const Om1Output out =
      om1_step(Om1State{point.mu_star, tau}, inst.problem, inst.gains, z, point.u_star, w);
  CHECK(tau * out.mu_dot[0] == doctest::Approx(delta).epsilon(1e-9));
}

TEST_CASE("om2 error vanishes exactly at the oracle optimizer") {
  const auto inst = random_instance(40, 5, 3, 2, 2);
  const Vector w = (Vector(2) << 0.2, -0.9).finished();
  const KktPoint point = solve_reference(inst.problem, inst.gains, w);
  const FeasibleSubspace fs = build_subspace(inst.gains, inst.problem);
  const Om2Error err = om2_error(fs, inst.problem, point.z_star, point.u_star, w);
  CHECK(err.e1.norm() <= 1e-8);
  CHECK(err.e2.norm() <= 1e-8);
  // And conversely a perturbed point is seen by the error signals.
  const Om2Error off = om2_error(fs, inst.problem, point.z_star,
                                 point.u_star + Vector::Ones(5) * 0.1, w);
  CHECK(off.e1.norm() + off.e2.norm() > 1e-3);
}

TEST_CASE("om2 with identity objective reads Tu' u") {
  Rng rng(6);
  DcGains gains;
  gains.Gu = rng.gaussian_matrix(2, 3);
  gains.Gw = rng.gaussian_matrix(2, 1);
  const OssProblem prob = make_oss_problem(
      ConvexFunction::quadratic(Matrix::Identity(3, 3), Vector::Zero(3)),
      ConvexFunction::zero(2), Matrix::Zero(0, 2), Matrix::Zero(0, 3), Matrix::Zero(0, 1));
  const FeasibleSubspace fs = build_subspace(gains, prob);
  const Vector u = rng.gaussian_vector(3);
  const Om2Error err = om2_error(fs, prob, Vector::Zero(2), u, Vector::Zero(1));
  CHECK((err.e1 - fs.Tu.transpose() * u).norm() <= 1e-12);
  CHECK(err.e2.size() == 0);
}

TEST_CASE("om zero-error fixed points satisfy the KKT conditions") {
  // If (e1, e2) = 0 at a plant-consistent pair, the KKT residual is small:
  // checked by solving for the zero of the reduced error directly.
  for (std::uint64_t seed : {51ull, 52ull, 53ull}) {
    const auto inst = random_instance(seed, 4, 3, 2, 1);
    const Vector w = Vector::Constant(1, -0.6);
    const FeasibleSubspace fs = build_subspace(inst.gains, inst.problem);
    const KktPoint point = solve_reference(inst.problem, inst.gains, w);
    const Om2Error err = om2_error(fs, inst.problem, point.z_star, point.u_star, w);
    REQUIRE(err.e1.norm() <= 1e-8);
    REQUIRE(err.e2.norm() <= 1e-8);
    auto [stat, feas] = kkt_residual(inst.problem, inst.gains, point.u_star, point.z_star,
                                     point.mu_star, w);
    CHECK(stat <= 1e-6);
    CHECK(feas <= 1e-6);
  }
}
