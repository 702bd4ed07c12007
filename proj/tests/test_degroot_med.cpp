#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <optional>
#include <vector>

#include "medsim/core.hpp"
#include "medsim/degroot.hpp"
#include "medsim/errors.hpp"
#include "medsim/med.hpp"
#include "medsim/numerics.hpp"

using namespace medsim;

namespace {

Matrix reference_w() {
  Matrix w(3, 3);
  w << 2.0 / 7.0, 3.0 / 7.0, 2.0 / 7.0,
       0.7, 0.2, 0.1,
       0.1, 0.1, 0.8;
  return w;
}

NetworkModel reference_network(double alpha = 0.3) {
  NetworkModel m;
  m.n_agents = 3;
  m.n_sources = 2;
  m.W = reference_w();
  m.U = Matrix(3, 2);
  m.U << 0.8, 0.2,
         0.5, 0.5,
         0.2, 0.8;
  m.alpha = alpha;
  return m;
}

Vector reference_o0() {
  Vector o0(3);
  o0 << 0.2, 0.2, 0.8;
  return o0;
}

std::vector<MessagePath> constant_messages(const TimeGrid& grid, double v0, double v1) {
  return {MessagePath{grid, Vector::Constant(grid.n_points(), v0), std::nullopt},
          MessagePath{grid, Vector::Constant(grid.n_points(), v1), std::nullopt}};
}

}  // namespace

TEST_CASE("consensus trajectory equals the direct matrix exponential") {
  Matrix w = reference_w();
  Vector o0 = reference_o0();
  TimeGrid grid(0.1, 40);
  OpinionTrajectory traj = degroot_trajectory(w, o0, grid);
  REQUIRE(traj.opinions.cols() == 41);
  CHECK(traj.opinions.col(0) == o0);
  Matrix generator = w - Matrix::Identity(3, 3);
  for (Index k : {1, 7, 23, 40}) {
    Vector direct = mat_exp(generator, grid.time(k)) * o0;
    CHECK((traj.opinions.col(k) - direct).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("consensus dynamics leave constant opinion vectors alone") {
  Vector o0 = Vector::Constant(3, 0.37);
  OpinionTrajectory traj = degroot_trajectory(reference_w(), o0, TimeGrid(0.05, 100));
  CHECK((traj.opinions.colwise() - o0).lpNorm<Eigen::Infinity>() < 1e-13);
}

TEST_CASE("steady state is the left-eigenvector average") {
  Vector l = left_unit_eigenvector(reference_w());
  CHECK(l[0] == doctest::Approx(0.28).epsilon(1e-12));
  CHECK(l[1] == doctest::Approx(16.0 / 75.0).epsilon(1e-12));
  CHECK(l[2] == doctest::Approx(38.0 / 75.0).epsilon(1e-12));

  Vector steady = degroot_steady_state(reference_w(), reference_o0());
  for (Index i = 0; i < 3; ++i) CHECK(steady[i] == doctest::Approx(0.504).epsilon(1e-12));

  // the trajectory actually converges there
  OpinionTrajectory traj = degroot_trajectory(reference_w(), reference_o0(), TimeGrid(0.5, 100));
  CHECK((traj.opinions.col(100) - steady).lpNorm<Eigen::Infinity>() < 1e-7);
}

TEST_CASE("coupled system matrices and the stochastic row identity") {
  MedSystem sys(reference_network(), 0.25);
  Matrix expected_a = 0.3 * reference_w() - Matrix::Identity(3, 3);
  CHECK((sys.system_matrix() - expected_a).lpNorm<Eigen::Infinity>() < 1e-15);
  CHECK((sys.input_matrix() - 0.7 * reference_network().U).lpNorm<Eigen::Infinity>() < 1e-15);

  // A 1 = (alpha - 1) 1, so every propagator row sums to exp((alpha - 1) dt)
  Vector row_sums = sys.propagator() * Vector::Ones(3);
  double expected = std::exp(-0.7 * 0.25);
  for (Index i = 0; i < 3; ++i) CHECK(row_sums[i] == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("propagator at t=0.7 matches the frozen reference") {
  MedSystem sys(reference_network(), 0.7);
  Matrix expected(3, 3);
  expected << 0.5311291076654068, 0.047492620242631546, 0.03400466627637788,
              0.07713126802842989, 0.5214762937995758, 0.014018832356410334,
              0.012561650748534733, 0.01213306792268897, 0.5879316755131925;
  CHECK((sys.propagator() - expected).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("one held-input step agrees with a fine Runge-Kutta integration") {
  MedSystem sys(reference_network(), 0.5);
  Vector o = reference_o0();
  Vector s(2);
  s << 0.3, 0.9;
  Vector zoh = sys.propagator() * o + sys.zoh_gain() * s;

  auto f = [&](const Vector& x) -> Vector {
    return sys.system_matrix() * x + sys.input_matrix() * s;
  };
  Vector rk = o;
  const int substeps = 1000;
  const double h = 0.5 / substeps;
  for (int i = 0; i < substeps; ++i) {
    Vector k1 = f(rk);
    Vector k2 = f(rk + 0.5 * h * k1);
    Vector k3 = f(rk + 0.5 * h * k2);
    Vector k4 = f(rk + h * k3);
    rk += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  CHECK((zoh - rk).lpNorm<Eigen::Infinity>() < 1e-11);
}

TEST_CASE("held-input fixed point is reproduced exactly") {
  MedSystem sys(reference_network(), 0.1);
  Vector sbar(2);
  sbar << 0.25, 0.65;
  Vector xstar = -Eigen::PartialPivLU<Matrix>(sys.system_matrix())
                      .solve(sys.input_matrix() * sbar);
  Vector stepped = sys.propagator() * xstar + sys.zoh_gain() * sbar;
  CHECK((stepped - xstar).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("constant messages drive every agent to the message value") {
  TimeGrid grid(0.01, 3000);
  MedSystem sys(reference_network(), 0.01);
  OpinionTrajectory traj =
      med_trajectory(sys, reference_o0(), constant_messages(grid, 0.6, 0.6));
  CHECK((traj.opinions.col(3000).array() - 0.6).abs().maxCoeff() < 1e-8);
}

TEST_CASE("alpha = 1 reduces to the autonomous consensus dynamics") {
  MedSystem sys(reference_network(1.0), 0.05);
  CHECK(sys.zoh_gain().lpNorm<Eigen::Infinity>() == 0.0);

  // slowest consensus mode decays at rate 0.411, so t = 50 leaves ~1e-9
  TimeGrid grid(0.05, 1000);
  OpinionTrajectory coupled =
      med_trajectory(sys, reference_o0(), constant_messages(grid, 0.1, 0.9));
  OpinionTrajectory pure = degroot_trajectory(reference_w(), reference_o0(), grid);
  CHECK((coupled.opinions - pure.opinions).lpNorm<Eigen::Infinity>() < 1e-12);

  Vector steady = degroot_steady_state(reference_w(), reference_o0());
  CHECK((coupled.opinions.col(1000) - steady).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("mean opinion path matches the frozen reference") {
  MedSystem sys(reference_network(), 0.01);
  Vector o0 = reference_o0();
  CHECK((opinion_mean(sys, o0, 0.5, 0.0) - o0).lpNorm<Eigen::Infinity>() < 1e-15);

  Vector at1 = opinion_mean(sys, o0, 0.5, 1.0);
  CHECK(at1[0] == doctest::Approx(0.37390744069719417).epsilon(1e-12));
  CHECK(at1[1] == doctest::Approx(0.36103290963695656).epsilon(1e-12));
  CHECK(at1[2] == doctest::Approx(0.6321155995343433).epsilon(1e-12));

  Vector at5 = opinion_mean(sys, o0, 0.5, 5.0);
  CHECK(at5[0] == doctest::Approx(0.49579188909911015).epsilon(1e-12));
  CHECK(at5[1] == doctest::Approx(0.49429008214701003).epsilon(1e-12));
  CHECK(at5[2] == doctest::Approx(0.5049681113050848).epsilon(1e-12));

  CHECK((opinion_mean(sys, o0, 0.5, 60.0).array() - 0.5).abs().maxCoeff() < 1e-12);
}

TEST_CASE("long-run opinion dispersion matches the frozen reference") {
  MedSystem sys(reference_network(), 0.01);
  Vector limit = opinion_variance_limit(sys, 0.5);
  CHECK(limit[0] == doctest::Approx(0.14707255049425122).epsilon(1e-12));
  CHECK(limit[1] == doctest::Approx(0.12573856310249834).epsilon(1e-12));
  CHECK(limit[2] == doctest::Approx(0.16051244956503521).epsilon(1e-12));

  MedSystem pure(reference_network(1.0), 0.01);
  CHECK(opinion_variance_limit(pure, 0.5).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK_THROWS_AS(opinion_variance_limit(sys, 1.5), DomainError);
}

TEST_CASE("coupled layer rejects mismatched inputs") {
  CHECK_THROWS_AS(MedSystem(reference_network(), 0.0), DomainError);
  CHECK_THROWS_AS(MedSystem(reference_network(), -0.1), DomainError);

  MedSystem sys(reference_network(), 0.01);
  TimeGrid grid(0.01, 10);
  Vector bad_o0 = Vector::Zero(4);
  CHECK_THROWS_AS(med_trajectory(sys, bad_o0, constant_messages(grid, 0.5, 0.5)),
                  DimensionError);

  auto one_path = constant_messages(grid, 0.5, 0.5);
  one_path.pop_back();
  CHECK_THROWS_AS(med_trajectory(sys, reference_o0(), one_path), DimensionError);

  auto mixed = constant_messages(grid, 0.5, 0.5);
  mixed[1].grid = TimeGrid(0.01, 11);
  mixed[1].values = Vector::Constant(12, 0.5);
  CHECK_THROWS_AS(med_trajectory(sys, reference_o0(), mixed), GridMismatchError);

  auto wrong_dt = constant_messages(TimeGrid(0.02, 10), 0.5, 0.5);
  CHECK_THROWS_AS(med_trajectory(sys, reference_o0(), wrong_dt), GridMismatchError);

  Vector bad_mean_o0 = Vector::Zero(2);
  CHECK_THROWS_AS(opinion_mean(sys, bad_mean_o0, 0.5, 1.0), DimensionError);
  CHECK_THROWS_AS(opinion_mean(sys, reference_o0(), 0.5, -1.0), DomainError);
}
