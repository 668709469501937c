#include <doctest.h>

#include "helpers.hpp"
#include "serm/response.hpp"

using namespace serm;
using th::vec;

namespace {

struct Instance {
  Eigen::VectorXd x;
  Scorer model;
  Cost cost;
};

Instance random_instance(th::Rng& r, int kind) {
  Instance in;
  in.x = r.normal_vec(2);
  in.model = Scorer(r.normal_vec(2, 1.5), r.uniform(-1, 1));
  switch (kind % 3) {
    case 0: in.cost = Cost::quadratic(r.uniform(0.3, 3)); break;
    case 1: in.cost = Cost::weighted_quadratic(vec({r.uniform(0.3, 3), r.uniform(0.3, 3)}), r.uniform(0.5, 2)); break;
    default: in.cost = Cost::mixture(r.uniform(0.2, 1), r.normal_vec(2), 20.0, r.uniform(0.5, 2)); break;
  }
  return in;
}

ResponseCfg tight(double tau) {
  ResponseCfg c;
  c.tau = tau;
  c.tol = 1e-12;
  c.max_iter = 5000;
  return c;
}

}  // namespace

TEST_CASE("ccp examples") {
  const Scorer m = th::scorer({1, 0}, 0.0);
  const auto pinned = ccp_respond(vec({-0.7, 0.4}), m, Cost::quadratic(1e6), ResponseCfg::evaluation());
  CHECK((pinned.x_star - vec({-0.7, 0.4})).norm() <= 1e-3);
  CHECK(pinned.converged);
  const auto out = ccp_respond(vec({-0.5, 0}), m, Cost::quadratic(), ResponseCfg::evaluation());
  CHECK(m.head(out.x_star) > 0.0);
  CHECK(out.iterations <= 100);
  CHECK(out.payoff_trace.size() == static_cast<size_t>(out.iterations) + 1);
}

TEST_CASE("ccp input validation") {
  const Scorer m = th::scorer({1, 0}, 0.0);
  CHECK_THROWS_AS(ccp_respond(vec({1, 2, 3}), m, Cost::quadratic(), ResponseCfg{}), InvalidInput);
  CHECK_THROWS_AS(ccp_respond(vec({1, 2}), m, Cost::linear_separable(vec({1, 0})), ResponseCfg{}), InvalidInput);
  ResponseCfg bad;
  bad.tol = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidConfig);
  bad = ResponseCfg{};
  bad.max_iter = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidConfig);
}

TEST_CASE("ccp: monotone payoff and converges within 100 iterations on 1000 random 2D instances") {
  th::Rng r(11);
  for (double tau : {1.0, 0.2}) {
    for (int i = 0; i < 1000; ++i) {
      const Instance in = random_instance(r, i);
      ResponseCfg cfg;
      cfg.tau = tau;
      const auto out = ccp_respond(in.x, in.model, in.cost, cfg);
      REQUIRE(out.converged);
      REQUIRE(out.iterations <= 100);
      for (size_t t = 1; t < out.payoff_trace.size(); ++t)
        REQUIRE(out.payoff_trace[t] >= out.payoff_trace[t - 1] - 1e-9);
      REQUIRE(smoothed_payoff(in.x, out.x_star, in.model, in.cost, tau) >=
              smoothed_payoff(in.x, in.x, in.model, in.cost, tau) - 1e-9);
    }
  }
}

TEST_CASE("[rate] ccp: >= 99% of 1000 random 2D instances converge in <= 10 iterations") {
  th::Rng r(11);
  for (double tau : {1.0, 0.2}) {
    int fast = 0;
    for (int i = 0; i < 1000; ++i) {
      const Instance in = random_instance(r, i);
      ResponseCfg cfg;
      cfg.tau = tau;
      fast += ccp_respond(in.x, in.model, in.cost, cfg).iterations <= 10;
    }
    MESSAGE("tau=" << tau << ": " << fast << "/1000 within 10 iterations");
    CHECK(fast >= 990);
  }
}

TEST_CASE("ccp: x* is stationary for the final surrogate") {
  th::Rng r(12);
  for (int i = 0; i < 200; ++i) {
    const Instance in = random_instance(r, i);
    const ResponseCfg cfg = tight(1.0);
    const auto out = ccp_respond(in.x, in.model, in.cost, cfg);
    const SmoothSign<double> ss(cfg.tau);
    const detail::Surrogate<double> s{in.x, out.g_final, in.model, in.cost, ss};
    CHECK(s.gradient(out.x_star).norm() < 1e-7);
  }
}

TEST_CASE("ccp: argmax invariant under (k w, k b, k tau)") {
  th::Rng r(13);
  for (int i = 0; i < 300; ++i) {
    const Instance in = random_instance(r, i);
    const double k = std::pow(10.0, r.uniform(-1, 1));
    ResponseCfg a = ResponseCfg::evaluation(), b = a;
    b.tau = a.tau * k;
    const auto xa = ccp_respond(in.x, in.model, in.cost, a).x_star;
    const auto xb = ccp_respond(in.x, Scorer(k * in.model.w, k * in.model.b), in.cost, b).x_star;
    REQUIRE((xa - xb).norm() <= a.tol);
  }
}

TEST_CASE("[rate] ccp payoff agrees with the grid oracle within 2x resolution (500 instances)") {
  th::Rng r(14);
  const double res = 0.01;
  int agree = 0;
  for (int i = 0; i < 500; ++i) {
    const Instance in = random_instance(r, i);
    const double tau = 1.0;
    const auto out = ccp_respond(in.x, in.model, in.cost, tight(tau));
    const auto grid = grid_response_oracle(in.x, in.model, in.cost, tau, res);
    const double pc = smoothed_payoff(in.x, out.x_star, in.model, in.cost, tau);
    const double pg = smoothed_payoff(in.x, grid, in.model, in.cost, tau);
    agree += std::abs(pc - pg) <= 2 * res;
  }
  MESSAGE("grid agreement: " << agree << "/500");
  CHECK(agree == 500);
}

TEST_CASE("grid oracle is never beaten by ccp by more than its resolution") {
  th::Rng r(14);
  for (int i = 0; i < 500; ++i) {
    const Instance in = random_instance(r, i);
    const auto out = ccp_respond(in.x, in.model, in.cost, tight(1.0));
    const auto grid = grid_response_oracle(in.x, in.model, in.cost, 1.0, 0.01);
    REQUIRE(smoothed_payoff(in.x, grid, in.model, in.cost, 1.0) >=
            smoothed_payoff(in.x, out.x_star, in.model, in.cost, 1.0) - 0.02);
  }
}

TEST_CASE("grid oracle: degenerate scorer returns x") {
  CHECK((grid_response_oracle(vec({0.3, -1}), th::scorer({0, 0}, 1.0), Cost::quadratic(), 1.0, 0.01) -
         vec({0.3, -1}))
            .norm() == 0.0);
  CHECK_THROWS_AS(grid_response_oracle(vec({0, 0}), th::scorer({1, 0}, 0.0), Cost::quadratic(), 1.0, 0.0),
                  InvalidConfig);
}

TEST_CASE("[rate] grid oracle at tau=0.01 matches the exact best response payoff within 0.05") {
  th::Rng r(15);
  int ok = 0;
  for (int i = 0; i < 200; ++i) {
    const Instance in = random_instance(r, 0);
    const auto g = grid_response_oracle(in.x, in.model, in.cost, 0.01, 0.002);
    const double hard = hard_payoff(in.x, g, in.model, in.cost);
    ok += std::abs(hard - exact_best_response_payoff(in.x, in.model, in.cost)) <= 0.05;
  }
  MESSAGE("tau=0.01 grid vs exact: " << ok << "/200");
  CHECK(ok == 200);
}

TEST_CASE("[rate] ccp at tau=0.05 matches the exact best response payoff on >= 95% of 1000 instances") {
  th::Rng r(16);
  int ok = 0;
  ResponseCfg cfg;
  cfg.tau = 0.05;
  for (int i = 0; i < 1000; ++i) {
    const Instance in = random_instance(r, 0);
    const auto out = ccp_respond(in.x, in.model, in.cost, cfg);
    const double hard = hard_payoff(in.x, out.x_star, in.model, in.cost);
    ok += std::abs(hard - exact_best_response_payoff(in.x, in.model, in.cost)) <= 0.05;
  }
  MESSAGE("tau=0.05 consistency: " << ok << "/1000");
  CHECK(ok >= 950);
}

TEST_CASE("exact best response examples and errors") {
  const Scorer m = th::scorer({1, 0}, 0.0);
  CHECK((exact_best_response(vec({0.5, 0}), m, Cost::quadratic()) - vec({0.5, 0})).norm() == 0.0);
  // Cost exactly 2 ties and stays: distance sqrt(2).
  CHECK((exact_best_response(vec({-std::sqrt(2.0), 0}), m, Cost::quadratic()) - vec({-std::sqrt(2.0), 0})).norm() ==
        0.0);
  CHECK_THROWS_AS(exact_best_response(vec({0, 0}), th::scorer({0, 0}, -1.0), Cost::quadratic()), InvalidInput);
  CHECK_THROWS_AS(exact_best_response(vec({0, 0}), m, Cost::mixture(0.5, vec({1, 0}))), InvalidInput);
}

TEST_CASE("response Jacobians match central finite differences (100 instances, rel err <= 1e-4)") {
  th::Rng r(17);
  int tested = 0;
  // Smaller steps amplify the solver's stopping error by 1/h.
  const double h = 1e-3;
  for (int i = 0; tested < 100; ++i) {
    const Instance in = random_instance(r, i);
    const ResponseCfg cfg = tight(1.0);
    const auto out = ccp_respond(in.x, in.model, in.cost, cfg);
    if (!out.converged) continue;
    ResponseJacobians<double> J;
    try {
      J = response_jacobians(out, in.x, in.model, in.cost, cfg);
    } catch (const DegenerateJacobian&) {
      continue;
    }
    auto resp = [&](const Scorer& m, const Cost& c) { return ccp_respond(in.x, m, c, cfg).x_star; };
    Eigen::MatrixXd fw(2, 2);
    for (int j = 0; j < 2; ++j) {
      fw.col(j) = th::fd(
          [&](double t) {
            Scorer m = in.model;
            m.w(j) += t;
            return resp(m, in.cost);
          },
          h);
    }
    const Eigen::VectorXd fb = th::fd(
        [&](double t) {
          Scorer m = in.model;
          m.b += t;
          return resp(m, in.cost);
        },
        h);
    // Near-zero responses (nobody moves) compare absolutely.
    const double floor = 1e-3;
    REQUIRE(th::rel_err(J.d_w, fw, floor) <= 1e-4);
    REQUIRE(th::rel_err(J.d_b, fb, floor) <= 1e-4);
    if (in.cost.num_params() > 0) {
      Eigen::MatrixXd fv(2, in.cost.num_params());
      for (Eigen::Index j = 0; j < fv.cols(); ++j)
        fv.col(j) = th::fd(
            [&](double t) {
              Cost c = in.cost;
              c.v(j) += t;
              return resp(in.model, c);
            },
            h);
      REQUIRE(th::rel_err(J.d_v, fv, floor) <= 1e-4);
    }
    ++tested;
  }
}

TEST_CASE("Jacobians vanish when the cost pins the response") {
  const Scorer m = th::scorer({0.8, -0.3}, 0.1);
  const auto x = vec({-0.2, 0.5});
  const ResponseCfg cfg = ResponseCfg::training();
  const auto out = ccp_respond(x, m, Cost::quadratic(1e6), cfg);
  const auto J = response_jacobians(out, x, m, Cost::quadratic(1e6), cfg);
  CHECK(J.d_w.cwiseAbs().maxCoeff() <= 1e-3);
  CHECK(J.d_b.cwiseAbs().maxCoeff() <= 1e-3);
}

TEST_CASE("Jacobians: unconverged outcome rejected, singular Hessian flagged") {
  const Scorer m = th::scorer({1, 0}, -1.0);
  ResponseOutcome<double> fake;
  fake.x_star = vec({0, 0});
  fake.g_final = vec({0, 0});
  CHECK_THROWS_AS(response_jacobians(fake, vec({0, 0}), m, Cost::quadratic(), ResponseCfg::training()), InvalidInput);
  // At f = -1, tau = 1: sigma'' = 1/2 - 1/(2 * 5^1.5). Choosing |w|^2 = 2 / sigma''
  // makes the curvature along w exactly cancel the cost's.
  const double s2 = 0.5 - 0.5 / std::pow(5.0, 1.5);
  const double a = std::sqrt(2.0 / s2);
  const Scorer sharp = th::scorer({a, 0}, -1.0);
  fake.converged = true;
  CHECK_THROWS_AS(response_jacobians(fake, vec({0, 0}), sharp, Cost::quadratic(), ResponseCfg::training()),
                  DegenerateJacobian);
}

TEST_CASE("tangent responses: feasibility, orthogonal tangent, full-space tangent") {
  th::Rng r(18);
  for (int i = 0; i < 200; ++i) {
    const Instance in = random_instance(r, i);
    const Eigen::VectorXd dir = r.normal_vec(2).normalized();
    Tangent t{in.x, Eigen::MatrixXd(dir)};
    const auto out = tangent_constrained_respond(in.x, in.model, in.cost, t, ResponseCfg::evaluation());
    const Eigen::VectorXd delta = out.x_star - in.x;
    REQUIRE(std::abs(delta(0) * dir(1) - delta(1) * dir(0)) <= 1e-10);

    Tangent full{in.x, Eigen::MatrixXd::Identity(2, 2)};
    const auto a = tangent_constrained_respond(in.x, in.model, in.cost, full, ResponseCfg::evaluation());
    const auto b = ccp_respond(in.x, in.model, in.cost, ResponseCfg::evaluation());
    REQUIRE((a.x_star - b.x_star).norm() <= 1e-3);
  }
  const Scorer m = th::scorer({1, 0}, 0.0);
  Tangent ortho{vec({-0.3, 2}), Eigen::MatrixXd(vec({0, 1}))};
  const auto out = tangent_constrained_respond(vec({-0.3, 2}), m, Cost::quadratic(), ortho, ResponseCfg::evaluation());
  CHECK((out.x_star - vec({-0.3, 2})).norm() <= 1e-12);
  Tangent off{vec({1, 1}), Eigen::MatrixXd(vec({0, 1}))};
  CHECK_THROWS_AS(tangent_constrained_respond(vec({0, 0}), m, Cost::quadratic(), off, ResponseCfg{}), InvalidInput);
}

TEST_CASE("batched responses match per-example responses") {
  th::Rng r(19);
  Eigen::MatrixXd Z(64, 2);
  for (int i = 0; i < 64; ++i) Z.row(i) = r.normal_vec(2).transpose();
  const Scorer m = th::scorer({1.2, -0.4}, 0.2);
  for (const Cost& c : {Cost::quadratic(), Cost::weighted_quadratic(vec({0.5, 2.0})),
                        Cost::mixture(0.3, vec({1, 1}))}) {
    const auto batch = ccp_respond_batch<double>(Z, m, c, ResponseCfg::evaluation());
    for (int i = 0; i < 64; ++i) {
      const auto one = ccp_respond<double>(Z.row(i).transpose(), m, c, ResponseCfg::evaluation());
      REQUIRE((batch[static_cast<size_t>(i)].x_star - one.x_star).norm() <= 1e-6);
    }
  }
}
