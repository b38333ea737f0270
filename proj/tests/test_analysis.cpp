#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "rad/analysis.hpp"
#include "rad/harness.hpp"
#include "rad/retraining.hpp"

using namespace rad;

namespace {

Model linear_model(std::vector<double> w, double b, FeatureSpace space,
                   Learner tag = Learner::LinearSVM) {
  Model m;
  m.tag = tag;
  m.spec.kind = tag;
  m.space = std::move(space);
  m.params = LinearParams{std::move(w), b};
  return m;
}

EvasionOracle identity_oracle() {
  OracleConfig cfg;
  cfg.strategy = Strategy::Identity;
  cfg.cost = {CostKind::Quadratic, 1.0};
  return EvasionOracle(cfg);
}

EvasionOracle cg_oracle(CostKind kind, double lambda, std::uint64_t seed) {
  OracleConfig cfg;
  cfg.strategy = Strategy::CoordinateGreedy;
  cfg.cost = {kind, lambda};
  cfg.seed = seed;
  return EvasionOracle(cfg);
}

Dataset random_binary_dataset(int n, int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset d;
  d.space = FeatureSpace::binary(n);
  for (int i = 0; i < m; ++i) {
    FeatureVector x(n);
    for (auto& v : x) v = double(rng() & 1);
    d.instances.push_back({std::move(x), i % 2 == 0 ? +1 : -1});
  }
  return d;
}

}  // namespace

TEST_CASE("adversarial risk with the identity oracle equals the standard risk") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 3 + int(rng() % 5);
    const Dataset d = random_binary_dataset(n, 40, 100 + trial);
    std::vector<double> w(n);
    for (auto& v : w) v = u(rng);
    const Model m = linear_model(w, u(rng), d.space);
    for (LossKind loss : {LossKind::ZeroOne, LossKind::Hinge, LossKind::Logistic}) {
      const double std_risk = standard_risk(m, d, loss, 0.01, 2).total();
      const double adv_risk =
          adversarial_risk(m, d, identity_oracle(), loss, 0.01, 2).total();
      CHECK(std::abs(std_risk - adv_risk) <= 1e-12);
    }
  }
}

TEST_CASE("adversarial risk over an all-benign dataset ignores the oracle") {
  Dataset d = random_binary_dataset(5, 30, 7);
  for (auto& inst : d.instances) inst.y = -1;
  const Model m = linear_model({0.5, -0.2, 0.1, 0.4, -0.6}, 0.1, d.space);
  const double std_risk = standard_risk(m, d, LossKind::Hinge, 0.0, 2).total();
  const double adv_risk =
      adversarial_risk(m, d, cg_oracle(CostKind::Exponential, 0.1, 5),
                       LossKind::Hinge, 0.0, 2)
          .total();
  CHECK(adv_risk == doctest::Approx(std_risk).epsilon(1e-12));
}

TEST_CASE("adversarial risk on the 3-feature toy matches a hand sum") {
  // f = x1+x2+x3-1.5 on {0,1}^3; one malicious instance at (1,1,1), one
  // benign at (0,0,1); L1 cost 0.4 drives the attacker to (0,0,0)
  Dataset d;
  d.space = FeatureSpace::binary(3);
  d.instances = {{{1, 1, 1}, +1}, {{0, 0, 1}, -1}};
  const Model m = linear_model({1, 1, 1}, -1.5, d.space);
  const RiskReport r = adversarial_risk(m, d, cg_oracle(CostKind::L1, 0.4, 9),
                                        LossKind::ZeroOne, 0.0, 2);
  // the attacker evades to (0,0,0): malicious 0/1 loss 1; benign correct: 0
  CHECK(r.malicious_loss == doctest::Approx(1.0));
  CHECK(r.benign_loss == doctest::Approx(0.0));
  CHECK(r.total() == doctest::Approx(1.0));
}

TEST_CASE("retrained risk: empty N equals standard risk; duplicates rejected") {
  const Dataset d = random_binary_dataset(4, 20, 11);
  const Model m = linear_model({0.3, -0.1, 0.2, 0.5}, -0.2, d.space);
  std::vector<FeatureVector> anchors;
  std::vector<std::vector<FeatureVector>> n_sets;
  for (auto i : d.malicious_indices()) {
    anchors.push_back(d.instances[i].x);
    n_sets.emplace_back();
  }
  const double std_risk = standard_risk(m, d, LossKind::Hinge, 0.01, 2).total();
  CHECK(retrained_risk(m, d, anchors, n_sets, LossKind::Hinge, 0.01, 2).total() ==
        doctest::Approx(std_risk).epsilon(1e-12));

  // injecting the anchor itself violates the disjointness contract
  n_sets[0].push_back(anchors[0]);
  CHECK_THROWS_AS(retrained_risk(m, d, anchors, n_sets, LossKind::Hinge, 0.01, 2),
                  UsageError);
  // and so does a duplicate inside one N_i
  n_sets[0] = {FeatureVector{1, 1, 0, 0}, FeatureVector{1, 1, 0, 0}};
  CHECK_THROWS_AS(retrained_risk(m, d, anchors, n_sets, LossKind::Hinge, 0.01, 2),
                  UsageError);
}

TEST_CASE("retrained risk matches the final trace record after a rad run") {
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::SparseBinaryBagOfWords;
  spec.dim = 20;
  spec.benign_count = 40;
  spec.malicious_count = 40;
  const Dataset data = generate_synthetic(spec, 300);
  TrainConfig tc;
  tc.epochs = 10;
  tc.alpha = 0.01;
  tc.seed = 5;
  RadConfig rc;
  rc.seed = 7;
  const EvasionOracle oracle = cg_oracle(CostKind::Exponential, 0.2, 13);
  const RadResult rr =
      rad_train(LearnerSpec::logistic_regression(), tc, oracle, data, rc);
  REQUIRE(rr.trace.terminated_clean);
  const double recomputed =
      retrained_risk(rr.model, data, rr.anchors, rr.n_sets, LossKind::ZeroOne,
                     tc.alpha, tc.p_norm)
          .total();
  CHECK(std::abs(recomputed - rr.trace.records.back().retrained_risk) <= 1e-12);

  const double adv = adversarial_risk(rr.model, data, oracle, LossKind::ZeroOne,
                                      tc.alpha, tc.p_norm)
                         .total();
  CHECK(std::abs(adv - rr.trace.records.back().adversarial_risk) <= 1e-12);
}

TEST_CASE("check_prop31: identity oracle certifies with zero margin") {
  const Dataset d = random_binary_dataset(5, 30, 17);
  const Model m = linear_model({0.2, 0.4, -0.3, 0.1, 0.6}, -0.1, d.space);
  std::vector<FeatureVector> anchors;
  std::vector<std::vector<FeatureVector>> n_sets;
  for (auto i : d.malicious_indices()) {
    anchors.push_back(d.instances[i].x);
    n_sets.emplace_back();
  }
  const Prop31Report rep = check_prop31(m, d, anchors, n_sets, identity_oracle(),
                                        LossKind::ZeroOne, 0.0, 2, true);
  CHECK(rep.status == BoundStatus::Certified);
  CHECK(rep.margin == doctest::Approx(0.0));
}

TEST_CASE("check_prop31: dirty termination is inconclusive, corrupted N detected") {
  SyntheticSpec spec;
  spec.kind = SyntheticSpec::Kind::SparseBinaryBagOfWords;
  spec.dim = 16;
  spec.benign_count = 30;
  spec.malicious_count = 30;
  const Dataset data = generate_synthetic(spec, 400);
  TrainConfig tc;
  tc.epochs = 10;
  tc.seed = 5;
  RadConfig rc;
  rc.seed = 11;
  const EvasionOracle oracle = cg_oracle(CostKind::Exponential, 0.15, 19);
  const RadResult rr =
      rad_train(LearnerSpec::naive_bayes(), tc, oracle, data, rc);
  REQUIRE(rr.trace.terminated_clean);

  const Prop31Report dirty =
      check_prop31(rr.model, data, rr.anchors, rr.n_sets, oracle,
                   LossKind::ZeroOne, 0.0, 2, false);
  CHECK(dirty.status == BoundStatus::Inconclusive);

  const Prop31Report clean =
      check_prop31(rr.model, data, rr.anchors, rr.n_sets, oracle,
                   LossKind::ZeroOne, 0.0, 2, true);
  CHECK(clean.status == BoundStatus::Certified);
}

TEST_CASE("check_prop31: a hand-constructed dropped response is flagged") {
  // one malicious instance classified correctly at rest but evadable; the
  // oracle response was deliberately dropped from N, so the adversarial
  // side carries a mistake the retrained side never paid for
  Dataset d;
  d.space = FeatureSpace::binary(3);
  d.instances = {{{1, 1, 1}, +1}, {{0, 0, 1}, -1}};
  const Model m = linear_model({1, 1, 1}, -1.5, d.space);
  const std::vector<FeatureVector> anchors{{1, 1, 1}};
  const std::vector<std::vector<FeatureVector>> empty_n{{}};
  const EvasionOracle oracle = cg_oracle(CostKind::L1, 0.4, 21);
  REQUIRE(oracle.evade(m, {1, 1, 1}).evaded);  // the attack does succeed
  const Prop31Report rep = check_prop31(m, d, anchors, empty_n, oracle,
                                        LossKind::ZeroOne, 0.0, 2, true);
  CHECK(rep.status == BoundStatus::Violated);
  CHECK(rep.margin < 0);
}

TEST_CASE("delta bound: unit values and errors") {
  CHECK(std::abs(delta_bound(5, 0.0, 0.5) - 0.69314718055994530942) <= 1e-12);
  CHECK(std::abs(delta_bound(0, 0.3, 0.1) - (-std::log(0.1))) <= 1e-12);
  // frozen from a 40-digit independent evaluation of the same expression
  CHECK(delta_bound(10, 0.05, 0.1) ==
        doctest::Approx(3.5560391492275921).epsilon(1e-15));
  CHECK_THROWS_AS(delta_bound(5, 0.1, 0.0), UsageError);
  CHECK_THROWS_AS(delta_bound(5, 0.1, 1.0), UsageError);
  CHECK_THROWS_AS(delta_bound(5, -0.1, 0.5), UsageError);
}

TEST_CASE("delta bound: monotone over a parameter grid") {
  for (int bi = 0; bi < 20; ++bi)
    for (int pi = 0; pi < 20; ++pi)
      for (int qi = 0; qi < 20; ++qi) {
        const long b = bi;
        const double pl = pi / 19.0;
        const double p = 0.02 + 0.96 * qi / 19.0;
        const double v = delta_bound(b, pl, p);
        if (bi + 1 < 20) CHECK(delta_bound(b + 1, pl, p) >= v - 1e-12);
        if (pi + 1 < 20)
          CHECK(delta_bound(b, pi == 18 ? 1.0 : (pi + 1) / 19.0, p) >= v - 1e-12);
        if (qi + 1 < 20)
          CHECK(delta_bound(b, pl, 0.02 + 0.96 * (qi + 1) / 19.0) <= v + 1e-12);
      }
}

TEST_CASE("brute force: the 3-feature toy and the size guard") {
  const Model m = linear_model({1, 1, 1}, -1.5, FeatureSpace::binary(3));
  const CostModel cost(CostSpec{CostKind::L1, 0.4}, {1, 1, 1}, SpaceKind::Binary);
  const BruteForceResult r =
      brute_force_evade(m, cost, {1, 1, 1}, {ReferenceKind::ExhaustiveBinary});
  CHECK(r.x == FeatureVector{0, 0, 0});
  CHECK(r.q == doctest::Approx(-0.3));

  const Model big = linear_model(std::vector<double>(21, 0.1), 0.0,
                                 FeatureSpace::binary(21));
  const CostModel cost21(CostSpec{CostKind::L1, 0.4}, FeatureVector(21, 1.0),
                         SpaceKind::Binary);
  CHECK_THROWS_AS(brute_force_evade(big, cost21, FeatureVector(21, 1.0),
                                    {ReferenceKind::ExhaustiveBinary}),
                  UsageError);
}

TEST_CASE("brute force: n=20 enumeration completes") {
  const int n = 20;
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(n);
  for (auto& v : w) v = u(rng);
  const Model m = linear_model(w, 0.3, FeatureSpace::binary(n));
  FeatureVector x_i(n, 1.0);
  const CostModel cost(CostSpec{CostKind::L1, 0.05}, x_i, SpaceKind::Binary);
  const BruteForceResult r =
      brute_force_evade(m, cost, x_i, {ReferenceKind::ExhaustiveBinary});
  // separable objective: the per-coordinate minimum is the global one
  double expected = 0.3;
  for (int j = 0; j < n; ++j) expected += std::min(w[j], 0.05);
  CHECK(r.q == doctest::Approx(expected));
}

TEST_CASE("brute force: closed form matches the dense grid") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  const FeatureSpace box = FeatureSpace::continuous({-5, -5, -5}, {5, 5, 5});
  for (int trial = 0; trial < 10; ++trial) {
    const Model m = linear_model({u(rng), u(rng), u(rng)}, u(rng), box);
    const FeatureVector x_i{u(rng), u(rng), u(rng)};
    const CostModel cost(CostSpec{CostKind::Quadratic, 0.8}, x_i,
                         SpaceKind::Continuous);
    const BruteForceResult closed =
        brute_force_evade(m, cost, x_i, {ReferenceKind::ConvexClosedForm});
    ReferenceSpec grid{ReferenceKind::GridContinuous, 41, 2.0};
    const BruteForceResult gridded = brute_force_evade(m, cost, x_i, grid);
    // the grid value can only certify to its own resolution
    CHECK(closed.q <= gridded.q + 1e-9);
    CHECK(gridded.q - closed.q <= 0.01);
    // analytic solution: x* = x_i - w / lambda
    const auto& w = std::get<LinearParams>(m.params).w;
    for (int j = 0; j < 3; ++j)
      CHECK(closed.x[j] == doctest::Approx(x_i[j] - w[j] / 0.8));
  }
}

TEST_CASE("estimate_pl: one binary feature is solved by a single pass") {
  const Model m = linear_model({0.7}, -0.3, FeatureSpace::binary(1));
  const std::vector<FeatureVector> instances{{1.0}, {0.0}};
  for (int L : {0, 3}) {
    const PlEstimate est =
        estimate_pl(instances, m, {CostKind::L1, 0.2}, L,
                    {ReferenceKind::ExhaustiveBinary}, 40, 99);
    CHECK(est.failures == 0);
    CHECK(est.p_l == 0.0);
  }
}

TEST_CASE("estimate_pl: restarts never increase the failure rate") {
  std::mt19937_64 rng(31);
  const int n = 10;
  Model m;
  m.tag = Learner::KernelSVM;
  m.spec = LearnerSpec::kernel_svm({KernelKind::Rbf, 1.0, 2, 1.0});
  m.space = FeatureSpace::binary(n);
  KernelSvmParams p;
  std::uniform_real_distribution<double> a(0.3, 1.2);
  for (int s = 0; s < 8; ++s) {
    FeatureVector sv(n);
    for (auto& v : sv) v = double(rng() & 1);
    p.alpha.push_back(a(rng));
    p.sv_y.push_back(s % 2 ? -1 : +1);
    p.sv_x.push_back(std::move(sv));
  }
  m.params = std::move(p);
  std::vector<FeatureVector> instances;
  for (int i = 0; i < 10; ++i) {
    FeatureVector x(n);
    for (auto& v : x) v = double(rng() & 1);
    instances.push_back(std::move(x));
  }
  const PlEstimate e0 = estimate_pl(instances, m, {CostKind::Exponential, 0.25},
                                    0, {ReferenceKind::ExhaustiveBinary}, 100, 7);
  const PlEstimate e16 = estimate_pl(instances, m, {CostKind::Exponential, 0.25},
                                     16, {ReferenceKind::ExhaustiveBinary}, 100, 7);
  CHECK(e16.p_l <= e0.p_l);
}

TEST_CASE("estimate_pl: convex continuous problems always reach the optimum") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const FeatureSpace box = FeatureSpace::continuous({-8, -8}, {8, 8});
  const Model m = linear_model({u(rng), u(rng)}, u(rng), box);
  std::vector<FeatureVector> instances;
  for (int i = 0; i < 5; ++i) instances.push_back({u(rng), u(rng)});
  const PlEstimate est =
      estimate_pl(instances, m, {CostKind::Quadratic, 0.9}, 0,
                  {ReferenceKind::ConvexClosedForm}, 50, 3, 1e-10, 6000);
  CHECK(est.p_l == 0.0);
}
