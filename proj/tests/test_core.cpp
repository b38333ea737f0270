#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "rad/core.hpp"

using namespace rad;

TEST_CASE("metrics: all-correct case") {
  const Metrics m = evaluate_metrics({+1, -1}, {+1, -1}, +1);
  CHECK(m.accuracy == 1.0);
  CHECK(m.f1 == 1.0);
  CHECK(m.tp == 1);
  CHECK(m.tn == 1);
}

TEST_CASE("metrics: no positives predicted") {
  const Metrics m = evaluate_metrics({-1, -1}, {+1, -1}, +1);
  CHECK(m.tp == 0);
  CHECK(m.recall == 0.0);
  CHECK(m.precision == 0.0);
  CHECK(m.f1 == 0.0);
}

TEST_CASE("metrics: hand-counted confusion matrix") {
  // preds (+1,+1,-1,-1) vs truth (+1,-1,+1,-1): tp=1 fp=1 fn=1 tn=1
  const Metrics m = evaluate_metrics({+1, +1, -1, -1}, {+1, -1, +1, -1}, +1);
  CHECK(m.accuracy == doctest::Approx(0.5));
  CHECK(m.precision == doctest::Approx(0.5));
  CHECK(m.recall == doctest::Approx(0.5));
  CHECK(m.f1 == doctest::Approx(0.5));
}

TEST_CASE("metrics: usage errors") {
  CHECK_THROWS_AS(evaluate_metrics({}, {}, +1), UsageError);
  CHECK_THROWS_AS(evaluate_metrics({+1}, {+1, -1}, +1), UsageError);
}

TEST_CASE("metrics identities on randomized confusion counts") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> label(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> preds, truth;
    const int n = 5 + int(rng() % 200);
    for (int i = 0; i < n; ++i) {
      preds.push_back(label(rng) ? +1 : -1);
      truth.push_back(label(rng) ? +1 : -1);
    }
    const Metrics m = evaluate_metrics(preds, truth, +1);
    CHECK(m.tp + m.fp + m.tn + m.fn == n);
    CHECK(m.accuracy == doctest::Approx(double(m.tp + m.tn) / n));
    if (m.precision + m.recall > 0)
      CHECK(m.f1 == doctest::Approx(2 * m.precision * m.recall /
                                    (m.precision + m.recall)));
    else
      CHECK(m.f1 == 0.0);
  }
}

TEST_CASE("pointwise loss: stated examples") {
  CHECK(pointwise_loss(LossKind::ZeroOne, 2.0, +1) == 0.0);
  CHECK(pointwise_loss(LossKind::Hinge, 0.0, +1) == doctest::Approx(1.0));
  CHECK(pointwise_loss(LossKind::Logistic, 0.0, -1) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("zero-one boundary rule: sign(0) = +1") {
  CHECK(sign_label(0.0) == +1);
  CHECK(pointwise_loss(LossKind::ZeroOne, 0.0, +1) == 0.0);
  CHECK(pointwise_loss(LossKind::ZeroOne, 0.0, -1) == 1.0);
  CHECK(pointwise_loss(LossKind::ZeroOne, -0.1, -1) == 0.0);
}

TEST_CASE("surrogates upper-bound the 0/1 loss on sampled scores") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> score(-8.0, 8.0);
  std::uniform_int_distribution<int> label(0, 1);
  for (int i = 0; i < 10000; ++i) {
    const double s = score(rng);
    const int y = label(rng) ? +1 : -1;
    const double z01 = pointwise_loss(LossKind::ZeroOne, s, y);
    CHECK(zero_one_upper_bound_loss(LossKind::Hinge, s, y) >= z01);
    CHECK(zero_one_upper_bound_loss(LossKind::Logistic, s, y) >= z01);
    CHECK(zero_one_upper_bound_loss(LossKind::CrossEntropy, s, y) >= z01);
  }
  // the scaled logistic touches the bound at score 0
  CHECK(zero_one_upper_bound_loss(LossKind::Logistic, 0.0, -1) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("seed stream: identical master seeds replay bit-identically") {
  const SeedStream a(123456789), b(123456789);
  for (int idx = 0; idx < 5; ++idx) {
    auto ra = a.substream("attack", idx), rb = b.substream("attack", idx);
    for (int i = 0; i < 100; ++i) CHECK(ra() == rb());
  }
}

TEST_CASE("seed stream: substreams do not depend on draw order") {
  const SeedStream s(99);
  auto r1 = s.substream("x", 3);
  auto pre = s.substream("x", 7);
  (void)pre();  // consuming another substream first must change nothing
  auto r2 = s.substream("x", 3);
  for (int i = 0; i < 50; ++i) CHECK(r1() == r2());
  CHECK(s.derive("x", 3) != s.derive("x", 4));
  CHECK(s.derive("x", 3) != s.derive("y", 3));
  CHECK(s.derive("x", 3, 1) != s.derive("x", 3, 2));
}

TEST_CASE("feature space membership") {
  const FeatureSpace bin = FeatureSpace::binary(3);
  CHECK(bin.contains({0, 1, 0}));
  CHECK(!bin.contains({0, 0.5, 0}));
  CHECK(!bin.contains({0, 1}));
  const FeatureSpace box = FeatureSpace::continuous({0, -1}, {1, 1});
  CHECK(box.contains({0.5, 0.0}));
  CHECK(!box.contains({1.5, 0.0}));
  CHECK(box.clamp(0, 2.0) == 1.0);
  CHECK_THROWS_AS(FeatureSpace::continuous({1.0}, {0.0}), UsageError);
}

TEST_CASE("format_real round-trips bit-exactly") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng);
    CHECK(parse_real(format_real(v)) == v);
    CHECK(format_real(parse_real(format_real(v))) == format_real(v));
  }
  CHECK(parse_real(format_real(0.1)) == 0.1);
}

TEST_CASE("content key distinguishes vectors and ignores nothing") {
  CHECK(content_key({1.0, 2.0}) == content_key({1.0, 2.0}));
  CHECK(content_key({1.0, 2.0}) != content_key({2.0, 1.0}));
  CHECK(content_key({0.0}) != content_key({-0.0}));  // bit-pattern based
}
