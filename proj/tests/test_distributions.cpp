#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "test_support.hpp"

using namespace dro;
using namespace testsupport;

TEST_CASE("empirical validation enforces a probability vector") {
  EmpiricalDistribution d{{{0.0}, {1.0}}, {0.5, 0.5}};
  REQUIRE_NOTHROW(d.validate());
  REQUIRE_THROWS_AS((EmpiricalDistribution{{{0.0}}, {0.9}}.validate()), validation_error);
  REQUIRE_THROWS_AS((EmpiricalDistribution{{{0.0}, {1.0}}, {1.5, -0.5}}.validate()),
                    validation_error);
  REQUIRE_THROWS_AS((EmpiricalDistribution{{{0.0}, {1.0, 2.0}}, {0.5, 0.5}}.validate()),
                    validation_error);
  REQUIRE_THROWS_AS((EmpiricalDistribution{}.validate()), validation_error);
}

TEST_CASE("from_samples assigns equal weights") {
  const auto d = EmpiricalDistribution::from_samples({{1.0}, {2.0}, {5.0}, {6.0}});
  REQUIRE(d.size() == 4);
  for (double w : d.weights) REQUIRE(w == Catch::Approx(0.25).margin(1e-15));
}

TEST_CASE("csv round trip preserves every bit") {
  CounterRng rng(88);
  const Box box{{-1.0, 0.0}, {2.0, 3.5}};
  const auto d = random_empirical(rng, 7, box, false);
  std::stringstream ss;
  write_csv(d, ss);
  const auto back = read_csv(ss);
  REQUIRE(back.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    REQUIRE(back.weights[i] == d.weights[i]);
    REQUIRE(back.points[i] == d.points[i]);
  }
}

TEST_CASE("csv reader rejects malformed input") {
  const auto parse = [](const std::string& text) {
    std::stringstream ss(text);
    return read_csv(ss);
  };
  REQUIRE_THROWS_AS(parse("weight,xi_1\n1.0,0.0\n"), validation_error);
  REQUIRE_THROWS_AS(parse("w,xi_1\n0.5,0.0,9.9\n0.5,1.0\n"), validation_error);
  REQUIRE_THROWS_AS(parse("w,xi_1\nhalf,0.0\n"), validation_error);
}

TEST_CASE("model validation rejects inverted boxes and bad mixtures") {
  Box inverted{{1.0}, {0.0}};
  REQUIRE_THROWS_AS(DistributionModel::uniform_box(inverted).validate(), validation_error);
  REQUIRE_THROWS_AS(
      DistributionModel::truncated_gaussian({0.0}, {-1.0}, Box{{0.0}, {1.0}}).validate(),
      validation_error);
  auto leaf = DistributionModel::uniform_box(Box{{0.0}, {1.0}});
  REQUIRE_THROWS_AS(DistributionModel::mixture({leaf, leaf}, {0.7, 0.7}).validate(),
                    validation_error);
}

TEST_CASE("sampling is deterministic in the seed and prefix consistent") {
  const auto model = DistributionModel::uniform_box(Box{{0.0, -1.0}, {2.0, 1.0}});
  const Mat a = sample(model, 25, 42);
  const Mat b = sample(model, 25, 42);
  REQUIRE(a == b);
  REQUIRE(sample(model, 25, 43) != a);
  const Mat prefix = sample(model, 10, 42);
  for (std::size_t i = 0; i < prefix.size(); ++i) REQUIRE(prefix[i] == a[i]);
  for (const auto& pt : a) {
    REQUIRE(pt[0] >= 0.0);
    REQUIRE(pt[0] <= 2.0);
    REQUIRE(pt[1] >= -1.0);
    REQUIRE(pt[1] <= 1.0);
  }
}

TEST_CASE("truncated gaussian samples stay inside the box") {
  const auto model =
      DistributionModel::truncated_gaussian({1.0}, {2.0}, Box{{0.5}, {1.5}});
  for (const auto& pt : sample(model, 200, 7)) {
    REQUIRE(pt[0] >= 0.5);
    REQUIRE(pt[0] <= 1.5);
  }
}

TEST_CASE("discretize places cell midpoints with exact uniform mass") {
  const auto model = DistributionModel::uniform_box(Box{{0.0}, {2.0}});
  const auto d = discretize(model, 4);
  REQUIRE(d.size() == 4);
  const Vec expected = {0.25, 0.75, 1.25, 1.75};
  for (std::size_t k = 0; k < 4; ++k) {
    REQUIRE(d.points[k][0] == Catch::Approx(expected[k]).margin(1e-12));
    REQUIRE(d.weights[k] == Catch::Approx(0.25).margin(1e-12));
  }
}

TEST_CASE("discretized symmetric gaussian keeps its center of mass") {
  const auto model =
      DistributionModel::truncated_gaussian({1.0}, {0.5}, Box{{0.0}, {2.0}});
  const auto d = discretize(model, 200);
  double mean = 0.0, mass = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    mean += d.weights[i] * d.points[i][0];
    mass += d.weights[i];
  }
  REQUIRE(mass == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(mean == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("normal cdf basics") {
  REQUIRE(detail::normal_cdf(0.0) == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(detail::normal_cdf(1.0) + detail::normal_cdf(-1.0) ==
          Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("radius schedule matches its closed form") {
  RadiusSchedule s;
  s.scale = 2.0;
  s.confidence_exponent = 3.0;
  s.dimension = 1;
  REQUIRE(s.radius(1) == Catch::Approx(2.0).margin(1e-15));
  REQUIRE(s.radius(100) == Catch::Approx(0.7433844377699678).margin(1e-12));
  REQUIRE(s.beta(100) == Catch::Approx(1e-6).margin(1e-18));
  s.dimension = 3;  // exponent switches from 1/2 to 1/3
  REQUIRE(s.radius(100) == Catch::Approx(1.033916918649267).margin(1e-12));

  RadiusSchedule canonical;  // C = 1, p = 2, m = 1 defaults
  REQUIRE(canonical.radius(50) == Catch::Approx(0.3955766932177954).margin(1e-12));
  REQUIRE(canonical.radius(12800) == Catch::Approx(0.0384407020005889).margin(1e-12));

  RadiusSchedule bad;
  bad.scale = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), validation_error);
  bad.scale = 1.0;
  bad.confidence_exponent = 1.0;
  REQUIRE_THROWS_AS(bad.validate(), validation_error);
}

TEST_CASE("one-dimensional transport distance: pinned cases") {
  const auto dirac = [](double v) {
    return EmpiricalDistribution{{{v}}, {1.0}};
  };
  REQUIRE(wasserstein1_1d(dirac(0.0), dirac(1.0)) == Catch::Approx(1.0).margin(1e-12));
  const EmpiricalDistribution a{{{0.0}, {1.0}}, {0.5, 0.5}};
  const EmpiricalDistribution b{{{1.0}, {3.0}}, {0.5, 0.5}};
  REQUIRE(wasserstein1_1d(a, b) == Catch::Approx(1.5).margin(1e-12));
  REQUIRE(wasserstein1_1d(a, a) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("quantile integral equals the transport LP on random pairs") {
  CounterRng rng(20240302);
  const Box box{{-2.0}, {3.0}};
  for (int trial = 0; trial < 25; ++trial) {
    const auto mu = random_empirical(rng, 1 + rng.next_u64() % 8, box, trial % 2 == 0);
    const auto nu = random_empirical(rng, 1 + rng.next_u64() % 8, box, trial % 2 == 1);
    const double fast = wasserstein1_1d(mu, nu);
    const double lp = wasserstein1(mu, nu);
    REQUIRE(fast == Catch::Approx(lp).margin(1e-8));
  }
}

TEST_CASE("transport distance is a metric on random triples") {
  CounterRng rng(99);
  const Box box{{-1.0, -1.0}, {1.0, 1.0}};
  for (int trial = 0; trial < 8; ++trial) {
    const auto a = random_empirical(rng, 3, box, false);
    const auto b = random_empirical(rng, 4, box, false);
    const auto c = random_empirical(rng, 3, box, false);
    const double ab = wasserstein1(a, b);
    const double ba = wasserstein1(b, a);
    const double ac = wasserstein1(a, c);
    const double cb = wasserstein1(c, b);
    REQUIRE(ab >= 0.0);
    REQUIRE(ab == Catch::Approx(ba).margin(1e-9));
    REQUIRE(ab <= ac + cb + 1e-9);
    REQUIRE(wasserstein1(a, a) == Catch::Approx(0.0).margin(1e-9));
  }
}

TEST_CASE("derived seeds decorrelate streams reproducibly") {
  REQUIRE(derive_seed(1, 0) == derive_seed(1, 0));
  REQUIRE(derive_seed(1, 0) != derive_seed(1, 1));
  REQUIRE(derive_seed(1, 0) != derive_seed(2, 0));
  CounterRng r1(derive_seed(10, 3));
  CounterRng r2(derive_seed(10, 3));
  for (int i = 0; i < 5; ++i) REQUIRE(r1.next_u64() == r2.next_u64());
}
