#include <cmath>
#include <numbers>

#include "doctest.h"
#include "saeb/errors.hpp"
#include "saeb/latent_field.hpp"
#include "saeb/simulator.hpp"
#include "test_support.hpp"

using namespace saeb;

namespace {

RegionGraph five_node_graph() { return RegionGraph(5, {{0, 1}, {0, 2}, {1, 2}, {2, 3}, {3, 4}}); }

const std::vector<double> kW{0.3, -0.1, 0.25, -0.4, -0.05};
const std::vector<double> kV{0.1, 0.15, -0.05, -0.2, 0.0, 0.12};

template <class F>
std::vector<double> numeric_gradient(F f, std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

void check_gradient(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  REQUIRE(analytic.size() == numeric.size());
  for (std::size_t i = 0; i < analytic.size(); ++i)
    CHECK(std::abs(analytic[i] - numeric[i]) <= 1e-6 * std::max(1.0, std::abs(analytic[i])));
}

}  // namespace

TEST_SUITE("latent-field") {
  TEST_CASE("small closed-form cases") {
    const auto g = path_graph(2);
    const std::vector<double> w{0.5, -0.5};
    CHECK(icar_quadratic_form(w, g) == doctest::Approx(1.0));
    CHECK(icar_logdensity(w, 1.0, g) == doctest::Approx(0.5 * std::log(1.0 / (2 * std::numbers::pi)) - 0.5));
    const std::vector<double> zero(4, 0.0);
    CHECK(rw1_logdensity(zero, 2.0) == doctest::Approx(1.5 * std::log(2.0 / (2 * std::numbers::pi))));
    const std::vector<double> one{1.0};
    CHECK_THROWS_AS(rw1_logdensity(one, 2.0), SpecError);
  }

  TEST_CASE("reference log densities") {
    // Frozen from tests/oracles/latent_and_psrf.py (dense precision matrices).
    CHECK(icar_logdensity(kW, 7.5, five_node_graph()) == doctest::Approx(-2.7584480917341616).epsilon(1e-12));
    CHECK(rw1_logdensity(kV, 7.5) == doctest::Approx(-0.0051851146677016069).epsilon(1e-10));
    CHECK(ar1_logdensity(kV, 7.5, 0.6) == doctest::Approx(-0.036315688915451061).epsilon(1e-10));
    CHECK(iid_logdensity(kV, 7.5) == doctest::Approx(0.19582786239875838).epsilon(1e-12));
  }

  TEST_CASE("quadratic form equals w'(D - A)w") {
    const auto g = portugal_graph();
    Rng rng(3);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> w(28);
      for (double& x : w) x = standard_normal(rng);
      double dense = 0.0;
      for (int j = 0; j < 28; ++j) {
        dense += g.degree(j) * w[static_cast<std::size_t>(j)] * w[static_cast<std::size_t>(j)];
        for (int k : g.neighbors(j)) dense -= w[static_cast<std::size_t>(j)] * w[static_cast<std::size_t>(k)];
      }
      CHECK(icar_quadratic_form(w, g) == doctest::Approx(dense).epsilon(1e-12));
    }
  }

  TEST_CASE("ICAR and RW1 ignore a constant shift") {
    const auto g = five_node_graph();
    auto w = kW;
    for (double& x : w) x += 3.7;
    CHECK(icar_logdensity(w, 7.5, g) == doctest::Approx(icar_logdensity(kW, 7.5, g)).epsilon(1e-12));
    auto v = kV;
    for (double& x : v) x -= 1.3;
    CHECK(rw1_logdensity(v, 7.5) == doctest::Approx(rw1_logdensity(kV, 7.5)).epsilon(1e-12));
  }

  TEST_CASE("gradients match finite differences") {
    const auto g = five_node_graph();
    check_gradient(icar_gradient(kW, 7.5, g),
                   numeric_gradient([&](const std::vector<double>& x) { return icar_logdensity(x, 7.5, g); }, kW));
    check_gradient(rw1_gradient(kV, 7.5),
                   numeric_gradient([](const std::vector<double>& x) { return rw1_logdensity(x, 7.5); }, kV));
    check_gradient(ar1_gradient(kV, 7.5, 0.6),
                   numeric_gradient([](const std::vector<double>& x) { return ar1_logdensity(x, 7.5, 0.6); }, kV));
    check_gradient(iid_gradient(kV, 7.5),
                   numeric_gradient([](const std::vector<double>& x) { return iid_logdensity(x, 7.5); }, kV));
  }

  TEST_CASE("centering") {
    const auto c = center(kV);
    CHECK(std::abs(testing::mean_of(c)) < 1e-15);
    const auto again = center(c);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(again[i] == doctest::Approx(c[i]).epsilon(1e-14));
    auto inplace = kV;
    center_in_place(inplace);
    CHECK(inplace == c);
  }

  TEST_CASE("prior draws") {
    Rng rng(17);
    const auto g = portugal_graph();
    const auto w = sample_icar(g, 4.0, rng);
    CHECK(w.size() == 28);
    CHECK(std::abs(testing::mean_of(w)) < 1e-12);

    // RW1 increments have variance 1 / tau.
    const double tau = 4.0;
    std::vector<double> increments;
    for (int rep = 0; rep < 4000; ++rep) {
      const auto v = sample_rw1(12, tau, rng);
      CHECK(std::abs(testing::mean_of(v)) < 1e-12);
      for (std::size_t t = 1; t < v.size(); ++t) increments.push_back(v[t] - v[t - 1]);
    }
    const double var = testing::variance_of(increments);
    const double se = std::sqrt(2.0 / static_cast<double>(increments.size())) / tau;
    CHECK(std::abs(var - 1.0 / tau) < 4 * se);

    // Stationary AR1 marginal variance 1 / (tau (1 - rho^2)).
    std::vector<double> last;
    for (int rep = 0; rep < 20000; ++rep) last.push_back(sample_ar1(6, tau, 0.6, rng).back());
    const double target = 1.0 / (tau * (1 - 0.36));
    CHECK(std::abs(testing::variance_of(last) - target) < 4 * target * std::sqrt(2.0 / 20000));

    std::vector<double> iid = sample_iid(20000, tau, rng);
    CHECK(std::abs(testing::variance_of(iid) - 1.0 / tau) < 4 * std::sqrt(2.0 / 20000) / tau);
  }

  TEST_CASE("ICAR draws have the ICAR covariance on contrasts") {
    // For an edge (i, k) of a path graph, w_i - w_k has variance 1 / tau.
    const auto g = path_graph(6);
    Rng rng(23);
    std::vector<double> diffs;
    for (int rep = 0; rep < 20000; ++rep) {
      const auto w = sample_icar(g, 2.0, rng);
      diffs.push_back(w[2] - w[3]);
    }
    CHECK(std::abs(testing::variance_of(diffs) - 0.5) < 4 * 0.5 * std::sqrt(2.0 / 20000));
  }
}
