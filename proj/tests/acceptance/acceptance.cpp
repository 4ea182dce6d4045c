// One PASS/FAIL line per criterion on stdout and in acceptance_report.txt,
// progress on stderr. Exit status is non-zero when a criterion fails that is
// not listed in kKnownUnattainable.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <boost/math/quadrature/sinh_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "CLI11.hpp"
#include "saeb/cli.hpp"
#include "saeb/diagnostics.hpp"
#include "saeb/inference.hpp"
#include "saeb/latent_field.hpp"
#include "saeb/likelihoods.hpp"
#include "saeb/simulator.hpp"
#include "test_support.hpp"

using namespace saeb;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and thresholds.
constexpr double kDicTol = 1e-9;
constexpr double kMcseBand = 3.0;
constexpr double kQuadratureTol = 0.05;
constexpr double kGradientTol = 1e-6;
constexpr int kGradientPoints = 100;
constexpr double kMassTol = 1e-10;
constexpr double kDensityTol = 1e-8;
constexpr int kSeeds = 20;
constexpr double kCoverageMin = 0.85;
constexpr double kPsrfMax = 1.1;
constexpr double kPsrfRunShare = 0.90;
constexpr int kPitSeeds = 5;
constexpr double kPitKsMax = 0.1;
constexpr double kPitRatio = 2.0;
constexpr double kLogScoreShare = 0.80;
constexpr int kSmallRegions = 5;
constexpr double kRrmseShare = 0.80;
constexpr double kProbabilitySumTol = 1e-12;
constexpr double kHoldoutLow = 0.85;
constexpr double kHoldoutHigh = 1.0;

// (-1638.4, 31.1) adds to -1607.3 while the anchor is -1607.4.
const std::set<int> kKnownUnattainable{1};

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

MCMCConfig chains(std::uint64_t seed, int iterations, int burn_in, int thinning) {
  MCMCConfig c;
  c.num_chains = 4;
  c.iterations = iterations;
  c.burn_in = burn_in;
  c.thinning = thinning;
  c.base_seed = seed;
  return c;
}

MCMCConfig defaults(std::uint64_t seed) {
  MCMCConfig c;
  c.base_seed = seed;
  return c;
}

// ---------------------------------------------------------------- 1

Verdict dic_anchor() {
  struct Row {
    double d_bar, p_d, dic;
  };
  const Row rows[] = {{2210.0, 30.4, 2240.4},
                      {2349.5, 25.4, 2374.9},
                      {2208.9, 32.5, 2241.4},
                      {-1638.4, 31.1, -1607.4},
                      {4894.5, 81.5, 4976.0}};
  int ok = 0;
  std::string misses;
  for (const auto& r : rows) {
    const double got = dic_from_parts(r.d_bar, r.p_d).dic;
    if (std::abs(got - r.dic) <= kDicTol)
      ++ok;
    else
      misses += fmt("; (%.1f, %.1f) -> %.10g, anchor %.1f", r.d_bar, r.p_d, got, r.dic);
  }
  return {ok == 5, fmt("%d/5 rows within %.0e", ok, kDicTol) + misses};
}

// ---------------------------------------------------------------- 2

struct MomentCheck {
  bool pass = false;
  std::string detail;
};

MomentCheck moments(const std::string& label, const PosteriorSamples& s, const std::vector<double>& x,
                    double mean, double variance) {
  const double m = testing::mean_of(x);
  std::vector<double> sq;
  for (double v : x) sq.push_back((v - m) * (v - m));
  const double n = static_cast<double>(x.size());
  const double v = testing::mean_of(sq) * n / (n - 1);
  const double se_m = testing::pooled_mcse(s, x);
  const double se_v = testing::pooled_mcse(s, sq);
  const double zm = std::abs(m - mean) / se_m;
  const double zv = std::abs(v - variance) / se_v;
  return {zm <= kMcseBand && zv <= kMcseBand,
          fmt("%s mean %.5g vs %.5g (%.2f MCSE), var %.4g vs %.4g (%.2f MCSE)", label.c_str(), m, mean,
              zm, v, variance, zv)};
}

Verdict conjugate() {
  PanelSchema bare;
  bare.regional = {};
  bare.temporal = {};
  bare.spatiotemporal = {};
  const auto cfg = chains(101, 14500, 2000, 5);

  // Gamma-Poisson: lambda = exp(intercept) ~ Gamma(a, b), y_i ~ Poisson(n_i lambda).
  const auto pd = testing::panel_from(
      "region,quarter,unemployed,employed,inactive\n1,1,8,52,40\n2,1,21,129,100\n3,1,13,79,60\n", bare);
  auto ps = testing::toy_spec(Family::Poisson, false);
  ps.priors.intercept_gamma_shape = 2.0;
  ps.priors.intercept_gamma_rate = 20.0;
  const Model pm(pd, resolve(ps));
  const auto psamples = fit(pm, cfg);
  auto lambda = psamples.pooled("(Intercept)");
  for (double& l : lambda) l = std::exp(l);
  const double shape = 2.0 + 42.0, rate = 20.0 + 502.0;
  const auto gp = moments("gamma-poisson", psamples, lambda, shape / rate, shape / (rate * rate));

  // Normal-Normal: y_i ~ N(mu, s2), mu ~ N(0, v0).
  const std::vector<double> y{0.12, 0.08, 0.15, 0.11, 0.09};
  const auto gd = testing::panel_from(
      "region,quarter,unemployed,employed,inactive\n1,1,1,9,5\n2,1,1,9,5\n3,1,1,9,5\n4,1,1,9,5\n5,1,1,9,5\n",
      bare);
  auto gs = testing::toy_spec(Family::Gaussian, false);
  gs.priors.coefficient_variance = 0.01;
  gs.known_variance = 0.04;
  std::vector<ObservationTarget> targets;
  for (double v : y) targets.emplace_back(GaussianTarget{v});
  const Model gm(gd, resolve(gs), std::nullopt, targets);
  const auto gsamples = fit(gm, cfg);
  const double precision = 5.0 / 0.04 + 1.0 / 0.01;
  const double post_mean = (0.55 / 0.04) / precision;
  const auto nn = moments("normal-normal", gsamples, gsamples.pooled("(Intercept)"), post_mean,
                          1.0 / precision);
  return {gp.pass && nn.pass,
          fmt("%zu draws; ", psamples.total_draws()) + gp.detail + "; " + nn.detail};
}

// ---------------------------------------------------------------- 3

Verdict quadrature() {
  struct Toy {
    const char* label;
    Family family;
    bool slope;
    double shape, rate;
    const char* first;
    const char* second;
    double expect_first, expect_second;
  };
  // Dense-grid posterior means frozen from tests/oracles/quadrature_toys.py.
  const Toy toys[] = {
      {"poisson", Family::Poisson, true, 0, 0, "(Intercept)", "x", -2.909703258, 0.7726804867},
      {"binomial", Family::Binomial, true, 0, 0, "(Intercept)", "x", -2.255163393, 0.8562828819},
      {"negbin", Family::NegativeBinomial, false, 2.0, 0.2, "(Intercept)", "phi", -5.88318458, 11.64730985},
      {"beta", Family::Beta, false, 2.0, 0.05, "(Intercept)", "phi", -2.096632643, 24.45954657},
      {"multinomial", Family::Multinomial, false, 0, 0, "employed.(Intercept)", "(Intercept)", 0.2352560264,
       -1.456786923},
  };
  const auto panel = testing::two_cell_toy();
  bool pass = true;
  double worst = 0.0;
  std::string detail;
  for (const auto& t : toys) {
    auto spec = testing::toy_spec(t.family, t.slope);
    if (t.shape > 0) {
      spec.priors.dispersion_shape = t.shape;
      spec.priors.dispersion_rate = t.rate;
    }
    const Model model(panel, spec);
    const auto s = fit(model, chains(202, 25000, 5000, 5));
    const double a = testing::mean_of(s.pooled(t.first));
    const double b = testing::mean_of(s.pooled(t.second));
    const double ea = testing::rel_err(a, t.expect_first);
    const double eb = testing::rel_err(b, t.expect_second);
    worst = std::max({worst, ea, eb});
    pass = pass && ea < kQuadratureTol && eb < kQuadratureTol;
    detail += fmt("%s%s (%.4g, %.4g)", detail.empty() ? "" : ", ", t.label, a, b);
  }
  return {pass, fmt("max relative error %.4f (limit %.2f); ", worst, kQuadratureTol) + detail};
}

// ---------------------------------------------------------------- 4

double five_point(const std::function<double(double)>& f, double x) {
  const double h = 1e-4 * std::max(1.0, std::abs(x));
  return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
}

double gradient_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

Verdict gradients() {
  Rng rng(404);
  std::map<std::string, double> worst;
  auto note = [&](const std::string& k, double e) { worst[k] = std::max(worst[k], e); };
  const Family families[] = {Family::Poisson, Family::NegativeBinomial, Family::Binomial,
                             Family::Beta, Family::Multinomial, Family::Gaussian};
  for (Family f : families) {
    const std::string name = std::string(to_string(f));
    for (int p = 0; p < kGradientPoints; ++p) {
      const int k = num_categories(f);
      std::vector<double> eta(static_cast<std::size_t>(k));
      for (double& e : eta) e = -4.0 + 5.0 * uniform01(rng);
      if (f == Family::NegativeBinomial) eta[0] = -6.0 + 5.9 * uniform01(rng);
      const double phi = f == Family::Gaussian ? 0.01 + uniform01(rng) : 0.5 + 150.0 * uniform01(rng);
      std::vector<double> mean(3);
      mean_from_eta(f, eta, phi, mean);
      const auto size = static_cast<std::int64_t>(10 + 2990 * uniform01(rng));
      ObservationTarget target = sample_observation(f, std::span<const double>(mean.data(), f == Family::Multinomial ? 3 : 1), phi, size, rng);
      if (const auto* r = std::get_if<RateTarget>(&target))
        target = RateTarget{std::clamp(r->r, 1e-6, 1.0 - 1e-6)};
      std::vector<double> g(static_cast<std::size_t>(k));
      gradient_eta(f, target, eta, phi, g);
      for (int q = 0; q < k; ++q) {
        auto along = [&](double x) {
          auto e = eta;
          e[static_cast<std::size_t>(q)] = x;
          return log_likelihood_eta(f, target, e, phi);
        };
        note(name, gradient_error(g[static_cast<std::size_t>(q)], five_point(along, eta[static_cast<std::size_t>(q)])));
      }
      if (has_dispersion(f)) {
        auto along = [&](double x) { return log_likelihood_eta(f, target, eta, x); };
        note(name + ".phi", gradient_error(gradient_dispersion(f, target, eta, phi), five_point(along, phi)));
      }
    }
  }

  const auto graph = portugal_graph();
  for (int p = 0; p < kGradientPoints; ++p) {
    const double tau = 0.5 + 50.0 * uniform01(rng);
    const double rho = -0.9 + 1.8 * uniform01(rng);
    auto check = [&](const std::string& name, std::vector<double> x, const std::vector<double>& g,
                     const std::function<double(const std::vector<double>&)>& logd) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        auto along = [&](double v) {
          auto y = x;
          y[i] = v;
          return logd(y);
        };
        note(name, gradient_error(g[i], five_point(along, x[i])));
      }
    };
    std::vector<double> w(28), v(12);
    for (double& x : w) x = standard_normal(rng);
    for (double& x : v) x = standard_normal(rng);
    check("icar", w, icar_gradient(w, tau, graph), [&](const std::vector<double>& x) { return icar_logdensity(x, tau, graph); });
    check("rw1", v, rw1_gradient(v, tau), [&](const std::vector<double>& x) { return rw1_logdensity(x, tau); });
    check("ar1", v, ar1_gradient(v, tau, rho), [&](const std::vector<double>& x) { return ar1_logdensity(x, tau, rho); });
    check("iid", v, iid_gradient(v, tau), [&](const std::vector<double>& x) { return iid_logdensity(x, tau); });
  }

  double max_err = 0.0;
  std::string detail;
  for (const auto& [k, e] : worst) {
    max_err = std::max(max_err, e);
    detail += fmt("%s%s %.1e", detail.empty() ? "" : ", ", k.c_str(), e);
  }
  return {max_err < kGradientTol,
          fmt("%d points each, max relative error %.2e (limit %.0e); ", kGradientPoints, max_err, kGradientTol) + detail};
}

// ---------------------------------------------------------------- 5

Verdict normalization() {
  double mass = 0.0, density = 0.0;
  auto count_sum = [](const std::function<double(std::int64_t)>& logp, double mean) {
    double s = 0.0;
    for (std::int64_t y = 0;; ++y) {
      const double p = std::exp(logp(y));
      s += p;
      if (static_cast<double>(y) > mean && p < 1e-20) break;
    }
    return s;
  };
  for (double mu : {0.5, 4.0, 37.2, 480.0})
    mass = std::max(mass, std::abs(count_sum([&](std::int64_t y) { return poisson_log_pmf(y, mu); }, mu) - 1.0));
  for (auto [mu, phi] : {std::pair{4.0, 2.0}, {31.5, 48.6}, {2.0, 0.5}, {120.0, 900.0}})
    mass = std::max(mass, std::abs(count_sum([&](std::int64_t y) { return negbin_log_pmf(y, mu, phi); }, mu) - 1.0));
  for (auto [m, p] : {std::pair<std::int64_t, double>{1, 0.5}, {10, 0.1}, {900, 0.13}, {2500, 0.97}}) {
    double s = 0.0;
    for (std::int64_t y = 0; y <= m; ++y) s += std::exp(binomial_log_pmf(y, m, p));
    mass = std::max(mass, std::abs(s - 1.0));
  }
  for (std::int64_t n : {1, 10, 60, 200}) {
    const std::array<double, 3> p{0.52, 0.083, 0.397};
    double s = 0.0;
    for (std::int64_t e = 0; e <= n; ++e)
      for (std::int64_t u = 0; u <= n - e; ++u) s += std::exp(multinomial_log_pmf({e, u, n - e - u}, p));
    mass = std::max(mass, std::abs(s - 1.0));
  }

  // Shape below 1 only at r = 0: near r = 1 doubles are too coarse to
  // resolve an integrable singularity.
  boost::math::quadrature::tanh_sinh<double> unit;
  for (auto [mu, phi] : {std::pair{0.12, 200.0}, {0.3, 5.0}, {0.5, 2.0}, {0.08, 40.0}, {0.08, 5.0}, {0.9, 30.0}}) {
    const double s = unit.integrate([&](double r) { return std::exp(beta_log_pdf(r, mu, phi)); }, 0.0, 1.0);
    density = std::max(density, std::abs(s - 1.0));
  }
  boost::math::quadrature::sinh_sinh<double> line;
  for (auto [m, v] : {std::pair{0.0, 1.0}, {0.1, 2.0}, {-3.0, 0.01}}) {
    const double s = line.integrate([&](double y) { return std::exp(gaussian_log_pdf(y, m, v)); });
    density = std::max(density, std::abs(s - 1.0));
  }
  return {mass <= kMassTol && density <= kDensityTol,
          fmt("count families |sum - 1| <= %.1e (limit %.0e), densities |integral - 1| <= %.1e (limit %.0e)",
              mass, kMassTol, density, kDensityTol)};
}

// ---------------------------------------------------------------- 6-9

struct RecoveryRun {
  int covered = 0;
  int total = 0;
  double max_psrf = 0.0;
};

struct BinomialExtras {
  double pit_ks = 0.0;
  double log_score = 0.0;
  double beta_log_score = 0.0;
  bool small_regions_better = false;
  bool max_better = false;
  double max_model_rrmse = 0.0;
  double max_direct_rrmse = 0.0;
};

struct Campaign {
  std::map<Family, std::vector<RecoveryRun>> runs;
  std::vector<BinomialExtras> binomial;
};

double count_scale_score(const PosteriorSamples& s, const Model& model) {
  const auto obs = observation_diagnostics(s, model);
  return log_score_from_log(count_scale_log_cpo(model, obs.log_cpo)).value;
}

double pit_ks(const PosteriorSamples& s, const Model& model) {
  const auto obs = observation_diagnostics(s, model);
  std::vector<double> pit;
  for (std::size_t i = 0; i < obs.pit.size(); ++i)
    if (obs.active[i]) pit.push_back(obs.pit[i]);
  return ks_uniform(pit);
}

BinomialExtras binomial_extras(const Simulation& sim, const PosteriorSamples& s, const Model& model, int seed) {
  BinomialExtras x;
  const auto obs = observation_diagnostics(s, model);
  std::vector<double> pit;
  for (std::size_t i = 0; i < obs.pit.size(); ++i)
    if (obs.active[i]) pit.push_back(obs.pit[i]);
  x.pit_ks = ks_uniform(pit);
  x.log_score = log_score_from_log(count_scale_log_cpo(model, obs.log_cpo)).value;

  const int J = sim.dataset.num_regions(), T = sim.dataset.num_quarters();
  const auto summary = summarize(s, model);
  const auto direct = direct_estimate(sim.dataset);
  std::vector<double> model_rrmse(static_cast<std::size_t>(J)), direct_rrmse(static_cast<std::size_t>(J));
  std::vector<std::pair<std::int64_t, int>> sizes;
  for (int j = 0; j < J; ++j) {
    std::vector<double> est, dir, truth;
    std::int64_t n = 0;
    for (int t = 0; t < T; ++t) {
      const auto idx = static_cast<std::size_t>(sim.dataset.cell_index(j, t));
      est.push_back(summary.cells[idx].rate.mean);
      dir.push_back(direct[idx].rate);
      truth.push_back(sim.truth.cell_rate[idx]);
      n += sim.dataset.cell(j, t).sample_size();
    }
    model_rrmse[static_cast<std::size_t>(j)] = relative_rmse(est, truth);
    direct_rrmse[static_cast<std::size_t>(j)] = relative_rmse(dir, truth);
    sizes.emplace_back(n, j);
  }
  std::sort(sizes.begin(), sizes.end());
  x.small_regions_better = true;
  for (int i = 0; i < kSmallRegions; ++i) {
    const auto j = static_cast<std::size_t>(sizes[static_cast<std::size_t>(i)].second);
    x.small_regions_better = x.small_regions_better && model_rrmse[j] < direct_rrmse[j];
  }
  x.max_model_rrmse = *std::max_element(model_rrmse.begin(), model_rrmse.end());
  x.max_direct_rrmse = *std::max_element(direct_rrmse.begin(), direct_rrmse.end());
  x.max_better = x.max_model_rrmse < x.max_direct_rrmse;

  // Misspecified comparator on the same counts.
  const Model beta(sim.dataset, default_model_spec(Family::Beta), sim.graph);
  const auto bs = fit(beta, chains(static_cast<std::uint64_t>(seed), 8000, 2000, 6));
  x.beta_log_score = count_scale_score(bs, beta);
  return x;
}

Campaign run_campaign() {
  Campaign c;
  for (Family f : {Family::Poisson, Family::Binomial, Family::Beta}) {
    for (int seed = 1; seed <= kSeeds; ++seed) {
      const auto t0 = std::chrono::steady_clock::now();
      auto scenario = default_scenario(f);
      scenario.seed = static_cast<std::uint64_t>(seed);
      const auto sim = simulate(scenario);
      const Model model(sim.dataset, default_model_spec(f), sim.graph);
      const auto s = fit(model, defaults(static_cast<std::uint64_t>(seed)));
      RecoveryRun r;
      for (std::size_t i = 0; i < sim.truth.coefficient_names.size(); ++i) {
        const auto& name = sim.truth.coefficient_names[i];
        const auto draws = s.pooled(name);
        const auto sum = summarize_draws(name, draws);
        r.covered += (sum.q025 <= sim.truth.coefficients[i] && sim.truth.coefficients[i] <= sum.q975) ? 1 : 0;
        ++r.total;
      }
      r.max_psrf = max_coefficient_psrf(s);
      c.runs[f].push_back(r);
      std::string extra;
      if (f == Family::Binomial) {
        c.binomial.push_back(binomial_extras(sim, s, model, seed));
        const auto& b = c.binomial.back();
        extra = fmt(", ks %.3f, log score %.4f vs beta %.4f", b.pit_ks, b.log_score, b.beta_log_score);
      }
      std::cerr << fmt("  recovery %s seed %2d: %d/%d covered, max psrf %.4f%s (%.0f s)\n", std::string(to_string(f)).c_str(), seed,
                       r.covered, r.total, r.max_psrf, extra.c_str(), seconds_since(t0));
    }
  }
  return c;
}

Verdict recovery(const Campaign& c) {
  bool pass = true;
  std::string detail;
  for (const auto& [f, runs] : c.runs) {
    int covered = 0, total = 0, converged = 0;
    for (const auto& r : runs) {
      covered += r.covered;
      total += r.total;
      converged += r.max_psrf < kPsrfMax ? 1 : 0;
    }
    const double coverage = static_cast<double>(covered) / total;
    const double share = static_cast<double>(converged) / static_cast<double>(runs.size());
    pass = pass && coverage >= kCoverageMin && share >= kPsrfRunShare;
    detail += fmt("%s%s coverage %.3f, psrf<%.1f in %.2f of runs", detail.empty() ? "" : "; ",
                  std::string(to_string(f)).c_str(), coverage, kPsrfMax, share);
  }
  return {pass, fmt("%d seeds, default MCMC; ", kSeeds) + detail};
}

Verdict pit_contrast(const Campaign& c) {
  bool pass = true;
  std::string detail;
  for (int seed = 1; seed <= kPitSeeds; ++seed) {
    auto scenario = default_scenario(Family::Beta);
    scenario.seed = static_cast<std::uint64_t>(seed);
    scenario.heavy_tail_df = 2.0;
    scenario.heavy_tail_scale = 0.3;
    const auto sim = simulate(scenario);
    const Model model(sim.dataset, default_model_spec(Family::Beta), sim.graph);
    const auto s = fit(model, chains(static_cast<std::uint64_t>(seed), 8000, 2000, 6));
    const double heavy = pit_ks(s, model);
    const double good = c.binomial[static_cast<std::size_t>(seed - 1)].pit_ks;
    pass = pass && good < kPitKsMax && heavy >= kPitRatio * good;
    detail += fmt("%sseed %d binomial %.3f / beta heavy-tail %.3f", detail.empty() ? "" : ", ", seed, good, heavy);
  }
  return {pass, fmt("KS limit %.2f, ratio >= %.1f; ", kPitKsMax, kPitRatio) + detail};
}

Verdict log_score_direction(const Campaign& c) {
  int wins = 0;
  for (const auto& b : c.binomial) wins += b.log_score < b.beta_log_score ? 1 : 0;
  const double share = static_cast<double>(wins) / static_cast<double>(c.binomial.size());
  return {share >= kLogScoreShare,
          fmt("binomial below beta in %d/%zu seeds (%.2f, limit %.2f)", wins, c.binomial.size(), share,
              kLogScoreShare)};
}

Verdict rrmse_property(const Campaign& c) {
  int small = 0, max_ok = 0;
  double ratio = 0.0;
  for (const auto& b : c.binomial) {
    small += b.small_regions_better ? 1 : 0;
    max_ok += b.max_better ? 1 : 0;
    ratio += b.max_model_rrmse / b.max_direct_rrmse;
  }
  const double n = static_cast<double>(c.binomial.size());
  return {small / n >= kRrmseShare && max_ok == static_cast<int>(c.binomial.size()),
          fmt("%d smallest regions better in %d/%zu seeds (limit %.2f), max model < max direct in %d/%zu, "
              "mean max ratio %.2f",
              kSmallRegions, small, c.binomial.size(), kRrmseShare, max_ok, c.binomial.size(), ratio / n)};
}

// ---------------------------------------------------------------- 10

Verdict multinomial_consistency() {
  const auto sim = simulate(default_scenario(Family::Multinomial));
  const Model model(sim.dataset, default_model_spec(Family::Multinomial), sim.graph);
  const auto s = fit(model, chains(1010, 4000, 1000, 5));
  const auto& d = model.design();
  double worst = 0.0;
  std::size_t bad_totals = 0, checks = 0;
  for (std::size_t c = 0; c < s.num_chains(); ++c)
    for (std::size_t k = 0; k < s.draws_per_chain(); ++k) {
      const auto eta = linear_predictors(model, model.unflatten(s.draw(c, k)));
      for (int i = 0; i < model.num_rows(); ++i) {
        const auto p = multinomial_probabilities(eta[2 * static_cast<std::size_t>(i)],
                                                 eta[2 * static_cast<std::size_t>(i) + 1]);
        worst = std::max(worst, std::abs(p[0] + p[1] + p[2] - 1.0));
        const auto n = sim.dataset.cell(d.row_region[static_cast<std::size_t>(i)], d.row_quarter[static_cast<std::size_t>(i)])
                           .sample_size();
        const auto t = apportion_total(n, p);
        bad_totals += (t[0] + t[1] + t[2] == n) ? 0 : 1;
        ++checks;
      }
    }
  return {worst <= kProbabilitySumTol && bad_totals == 0 && model.num_rows() == 336,
          fmt("%d cells x %zu draws: max |sum p - 1| %.1e (limit %.0e), totals != n in %zu of %zu",
              model.num_rows(), s.total_draws(), worst, kProbabilitySumTol, bad_totals, checks)};
}

// ---------------------------------------------------------------- 11

Verdict holdout() {
  int covered = 0, total = 0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const auto t0 = std::chrono::steady_clock::now();
    auto scenario = default_scenario(Family::Binomial);
    scenario.seed = static_cast<std::uint64_t>(seed);
    const auto sim = simulate(scenario);
    const int T = sim.dataset.num_quarters();
    const auto h = predict_holdout(sim.dataset, default_model_spec(Family::Binomial), sim.graph,
                                   chains(static_cast<std::uint64_t>(seed), 8000, 2000, 6), T);
    int here = 0;
    for (const auto& p : h.predictions) {
      const double truth = sim.truth.cell_rate[static_cast<std::size_t>(sim.dataset.cell_index(p.region - 1, T - 1))];
      here += (p.rate.lower <= truth && truth <= p.rate.upper) ? 1 : 0;
      ++total;
    }
    covered += here;
    std::cerr << fmt("  hold-out seed %2d: %d/%zu covered (%.0f s)\n", seed, here, h.predictions.size(), seconds_since(t0));
  }
  const double rate = static_cast<double>(covered) / total;
  return {rate >= kHoldoutLow && rate <= kHoldoutHigh,
          fmt("%d/%d final-quarter intervals cover the true rate (%.3f, limits [%.2f, %.2f])", covered, total, rate,
              kHoldoutLow, kHoldoutHigh)};
}

// ---------------------------------------------------------------- 12

Verdict replay_determinism() {
  const auto dir = fs::temp_directory_path() / "saeb-acceptance-replay";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto at = [&](const std::string& p) { return (dir / p).string(); };
  std::ostringstream sink;
  auto run = [&](const std::vector<std::string>& args) { return run_cli(args, sink, sink, CliOptions{false}); };

  const std::vector<std::vector<std::string>> commands{
      {"simulate", "--family", "beta", "--seed", "12", "--out", at("sim")},
      {"fit", "--panel", at("sim/panel.csv"), "--adjacency", at("sim/adjacency.txt"), "--model", "beta",
       "--seed", "12", "--chains", "2", "--iters", "1200", "--burnin", "400", "--thin", "2",
       "--psrf-threshold", "1000", "--out", at("fit")},
      {"fit", "--panel", at("sim/panel.csv"), "--adjacency", at("sim/adjacency.txt"), "--model", "binomial",
       "--seed", "12", "--chains", "2", "--iters", "1200", "--burnin", "400", "--thin", "2",
       "--psrf-threshold", "1000", "--holdout-last-quarter", "--out", at("fit-holdout")},
      {"diagnose", "--fit", at("fit"), "--fit", at("fit-holdout"), "--out", at("diag")},
      {"compare", "--fit", at("fit"), "--truth", at("sim/truth.csv"), "--out", at("cmp")},
  };
  for (const auto& c : commands)
    if (const int code = run(c); code != 0) return {false, fmt("setup command %s exited %d", c[0].c_str(), code)};

  int identical = 0;
  std::string detail;
  for (const char* out : {"sim", "fit", "fit-holdout", "diag", "cmp"}) {
    const int code = run({"replay", "--manifest", at(out), "--out", at(std::string(out) + "-replay")});
    identical += code == 0 ? 1 : 0;
    detail += fmt("%s%s %s", detail.empty() ? "" : ", ", out, code == 0 ? "identical" : "differs");
  }
  fs::remove_all(dir);
  return {identical == 5, fmt("%d/5 replays byte-identical over all artifacts; ", identical) + detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);
  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

  std::ofstream file("acceptance_report.txt");
  auto emit = [&](const std::string& line) {
    std::cout << line << std::endl;
    file << line << std::endl;
  };
  std::set<int> failed;
  auto report = [&](int id, const char* title, const std::function<Verdict()>& body) {
    if (!wanted(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    const auto v = body();
    if (!v.pass) failed.insert(id);
    emit(fmt("criterion %2d %s %s (%.1f s): ", id, v.pass ? "PASS" : "FAIL", title, seconds_since(t0)) + v.detail);
  };

  report(1, "DIC identity", dic_anchor);
  report(2, "conjugate oracles", conjugate);
  report(3, "quadrature oracles", quadrature);
  report(4, "gradients", gradients);
  report(5, "normalization", normalization);

  Campaign campaign;
  const bool need_campaign = wanted(6) || wanted(7) || wanted(8) || wanted(9);
  if (need_campaign) campaign = run_campaign();
  report(6, "parameter recovery", [&] { return recovery(campaign); });
  report(7, "PIT behaviour", [&] { return pit_contrast(campaign); });
  report(8, "log-score direction", [&] { return log_score_direction(campaign); });
  report(9, "small-area RRMSE", [&] { return rrmse_property(campaign); });
  report(10, "multinomial consistency", multinomial_consistency);
  report(11, "hold-out coverage", holdout);
  report(12, "replay determinism", replay_determinism);

  int unexpected = 0;
  for (int id : failed) {
    if (kKnownUnattainable.count(id))
      emit(fmt("criterion %2d failed as documented (unattainable as stated)", id));
    else
      ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
