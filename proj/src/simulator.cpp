#include "saeb/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "saeb/errors.hpp"
#include "saeb/latent_field.hpp"
#include "saeb/likelihoods.hpp"
#include "saeb/text.hpp"

namespace saeb {

namespace {

constexpr const char* kPortugalAdjacency = R"(1: 2
2: 1 3 4 8
3: 2 4 5 8
4: 2 3 5 6 9
5: 3 4 6 7 8 14
6: 4 5 9 14
7: 5 8 14 16
8: 2 3 5 7
9: 4 6 10 14
10: 9 11 12 14
11: 10 12 19 22 23
12: 10 11 13 14 15 18 22
13: 12 17 18 22 25
14: 5 6 7 9 10 12 15 16
15: 12 14 16 18
16: 7 14 15 17 18
17: 13 16 18 25
18: 12 13 15 16 17
19: 11 20 23
20: 19 21 23
21: 20 23 24 26
22: 11 12 13 23 25
23: 11 19 20 21 22 25 26
24: 21 26 27 28
25: 13 17 22 23 26
26: 21 23 24 25 27
27: 24 26 28
28: 24 27
)";

const std::vector<double> kSlopes{-0.05, 0.05, -0.03, 0.05, 0.2, 0.08, -0.06};

std::vector<double> with_intercept(double intercept) {
  std::vector<double> b{intercept};
  b.insert(b.end(), kSlopes.begin(), kSlopes.end());
  return b;
}

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

struct Covariates {
  std::vector<Covariate> columns;
};

Covariates draw_covariates(int J, int T, const RegionGraph& graph, Rng& rng) {
  Covariates out;
  auto regional = [&](const std::string& name, double lo, double hi) {
    Covariate c{name, CovariateScope::Regional, {}, {}};
    for (int j = 0; j < J; ++j) c.values.push_back(uniform(rng, lo, hi));
    out.columns.push_back(std::move(c));
  };
  regional("companies", 5.0, 15.0);
  regional("primary", 0.02, 0.35);
  regional("secondary", 0.15, 0.45);

  Covariate gdp{"gdp", CovariateScope::Temporal, {}, {}};
  for (int t = 0; t < T; ++t)
    gdp.values.push_back(16000.0 - 45.0 * t + 120.0 * std::sin(2.0 * std::numbers::pi * t / 8.0) +
                         25.0 * standard_normal(rng));
  out.columns.push_back(std::move(gdp));

  auto field = [&](const std::string& name, double level, double spread, double trend,
                   double noise) {
    const auto smooth = sample_icar(graph, 1.0, rng);
    double sd = 0.0;
    for (double v : smooth) sd += v * v;
    sd = std::sqrt(sd / std::max(1, J)) + 1e-12;
    Covariate c{name, CovariateScope::Spatiotemporal, {}, {}};
    c.values.resize(static_cast<std::size_t>(J * T));
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < J; ++j)
        c.values[static_cast<std::size_t>(t * J + j)] =
            level + spread * smooth[static_cast<std::size_t>(j)] / sd + trend * t +
            noise * standard_normal(rng);
    out.columns.push_back(std::move(c));
  };
  field("iefp", 0.06, 0.02, 0.0015, 0.004);
  field("sa6", 0.03, 0.008, 0.0005, 0.003);
  field("sa8", 0.012, 0.004, -0.0002, 0.002);
  return out;
}

double student_t(Rng& rng, double df) {
  return std::student_t_distribution<double>(df)(rng);
}

}  // namespace

void ScenarioConfig::validate() const {
  if (num_regions < 1) throw ConfigError("regions", "number of regions must be positive");
  if (num_quarters < 2) throw ConfigError("quarters", "at least two quarters are required");
  if (graph && graph->num_regions() != num_regions)
    throw ConfigError("adjacency", "graph size does not match the number of regions");
  if (coefficients.size() != 8)
    throw ConfigError("coefficients", "eight coefficients are required");
  for (double b : coefficients)
    if (!std::isfinite(b)) throw ConfigError("coefficients", "coefficients must be finite");
  if (family == Family::Multinomial) {
    if (employed_coefficients.size() != 8)
      throw ConfigError("employed_coefficients", "eight coefficients are required");
    for (double b : employed_coefficients)
      if (!std::isfinite(b))
        throw ConfigError("employed_coefficients", "coefficients must be finite");
  }
  const std::pair<const char*, double> taus[] = {
      {"tau_w1", tau_w1}, {"tau_w2", tau_w2}, {"tau_eps", tau_eps},
      {"tau_u", tau_u},   {"tau_v", tau_v}};
  for (const auto& [key, v] : taus)
    if (!(v > 0.0)) throw ConfigError(key, std::string(key) + " must be positive");
  if (has_dispersion(family) && !(dispersion > 0.0 && std::isfinite(dispersion)))
    throw ConfigError("phi", "dispersion must be positive and finite");
  if (!(min_sample >= 1.0 && max_sample >= min_sample && std::isfinite(max_sample)))
    throw ConfigError("sample_size", "sample-size range must satisfy 1 <= min <= max");
  if (!(min_activity > 0.0 && max_activity >= min_activity && max_activity <= 1.0))
    throw ConfigError("activity", "activity range must lie in (0, 1]");
  if (heavy_tail_df < 0.0) throw ConfigError("heavy_tail_df", "degrees of freedom must be >= 0");
  if (!(heavy_tail_scale >= 0.0)) throw ConfigError("heavy_tail_scale", "scale must be >= 0");
  if (max_attempts < 1) throw ConfigError("max_attempts", "at least one attempt is required");
}

ScenarioConfig default_scenario(Family family) {
  ScenarioConfig c;
  c.family = family;
  switch (family) {
    case Family::Poisson:
      c.coefficients = with_intercept(-2.8);
      break;
    case Family::NegativeBinomial:
      c.coefficients = with_intercept(-9.0);
      c.dispersion = 50.0;
      break;
    case Family::Beta:
      c.coefficients = with_intercept(-2.0);
      c.dispersion = 200.0;
      break;
    case Family::Multinomial:
      c.coefficients = with_intercept(-1.7);
      c.employed_coefficients = {0.3, 0.02, -0.03, 0.02, 0.03, -0.1, -0.02, 0.02};
      break;
    case Family::Binomial:
    case Family::Gaussian:
      c.coefficients = with_intercept(-2.0);
      break;
  }
  return c;
}

RegionGraph portugal_graph() {
  std::istringstream in(kPortugalAdjacency);
  return parse_adjacency(in);
}

RegionGraph random_region_graph(int n, Rng& rng) {
  std::vector<std::pair<double, double>> pts(static_cast<std::size_t>(n));
  for (auto& p : pts) p = {uniform01(rng), uniform01(rng)};
  auto dist = [&](int a, int b) {
    const double dx = pts[static_cast<std::size_t>(a)].first - pts[static_cast<std::size_t>(b)].first;
    const double dy =
        pts[static_cast<std::size_t>(a)].second - pts[static_cast<std::size_t>(b)].second;
    return dx * dx + dy * dy;
  };
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    std::vector<int> others;
    for (int k = 0; k < n; ++k)
      if (k != i) others.push_back(k);
    std::sort(others.begin(), others.end(), [&](int a, int b) { return dist(i, a) < dist(i, b); });
    for (std::size_t r = 0; r < std::min<std::size_t>(3, others.size()); ++r)
      edges.emplace_back(std::min(i, others[r]), std::max(i, others[r]));
  }
  // Join components through their closest pair until connected.
  while (true) {
    std::vector<int> comp(static_cast<std::size_t>(n), -1);
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (const auto& [a, b] : edges) {
      adj[static_cast<std::size_t>(a)].push_back(b);
      adj[static_cast<std::size_t>(b)].push_back(a);
    }
    int count = 0;
    for (int s = 0; s < n; ++s) {
      if (comp[static_cast<std::size_t>(s)] >= 0) continue;
      std::vector<int> stack{s};
      comp[static_cast<std::size_t>(s)] = count;
      while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (int w : adj[static_cast<std::size_t>(v)])
          if (comp[static_cast<std::size_t>(w)] < 0) {
            comp[static_cast<std::size_t>(w)] = count;
            stack.push_back(w);
          }
      }
      ++count;
    }
    if (count <= 1) break;
    double best = INFINITY;
    std::pair<int, int> link{0, 0};
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (comp[static_cast<std::size_t>(a)] == 0 && comp[static_cast<std::size_t>(b)] != 0 &&
            dist(a, b) < best) {
          best = dist(a, b);
          link = {std::min(a, b), std::max(a, b)};
        }
    edges.push_back(link);
  }
  return RegionGraph(n, edges);
}

Simulation simulate(const ScenarioConfig& config) {
  config.validate();
  const int J = config.num_regions;
  const int T = config.num_quarters;
  const int N = J * T;
  const Family family = config.family;
  const int K = num_categories(family);
  Rng rng(splitmix64(config.seed));
  const RegionGraph graph = config.graph ? *config.graph
                            : J == 28    ? portugal_graph()
                                         : random_region_graph(J, rng);

  PredictorSpec predictor;
  predictor.offset_rule = (family == Family::Poisson || family == Family::NegativeBinomial)
                              ? OffsetRule::LogSampleSize
                              : OffsetRule::None;
  predictor.effect_structure =
      family == Family::Multinomial ? EffectStructure::Unstructured : EffectStructure::Structured;

  for (int attempt = 1; attempt <= config.max_attempts; ++attempt) {
    std::vector<double> base_size(static_cast<std::size_t>(J));
    for (auto& s : base_size)
      s = std::exp(uniform(rng, std::log(config.min_sample), std::log(config.max_sample)));
    std::vector<PanelObservation> cells(static_cast<std::size_t>(N));
    std::vector<double> activity(static_cast<std::size_t>(N));
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < J; ++j) {
        auto& c = cells[static_cast<std::size_t>(t * J + j)];
        c.region = j + 1;
        c.quarter = t + 1;
        c.inactive = std::max<std::int64_t>(
            1, std::llround(base_size[static_cast<std::size_t>(j)] * uniform(rng, 0.9, 1.1)));
        activity[static_cast<std::size_t>(t * J + j)] =
            uniform(rng, config.min_activity, config.max_activity);
      }
    auto covariates = draw_covariates(J, T, graph, rng);
    const PanelDataset raw(J, T, cells, covariates.columns);
    const PanelDataset standardized = standardize_covariates(raw);
    const DesignMatrices design = build_design(standardized, predictor, K);

    TruthRecord truth;
    truth.family = family;
    truth.attempts = attempt;
    for (int q = 0; q < K; ++q)
      for (int c = 0; c < design.num_columns(); ++c)
        truth.coefficient_names.push_back(design.coefficient_name(q, c));
    if (K == 2) {
      truth.coefficients = config.employed_coefficients;
      truth.coefficients.insert(truth.coefficients.end(), config.coefficients.begin(),
                                config.coefficients.end());
    } else {
      truth.coefficients = config.coefficients;
    }
    for (int q = 0; q < K; ++q) {
      const std::span<const double> b(truth.coefficients.data() + q * 8, 8);
      const auto r = coefficients_to_raw(design, b);
      truth.raw_coefficients.insert(truth.raw_coefficients.end(), r.begin(), r.end());
    }

    ParameterState state = zero_state(design);
    state.coefficients = truth.coefficients;
    for (std::size_t b = 0; b < design.blocks.size(); ++b) {
      const auto& blk = design.blocks[b];
      switch (blk.kind) {
        case EffectKind::Spatial:
          state.effects[b] = sample_icar(graph, config.tau_w1, rng);
          break;
        case EffectKind::Temporal:
          state.effects[b] = sample_rw1(T, config.tau_w2, rng);
          break;
        case EffectKind::Cell:
          state.effects[b] = sample_iid(N, config.tau_eps, rng);
          break;
        case EffectKind::Region:
          state.effects[b] = sample_iid(J, config.tau_u, rng);
          break;
        case EffectKind::Quarter:
          state.effects[b] = sample_iid(T, config.tau_v, rng);
          break;
      }
      truth.effects.emplace_back(blk.name, state.effects[b]);
    }
    for (std::size_t p = 0; p < design.precision_names.size(); ++p) {
      const auto& name = design.precision_names[p];
      const double v = name == "tau_w1"   ? config.tau_w1
                       : name == "tau_w2" ? config.tau_w2
                       : name == "tau_eps" ? config.tau_eps
                       : name == "tau_u"   ? config.tau_u
                                           : config.tau_v;
      truth.precisions.emplace_back(name, v);
    }
    truth.dispersion = config.dispersion;

    std::vector<double> eta(static_cast<std::size_t>(N * K));
    bool ok = true;
    for (int i = 0; i < N; ++i) {
      for (int q = 0; q < K; ++q) {
        double e = linear_predictor(state, design, i, q);
        if (config.heavy_tail_df > 0.0)
          e += config.heavy_tail_scale * student_t(rng, config.heavy_tail_df);
        eta[static_cast<std::size_t>(i * K + q)] = e;
      }
      if (family == Family::NegativeBinomial && !(eta[static_cast<std::size_t>(i)] < 0.0))
        ok = false;
    }
    if (!ok) continue;

    for (int i = 0; i < N; ++i) {
      auto& c = cells[static_cast<std::size_t>(i)];
      const std::int64_t n = c.inactive;
      const double a = activity[static_cast<std::size_t>(i)];
      const double* e = eta.data() + i * K;
      double mean[3] = {0, 0, 0};
      mean_from_eta(family, std::span<const double>(e, static_cast<std::size_t>(K)),
                    config.dispersion, std::span<double>(mean, 3));
      double target = mean[0];
      double rate = mean[0];
      if (family == Family::Multinomial) {
        const auto t = sample_observation(family, std::span<const double>(mean, 3), 0.0, n, rng);
        const auto& y = std::get<CategoryTarget>(t).y;
        c.employed = y[0];
        c.unemployed = y[1];
        c.inactive = y[2];
        target = mean[1];
        rate = mean[1] / (mean[0] + mean[1]);
        truth.cell_total.push_back(c.weight * static_cast<double>(n) * mean[1]);
      } else {
        std::int64_t m = std::binomial_distribution<std::int64_t>(n, a)(rng);
        if (family == Family::Poisson || family == Family::NegativeBinomial) {
          const auto t = sample_observation(family, std::span<const double>(mean, 1),
                                            config.dispersion, m, rng);
          const auto y = std::get<CountTarget>(t).y;
          m = std::max(m, y);
          c.unemployed = y;
          c.employed = m - y;
          c.inactive = std::max<std::int64_t>(n - m, 0);
          rate = m > 0 ? target / static_cast<double>(m) : 0.0;
          truth.cell_total.push_back(c.weight * target);
        } else if (family == Family::Binomial) {
          m = std::max<std::int64_t>(m, 1);
          const auto t = sample_observation(family, std::span<const double>(mean, 1), 0.0, m, rng);
          c.unemployed = std::get<BinomialTarget>(t).y;
          c.employed = m - c.unemployed;
          c.inactive = std::max<std::int64_t>(n - m, 0);
          truth.cell_total.push_back(c.weight * static_cast<double>(m) * target);
        } else {
          m = std::max<std::int64_t>(m, 1);
          const auto t = sample_observation(family, std::span<const double>(mean, 1),
                                            config.dispersion, m, rng);
          const double r = std::get<RateTarget>(t).r;
          c.unemployed = std::clamp<std::int64_t>(std::llround(r * static_cast<double>(m)), 0, m);
          c.employed = m - c.unemployed;
          c.inactive = std::max<std::int64_t>(n - m, 0);
          truth.cell_total.push_back(c.weight * static_cast<double>(m) * target);
        }
      }
      truth.cell_target.push_back(target);
      truth.cell_rate.push_back(rate);
    }
    return {PanelDataset(J, T, std::move(cells), std::move(covariates.columns)), graph,
            std::move(truth)};
  }
  throw ConfigError("coefficients",
                    "negative binomial predictor reached eta >= 0 in every attempt; lower the "
                    "intercept");
}

void write_truth(const TruthRecord& truth, std::ostream& out) {
  out << "quantity,region,quarter,value\n";
  auto row = [&](const std::string& q, int j, int t, double v) {
    out << q << ',' << j << ',' << t << ',' << text::format_double(v) << '\n';
  };
  for (std::size_t i = 0; i < truth.coefficients.size(); ++i)
    row("coef:" + truth.coefficient_names[i], 0, 0, truth.coefficients[i]);
  for (std::size_t i = 0; i < truth.raw_coefficients.size(); ++i)
    row("coef_raw:" + truth.coefficient_names[i], 0, 0, truth.raw_coefficients[i]);
  for (const auto& [name, v] : truth.precisions) row(name, 0, 0, v);
  if (has_dispersion(truth.family)) row("phi", 0, 0, truth.dispersion);
  const int N = static_cast<int>(truth.cell_rate.size());
  int J = 0;
  for (const auto& [name, v] : truth.effects)
    if (name == "w1" || name == "u" || name == "employed.u") J = static_cast<int>(v.size());
  for (const auto& [name, v] : truth.effects) {
    for (std::size_t e = 0; e < v.size(); ++e) {
      const int idx = static_cast<int>(e);
      if (name == "eps")
        row(name, idx % J + 1, idx / J + 1, v[e]);
      else if (name.back() == '2' || name.back() == 'v')
        row(name, 0, idx + 1, v[e]);
      else
        row(name, idx + 1, 0, v[e]);
    }
  }
  if (J == 0) J = N;
  for (int i = 0; i < N; ++i) {
    const auto u = static_cast<std::size_t>(i);
    row("target", i % J + 1, i / J + 1, truth.cell_target[u]);
    row("rate", i % J + 1, i / J + 1, truth.cell_rate[u]);
    row("total", i % J + 1, i / J + 1, truth.cell_total[u]);
  }
}

void save_truth(const TruthRecord& truth, const std::filesystem::path& path) {
  std::ostringstream out;
  write_truth(truth, out);
  text::write_file(path, out.str());
}

std::vector<double> load_truth_rates(const std::filesystem::path& path, int J, int T) {
  const auto table = text::read_csv_file(path);
  const int qc = table.column("quantity");
  const int rc = table.column("region");
  const int tc = table.column("quarter");
  const int vc = table.column("value");
  if (qc < 0 || rc < 0 || tc < 0 || vc < 0) throw FormatError("truth file lacks columns");
  std::vector<double> rates(static_cast<std::size_t>(J * T), std::nan(""));
  for (const auto& row : table.rows) {
    if (row[static_cast<std::size_t>(qc)] != "rate") continue;
    std::int64_t j = 0;
    std::int64_t t = 0;
    double v = 0.0;
    if (!text::parse_int(row[static_cast<std::size_t>(rc)], j) ||
        !text::parse_int(row[static_cast<std::size_t>(tc)], t) ||
        !text::parse_double(row[static_cast<std::size_t>(vc)], v) || j < 1 || j > J || t < 1 ||
        t > T)
      throw FormatError("bad rate row in truth file");
    rates[static_cast<std::size_t>((t - 1) * J + (j - 1))] = v;
  }
  return rates;
}

}  // namespace saeb
