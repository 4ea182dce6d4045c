#include "saeb/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "saeb/errors.hpp"
#include "saeb/latent_field.hpp"
#include "saeb/text.hpp"

namespace saeb {

void MCMCConfig::validate() const {
  if (num_chains < 2) throw ConfigError("chains", "at least two chains are required");
  if (iterations < 1) throw ConfigError("iters", "iterations must be positive");
  if (burn_in < 0 || burn_in >= iterations)
    throw ConfigError("burnin", "burn-in must lie in [0, iterations)");
  if (thinning < 1) throw ConfigError("thin", "thinning must be at least 1");
  if (adaptation_window < 1)
    throw ConfigError("adaptation_window", "adaptation window must be positive");
  if (!(target_acceptance > 0.0 && target_acceptance < 1.0))
    throw ConfigError("target_acceptance", "target acceptance must lie in (0, 1)");
}

std::vector<double> PosteriorSamples::chain_series(std::size_t chain, std::size_t param) const {
  std::vector<double> out(chains[chain].num_draws);
  for (std::size_t d = 0; d < out.size(); ++d) out[d] = value(chain, d, param);
  return out;
}

std::vector<double> PosteriorSamples::pooled(std::size_t param) const {
  std::vector<double> out;
  out.reserve(total_draws());
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t d = 0; d < chains[c].num_draws; ++d) out.push_back(value(c, d, param));
  return out;
}

std::vector<double> PosteriorSamples::pooled_deviance() const {
  std::vector<double> out;
  for (const auto& c : chains) out.insert(out.end(), c.deviance.begin(), c.deviance.end());
  return out;
}

std::vector<double> PosteriorSamples::mean_vector() const {
  const std::size_t P = layout.size();
  std::vector<double> m(P, 0.0);
  std::size_t n = 0;
  for (const auto& c : chains) {
    for (std::size_t d = 0; d < c.num_draws; ++d)
      for (std::size_t p = 0; p < P; ++p) m[p] += c.values[d * P + p];
    n += c.num_draws;
  }
  for (double& v : m) v /= static_cast<double>(n);
  return m;
}

std::vector<double> PosteriorSamples::draw(std::size_t chain, std::size_t d) const {
  const std::size_t P = layout.size();
  const auto& v = chains[chain].values;
  return {v.begin() + static_cast<std::ptrdiff_t>(d * P),
          v.begin() + static_cast<std::ptrdiff_t>((d + 1) * P)};
}

// ---------------------------------------------------------------- summaries

double quantile_type7(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return std::nan("");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

ParameterSummary summarize_draws(const std::string& name, std::vector<double> draws) {
  ParameterSummary s;
  s.name = name;
  const double n = static_cast<double>(draws.size());
  s.mean = std::accumulate(draws.begin(), draws.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : draws) ss += (v - s.mean) * (v - s.mean);
  s.sd = draws.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  std::sort(draws.begin(), draws.end());
  s.q025 = quantile_type7(draws, 0.025);
  s.q975 = quantile_type7(draws, 0.975);
  return s;
}

namespace {

Interval interval_of(std::vector<double>& v) {
  Interval out;
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  std::sort(v.begin(), v.end());
  out.lower = quantile_type7(v, 0.025);
  out.upper = quantile_type7(v, 0.975);
  return out;
}

}  // namespace

CellDraw cell_quantities(Family family, const PanelObservation& obs, const double* eta,
                         double dispersion) {
  CellDraw out;
  const double m = static_cast<double>(obs.active());
  const double n = static_cast<double>(obs.sample_size());
  switch (family) {
    case Family::Poisson:
    case Family::NegativeBinomial:
      out.target = link_apply(family, eta[0], dispersion);
      out.rate = m > 0 ? out.target / m : std::nan("");
      out.total = obs.weight * out.target;
      break;
    case Family::Binomial:
    case Family::Beta:
    case Family::Gaussian:
      out.target = link_apply(family, eta[0], dispersion);
      out.rate = out.target;
      out.total = obs.weight * m * out.target;
      break;
    case Family::Multinomial: {
      const auto p = multinomial_probabilities(eta[0], eta[1]);
      out.target = p[1];
      out.rate = p[1] / (p[0] + p[1]);
      out.total = obs.weight * n * p[1];
      break;
    }
  }
  return out;
}

std::array<std::int64_t, 3> apportion_total(std::int64_t n, const std::array<double, 3>& p) {
  std::array<std::int64_t, 3> out{};
  std::array<double, 3> frac{};
  std::int64_t used = 0;
  for (int q = 0; q < 3; ++q) {
    const double share = static_cast<double>(n) * p[q];
    out[q] = static_cast<std::int64_t>(std::floor(share));
    frac[q] = share - static_cast<double>(out[q]);
    used += out[q];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
  for (std::int64_t left = n - used, r = 0; left > 0; --left, ++r) ++out[order[r % 3]];
  for (std::int64_t over = used - n, r = 2; over > 0; --over) {
    while (out[order[r % 3]] == 0) r = (r + 2) % 3;
    --out[order[r % 3]];
  }
  return out;
}

FitSummary summarize(const PosteriorSamples& samples, const Model& model) {
  FitSummary out;
  const auto& L = samples.layout;
  for (const auto& g : L.groups) {
    const bool headline = g.name == "coefficients" || g.name == "precisions" ||
                          g.name == "dispersion";
    for (std::size_t p = g.offset; p < g.offset + g.size; ++p) {
      auto s = summarize_draws(L.names[p], samples.pooled(p));
      (headline ? out.parameters : out.effects).push_back(std::move(s));
    }
  }

  const auto& d = model.design();
  const int K = d.num_categories;
  const std::size_t S = samples.total_draws();
  // eta per draw per row, computed one draw at a time.
  std::vector<std::vector<CellDraw>> per_cell(static_cast<std::size_t>(model.num_rows()));
  for (auto& v : per_cell) v.reserve(S);
  std::vector<std::array<double, 3>> prob_sum(static_cast<std::size_t>(model.num_rows()),
                                              std::array<double, 3>{});
  for (std::size_t c = 0; c < samples.num_chains(); ++c) {
    for (std::size_t s = 0; s < samples.draws_per_chain(); ++s) {
      const auto state = model.unflatten(samples.draw(c, s));
      const auto eta = linear_predictors(model, state);
      for (int i = 0; i < model.num_rows(); ++i) {
        const auto& obs = model.dataset().cells()[static_cast<std::size_t>(i)];
        per_cell[static_cast<std::size_t>(i)].push_back(
            cell_quantities(model.family(), obs, eta.data() + i * K, state.dispersion));
        if (model.family() == Family::Multinomial) {
          const auto p = multinomial_probabilities(eta[static_cast<std::size_t>(i * K)],
                                                   eta[static_cast<std::size_t>(i * K + 1)]);
          for (int q = 0; q < 3; ++q) prob_sum[static_cast<std::size_t>(i)][q] += p[q];
        }
      }
    }
  }
  std::vector<double> buf(S);
  for (int i = 0; i < model.num_rows(); ++i) {
    CellSummary cs;
    cs.region = d.row_region[static_cast<std::size_t>(i)] + 1;
    cs.quarter = d.row_quarter[static_cast<std::size_t>(i)] + 1;
    const auto& draws = per_cell[static_cast<std::size_t>(i)];
    for (std::size_t s = 0; s < S; ++s) buf[s] = draws[s].target;
    cs.target = interval_of(buf);
    for (std::size_t s = 0; s < S; ++s) buf[s] = draws[s].rate;
    cs.rate = interval_of(buf);
    for (std::size_t s = 0; s < S; ++s) buf[s] = draws[s].total;
    cs.total = interval_of(buf);
    for (int q = 0; q < 3; ++q)
      cs.probabilities[q] = prob_sum[static_cast<std::size_t>(i)][q] / static_cast<double>(S);
    out.cells.push_back(cs);
  }
  return out;
}

std::vector<ParameterSummary> summarize_raw_coefficients(const PosteriorSamples& samples,
                                                         const Model& model) {
  const auto& d = model.design();
  const int k = d.num_columns();
  const auto* g = samples.layout.group("coefficients");
  std::vector<std::vector<double>> raw(g->size);
  for (std::size_t c = 0; c < samples.num_chains(); ++c) {
    for (std::size_t s = 0; s < samples.draws_per_chain(); ++s) {
      for (int q = 0; q < d.num_categories; ++q) {
        std::vector<double> b(static_cast<std::size_t>(k));
        for (int col = 0; col < k; ++col)
          b[static_cast<std::size_t>(col)] =
              samples.value(c, s, g->offset + static_cast<std::size_t>(q * k + col));
        const auto r = coefficients_to_raw(d, b);
        for (int col = 0; col < k; ++col)
          raw[static_cast<std::size_t>(q * k + col)].push_back(r[static_cast<std::size_t>(col)]);
      }
    }
  }
  std::vector<ParameterSummary> out;
  for (std::size_t p = 0; p < g->size; ++p)
    out.push_back(summarize_draws(samples.layout.names[g->offset + p], std::move(raw[p])));
  return out;
}

// ---------------------------------------------------------------- psrf

double psrf(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw SpecError("PSRF needs at least two chains");
  std::size_t len = chains[0].size();
  for (const auto& c : chains) len = std::min(len, c.size());
  if (len < 4) throw SpecError("PSRF needs at least four draws per chain");
  const std::size_t half = len / 2;
  std::vector<std::pair<const double*, std::size_t>> parts;
  for (const auto& c : chains) {
    parts.emplace_back(c.data(), half);
    parts.emplace_back(c.data() + (len - half), half);
  }
  const double n = static_cast<double>(half);
  const double m = static_cast<double>(parts.size());
  std::vector<double> means;
  double W = 0.0;
  for (const auto& [ptr, size] : parts) {
    const double mean = std::accumulate(ptr, ptr + size, 0.0) / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < size; ++i) ss += (ptr[i] - mean) * (ptr[i] - mean);
    W += ss / (n - 1.0);
    means.push_back(mean);
  }
  W /= m;
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
  double B = 0.0;
  for (double mu : means) B += (mu - grand) * (mu - grand);
  B *= n / (m - 1.0);
  if (W <= 0.0) return B > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  const double var_plus = (n - 1.0) / n * W + B / n;
  return std::sqrt(var_plus / W);
}

double psrf(const PosteriorSamples& samples, const std::string& name) {
  const std::size_t p = samples.layout.index_of(name);
  std::vector<std::vector<double>> chains;
  for (std::size_t c = 0; c < samples.num_chains(); ++c)
    chains.push_back(samples.chain_series(c, p));
  return psrf(chains);
}

double max_coefficient_psrf(const PosteriorSamples& samples) {
  const auto* g = samples.layout.group("coefficients");
  double top = 0.0;
  for (std::size_t p = g->offset; p < g->offset + g->size; ++p)
    top = std::max(top, psrf(samples, samples.layout.names[p]));
  return top;
}

// ---------------------------------------------------------------- hold-out

HoldoutResult predict_holdout(const PanelDataset& dataset, const ModelSpec& spec,
                              const std::optional<RegionGraph>& graph,
                              const MCMCConfig& config, int holdout_quarter) {
  const int T = dataset.num_quarters();
  if (holdout_quarter != T)
    throw SpecError("only the final quarter (" + std::to_string(T) + ") can be held out");
  if (T < 3) throw SpecError("hold-out prediction needs at least three quarters");
  const ModelSpec resolved = resolve(spec);
  const PanelDataset full = resolved.standardize ? standardize_covariates(dataset) : dataset;
  const Model model(full.leading_quarters(T - 1), resolved, graph);
  HoldoutResult out;
  out.samples = fit(model, config);

  const auto& train = model.design();
  const DesignMatrices design =
      build_design(full, resolved.predictor, num_categories(resolved.family));
  const int J = full.num_regions();
  const int K = design.num_categories;
  const int k = design.num_columns();
  const std::size_t S = out.samples.total_draws();
  std::vector<std::vector<CellDraw>> draws(static_cast<std::size_t>(J));
  Rng rng(splitmix64(config.base_seed ^ 0x5a17c0ffee5eedULL));
  std::vector<double> eta(static_cast<std::size_t>(J * K));
  for (std::size_t c = 0; c < out.samples.num_chains(); ++c) {
    for (std::size_t s = 0; s < out.samples.draws_per_chain(); ++s) {
      const auto state = model.unflatten(out.samples.draw(c, s));
      for (int j = 0; j < J; ++j) {
        const int row = full.cell_index(j, T - 1);
        for (int q = 0; q < K; ++q) {
          double e = design.offset[static_cast<std::size_t>(row)];
          for (int col = 0; col < k; ++col)
            e += design.X(row, col) * state.coefficients[static_cast<std::size_t>(q * k + col)];
          eta[static_cast<std::size_t>(j * K + q)] = e;
        }
      }
      for (std::size_t b = 0; b < train.blocks.size(); ++b) {
        const auto& blk = train.blocks[b];
        const auto& w = state.effects[b];
        const double tau =
            state.precisions[static_cast<std::size_t>(blk.precision_slot)];
        const double sd = 1.0 / std::sqrt(tau);
        switch (blk.kind) {
          case EffectKind::Spatial:
          case EffectKind::Region:
            for (int j = 0; j < J; ++j)
              eta[static_cast<std::size_t>(j * K + blk.category)] +=
                  w[static_cast<std::size_t>(j)];
            break;
          case EffectKind::Temporal: {
            const double last = w.back();
            const double mean =
                train.temporal_model == TemporalModel::RW1 ? last : train.ar1_rho * last;
            const double next = mean + sd * standard_normal(rng);
            for (int j = 0; j < J; ++j)
              eta[static_cast<std::size_t>(j * K + blk.category)] += next;
            break;
          }
          case EffectKind::Quarter: {
            const double next = sd * standard_normal(rng);
            for (int j = 0; j < J; ++j)
              eta[static_cast<std::size_t>(j * K + blk.category)] += next;
            break;
          }
          case EffectKind::Cell:
            for (int j = 0; j < J; ++j)
              eta[static_cast<std::size_t>(j * K + blk.category)] += sd * standard_normal(rng);
            break;
        }
      }
      for (int j = 0; j < J; ++j) {
        const auto& obs = full.cell(j, T - 1);
        double e[2] = {eta[static_cast<std::size_t>(j * K)],
                       K > 1 ? eta[static_cast<std::size_t>(j * K + 1)] : 0.0};
        if (resolved.family == Family::NegativeBinomial && !(e[0] < 0.0))
          e[0] = -std::numeric_limits<double>::min();
        draws[static_cast<std::size_t>(j)].push_back(
            cell_quantities(resolved.family, obs, e, state.dispersion));
      }
    }
  }
  std::vector<double> buf(S);
  for (int j = 0; j < J; ++j) {
    CellSummary cs;
    cs.region = j + 1;
    cs.quarter = T;
    const auto& v = draws[static_cast<std::size_t>(j)];
    for (std::size_t s = 0; s < S; ++s) buf[s] = v[s].target;
    cs.target = interval_of(buf);
    for (std::size_t s = 0; s < S; ++s) buf[s] = v[s].rate;
    cs.rate = interval_of(buf);
    for (std::size_t s = 0; s < S; ++s) buf[s] = v[s].total;
    cs.total = interval_of(buf);
    out.predictions.push_back(cs);
  }
  return out;
}

// ---------------------------------------------------------------- persistence

std::vector<std::string> write_samples(const PosteriorSamples& samples,
                                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> files;
  const std::size_t P = samples.layout.size();
  for (const auto& g : samples.layout.groups) {
    std::string out = "chain,draw";
    for (std::size_t p = g.offset; p < g.offset + g.size; ++p) out += "," + samples.layout.names[p];
    out += "\n";
    for (std::size_t c = 0; c < samples.num_chains(); ++c) {
      const auto& ch = samples.chains[c];
      for (std::size_t d = 0; d < ch.num_draws; ++d) {
        out += std::to_string(c + 1) + "," + std::to_string(d + 1);
        for (std::size_t p = g.offset; p < g.offset + g.size; ++p)
          out += "," + text::format_double(ch.values[d * P + p]);
        out += "\n";
      }
    }
    const std::string name = g.name + ".csv";
    text::write_file(dir / name, out);
    files.push_back(name);
  }
  std::string dev = "chain,draw,deviance\n";
  for (std::size_t c = 0; c < samples.num_chains(); ++c)
    for (std::size_t d = 0; d < samples.chains[c].deviance.size(); ++d)
      dev += std::to_string(c + 1) + "," + std::to_string(d + 1) + "," +
             text::format_double(samples.chains[c].deviance[d]) + "\n";
  text::write_file(dir / "deviance.csv", dev);
  files.emplace_back("deviance.csv");
  return files;
}

PosteriorSamples read_samples(const std::filesystem::path& dir, const Model& model,
                              const MCMCConfig& config) {
  PosteriorSamples out;
  out.layout = model.layout();
  out.config = config;
  out.spec_text = model.spec().canonical_text();
  const std::size_t P = out.layout.size();
  auto parse = [](const std::string& field, const std::string& file) {
    double v = 0.0;
    if (!text::parse_double(field, v)) throw FormatError("bad number '" + field + "' in " + file);
    return v;
  };
  auto chain_of = [](const std::vector<std::string>& row, const std::string& file) {
    std::int64_t c = 0;
    if (!text::parse_int(row[0], c) || c < 1) throw FormatError("bad chain index in " + file);
    return static_cast<std::size_t>(c - 1);
  };
  {
    const std::string file = "deviance.csv";
    const auto table = text::read_csv_file(dir / file);
    for (const auto& row : table.rows) {
      const auto c = chain_of(row, file);
      if (c >= out.chains.size()) out.chains.resize(c + 1);
      out.chains[c].deviance.push_back(parse(row.at(2), file));
    }
  }
  for (auto& ch : out.chains) {
    ch.num_draws = ch.deviance.size();
    ch.values.assign(ch.num_draws * P, 0.0);
  }
  for (const auto& g : out.layout.groups) {
    const std::string file = g.name + ".csv";
    const auto table = text::read_csv_file(dir / file);
    if (table.header.size() != g.size + 2) throw FormatError(file + " has the wrong columns");
    for (std::size_t p = 0; p < g.size; ++p)
      if (table.header[p + 2] != out.layout.names[g.offset + p])
        throw FormatError(file + ": unexpected column " + table.header[p + 2]);
    std::vector<std::size_t> seen(out.chains.size(), 0);
    for (const auto& row : table.rows) {
      const auto c = chain_of(row, file);
      if (c >= out.chains.size() || seen[c] >= out.chains[c].num_draws)
        throw FormatError(file + " has more draws than deviance.csv");
      const std::size_t d = seen[c]++;
      for (std::size_t p = 0; p < g.size; ++p)
        out.chains[c].values[d * P + g.offset + p] = parse(row[p + 2], file);
    }
    for (std::size_t c = 0; c < out.chains.size(); ++c)
      if (seen[c] != out.chains[c].num_draws)
        throw FormatError(file + " has fewer draws than deviance.csv");
  }
  return out;
}

}  // namespace saeb
