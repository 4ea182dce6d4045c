#include "saeb/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "saeb/errors.hpp"
#include "saeb/text.hpp"

namespace saeb {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool is_discrete(Family f) { return f != Family::Beta && f != Family::Gaussian; }

}  // namespace

DicResult dic_from_parts(double d_bar, double p_d) {
  return {d_bar + p_d, p_d, d_bar, 0};
}

DicResult dic(const PosteriorSamples& samples, const Model& model) {
  const auto dev = samples.pooled_deviance();
  if (dev.empty()) throw DiagnosticsError("no deviance draws stored");
  double sum = 0.0;
  std::size_t used = 0;
  for (double d : dev)
    if (std::isfinite(d)) {
      sum += d;
      ++used;
    }
  const std::size_t excluded = dev.size() - used;
  if (static_cast<double>(excluded) > 0.01 * static_cast<double>(dev.size()))
    throw DiagnosticsError(std::to_string(excluded) + " of " + std::to_string(dev.size()) +
                           " deviance draws are not finite");
  const double d_bar = sum / static_cast<double>(used);
  const double d_hat = deviance(model, model.unflatten(samples.mean_vector()));
  DicResult r = dic_from_parts(d_bar, d_bar - d_hat);
  r.excluded = excluded;
  return r;
}

ObservationDiagnostics observation_diagnostics(const PosteriorSamples& samples,
                                               const Model& model,
                                               const ObservationOptions& options) {
  const int N = model.num_rows();
  const int K = model.num_categories();
  const Family f = model.family();
  const auto NN = static_cast<std::size_t>(N);
  // Streaming sums of a_s = exp(-ll_s - shift_i) and of a_s * F_s.
  std::vector<double> shift(NN, kNegInf), sum_a(NN, 0.0), sum_a2(NN, 0.0), sum_af(NN, 0.0);
  std::vector<bool> zero(NN, false);
  Rng rng(splitmix64(options.pit_seed));
  std::size_t S = 0;
  double mean[3];
  for (std::size_t c = 0; c < samples.num_chains(); ++c) {
    for (std::size_t s = 0; s < samples.draws_per_chain(); ++s) {
      const auto state = model.unflatten(samples.draw(c, s));
      const auto eta = linear_predictors(model, state);
      const auto ll = row_log_likelihoods(model, state);
      const double phi =
          f == Family::Gaussian ? model.spec().known_variance : state.dispersion;
      ++S;
      for (int i = 0; i < N; ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (!model.row_active(i)) continue;
        if (!(ll[u] > kNegInf)) {
          zero[u] = true;
          continue;
        }
        mean_from_eta(f, std::span<const double>(eta.data() + i * K, static_cast<std::size_t>(K)),
                      phi, std::span<double>(mean, 3));
        const auto pieces = pit_pieces(f, model.targets()[u], std::span<const double>(mean, 3), phi);
        double F = pieces.below;
        if (is_discrete(f)) F += (options.randomized_pit ? uniform01(rng) : 0.5) * pieces.at;
        const double x = -ll[u];
        if (x > shift[u]) {
          const double scale = std::isfinite(shift[u]) ? std::exp(shift[u] - x) : 0.0;
          sum_a[u] *= scale;
          sum_a2[u] *= scale * scale;
          sum_af[u] *= scale;
          shift[u] = x;
        }
        const double a = std::exp(x - shift[u]);
        sum_a[u] += a;
        sum_a2[u] += a * a;
        sum_af[u] += a * F;
      }
    }
  }
  ObservationDiagnostics out;
  out.cpo.assign(NN, std::nan(""));
  out.log_cpo.assign(NN, std::nan(""));
  out.relative_error.assign(NN, std::nan(""));
  out.pit.assign(NN, std::nan(""));
  out.flagged.assign(NN, false);
  out.active.assign(NN, false);
  const double n = static_cast<double>(S);
  for (int i = 0; i < N; ++i) {
    const auto u = static_cast<std::size_t>(i);
    if (!model.row_active(i)) continue;
    out.active[u] = true;
    if (zero[u]) {
      out.cpo[u] = 0.0;
      out.log_cpo[u] = kNegInf;
      out.flagged[u] = true;
      out.pit[u] = sum_a[u] > 0.0 ? std::clamp(sum_af[u] / sum_a[u], 0.0, 1.0) : 0.5;
      continue;
    }
    const double m = sum_a[u] / n;
    out.log_cpo[u] = -(shift[u] + std::log(m));
    out.cpo[u] = std::exp(out.log_cpo[u]);
    const double var = std::max(0.0, sum_a2[u] / n - m * m);
    out.relative_error[u] = S > 1 ? std::sqrt(var / n) / m : 0.0;
    out.flagged[u] = out.relative_error[u] > options.flag_threshold;
    out.pit[u] = std::clamp(sum_af[u] / sum_a[u], 0.0, 1.0);
  }
  return out;
}

std::vector<double> count_scale_log_cpo(const Model& model, const std::vector<double>& log_cpo) {
  std::vector<double> out(log_cpo);
  if (model.family() != Family::Beta) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto m = model.dataset().cells()[i].active();
    if (m > 0) out[i] -= std::log(static_cast<double>(m));
  }
  return out;
}

LogScore log_score(const std::vector<double>& cpo) {
  std::vector<double> logs;
  logs.reserve(cpo.size());
  for (double c : cpo) logs.push_back(c > 0.0 ? std::log(c) : kNegInf);
  return log_score_from_log(logs);
}

LogScore log_score_from_log(const std::vector<double>& log_cpo) {
  LogScore out;
  double sum = 0.0;
  std::size_t used = 0;
  for (double v : log_cpo) {
    if (std::isnan(v)) continue;
    if (!std::isfinite(v)) {
      ++out.excluded;
      continue;
    }
    sum += v;
    ++used;
  }
  if (used == 0) throw DiagnosticsError("no positive CPO values for the log score");
  out.value = -sum / static_cast<double>(used);
  return out;
}

double ks_uniform(std::vector<double> values) {
  values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return std::isnan(v); }),
               values.end());
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = std::clamp(values[i], 0.0, 1.0);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - x, x - static_cast<double>(i) / n});
  }
  return d;
}

std::vector<DirectEstimate> direct_estimate(const PanelDataset& dataset) {
  std::vector<DirectEstimate> out;
  for (const auto& c : dataset.cells()) {
    DirectEstimate e;
    e.region = c.region;
    e.quarter = c.quarter;
    const double y = c.weight * static_cast<double>(c.unemployed);
    const double m = c.weight * static_cast<double>(c.active());
    const double n = static_cast<double>(c.sample_size());
    if (c.active() <= 0) {
      e.missing = true;
      e.rate = e.total = e.variance = e.rrmse = std::nan("");
      out.push_back(e);
      continue;
    }
    e.rate = y / m;
    e.total = e.rate * m;
    const double spread = e.rate * (1.0 - e.rate);
    if (spread <= 0.0) {
      e.variance = 0.0;
    } else if (n > 1.0) {
      e.variance = n * spread / ((n - 1.0) * static_cast<double>(c.active()));
    } else {
      e.variance = std::nan("");
    }
    e.rrmse = e.rate > 0.0 ? std::sqrt(e.variance) / e.rate
                           : std::numeric_limits<double>::infinity();
    out.push_back(e);
  }
  return out;
}

double relative_rmse(const std::vector<double>& estimates, const std::vector<double>& truth) {
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < std::min(estimates.size(), truth.size()); ++i) {
    if (!(truth[i] != 0.0) || !std::isfinite(truth[i]) || !std::isfinite(estimates[i])) continue;
    const double r = (estimates[i] - truth[i]) / truth[i];
    sum += r * r;
    ++used;
  }
  return used ? std::sqrt(sum / static_cast<double>(used)) : std::nan("");
}

double relative_sd(double mean, double sd) {
  return mean != 0.0 ? sd / std::abs(mean) : std::nan("");
}

void write_summary_report(const std::vector<ModelReportRow>& rows, std::ostream& out) {
  out << "model,dic,p_d,d_bar,log_score\n";
  for (const auto& r : rows)
    out << r.model << ',' << text::format_double(r.dic.dic) << ','
        << text::format_double(r.dic.p_d) << ',' << text::format_double(r.dic.d_bar) << ','
        << (r.log_score ? text::format_double(*r.log_score) : std::string("unavailable")) << '\n';
}

void write_observation_report(const Model& model, const ObservationDiagnostics& obs,
                              bool cpo_available, std::ostream& out) {
  out << "region,quarter,cpo,log_cpo,pit,relative_error,flagged\n";
  const auto& cells = model.dataset().cells();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out << cells[i].region << ',' << cells[i].quarter << ',';
    if (!cpo_available) {
      out << "unavailable,unavailable,unavailable,unavailable,0\n";
      continue;
    }
    out << text::format_double(obs.cpo[i]) << ',' << text::format_double(obs.log_cpo[i]) << ','
        << text::format_double(obs.pit[i]) << ',' << text::format_double(obs.relative_error[i])
        << ',' << (obs.flagged[i] ? 1 : 0) << '\n';
  }
}

}  // namespace saeb
