#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "saeb/model.hpp"

namespace saeb {

struct MCMCConfig {
  int num_chains = 4;
  int iterations = 20000;
  int burn_in = 5000;
  int thinning = 5;
  /// Iterations between Robbins-Monro scale updates (burn-in only).
  int adaptation_window = 50;
  double target_acceptance = 0.44;
  std::uint64_t base_seed = 1;
  /// Run chains on separate threads.
  bool parallel = true;
  /// Drop the likelihood and sample the prior (sampler validation).
  bool use_likelihood = true;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  int draws_per_chain() const { return (iterations - burn_in + thinning - 1) / thinning; }
};

struct ChainDraws {
  /// draws x parameters, row-major in ParameterLayout order.
  std::vector<double> values;
  std::vector<double> deviance;
  /// Acceptance rate over the post-burn-in iterations, per update site group
  /// (coefficients, effects, precisions, scale moves, dispersion).
  std::vector<double> acceptance;
  std::size_t num_draws = 0;
};

struct PosteriorSamples {
  ParameterLayout layout;
  std::vector<ChainDraws> chains;
  MCMCConfig config;
  std::string spec_text;

  std::size_t num_chains() const { return chains.size(); }
  std::size_t draws_per_chain() const { return chains.empty() ? 0 : chains[0].num_draws; }
  std::size_t total_draws() const { return num_chains() * draws_per_chain(); }
  double value(std::size_t chain, std::size_t draw, std::size_t param) const {
    return chains[chain].values[draw * layout.size() + param];
  }
  std::vector<double> chain_series(std::size_t chain, std::size_t param) const;
  /// Chains concatenated in chain order.
  std::vector<double> pooled(std::size_t param) const;
  std::vector<double> pooled(const std::string& name) const { return pooled(layout.index_of(name)); }
  std::vector<double> pooled_deviance() const;
  /// Posterior mean of every flat parameter.
  std::vector<double> mean_vector() const;
  /// Flat parameter vector of one draw.
  std::vector<double> draw(std::size_t chain, std::size_t d) const;
};

/// Runs num_chains adaptive Metropolis-within-Gibbs chains. Throws
/// NonFiniteStart when a chain cannot be started inside the support.
PosteriorSamples fit(const Model& model, const MCMCConfig& config);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
};

struct Interval {
  double mean = 0.0;
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// Fitted quantities of one cell. `target` is mu (count models), R, the Beta
/// mean, or the unemployed-category probability P2; `rate` is the implied
/// unemployment rate among the active; `total` the implied weighted count of
/// unemployed.
struct CellSummary {
  int region = 0;
  int quarter = 0;
  Interval target;
  Interval rate;
  Interval total;
  /// Multinomial only: mean (P1, P2, P3).
  std::array<double, 3> probabilities{};
};

struct FitSummary {
  /// Coefficients, precisions and dispersion.
  std::vector<ParameterSummary> parameters;
  std::vector<ParameterSummary> effects;
  std::vector<CellSummary> cells;
};

/// Type-7 empirical quantile of sorted data.
double quantile_type7(const std::vector<double>& sorted, double p);
ParameterSummary summarize_draws(const std::string& name, std::vector<double> draws);

FitSummary summarize(const PosteriorSamples& samples, const Model& model);

/// Per-draw cell quantities on the scales reported in CellSummary.
struct CellDraw {
  double target = 0.0;
  double rate = 0.0;
  double total = 0.0;
};
CellDraw cell_quantities(Family family, const PanelObservation& obs, const double* eta,
                         double dispersion);

/// Integer category totals summing exactly to n: floor(n p_q) plus the
/// remaining units to the largest fractional parts (ties to the lower index).
std::array<std::int64_t, 3> apportion_total(std::int64_t n, const std::array<double, 3>& p);

/// Raw-covariate-scale coefficient draws summarized (requires an intercept
/// when covariates were centred).
std::vector<ParameterSummary> summarize_raw_coefficients(const PosteriorSamples& samples,
                                                         const Model& model);

/// Split-chain potential scale reduction factor. Needs >= 2 chains of >= 4
/// draws (SpecError otherwise); +inf when all within-chain variance is zero
/// and chains disagree, 1 when every draw is identical.
double psrf(const std::vector<std::vector<double>>& chains);
double psrf(const PosteriorSamples& samples, const std::string& name);
/// Largest PSRF over the coefficients.
double max_coefficient_psrf(const PosteriorSamples& samples);

struct HoldoutResult {
  PosteriorSamples samples;
  /// Quarter-T predictive summaries, one per region.
  std::vector<CellSummary> predictions;
};

/// Fits quarters 1..T-1 and predicts quarter T: the temporal effect is
/// extended one step from its prior, cell (or quarter) effects are drawn
/// fresh per posterior draw. `holdout_quarter` must equal T (SpecError).
HoldoutResult predict_holdout(const PanelDataset& dataset, const ModelSpec& spec,
                              const std::optional<RegionGraph>& graph,
                              const MCMCConfig& config, int holdout_quarter);

/// Persists samples as one CSV per parameter group plus deviance.csv; returns
/// the files written (relative to `dir`).
std::vector<std::string> write_samples(const PosteriorSamples& samples,
                                       const std::filesystem::path& dir);
/// Reads a directory written by write_samples for a matching model.
PosteriorSamples read_samples(const std::filesystem::path& dir, const Model& model,
                              const MCMCConfig& config);

}  // namespace saeb
