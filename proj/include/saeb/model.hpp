#pragma once

#include <optional>
#include <string>
#include <vector>

#include "saeb/data.hpp"
#include "saeb/likelihoods.hpp"
#include "saeb/model_spec.hpp"

namespace saeb {

/// Named slice of the flat parameter vector.
struct ParameterGroup {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Flat ordering of every sampled quantity: coefficients (category-major),
/// each effect block, precisions, then the dispersion when present.
struct ParameterLayout {
  std::vector<std::string> names;
  std::vector<ParameterGroup> groups;

  std::size_t size() const { return names.size(); }
  /// Position of `name`; throws SpecError when unknown.
  std::size_t index_of(const std::string& name) const;
  const ParameterGroup* group(const std::string& name) const;
};

/// A dataset, a resolved spec and (for structured effects) the region graph,
/// compiled into a design and per-row likelihood targets. Immutable.
class Model {
 public:
  /// Standardizes covariates when spec.standardize is set. Throws SpecError
  /// when structured spatial effects are requested without a graph or the
  /// graph size disagrees with the panel.
  Model(const PanelDataset& dataset, const ModelSpec& spec,
        std::optional<RegionGraph> graph = std::nullopt);
  /// Same, with explicit per-row targets (e.g. a continuous response for the
  /// Gaussian family). `targets` must have one entry per panel cell.
  Model(const PanelDataset& dataset, const ModelSpec& spec, std::optional<RegionGraph> graph,
        std::vector<ObservationTarget> targets);

  const PanelDataset& dataset() const { return dataset_; }
  const ModelSpec& spec() const { return spec_; }
  Family family() const { return spec_.family; }
  const DesignMatrices& design() const { return design_; }
  const RegionGraph* graph() const { return graph_ ? &*graph_ : nullptr; }
  const ParameterLayout& layout() const { return layout_; }

  int num_rows() const { return design_.num_rows(); }
  int num_categories() const { return design_.num_categories; }
  const std::vector<ObservationTarget>& targets() const { return targets_; }
  const std::vector<PreparedTarget>& prepared() const { return prepared_; }
  bool row_active(int row) const { return prepared_[static_cast<std::size_t>(row)].active; }
  /// Beta rows moved off the 0/1 boundary.
  int num_boundary_adjusted() const { return boundary_adjusted_; }
  /// Rows dropped because the target is undefined (Beta with no active sample).
  int num_excluded() const { return excluded_; }

  /// Log prior density of one effect block at precision `tau`.
  double block_log_density(std::size_t block, std::span<const double> values,
                           double tau) const;

  ParameterState unflatten(std::span<const double> flat) const;
  std::vector<double> flatten(const ParameterState& state) const;

 private:
  void compile(std::vector<ObservationTarget> targets);

  PanelDataset dataset_;
  ModelSpec spec_;
  std::optional<RegionGraph> graph_;
  DesignMatrices design_;
  ParameterLayout layout_;
  std::vector<ObservationTarget> targets_;
  std::vector<PreparedTarget> prepared_;
  int boundary_adjusted_ = 0;
  int excluded_ = 0;
};

/// Likelihood targets implied by the panel counts for `family`: y for the
/// count models, (y, m) for the Binomial, r = y / m for the Beta (boundary
/// values moved to (r (m - 1) + 0.5) / m), (employed, unemployed, inactive)
/// for the multinomial and the rate for the Gaussian.
std::vector<ObservationTarget> panel_targets(const PanelDataset& dataset, Family family,
                                             int* boundary_adjusted = nullptr);

/// eta for every row, row-major with num_categories entries per row.
std::vector<double> linear_predictors(const Model& model, const ParameterState& state);
/// Per-row log-likelihood (0 for inactive rows).
std::vector<double> row_log_likelihoods(const Model& model, const ParameterState& state);
double log_likelihood(const Model& model, const ParameterState& state);
/// -2 log-likelihood; +inf when any row is impossible.
double deviance(const Model& model, const ParameterState& state);

/// Gaussian coefficient priors, latent-field densities, Gamma hyperpriors on
/// each precision with the log-scale Jacobian, and the dispersion prior with
/// its Jacobian.
double log_prior(const Model& model, const ParameterState& state);
/// log_prior + log_likelihood; -inf outside the support.
double log_posterior(const Model& model, const ParameterState& state);

/// Gamma(shape, rate) log density of x plus log x (sampling on log x).
double log_gamma_prior_on_log_scale(double x, double shape, double rate);

}  // namespace saeb
