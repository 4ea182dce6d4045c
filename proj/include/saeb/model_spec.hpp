#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "saeb/data.hpp"

namespace saeb {

/// Observation model. Gaussian (identity link, known variance) is kept for
/// conjugate validation runs; it is not one of the labour-market models.
enum class Family { Poisson, NegativeBinomial, Binomial, Beta, Multinomial, Gaussian };

std::string_view to_string(Family f);
/// Accepts poisson, negbin, negative_binomial, binomial, beta, multinomial, gaussian.
Family parse_family(std::string_view name);

/// True for the families with a dispersion parameter phi.
constexpr bool has_dispersion(Family f) {
  return f == Family::NegativeBinomial || f == Family::Beta;
}
/// Number of linear predictors (two non-baseline categories for multinomial).
constexpr int num_categories(Family f) { return f == Family::Multinomial ? 2 : 1; }
std::string_view canonical_link(Family f);

enum class OffsetRule { Auto, None, LogSampleSize };
enum class EffectStructure { Structured, Unstructured, None };
enum class TemporalModel { RW1, AR1 };

struct PredictorSpec {
  bool include_intercept = true;
  std::vector<std::string> regional_terms{"companies", "primary", "secondary"};
  std::vector<std::string> temporal_terms{"gdp"};
  std::vector<std::string> spatiotemporal_terms{"iefp", "sa6", "sa8"};
  OffsetRule offset_rule = OffsetRule::Auto;
  EffectStructure effect_structure = EffectStructure::Structured;
  // Individual components of the structured (w1 + w2 + eps) or
  // unstructured (u + v) effect set can be switched off.
  bool spatial_effect = true;
  bool temporal_effect = true;
  bool cell_effect = true;
  TemporalModel temporal_model = TemporalModel::RW1;
  double ar1_rho = 0.5;
};

struct PriorSpec {
  double coefficient_variance = 1e6;
  double precision_shape = 1.0;
  double precision_rate = 0.0005;
  double dispersion_shape = 1.0;
  double dispersion_rate = 0.01;
  /// When the shape is positive, exp(intercept) ~ Gamma(shape, rate) instead
  /// of the Gaussian intercept prior (conjugate validation runs).
  double intercept_gamma_shape = 0.0;
  double intercept_gamma_rate = 0.0;
};

struct ModelSpec {
  Family family = Family::Poisson;
  PredictorSpec predictor;
  PriorSpec priors;
  bool standardize = true;
  /// Observation variance of the Gaussian validation family.
  double known_variance = 1.0;

  /// Every key in a fixed order; parses back to an equal spec.
  std::string canonical_text() const;
};

/// Full covariate set and structured effects for `family`, offsets resolved.
ModelSpec default_model_spec(Family family);

/// Parses `key = value` lines ('#' comments). Unknown keys and bad values
/// raise ConfigError naming the key; cross-key inconsistencies SpecError.
ModelSpec parse_model_spec(std::string_view text);
ModelSpec load_model_spec(const std::filesystem::path& path);

/// Resolves OffsetRule::Auto and checks the family/predictor invariants.
ModelSpec resolve(ModelSpec spec);

// ---------------------------------------------------------------- links

/// Mean parameter from the linear predictor: exp for Poisson, the inverse of
/// log(mu / (mu + phi)) for the negative binomial, logistic for Binomial and
/// Beta, identity for Gaussian. Throws LinkDomainError for negative binomial
/// eta >= 0.
double link_apply(Family family, double eta,
                  double dispersion = std::numeric_limits<double>::quiet_NaN());
/// Forward link; inverse of link_apply.
double link_forward(Family family, double mean,
                    double dispersion = std::numeric_limits<double>::quiet_NaN());

/// (P1, P2, P3) from eta_q = log(P_q / P3), q = 1, 2.
std::array<double, 3> multinomial_probabilities(double eta1, double eta2);

inline double logistic(double eta) {
  return eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
}

// ---------------------------------------------------------------- design

enum class EffectKind { Spatial, Temporal, Cell, Region, Quarter };

struct EffectBlockInfo {
  EffectKind kind = EffectKind::Cell;
  int category = 0;
  int precision_slot = 0;
  std::string name;
  int size = 0;
  /// Intrinsic prior: values are kept summing to zero.
  bool centered = false;
};

/// Fixed-effects matrix, offsets and effect layout. Rows follow the panel's
/// quarter-major cell order; columns are [intercept | regional | temporal |
/// spatio-temporal].
struct DesignMatrices {
  Eigen::MatrixXd X;
  std::vector<double> offset;
  std::vector<std::string> column_names;
  /// Position in dataset.covariates(), -1 for the intercept.
  std::vector<int> column_covariate;
  std::vector<Standardization> column_standardization;
  std::vector<int> row_region;
  std::vector<int> row_quarter;
  int num_regions = 0;
  int num_quarters = 0;
  int num_categories = 1;
  bool has_intercept = false;
  std::vector<EffectBlockInfo> blocks;
  std::vector<std::string> precision_names;
  TemporalModel temporal_model = TemporalModel::RW1;
  double ar1_rho = 0.5;

  int num_rows() const { return static_cast<int>(X.rows()); }
  int num_columns() const { return static_cast<int>(X.cols()); }
  /// Coefficient name for category q (multinomial employment coefficients
  /// carry an "employed." prefix; the unemployment category is unprefixed).
  std::string coefficient_name(int category, int column) const;
  /// Element of `block` that row `row` loads on.
  int effect_index(const EffectBlockInfo& block, int row) const;
};

/// Throws SpecError when a requested covariate is absent or has the wrong
/// scope. `num_categories` is 2 for the multinomial model.
DesignMatrices build_design(const PanelDataset& dataset, const PredictorSpec& spec,
                            int num_categories = 1);

/// Coefficients, latent effects, precisions (natural scale) and dispersion.
/// Coefficients are category-major: coefficients[q * k + c].
struct ParameterState {
  std::vector<double> coefficients;
  std::vector<std::vector<double>> effects;
  std::vector<double> precisions;
  double dispersion = std::numeric_limits<double>::quiet_NaN();
};

/// Zero coefficients and effects, unit precisions, dispersion as given.
ParameterState zero_state(const DesignMatrices& design,
                          double dispersion = std::numeric_limits<double>::quiet_NaN());

/// eta for one row and category: offset + x'b + effects.
double linear_predictor(const ParameterState& state, const DesignMatrices& design,
                        int row, int category = 0);

/// Maps standardized-scale coefficients (one category block) to the raw
/// covariate scale and back. Requires an intercept whenever a column was
/// centred.
std::vector<double> coefficients_to_raw(const DesignMatrices& design,
                                        std::span<const double> coefficients);
std::vector<double> coefficients_to_standardized(const DesignMatrices& design,
                                                 std::span<const double> coefficients);

}  // namespace saeb
