#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "saeb/data.hpp"
#include "saeb/model_spec.hpp"
#include "saeb/numeric.hpp"

namespace saeb {

/// Generating values of a synthetic panel. Coefficients act on standardized
/// covariates, in the order intercept, companies, primary, secondary, gdp,
/// iefp, sa6, sa8.
struct ScenarioConfig {
  int num_regions = 28;
  int num_quarters = 12;
  Family family = Family::Binomial;
  /// Fixed graph; when empty the built-in 28-region mainland graph is used
  /// for J = 28 and a random nearest-neighbour graph otherwise.
  std::optional<RegionGraph> graph;
  std::vector<double> coefficients;
  /// Multinomial employed-versus-inactive coefficients.
  std::vector<double> employed_coefficients;
  double tau_w1 = 30.0;
  double tau_w2 = 200.0;
  double tau_eps = 400.0;
  double tau_u = 30.0;
  double tau_v = 200.0;
  /// phi for the negative binomial and Beta.
  double dispersion = 0.0;
  double min_sample = 200.0;
  double max_sample = 3000.0;
  double min_activity = 0.55;
  double max_activity = 0.65;
  /// Student-t (this many degrees of freedom) cell noise added on the
  /// predictor scale; 0 disables it.
  double heavy_tail_df = 0.0;
  double heavy_tail_scale = 0.3;
  int max_attempts = 20;
  std::uint64_t seed = 1;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Defaults for `family`: coefficients, precisions and dispersion.
ScenarioConfig default_scenario(Family family);

struct TruthRecord {
  Family family = Family::Binomial;
  std::vector<std::string> coefficient_names;
  /// Category-major like ParameterState::coefficients.
  std::vector<double> coefficients;
  std::vector<double> raw_coefficients;
  std::vector<std::pair<std::string, double>> precisions;
  double dispersion = 0.0;
  std::vector<std::pair<std::string, std::vector<double>>> effects;
  /// Per cell (quarter-major): mean parameter, unemployment rate, expected
  /// unemployed count.
  std::vector<double> cell_target;
  std::vector<double> cell_rate;
  std::vector<double> cell_total;
  /// Generation attempts used (negative binomial redraws).
  int attempts = 1;
};

struct Simulation {
  PanelDataset dataset;
  RegionGraph graph;
  TruthRecord truth;
};

Simulation simulate(const ScenarioConfig& config);

/// The 28 mainland NUTS III regions' contiguity.
RegionGraph portugal_graph();
/// Each region joined to its 3 nearest neighbours among uniform points in
/// the unit square, then made connected.
RegionGraph random_region_graph(int num_regions, Rng& rng);

/// Long-format truth table: quantity,region,quarter,value.
void write_truth(const TruthRecord& truth, std::ostream& out);
void save_truth(const TruthRecord& truth, const std::filesystem::path& path);
/// Cell rates (quarter-major) from a truth table.
std::vector<double> load_truth_rates(const std::filesystem::path& path, int num_regions,
                                     int num_quarters);

}  // namespace saeb
