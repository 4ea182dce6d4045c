#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace saeb {

/// Sample counts of one region in one quarter. Region and quarter ids are
/// 1-based as in the input files. Counts are authoritative; the rate is
/// always derived.
struct PanelObservation {
  int region = 0;
  int quarter = 0;
  std::int64_t unemployed = 0;
  std::int64_t employed = 0;
  std::int64_t inactive = 0;
  double weight = 1.0;

  std::int64_t active() const { return unemployed + employed; }
  std::int64_t sample_size() const { return unemployed + employed + inactive; }
  /// Unemployed share of the active sample; empty when nobody is active.
  std::optional<double> rate() const;
};

enum class CovariateScope { Regional, Temporal, Spatiotemporal };

std::string_view to_string(CovariateScope scope);

/// Affine map applied to a covariate: stored = (raw - mean) / scale.
struct Standardization {
  double mean = 0.0;
  double scale = 1.0;
  bool applied = false;
  /// Zero sample variance; the column is left unscaled.
  bool constant = false;

  double to_raw(double stored) const { return stored * scale + mean; }
};

/// One covariate column. `values` has length J (regional), T (temporal) or
/// J*T in cell order (spatio-temporal).
struct Covariate {
  std::string name;
  CovariateScope scope = CovariateScope::Regional;
  std::vector<double> values;
  Standardization standardization;
};

/// Dense, balanced region x quarter panel. Cells are stored quarter-major:
/// cell index = t * J + j with 0-based j, t. Immutable after construction.
class PanelDataset {
 public:
  PanelDataset(int num_regions, int num_quarters,
               std::vector<PanelObservation> cells,
               std::vector<Covariate> covariates);

  int num_regions() const { return num_regions_; }
  int num_quarters() const { return num_quarters_; }
  int num_cells() const { return num_regions_ * num_quarters_; }
  int cell_index(int j, int t) const { return t * num_regions_ + j; }

  const PanelObservation& cell(int j, int t) const {
    return cells_[static_cast<std::size_t>(cell_index(j, t))];
  }
  const std::vector<PanelObservation>& cells() const { return cells_; }
  const std::vector<Covariate>& covariates() const { return covariates_; }

  bool has_covariate(std::string_view name) const;
  /// Throws SpecError when absent.
  const Covariate& covariate(std::string_view name) const;
  std::size_t covariate_position(std::string_view name) const;
  double covariate_at(const Covariate& c, int j, int t) const;

  /// Panel restricted to quarters 1..count (covariate records kept).
  PanelDataset leading_quarters(int count) const;

 private:
  int num_regions_;
  int num_quarters_;
  std::vector<PanelObservation> cells_;
  std::vector<Covariate> covariates_;
};

/// Column mapping for panel CSV files.
struct PanelSchema {
  std::string region = "region";
  std::string quarter = "quarter";
  std::string unemployed = "unemployed";
  std::string employed = "employed";
  std::string inactive = "inactive";
  // Optional consistency columns; checked when present.
  std::string active = "active";
  std::string sample_size = "sample_size";
  std::string weight = "weight";
  std::vector<std::string> regional{"companies", "primary", "secondary"};
  std::vector<std::string> temporal{"gdp"};
  std::vector<std::string> spatiotemporal{"iefp", "sa6", "sa8"};
};

PanelDataset parse_panel(std::istream& in, const PanelSchema& schema = {});
PanelDataset load_panel(const std::filesystem::path& path,
                        const PanelSchema& schema = {});

/// Writes covariates on their raw scale (standardization is undone).
void write_panel(const PanelDataset& dataset, std::ostream& out);
void save_panel(const PanelDataset& dataset, const std::filesystem::path& path);

/// Centres and scales every covariate over its own index set (J regions,
/// T quarters or J*T cells) to sample mean 0 and sample sd 1. Constant
/// columns are left unchanged and flagged. Already standardized columns are
/// left untouched.
PanelDataset standardize_covariates(const PanelDataset& dataset);

/// Undirected, loop-free, connected adjacency over regions (0-based).
class RegionGraph {
 public:
  /// Edges are 0-based pairs; duplicates in either orientation collapse.
  RegionGraph(int num_regions, const std::vector<std::pair<int, int>>& edges);

  int num_regions() const { return static_cast<int>(neighbors_.size()); }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<int>& neighbors(int j) const {
    return neighbors_[static_cast<std::size_t>(j)];
  }
  int degree(int j) const { return static_cast<int>(neighbors(j).size()); }
  /// Each undirected edge once, as (i, k) with i < k.
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }

 private:
  std::vector<std::vector<int>> neighbors_;
  std::vector<std::pair<int, int>> edges_;
};

/// Chain graph 0 - 1 - ... - (n-1).
RegionGraph path_graph(int n);

/// Parses `id: id id ...` lines with 1-based ids; `#` starts a comment.
RegionGraph parse_adjacency(std::istream& in);
RegionGraph load_adjacency(const std::filesystem::path& path);
void write_adjacency(const RegionGraph& graph, std::ostream& out);

}  // namespace saeb
