#include "saeb/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <queue>
#include <set>

#include "saeb/errors.hpp"
#include "saeb/text.hpp"

namespace saeb {

namespace {

std::string join_sizes(const std::vector<std::size_t>& sizes) {
  std::string s;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(sizes[i]);
  }
  return s;
}

std::size_t expected_length(CovariateScope scope, int J, int T) {
  switch (scope) {
    case CovariateScope::Regional:
      return static_cast<std::size_t>(J);
    case CovariateScope::Temporal:
      return static_cast<std::size_t>(T);
    case CovariateScope::Spatiotemporal:
      return static_cast<std::size_t>(J) * static_cast<std::size_t>(T);
  }
  return 0;
}

}  // namespace

DisconnectedGraph::DisconnectedGraph(std::vector<std::size_t> sizes)
    : Error("adjacency graph is disconnected; component sizes: " +
            join_sizes(sizes)),
      sizes_(std::move(sizes)) {}

std::optional<double> PanelObservation::rate() const {
  if (active() <= 0) return std::nullopt;
  return static_cast<double>(unemployed) / static_cast<double>(active());
}

std::string_view to_string(CovariateScope scope) {
  switch (scope) {
    case CovariateScope::Regional:
      return "regional";
    case CovariateScope::Temporal:
      return "temporal";
    case CovariateScope::Spatiotemporal:
      return "spatiotemporal";
  }
  return "?";
}

// ---------------------------------------------------------------- dataset

PanelDataset::PanelDataset(int num_regions, int num_quarters,
                           std::vector<PanelObservation> cells,
                           std::vector<Covariate> covariates)
    : num_regions_(num_regions),
      num_quarters_(num_quarters),
      cells_(std::move(cells)),
      covariates_(std::move(covariates)) {
  if (num_regions_ < 1 || num_quarters_ < 1)
    throw DomainError("panel needs at least one region and one quarter");
  if (cells_.size() != static_cast<std::size_t>(num_cells()))
    throw GridIncomplete("panel has " + std::to_string(cells_.size()) +
                         " cells, expected " + std::to_string(num_cells()));
  for (int t = 0; t < num_quarters_; ++t) {
    for (int j = 0; j < num_regions_; ++j) {
      const auto& c = cells_[static_cast<std::size_t>(cell_index(j, t))];
      if (c.region != j + 1 || c.quarter != t + 1)
        throw GridIncomplete("cell for region " + std::to_string(j + 1) +
                             ", quarter " + std::to_string(t + 1) +
                             " is out of order or missing");
      if (c.unemployed < 0 || c.employed < 0 || c.inactive < 0)
        throw DomainError("negative count in region " +
                          std::to_string(c.region) + ", quarter " +
                          std::to_string(c.quarter));
      if (c.sample_size() <= 0)
        throw DomainError("empty sample in region " + std::to_string(c.region) +
                          ", quarter " + std::to_string(c.quarter));
      if (!(c.weight > 0.0) || !std::isfinite(c.weight))
        throw DomainError("design weight must be positive");
    }
  }
  std::set<std::string> seen;
  for (const auto& cov : covariates_) {
    if (!seen.insert(cov.name).second)
      throw FormatError("duplicate covariate '" + cov.name + "'");
    if (cov.values.size() != expected_length(cov.scope, num_regions_, num_quarters_))
      throw FormatError("covariate '" + cov.name + "' has wrong length");
    for (double v : cov.values)
      if (!std::isfinite(v))
        throw FormatError("covariate '" + cov.name + "' has a missing value");
  }
}

bool PanelDataset::has_covariate(std::string_view name) const {
  return std::any_of(covariates_.begin(), covariates_.end(),
                     [&](const Covariate& c) { return c.name == name; });
}

std::size_t PanelDataset::covariate_position(std::string_view name) const {
  for (std::size_t i = 0; i < covariates_.size(); ++i)
    if (covariates_[i].name == name) return i;
  throw SpecError("unknown covariate '" + std::string(name) + "'");
}

const Covariate& PanelDataset::covariate(std::string_view name) const {
  return covariates_[covariate_position(name)];
}

double PanelDataset::covariate_at(const Covariate& c, int j, int t) const {
  switch (c.scope) {
    case CovariateScope::Regional:
      return c.values[static_cast<std::size_t>(j)];
    case CovariateScope::Temporal:
      return c.values[static_cast<std::size_t>(t)];
    case CovariateScope::Spatiotemporal:
      return c.values[static_cast<std::size_t>(cell_index(j, t))];
  }
  return 0.0;
}

PanelDataset PanelDataset::leading_quarters(int count) const {
  if (count < 1 || count > num_quarters_)
    throw DomainError("cannot keep " + std::to_string(count) + " of " +
                      std::to_string(num_quarters_) + " quarters");
  const auto n = static_cast<std::size_t>(count * num_regions_);
  std::vector<PanelObservation> cells(cells_.begin(), cells_.begin() + n);
  std::vector<Covariate> covs = covariates_;
  for (auto& c : covs) {
    if (c.scope == CovariateScope::Temporal)
      c.values.resize(static_cast<std::size_t>(count));
    else if (c.scope == CovariateScope::Spatiotemporal)
      c.values.resize(n);
  }
  return PanelDataset(num_regions_, count, std::move(cells), std::move(covs));
}

// ---------------------------------------------------------------- panel I/O

PanelDataset parse_panel(std::istream& in, const PanelSchema& schema) {
  const auto table = text::read_csv(in);
  auto require = [&](const std::string& name) {
    const int c = table.column(name);
    if (c < 0) throw FormatError("panel is missing column '" + name + "'");
    return static_cast<std::size_t>(c);
  };
  const auto c_region = require(schema.region);
  const auto c_quarter = require(schema.quarter);
  const auto c_unemp = require(schema.unemployed);
  const auto c_emp = require(schema.employed);
  const auto c_inact = require(schema.inactive);
  const int c_active = table.column(schema.active);
  const int c_size = table.column(schema.sample_size);
  const int c_weight = table.column(schema.weight);

  auto int_field = [&](std::size_t row, std::size_t col) {
    std::int64_t v = 0;
    if (!text::parse_int(table.rows[row][col], v))
      throw FormatError("row " + std::to_string(row + 1) + ": column '" +
                        table.header[col] + "' is not an integer");
    return v;
  };
  auto real_field = [&](std::size_t row, std::size_t col) {
    double v = 0;
    if (!text::parse_double(table.rows[row][col], v) || !std::isfinite(v))
      throw FormatError("row " + std::to_string(row + 1) + ": column '" +
                        table.header[col] + "' is missing or not a number");
    return v;
  };

  std::int64_t J = 0, T = 0;
  std::vector<PanelObservation> raw;
  raw.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    PanelObservation o;
    const auto region = int_field(r, c_region);
    const auto quarter = int_field(r, c_quarter);
    if (region < 1 || quarter < 1)
      throw DomainError("row " + std::to_string(r + 1) +
                        ": region and quarter ids are 1-based");
    o.region = static_cast<int>(region);
    o.quarter = static_cast<int>(quarter);
    o.unemployed = int_field(r, c_unemp);
    o.employed = int_field(r, c_emp);
    o.inactive = int_field(r, c_inact);
    if (o.unemployed < 0 || o.employed < 0 || o.inactive < 0)
      throw DomainError("row " + std::to_string(r + 1) + ": negative count");
    if (c_active >= 0 &&
        int_field(r, static_cast<std::size_t>(c_active)) != o.active())
      throw InconsistentCounts(
          r + 1, "row " + std::to_string(r + 1) +
                     ": active != unemployed + employed");
    if (c_size >= 0 &&
        int_field(r, static_cast<std::size_t>(c_size)) != o.sample_size())
      throw InconsistentCounts(
          r + 1, "row " + std::to_string(r + 1) +
                     ": sample_size != unemployed + employed + inactive");
    if (c_weight >= 0) o.weight = real_field(r, static_cast<std::size_t>(c_weight));
    J = std::max<std::int64_t>(J, region);
    T = std::max<std::int64_t>(T, quarter);
    raw.push_back(o);
  }
  if (raw.empty()) throw GridIncomplete("panel has no rows");

  const auto n = static_cast<std::size_t>(J * T);
  std::vector<std::int64_t> row_of(n, -1);
  for (std::size_t r = 0; r < raw.size(); ++r) {
    const auto idx = static_cast<std::size_t>((raw[r].quarter - 1) * J + (raw[r].region - 1));
    if (row_of[idx] >= 0)
      throw GridIncomplete("duplicate cell for region " +
                           std::to_string(raw[r].region) + ", quarter " +
                           std::to_string(raw[r].quarter));
    row_of[idx] = static_cast<std::int64_t>(r);
  }
  for (std::size_t idx = 0; idx < n; ++idx)
    if (row_of[idx] < 0)
      throw GridIncomplete("missing cell for region " +
                           std::to_string(idx % static_cast<std::size_t>(J) + 1) +
                           ", quarter " +
                           std::to_string(idx / static_cast<std::size_t>(J) + 1));

  std::vector<PanelObservation> cells(n);
  for (std::size_t idx = 0; idx < n; ++idx)
    cells[idx] = raw[static_cast<std::size_t>(row_of[idx])];

  std::vector<Covariate> covariates;
  auto add = [&](const std::string& name, CovariateScope scope) {
    const auto col = require(name);
    Covariate cov;
    cov.name = name;
    cov.scope = scope;
    cov.values.assign(expected_length(scope, static_cast<int>(J), static_cast<int>(T)),
                      std::nan(""));
    for (std::size_t idx = 0; idx < n; ++idx) {
      const auto r = static_cast<std::size_t>(row_of[idx]);
      const double v = real_field(r, col);
      const auto j = idx % static_cast<std::size_t>(J);
      const auto t = idx / static_cast<std::size_t>(J);
      const std::size_t slot = scope == CovariateScope::Regional   ? j
                               : scope == CovariateScope::Temporal ? t
                                                                   : idx;
      double& dst = cov.values[slot];
      if (std::isnan(dst)) {
        dst = v;
      } else if (std::abs(dst - v) > 1e-9 * std::max(1.0, std::abs(dst))) {
        throw FormatError("covariate '" + name + "' declared " +
                          std::string(to_string(scope)) +
                          " but varies within its index (row " +
                          std::to_string(r + 1) + ")");
      }
    }
    covariates.push_back(std::move(cov));
  };
  for (const auto& name : schema.regional) add(name, CovariateScope::Regional);
  for (const auto& name : schema.temporal) add(name, CovariateScope::Temporal);
  for (const auto& name : schema.spatiotemporal)
    add(name, CovariateScope::Spatiotemporal);

  return PanelDataset(static_cast<int>(J), static_cast<int>(T), std::move(cells),
                      std::move(covariates));
}

PanelDataset load_panel(const std::filesystem::path& path,
                        const PanelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open panel file " + path.string());
  return parse_panel(in, schema);
}

void write_panel(const PanelDataset& d, std::ostream& out) {
  out << "region,quarter,unemployed,employed,inactive,active,sample_size,weight";
  for (const auto& c : d.covariates()) out << ',' << c.name;
  out << '\n';
  for (int t = 0; t < d.num_quarters(); ++t) {
    for (int j = 0; j < d.num_regions(); ++j) {
      const auto& o = d.cell(j, t);
      out << o.region << ',' << o.quarter << ',' << o.unemployed << ','
          << o.employed << ',' << o.inactive << ',' << o.active() << ','
          << o.sample_size() << ',' << text::format_double(o.weight);
      for (const auto& c : d.covariates()) {
        double v = d.covariate_at(c, j, t);
        if (c.standardization.applied) v = c.standardization.to_raw(v);
        out << ',' << text::format_double(v);
      }
      out << '\n';
    }
  }
}

void save_panel(const PanelDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  write_panel(dataset, out);
}

PanelDataset standardize_covariates(const PanelDataset& d) {
  std::vector<Covariate> covs = d.covariates();
  for (auto& c : covs) {
    if (c.standardization.applied) continue;
    const double n = static_cast<double>(c.values.size());
    const double mean = std::accumulate(c.values.begin(), c.values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : c.values) ss += (v - mean) * (v - mean);
    const double sd = c.values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    Standardization s;
    s.applied = true;
    s.mean = mean;
    if (sd > 1e-12 * std::max(1.0, std::abs(mean))) {
      s.scale = sd;
    } else {
      s.mean = 0.0;
      s.scale = 1.0;
      s.constant = true;
    }
    for (double& v : c.values) v = (v - s.mean) / s.scale;
    c.standardization = s;
  }
  return PanelDataset(d.num_regions(), d.num_quarters(), d.cells(), std::move(covs));
}

// ---------------------------------------------------------------- graph

RegionGraph::RegionGraph(int num_regions,
                         const std::vector<std::pair<int, int>>& edges) {
  if (num_regions < 1) throw DomainError("graph needs at least one region");
  neighbors_.resize(static_cast<std::size_t>(num_regions));
  std::set<std::pair<int, int>> unique;
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= num_regions || b >= num_regions)
      throw DomainError("edge endpoint out of range");
    if (a == b)
      throw DomainError("self-loop at region " + std::to_string(a + 1));
    unique.insert({std::min(a, b), std::max(a, b)});
  }
  edges_.assign(unique.begin(), unique.end());
  for (auto [a, b] : edges_) {
    neighbors_[static_cast<std::size_t>(a)].push_back(b);
    neighbors_[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());

  std::vector<int> component(neighbors_.size(), -1);
  std::vector<std::size_t> sizes;
  for (std::size_t start = 0; start < neighbors_.size(); ++start) {
    if (component[start] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    std::size_t size = 0;
    std::queue<int> q;
    q.push(static_cast<int>(start));
    component[start] = id;
    while (!q.empty()) {
      const int v = q.front();
      q.pop();
      ++size;
      for (int k : neighbors_[static_cast<std::size_t>(v)])
        if (component[static_cast<std::size_t>(k)] < 0) {
          component[static_cast<std::size_t>(k)] = id;
          q.push(k);
        }
    }
    sizes.push_back(size);
  }
  if (sizes.size() > 1) throw DisconnectedGraph(std::move(sizes));
}

RegionGraph path_graph(int n) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  return RegionGraph(n, edges);
}

RegionGraph parse_adjacency(std::istream& in) {
  std::map<int, std::vector<int>> lists;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto body = text::trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto colon = body.find(':');
    if (colon == std::string_view::npos)
      throw FormatError("adjacency line " + std::to_string(line_no) +
                        ": expected 'id: neighbours'");
    std::int64_t id = 0;
    if (!text::parse_int(body.substr(0, colon), id) || id < 1)
      throw FormatError("adjacency line " + std::to_string(line_no) +
                        ": bad region id");
    if (lists.count(static_cast<int>(id)))
      throw FormatError("adjacency lists region " + std::to_string(id) + " twice");
    auto& nb = lists[static_cast<int>(id)];
    std::string_view rest = body.substr(colon + 1);
    std::size_t pos = 0;
    while (pos < rest.size()) {
      const auto start = rest.find_first_not_of(" \t,", pos);
      if (start == std::string_view::npos) break;
      const auto end = rest.find_first_of(" \t,", start);
      std::int64_t k = 0;
      if (!text::parse_int(rest.substr(start, end - start), k) || k < 1)
        throw FormatError("adjacency line " + std::to_string(line_no) +
                          ": bad neighbour id");
      nb.push_back(static_cast<int>(k));
      pos = end == std::string_view::npos ? rest.size() : end;
    }
  }
  if (lists.empty()) throw FormatError("adjacency file lists no regions");
  const int J = lists.rbegin()->first;
  if (static_cast<int>(lists.size()) != J)
    throw FormatError("adjacency ids must cover 1.." + std::to_string(J));

  std::vector<std::pair<int, int>> edges;
  for (const auto& [i, nb] : lists) {
    for (int k : nb) {
      if (k > J)
        throw FormatError("neighbour " + std::to_string(k) + " of region " +
                          std::to_string(i) + " is not a listed region");
      if (k == i) throw DomainError("self-loop at region " + std::to_string(i));
      const auto& back = lists.at(k);
      if (std::find(back.begin(), back.end(), i) == back.end())
        throw AsymmetryError(i, k);
      edges.emplace_back(i - 1, k - 1);
    }
  }
  return RegionGraph(J, edges);
}

RegionGraph load_adjacency(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open adjacency file " + path.string());
  return parse_adjacency(in);
}

void write_adjacency(const RegionGraph& graph, std::ostream& out) {
  for (int j = 0; j < graph.num_regions(); ++j) {
    out << j + 1 << ':';
    for (int k : graph.neighbors(j)) out << ' ' << k + 1;
    out << '\n';
  }
}

}  // namespace saeb
