#include "saeb/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "saeb/errors.hpp"
#include "saeb/latent_field.hpp"

namespace saeb {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string effect_element_name(const EffectBlockInfo& block, const DesignMatrices& d,
                                int e) {
  if (block.kind == EffectKind::Cell) {
    const int j = d.row_region[static_cast<std::size_t>(e)] + 1;
    const int t = d.row_quarter[static_cast<std::size_t>(e)] + 1;
    return block.name + "[" + std::to_string(j) + ":" + std::to_string(t) + "]";
  }
  return block.name + "[" + std::to_string(e + 1) + "]";
}

}  // namespace

std::size_t ParameterLayout::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw SpecError("unknown parameter '" + name + "'");
}

const ParameterGroup* ParameterLayout::group(const std::string& name) const {
  for (const auto& g : groups)
    if (g.name == name) return &g;
  return nullptr;
}

std::vector<ObservationTarget> panel_targets(const PanelDataset& dataset, Family family,
                                             int* boundary_adjusted) {
  std::vector<ObservationTarget> out;
  out.reserve(dataset.cells().size());
  int adjusted = 0;
  for (const auto& c : dataset.cells()) {
    switch (family) {
      case Family::Poisson:
      case Family::NegativeBinomial:
        out.emplace_back(CountTarget{c.unemployed});
        break;
      case Family::Binomial:
        out.emplace_back(BinomialTarget{c.unemployed, c.active()});
        break;
      case Family::Beta: {
        const auto m = c.active();
        if (m <= 0) {
          out.emplace_back(RateTarget{std::nan("")});
          break;
        }
        double r = static_cast<double>(c.unemployed) / static_cast<double>(m);
        if (r <= 0.0 || r >= 1.0) {
          r = (r * (static_cast<double>(m) - 1.0) + 0.5) / static_cast<double>(m);
          ++adjusted;
        }
        out.emplace_back(RateTarget{r});
        break;
      }
      case Family::Multinomial:
        out.emplace_back(CategoryTarget{{c.employed, c.unemployed, c.inactive}});
        break;
      case Family::Gaussian: {
        const auto r = c.rate();
        out.emplace_back(GaussianTarget{r ? *r : std::nan("")});
        break;
      }
    }
  }
  if (boundary_adjusted) *boundary_adjusted = adjusted;
  return out;
}

Model::Model(const PanelDataset& dataset, const ModelSpec& spec,
             std::optional<RegionGraph> graph)
    : dataset_(spec.standardize ? standardize_covariates(dataset) : dataset),
      spec_(resolve(spec)),
      graph_(std::move(graph)) {
  compile(panel_targets(dataset_, spec_.family, &boundary_adjusted_));
}

Model::Model(const PanelDataset& dataset, const ModelSpec& spec,
             std::optional<RegionGraph> graph, std::vector<ObservationTarget> targets)
    : dataset_(spec.standardize ? standardize_covariates(dataset) : dataset),
      spec_(resolve(spec)),
      graph_(std::move(graph)) {
  compile(std::move(targets));
}

void Model::compile(std::vector<ObservationTarget> targets) {
  design_ = build_design(dataset_, spec_.predictor, saeb::num_categories(spec_.family));
  for (const auto& b : design_.blocks) {
    if (b.kind != EffectKind::Spatial) continue;
    if (!graph_)
      throw SpecError("structured spatial effect requested without an adjacency graph");
    if (graph_->num_regions() != dataset_.num_regions())
      throw SpecError("adjacency graph has " + std::to_string(graph_->num_regions()) +
                      " regions, panel has " + std::to_string(dataset_.num_regions()));
  }
  if (targets.size() != static_cast<std::size_t>(design_.num_rows()))
    throw SpecError("one likelihood target per panel cell is required");
  targets_ = std::move(targets);
  prepared_.clear();
  excluded_ = 0;
  for (const auto& t : targets_) {
    check_target(spec_.family, t);
    PreparedTarget p = prepare_target(spec_.family, t);
    bool drop = false;
    if (const auto* r = std::get_if<RateTarget>(&t)) drop = std::isnan(r->r);
    if (const auto* g = std::get_if<GaussianTarget>(&t)) drop = std::isnan(g->y);
    if (const auto* b = std::get_if<BinomialTarget>(&t)) drop = b->trials == 0;
    if (drop) {
      p = PreparedTarget{};
      p.active = false;
      ++excluded_;
    } else if (!(p.constant > kNegInf)) {
      throw DomainError("likelihood target outside the support of " +
                        std::string(to_string(spec_.family)));
    }
    prepared_.push_back(p);
  }

  layout_ = {};
  auto add_group = [&](const std::string& name, std::vector<std::string> names) {
    layout_.groups.push_back({name, layout_.names.size(), names.size()});
    for (auto& n : names) layout_.names.push_back(std::move(n));
  };
  std::vector<std::string> coef;
  for (int q = 0; q < design_.num_categories; ++q)
    for (int c = 0; c < design_.num_columns(); ++c)
      coef.push_back(design_.coefficient_name(q, c));
  add_group("coefficients", std::move(coef));
  for (const auto& b : design_.blocks) {
    std::vector<std::string> names;
    for (int e = 0; e < b.size; ++e) names.push_back(effect_element_name(b, design_, e));
    add_group(b.name, std::move(names));
  }
  add_group("precisions", design_.precision_names);
  if (has_dispersion(spec_.family)) add_group("dispersion", {"phi"});
}

double Model::block_log_density(std::size_t block, std::span<const double> values,
                                double tau) const {
  const auto& b = design_.blocks[block];
  switch (b.kind) {
    case EffectKind::Spatial:
      return icar_logdensity(values, tau, *graph_);
    case EffectKind::Temporal:
      return design_.temporal_model == TemporalModel::RW1
                 ? rw1_logdensity(values, tau)
                 : ar1_logdensity(values, tau, design_.ar1_rho);
    default:
      return iid_logdensity(values, tau);
  }
}

ParameterState Model::unflatten(std::span<const double> flat) const {
  if (flat.size() != layout_.size()) throw SpecError("flat parameter vector has wrong length");
  ParameterState s;
  std::size_t g = 0;
  const auto& groups = layout_.groups;
  auto slice = [&](std::size_t i) {
    return std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(groups[i].offset),
                               flat.begin() +
                                   static_cast<std::ptrdiff_t>(groups[i].offset + groups[i].size));
  };
  s.coefficients = slice(g++);
  for (std::size_t b = 0; b < design_.blocks.size(); ++b) s.effects.push_back(slice(g++));
  s.precisions = slice(g++);
  if (has_dispersion(spec_.family))
    s.dispersion = flat[groups[g].offset];
  else if (spec_.family == Family::Gaussian)
    s.dispersion = spec_.known_variance;
  return s;
}

std::vector<double> Model::flatten(const ParameterState& state) const {
  std::vector<double> flat;
  flat.reserve(layout_.size());
  flat.insert(flat.end(), state.coefficients.begin(), state.coefficients.end());
  for (const auto& e : state.effects) flat.insert(flat.end(), e.begin(), e.end());
  flat.insert(flat.end(), state.precisions.begin(), state.precisions.end());
  if (has_dispersion(spec_.family)) flat.push_back(state.dispersion);
  if (flat.size() != layout_.size()) throw SpecError("parameter state does not match model");
  return flat;
}

std::vector<double> linear_predictors(const Model& model, const ParameterState& state) {
  const auto& d = model.design();
  const int K = d.num_categories;
  std::vector<double> eta(static_cast<std::size_t>(model.num_rows() * K));
  for (int i = 0; i < model.num_rows(); ++i)
    for (int q = 0; q < K; ++q)
      eta[static_cast<std::size_t>(i * K + q)] = linear_predictor(state, d, i, q);
  return eta;
}

std::vector<double> row_log_likelihoods(const Model& model, const ParameterState& state) {
  const auto eta = linear_predictors(model, state);
  const int K = model.num_categories();
  const Family f = model.family();
  const double phi =
      f == Family::Gaussian ? model.spec().known_variance : state.dispersion;
  std::vector<double> out(static_cast<std::size_t>(model.num_rows()), 0.0);
  if (has_dispersion(f) && !(phi > 0.0)) {
    std::fill(out.begin(), out.end(), kNegInf);
    return out;
  }
  for (int i = 0; i < model.num_rows(); ++i) {
    const auto& t = model.prepared()[static_cast<std::size_t>(i)];
    if (!t.active) continue;
    const double v = eta_log_likelihood(f, t, eta.data() + i * K, phi) +
                     dispersion_log_likelihood(f, t, phi) + t.constant;
    out[static_cast<std::size_t>(i)] = std::isnan(v) ? kNegInf : v;
  }
  return out;
}

double log_likelihood(const Model& model, const ParameterState& state) {
  double s = 0.0;
  for (double v : row_log_likelihoods(model, state)) s += v;
  return s;
}

double deviance(const Model& model, const ParameterState& state) {
  return deviance_from_log_likelihoods(row_log_likelihoods(model, state));
}

double log_gamma_prior_on_log_scale(double x, double shape, double rate) {
  if (!(x > 0.0)) return kNegInf;
  return shape * std::log(rate) - log_gamma(shape) + shape * std::log(x) - rate * x;
}

double log_prior(const Model& model, const ParameterState& state) {
  const auto& pr = model.spec().priors;
  double lp = 0.0;
  const double v = pr.coefficient_variance;
  const auto& d = model.design();
  for (std::size_t i = 0; i < state.coefficients.size(); ++i) {
    const double b = state.coefficients[i];
    const auto col = i % static_cast<std::size_t>(d.num_columns());
    if (pr.intercept_gamma_shape > 0.0 && d.column_covariate[col] < 0)
      lp += log_gamma_prior_on_log_scale(std::exp(b), pr.intercept_gamma_shape,
                                         pr.intercept_gamma_rate);
    else
      lp += -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * b * b / v;
  }
  for (std::size_t b = 0; b < model.design().blocks.size(); ++b) {
    const double tau =
        state.precisions[static_cast<std::size_t>(model.design().blocks[b].precision_slot)];
    if (!(tau > 0.0)) return kNegInf;
    lp += model.block_log_density(b, state.effects[b], tau);
  }
  for (double tau : state.precisions)
    lp += log_gamma_prior_on_log_scale(tau, pr.precision_shape, pr.precision_rate);
  if (has_dispersion(model.family()))
    lp += log_gamma_prior_on_log_scale(state.dispersion, pr.dispersion_shape,
                                       pr.dispersion_rate);
  return std::isnan(lp) ? kNegInf : lp;
}

double log_posterior(const Model& model, const ParameterState& state) {
  const double lp = log_prior(model, state);
  if (!(lp > kNegInf)) return kNegInf;
  const double ll = log_likelihood(model, state);
  return std::isnan(ll) ? kNegInf : lp + ll;
}

}  // namespace saeb
