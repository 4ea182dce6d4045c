#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "saeb/errors.hpp"
#include "saeb/inference.hpp"
#include "saeb/latent_field.hpp"
#include "saeb/numeric.hpp"

namespace saeb {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum SiteGroup { kCoefficient, kCompensated, kEffect, kPrecision, kScale, kDispersion, kGroups };

struct Site {
  double log_scale = std::log(0.1);
  int window_accepted = 0;
  int window_proposed = 0;
  long accepted = 0;
  long proposed = 0;
};

/// Coefficient shift paired with the opposite shift of an effect block so
/// that the linear predictor is unchanged.
struct CompensatedMove {
  int category = 0;
  int column = 0;
  std::size_t block = 0;
  std::vector<double> x;  // covariate value per block element
  double x_mean = 0.0;
  Site site;
};

class Chain {
 public:
  Chain(const Model& model, const MCMCConfig& config, int index)
      : model_(model),
        cfg_(config),
        d_(model.design()),
        f_(model.family()),
        N_(model.num_rows()),
        K_(model.num_categories()),
        k_(d_.num_columns()),
        rng_(splitmix64(config.base_seed + static_cast<std::uint64_t>(index))) {
    const auto& pr = model.spec().priors;
    coef_var_ = pr.coefficient_variance;
    icpt_shape_ = pr.intercept_gamma_shape;
    icpt_rate_ = pr.intercept_gamma_rate;
    active_.resize(static_cast<std::size_t>(N_));
    for (int i = 0; i < N_; ++i)
      active_[static_cast<std::size_t>(i)] = cfg_.use_likelihood && model.row_active(i);
    all_rows_.resize(static_cast<std::size_t>(N_));
    for (int i = 0; i < N_; ++i) all_rows_[static_cast<std::size_t>(i)] = i;
    intercept_col_ = -1;
    for (int c = 0; c < k_; ++c)
      if (d_.column_covariate[static_cast<std::size_t>(c)] < 0) intercept_col_ = c;

    rows_of_.resize(d_.blocks.size());
    for (std::size_t b = 0; b < d_.blocks.size(); ++b) {
      rows_of_[b].resize(static_cast<std::size_t>(d_.blocks[b].size));
      for (int i = 0; i < N_; ++i)
        rows_of_[b][static_cast<std::size_t>(d_.effect_index(d_.blocks[b], i))].push_back(i);
    }
    slot_blocks_.resize(d_.precision_names.size());
    for (std::size_t b = 0; b < d_.blocks.size(); ++b)
      slot_blocks_[static_cast<std::size_t>(d_.blocks[b].precision_slot)].push_back(b);

    coef_sites_.resize(static_cast<std::size_t>(K_ * k_));
    effect_sites_.resize(d_.blocks.size());
    for (std::size_t b = 0; b < d_.blocks.size(); ++b)
      effect_sites_[b].resize(static_cast<std::size_t>(d_.blocks[b].size));
    precision_sites_.resize(d_.precision_names.size());
    scale_sites_.resize(d_.precision_names.size());
    for (auto& s : precision_sites_) s.log_scale = 0.0;
    for (auto& s : scale_sites_) s.log_scale = std::log(0.3);
    build_compensated_moves();

    eta_.resize(static_cast<std::size_t>(N_ * K_));
    cand_eta_.resize(eta_.size());
    ll_.assign(static_cast<std::size_t>(N_), 0.0);
    base_.assign(static_cast<std::size_t>(N_), 0.0);
    cand_ll_.assign(static_cast<std::size_t>(N_), 0.0);
    deltas_.assign(static_cast<std::size_t>(N_), 0.0);
  }

  ChainDraws run() {
    initialize();
    ChainDraws out;
    const std::size_t P = model_.layout().size();
    out.num_draws = static_cast<std::size_t>(cfg_.draws_per_chain());
    out.values.reserve(out.num_draws * P);
    out.deviance.reserve(out.num_draws);
    int window = 0;
    for (int it = 0; it < cfg_.iterations; ++it) {
      const bool burning = it < cfg_.burn_in;
      sweep(!burning);
      if (burning && (it + 1) % cfg_.adaptation_window == 0) adapt(++window);
      const bool store = !burning && (it - cfg_.burn_in) % cfg_.thinning == 0;
      if (store || (it + 1) % 50 == 0) refresh();
      if (store) {
        const auto flat = model_.flatten(s_);
        out.values.insert(out.values.end(), flat.begin(), flat.end());
        double sum = 0.0;
        for (double v : ll_) sum += v;
        out.deviance.push_back(sum > kNegInf ? -2.0 * sum
                                             : std::numeric_limits<double>::infinity());
      }
    }
    out.acceptance.assign(kGroups, std::nan(""));
    for (int g = 0; g < kGroups; ++g)
      if (post_proposed_[g] > 0)
        out.acceptance[static_cast<std::size_t>(g)] =
            static_cast<double>(post_accepted_[g]) / static_cast<double>(post_proposed_[g]);
    return out;
  }

 private:
  // ------------------------------------------------------------ set-up

  CovariateScope column_scope(int c) const {
    const int pos = d_.column_covariate[static_cast<std::size_t>(c)];
    return model_.dataset().covariates()[static_cast<std::size_t>(pos)].scope;
  }

  void build_compensated_moves() {
    for (std::size_t b = 0; b < d_.blocks.size(); ++b) {
      const auto& blk = d_.blocks[b];
      for (int c = 0; c < k_; ++c) {
        bool match = false;
        const bool intercept = c == intercept_col_;
        if (intercept) {
          match = !blk.centered;
        } else {
          const auto scope = column_scope(c);
          switch (blk.kind) {
            case EffectKind::Spatial:
            case EffectKind::Region:
              match = scope == CovariateScope::Regional;
              break;
            case EffectKind::Temporal:
            case EffectKind::Quarter:
              match = scope == CovariateScope::Temporal;
              break;
            case EffectKind::Cell:
              match = scope == CovariateScope::Spatiotemporal;
              break;
          }
          if (blk.centered && intercept_col_ < 0) match = false;
        }
        if (!match) continue;
        CompensatedMove m;
        m.category = blk.category;
        m.column = c;
        m.block = b;
        m.x.resize(static_cast<std::size_t>(blk.size));
        for (int e = 0; e < blk.size; ++e)
          m.x[static_cast<std::size_t>(e)] = d_.X(rows_of_[b][static_cast<std::size_t>(e)][0], c);
        double s = 0.0;
        for (double v : m.x) s += v;
        m.x_mean = blk.centered ? s / static_cast<double>(blk.size) : 0.0;
        bool varies = false;
        for (double v : m.x) varies = varies || std::abs(v - m.x_mean) > 0.0;
        if (!varies) continue;
        moves_.push_back(std::move(m));
      }
    }
  }

  double pilot_value(int category) const {
    double num = 0.0;
    double den = 0.0;
    double offset = 0.0;
    int count = 0;
    for (int i = 0; i < N_; ++i) {
      if (!model_.row_active(i)) continue;
      const auto& t = model_.prepared()[static_cast<std::size_t>(i)];
      offset += d_.offset[static_cast<std::size_t>(i)];
      ++count;
      switch (f_) {
        case Family::Poisson:
        case Family::NegativeBinomial:
          num += t.y;
          den += std::exp(d_.offset[static_cast<std::size_t>(i)]);
          break;
        case Family::Binomial:
          num += t.y;
          den += t.trials;
          break;
        case Family::Beta:
        case Family::Gaussian:
          num += t.y;
          den += 1.0;
          break;
        case Family::Multinomial:
          num += t.counts[static_cast<std::size_t>(category)];
          den += t.counts[2];
          break;
      }
    }
    if (count == 0 || !(num > 0.0) || !(den > 0.0)) return 0.0;
    const double mean_offset = offset / count;
    const double ratio = num / den;
    switch (f_) {
      case Family::Poisson:
        return std::log(ratio);
      case Family::NegativeBinomial: {
        const double mu = num / count;
        return std::log(mu / (mu + s_.dispersion)) - mean_offset;
      }
      case Family::Binomial:
      case Family::Beta:
        if (ratio >= 1.0) return 0.0;
        return std::log(ratio) - std::log1p(-ratio);
      case Family::Multinomial:
        return std::log(ratio);
      case Family::Gaussian:
        return ratio;
    }
    return 0.0;
  }

  void initialize() {
    s_ = zero_state(d_);
    if (has_dispersion(f_)) s_.dispersion = 10.0;
    if (f_ == Family::Gaussian) s_.dispersion = model_.spec().known_variance;
    for (int q = 0; q < K_; ++q) {
      const double pilot = cfg_.use_likelihood ? pilot_value(q) : 0.0;
      for (int c = 0; c < k_; ++c)
        coef(q, c) = standard_normal(rng_) + (c == intercept_col_ ? pilot : 0.0);
    }
    refresh();
    if (f_ == Family::NegativeBinomial) {
      double top = kNegInf;
      for (double e : eta_) top = std::max(top, e);
      if (top > -0.5) {
        if (intercept_col_ < 0)
          throw NonFiniteStart("negative binomial start has eta >= 0 and no intercept to shift");
        coef(0, intercept_col_) -= top + 0.5;
        refresh();
      }
    }
    if (!(log_posterior(model_, s_) > kNegInf) && cfg_.use_likelihood)
      throw NonFiniteStart("initial log posterior is not finite");
    if (!(log_prior(model_, s_) > kNegInf))
      throw NonFiniteStart("initial log prior is not finite");
  }

  // ------------------------------------------------------------ caches

  double& coef(int q, int c) { return s_.coefficients[static_cast<std::size_t>(q * k_ + c)]; }

  double phi() const { return s_.dispersion; }

  double row_ll(int i, const double* eta, double phi, double base) const {
    const double v =
        eta_log_likelihood(f_, model_.prepared()[static_cast<std::size_t>(i)], eta, phi) + base;
    return std::isnan(v) ? kNegInf : v;
  }

  double base_for(int i, double phi) const {
    const auto& t = model_.prepared()[static_cast<std::size_t>(i)];
    return dispersion_log_likelihood(f_, t, phi) + t.constant;
  }

  void refresh() {
    for (std::size_t b = 0; b < d_.blocks.size(); ++b) {
      if (!d_.blocks[b].centered) continue;
      auto& w = s_.effects[b];
      double mean = 0.0;
      for (double v : w) mean += v;
      mean /= static_cast<double>(w.size());
      for (double& v : w) v -= mean;
      if (intercept_col_ >= 0) coef(d_.blocks[b].category, intercept_col_) += mean;
    }
    for (int i = 0; i < N_; ++i)
      for (int q = 0; q < K_; ++q)
        eta_[static_cast<std::size_t>(i * K_ + q)] = linear_predictor(s_, d_, i, q);
    for (int i = 0; i < N_; ++i) {
      const auto u = static_cast<std::size_t>(i);
      if (!active_[u]) {
        ll_[u] = 0.0;
        base_[u] = 0.0;
        continue;
      }
      base_[u] = base_for(i, phi());
      ll_[u] = row_ll(i, eta_.data() + i * K_, phi(), base_[u]);
    }
  }

  /// Candidate log-likelihoods when eta of category q moves by deltas_[r]
  /// on rows[r]; returns the summed change.
  double propose_shift(int q, const std::vector<int>& rows, bool uniform, double delta) {
    double diff = 0.0;
    double tmp[2];
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const int i = rows[r];
      const auto u = static_cast<std::size_t>(i);
      if (!active_[u]) continue;
      for (int c = 0; c < K_; ++c) tmp[c] = eta_[u * static_cast<std::size_t>(K_) + c];
      tmp[q] += uniform ? delta : deltas_[r];
      cand_ll_[u] = row_ll(i, tmp, phi(), base_[u]);
      diff += cand_ll_[u] - ll_[u];
      if (!(diff > kNegInf)) return kNegInf;
    }
    return diff;
  }

  void commit_shift(int q, const std::vector<int>& rows, bool uniform, double delta) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto u = static_cast<std::size_t>(rows[r]);
      eta_[u * static_cast<std::size_t>(K_) + q] += uniform ? delta : deltas_[r];
      if (active_[u]) ll_[u] = cand_ll_[u];
    }
  }

  bool accept(double log_ratio) {
    if (!(log_ratio > kNegInf)) return false;
    if (log_ratio >= 0.0) return true;
    return std::log(uniform01(rng_)) < log_ratio;
  }

  void record(Site& site, SiteGroup group, bool ok, bool post) {
    ++site.window_proposed;
    ++site.proposed;
    if (ok) {
      ++site.window_accepted;
      ++site.accepted;
    }
    if (post) {
      ++post_proposed_[group];
      if (ok) ++post_accepted_[group];
    }
  }

  double coef_log_prior_diff(bool intercept, double before, double after) const {
    if (intercept && icpt_shape_ > 0.0)
      return icpt_shape_ * (after - before) - icpt_rate_ * (std::exp(after) - std::exp(before));
    return -0.5 * (after * after - before * before) / coef_var_;
  }

  double tau_of(std::size_t b) const {
    return s_.precisions[static_cast<std::size_t>(d_.blocks[b].precision_slot)];
  }

  // ------------------------------------------------------------ updates

  void sweep(bool post) {
    update_coefficients(post);
    update_compensated(post);
    update_effects(post);
    update_precisions(post);
    update_scales(post);
    if (has_dispersion(f_)) update_dispersion(post, false);
    if (f_ == Family::NegativeBinomial && intercept_col_ >= 0) update_dispersion(post, true);
  }

  void update_coefficients(bool post) {
    for (int q = 0; q < K_; ++q) {
      for (int c = 0; c < k_; ++c) {
        Site& site = coef_sites_[static_cast<std::size_t>(q * k_ + c)];
        const double delta = std::exp(site.log_scale) * standard_normal(rng_);
        const bool uniform = c == intercept_col_;
        if (!uniform)
          for (int i = 0; i < N_; ++i) deltas_[static_cast<std::size_t>(i)] = delta * d_.X(i, c);
        double ratio = propose_shift(q, all_rows_, uniform, delta);
        const double old = coef(q, c);
        ratio += coef_log_prior_diff(c == intercept_col_, old, old + delta);
        const bool ok = accept(ratio);
        if (ok) {
          coef(q, c) = old + delta;
          commit_shift(q, all_rows_, uniform, delta);
        }
        record(site, kCoefficient, ok, post);
      }
    }
  }

  void update_compensated(bool post) {
    for (auto& m : moves_) {
      const double delta = std::exp(m.site.log_scale) * standard_normal(rng_);
      const auto& blk = d_.blocks[m.block];
      const double tau = tau_of(m.block);
      auto& w = s_.effects[m.block];
      std::vector<double> cand(w);
      for (std::size_t e = 0; e < cand.size(); ++e) cand[e] -= delta * (m.x[e] - m.x_mean);
      double ratio = model_.block_log_density(m.block, cand, tau) -
                     model_.block_log_density(m.block, w, tau);
      const double old = coef(m.category, m.column);
      ratio += coef_log_prior_diff(m.column == intercept_col_, old, old + delta);
      double icpt_old = 0.0;
      const bool shift_icpt = blk.centered && m.x_mean != 0.0;
      if (shift_icpt) {
        icpt_old = coef(m.category, intercept_col_);
        ratio += coef_log_prior_diff(true, icpt_old, icpt_old - delta * m.x_mean);
      }
      const bool ok = accept(ratio);
      if (ok) {
        w = std::move(cand);
        coef(m.category, m.column) = old + delta;
        if (shift_icpt) coef(m.category, intercept_col_) = icpt_old - delta * m.x_mean;
      }
      record(m.site, kCompensated, ok, post);
    }
  }

  void update_effects(bool post) {
    for (std::size_t b = 0; b < d_.blocks.size(); ++b) {
      const auto& blk = d_.blocks[b];
      const double tau = tau_of(b);
      auto& w = s_.effects[b];
      const int q = blk.category;
      const double n = static_cast<double>(blk.size);
      const bool iid = blk.kind == EffectKind::Cell || blk.kind == EffectKind::Region ||
                       blk.kind == EffectKind::Quarter;
      for (int e = 0; e < blk.size; ++e) {
        Site& site = effect_sites_[b][static_cast<std::size_t>(e)];
        const double delta = std::exp(site.log_scale) * standard_normal(rng_);
        const auto ue = static_cast<std::size_t>(e);
        double ratio = 0.0;
        if (iid) {
          const double before = w[ue];
          const double after = before + delta;
          ratio = -0.5 * tau * (after * after - before * before);
        } else {
          std::vector<double>& cand = scratch_;
          cand.assign(w.begin(), w.end());
          cand[ue] += delta;
          if (blk.centered)
            for (double& v : cand) v -= delta / n;
          ratio = model_.block_log_density(b, cand, tau) - model_.block_log_density(b, w, tau);
        }
        const bool absorb = blk.centered && intercept_col_ >= 0;
        const bool spread = blk.centered && intercept_col_ < 0;
        double icpt_old = 0.0;
        if (absorb) {
          icpt_old = coef(q, intercept_col_);
          ratio += coef_log_prior_diff(true, icpt_old, icpt_old + delta / n);
        }
        if (ratio > kNegInf) {
          if (spread) {
            for (int i = 0; i < N_; ++i)
              deltas_[static_cast<std::size_t>(i)] =
                  (d_.effect_index(blk, i) == e ? delta : 0.0) - delta / n;
            ratio += propose_shift(q, all_rows_, false, 0.0);
          } else {
            ratio += propose_shift(q, rows_of_[b][ue], true, delta);
          }
        }
        const bool ok = accept(ratio);
        if (ok) {
          if (iid) {
            w[ue] += delta;
          } else {
            w = scratch_;
          }
          if (absorb) coef(q, intercept_col_) = icpt_old + delta / n;
          if (spread)
            commit_shift(q, all_rows_, false, 0.0);
          else
            commit_shift(q, rows_of_[b][ue], true, delta);
        }
        record(site, kEffect, ok, post);
      }
    }
  }

  double slot_density(std::size_t slot, double tau, double factor) const {
    double s = 0.0;
    for (std::size_t b : slot_blocks_[slot]) {
      if (factor == 1.0) {
        s += model_.block_log_density(b, s_.effects[b], tau);
      } else {
        std::vector<double> v(s_.effects[b]);
        for (double& x : v) x *= factor;
        s += model_.block_log_density(b, v, tau);
      }
    }
    return s;
  }

  double hyper(double tau) const {
    const auto& pr = model_.spec().priors;
    return log_gamma_prior_on_log_scale(tau, pr.precision_shape, pr.precision_rate);
  }

  void update_precisions(bool post) {
    for (std::size_t p = 0; p < s_.precisions.size(); ++p) {
      Site& site = precision_sites_[p];
      const double delta = std::exp(site.log_scale) * standard_normal(rng_);
      const double tau = s_.precisions[p];
      const double cand = tau * std::exp(delta);
      const double ratio =
          slot_density(p, cand, 1.0) - slot_density(p, tau, 1.0) + hyper(cand) - hyper(tau);
      const bool ok = accept(ratio) && cand > 0.0 && std::isfinite(cand);
      if (ok) s_.precisions[p] = cand;
      record(site, kPrecision, ok, post);
    }
  }

  /// tau -> tau e^delta with the effects scaled by e^(-delta/2).
  void update_scales(bool post) {
    for (std::size_t p = 0; p < s_.precisions.size(); ++p) {
      if (slot_blocks_[p].empty()) continue;
      Site& site = scale_sites_[p];
      const double delta = std::exp(site.log_scale) * standard_normal(rng_);
      const double tau = s_.precisions[p];
      const double cand_tau = tau * std::exp(delta);
      const double factor = std::exp(-0.5 * delta);
      double dim = 0.0;
      for (std::size_t b : slot_blocks_[p])
        dim += d_.blocks[b].size - (d_.blocks[b].centered ? 1.0 : 0.0);
      double ratio = slot_density(p, cand_tau, factor) - slot_density(p, tau, 1.0) +
                     hyper(cand_tau) - hyper(tau) - 0.5 * dim * delta;
      if (!(cand_tau > 0.0) || !std::isfinite(cand_tau)) ratio = kNegInf;
      if (ratio > kNegInf) {
        std::copy(eta_.begin(), eta_.end(), cand_eta_.begin());
        for (std::size_t b : slot_blocks_[p]) {
          const auto& blk = d_.blocks[b];
          for (int i = 0; i < N_; ++i)
            cand_eta_[static_cast<std::size_t>(i * K_ + blk.category)] +=
                (factor - 1.0) *
                s_.effects[b][static_cast<std::size_t>(d_.effect_index(blk, i))];
        }
        for (int i = 0; i < N_ && ratio > kNegInf; ++i) {
          const auto u = static_cast<std::size_t>(i);
          if (!active_[u]) continue;
          cand_ll_[u] = row_ll(i, cand_eta_.data() + i * K_, phi(), base_[u]);
          ratio += cand_ll_[u] - ll_[u];
        }
      }
      const bool ok = accept(ratio);
      if (ok) {
        s_.precisions[p] = cand_tau;
        for (std::size_t b : slot_blocks_[p])
          for (double& x : s_.effects[b]) x *= factor;
        eta_.swap(cand_eta_);
        for (int i = 0; i < N_; ++i)
          if (active_[static_cast<std::size_t>(i)])
            ll_[static_cast<std::size_t>(i)] = cand_ll_[static_cast<std::size_t>(i)];
      }
      record(site, kScale, ok, post);
    }
  }

  /// log phi random walk. With `paired`, the intercept moves by -delta so
  /// that e^eta ~ mu / phi (the negative binomial mean) stays roughly fixed.
  void update_dispersion(bool post, bool paired) {
    const auto& pr = model_.spec().priors;
    Site& site = paired ? paired_dispersion_site_ : dispersion_site_;
    const double delta = std::exp(site.log_scale) * standard_normal(rng_);
    const double old = s_.dispersion;
    const double cand = old * std::exp(delta);
    const double shift = paired ? -delta : 0.0;
    double ratio = log_gamma_prior_on_log_scale(cand, pr.dispersion_shape, pr.dispersion_rate) -
                   log_gamma_prior_on_log_scale(old, pr.dispersion_shape, pr.dispersion_rate);
    double icpt_old = 0.0;
    if (paired) {
      icpt_old = coef(0, intercept_col_);
      ratio += coef_log_prior_diff(true, icpt_old, icpt_old + shift);
    }
    if (!(cand > 0.0) || !std::isfinite(cand)) ratio = kNegInf;
    cand_base_.resize(static_cast<std::size_t>(N_));
    for (int i = 0; i < N_ && ratio > kNegInf; ++i) {
      const auto u = static_cast<std::size_t>(i);
      if (!active_[u]) continue;
      cand_base_[u] = base_for(i, cand);
      double e[2] = {eta_[u * static_cast<std::size_t>(K_)] + shift, 0.0};
      if (K_ > 1) e[1] = eta_[u * static_cast<std::size_t>(K_) + 1];
      cand_ll_[u] = row_ll(i, e, cand, cand_base_[u]);
      ratio += cand_ll_[u] - ll_[u];
    }
    const bool ok = accept(ratio);
    if (ok) {
      s_.dispersion = cand;
      if (paired) coef(0, intercept_col_) = icpt_old + shift;
      for (int i = 0; i < N_; ++i) {
        const auto u = static_cast<std::size_t>(i);
        if (paired) eta_[u * static_cast<std::size_t>(K_)] += shift;
        if (!active_[u]) continue;
        base_[u] = cand_base_[u];
        ll_[u] = cand_ll_[u];
      }
    }
    record(site, kDispersion, ok, post);
  }

  // ------------------------------------------------------------ adaptation

  void adapt_site(Site& s, int window) {
    if (s.window_proposed > 0) {
      const double rate = static_cast<double>(s.window_accepted) / s.window_proposed;
      s.log_scale += (rate - cfg_.target_acceptance) / std::sqrt(static_cast<double>(window));
      s.log_scale = std::clamp(s.log_scale, -25.0, 8.0);
    }
    s.window_accepted = 0;
    s.window_proposed = 0;
  }

  void adapt(int window) {
    for (auto& s : coef_sites_) adapt_site(s, window);
    for (auto& m : moves_) adapt_site(m.site, window);
    for (auto& v : effect_sites_)
      for (auto& s : v) adapt_site(s, window);
    for (auto& s : precision_sites_) adapt_site(s, window);
    for (auto& s : scale_sites_) adapt_site(s, window);
    adapt_site(dispersion_site_, window);
    adapt_site(paired_dispersion_site_, window);
  }

  const Model& model_;
  const MCMCConfig& cfg_;
  const DesignMatrices& d_;
  Family f_;
  int N_;
  int K_;
  int k_;
  int intercept_col_ = -1;
  double coef_var_ = 1e6;
  double icpt_shape_ = 0.0;
  double icpt_rate_ = 0.0;
  Rng rng_;
  ParameterState s_;

  std::vector<bool> active_;
  std::vector<int> all_rows_;
  std::vector<std::vector<std::vector<int>>> rows_of_;
  std::vector<std::vector<std::size_t>> slot_blocks_;

  std::vector<double> eta_, cand_eta_, ll_, base_, cand_ll_, cand_base_, deltas_, scratch_;

  std::vector<Site> coef_sites_;
  std::vector<CompensatedMove> moves_;
  std::vector<std::vector<Site>> effect_sites_;
  std::vector<Site> precision_sites_;
  std::vector<Site> scale_sites_;
  Site dispersion_site_;
  Site paired_dispersion_site_;
  long post_accepted_[kGroups] = {};
  long post_proposed_[kGroups] = {};
};

}  // namespace

PosteriorSamples fit(const Model& model, const MCMCConfig& config) {
  config.validate();
  PosteriorSamples out;
  out.layout = model.layout();
  out.config = config;
  out.spec_text = model.spec().canonical_text();
  out.chains.resize(static_cast<std::size_t>(config.num_chains));
  std::vector<std::exception_ptr> errors(out.chains.size());
  auto work = [&](int c) {
    try {
      Chain chain(model, config, c);
      out.chains[static_cast<std::size_t>(c)] = chain.run();
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };
  if (config.parallel && config.num_chains > 1) {
    std::vector<std::thread> threads;
    for (int c = 0; c < config.num_chains; ++c) threads.emplace_back(work, c);
    for (auto& t : threads) t.join();
  } else {
    for (int c = 0; c < config.num_chains; ++c) work(c);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace saeb
