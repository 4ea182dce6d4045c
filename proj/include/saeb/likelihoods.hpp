#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <variant>

#include "saeb/model_spec.hpp"
#include "saeb/numeric.hpp"

namespace saeb {

struct CountTarget {
  std::int64_t y = 0;
};
struct BinomialTarget {
  std::int64_t y = 0;
  std::int64_t trials = 0;
};
struct RateTarget {
  double r = 0.5;
};
/// Employed, unemployed, inactive counts; the inactive category is the
/// baseline of the multinomial predictor.
struct CategoryTarget {
  std::array<std::int64_t, 3> y{};
  std::int64_t total() const { return y[0] + y[1] + y[2]; }
};
struct GaussianTarget {
  double y = 0.0;
};

using ObservationTarget =
    std::variant<CountTarget, BinomialTarget, RateTarget, CategoryTarget, GaussianTarget>;

/// Throws SpecError when the payload type does not belong to `family`.
void check_target(Family family, const ObservationTarget& target);

// ------------------------------------------------------- natural scale

double poisson_log_pmf(std::int64_t y, double mu);
double negbin_log_pmf(std::int64_t y, double mu, double phi);
double binomial_log_pmf(std::int64_t y, std::int64_t m, double p);
/// Mean/precision parameterisation: Beta(mu * phi, (1 - mu) * phi).
double beta_log_pdf(double r, double mu, double phi);
double multinomial_log_pmf(const std::array<std::int64_t, 3>& y,
                           const std::array<double, 3>& p);
double gaussian_log_pdf(double y, double mean, double variance);

/// Family-dispatched log pmf/pdf. `mean` holds one value (mu, R or the Beta
/// mean) or the three multinomial probabilities; `dispersion` is phi for the
/// negative binomial and Beta and the known variance for the Gaussian.
/// Targets outside the support give -inf.
double log_likelihood(Family family, const ObservationTarget& target,
                      std::span<const double> mean, double dispersion);

// --------------------------------------------------- linear predictor scale

/// Target with every data-only term precomputed; used in the samplers' inner
/// loops. Rows with `active == false` contribute nothing.
struct PreparedTarget {
  double y = 0.0;
  double trials = 0.0;
  std::array<double, 3> counts{};
  double log_r = 0.0;
  double log_1mr = 0.0;
  /// Normalising term free of eta and phi (log 1/y!, log C(m, y), ...).
  double constant = 0.0;
  bool active = true;
};

PreparedTarget prepare_target(Family family, const ObservationTarget& target);

/// Part of the log-likelihood that depends on eta (it may also depend on
/// phi). `eta` has num_categories(family) entries.
double eta_log_likelihood(Family family, const PreparedTarget& target, const double* eta,
                          double dispersion);
/// Part that depends on phi only (zero for families without dispersion).
double dispersion_log_likelihood(Family family, const PreparedTarget& target,
                                 double dispersion);

/// Full log-likelihood as a function of eta.
double log_likelihood_eta(Family family, const ObservationTarget& target,
                          std::span<const double> eta, double dispersion);

/// d log-likelihood / d eta_q for each category.
void gradient_eta(Family family, const ObservationTarget& target,
                  std::span<const double> eta, double dispersion, std::span<double> out);

/// d log-likelihood / d phi (negative binomial and Beta).
double gradient_dispersion(Family family, const ObservationTarget& target,
                           std::span<const double> eta, double dispersion);

// ------------------------------------------------------ predictive pieces

/// P(Y < y) and P(Y = y) for discrete families; (F(r), 0) for continuous
/// ones. Multinomial uses the unemployed margin, Binomial(n, P2).
struct PitPieces {
  double below = 0.0;
  double at = 0.0;
};
PitPieces pit_pieces(Family family, const ObservationTarget& target,
                     std::span<const double> mean, double dispersion);

/// Mean parameters (size num outputs: 1, or 3 multinomial probabilities)
/// from eta.
void mean_from_eta(Family family, std::span<const double> eta, double dispersion,
                   std::span<double> mean);

/// Size parameters for sampling: trials m (Binomial, Beta rounding is not
/// applied) or total n (Multinomial); ignored by the other families.
ObservationTarget sample_observation(Family family, std::span<const double> mean,
                                     double dispersion, std::int64_t size, Rng& rng);

/// -2 * sum of log-likelihoods; +inf if any term is -inf.
double deviance_from_log_likelihoods(std::span<const double> log_likelihoods);

}  // namespace saeb
