#include "saeb/likelihoods.hpp"

#include <algorithm>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <numbers>

#include "saeb/errors.hpp"

namespace saeb {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double xlogy(double x, double y) {
  if (x == 0.0) return 0.0;
  return x * std::log(y);
}

double digamma(double x) { return boost::math::digamma(x); }

template <class T>
const T& payload(Family family, const ObservationTarget& target) {
  const T* p = std::get_if<T>(&target);
  if (!p)
    throw SpecError("observation target does not match family " +
                    std::string(to_string(family)));
  return *p;
}

}  // namespace

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return kNegInf;
  const double top = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(top)) return top;
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_target(Family family, const ObservationTarget& target) {
  switch (family) {
    case Family::Poisson:
    case Family::NegativeBinomial:
      payload<CountTarget>(family, target);
      break;
    case Family::Binomial:
      payload<BinomialTarget>(family, target);
      break;
    case Family::Beta:
      payload<RateTarget>(family, target);
      break;
    case Family::Multinomial:
      payload<CategoryTarget>(family, target);
      break;
    case Family::Gaussian:
      payload<GaussianTarget>(family, target);
      break;
  }
}

// ------------------------------------------------------- natural scale

double poisson_log_pmf(std::int64_t y, double mu) {
  if (y < 0 || !(mu >= 0.0)) return kNegInf;
  const double yd = static_cast<double>(y);
  if (mu == 0.0) return y == 0 ? 0.0 : kNegInf;
  return yd * std::log(mu) - mu - log_gamma(yd + 1);
}

double negbin_log_pmf(std::int64_t y, double mu, double phi) {
  if (y < 0 || !(mu >= 0.0) || !(phi > 0.0)) return kNegInf;
  const double yd = static_cast<double>(y);
  if (mu == 0.0) return y == 0 ? 0.0 : kNegInf;
  return log_gamma(yd + phi) - log_gamma(phi) - log_gamma(yd + 1) +
         yd * std::log(mu / (mu + phi)) + phi * std::log(phi / (mu + phi));
}

double binomial_log_pmf(std::int64_t y, std::int64_t m, double p) {
  if (y < 0 || m < 0 || y > m || !(p >= 0.0 && p <= 1.0)) return kNegInf;
  const double yd = static_cast<double>(y);
  const double md = static_cast<double>(m);
  const double v = log_choose(md, yd) + xlogy(yd, p) + xlogy(md - yd, 1.0 - p);
  return std::isnan(v) ? kNegInf : v;
}

double beta_log_pdf(double r, double mu, double phi) {
  if (!(r > 0.0 && r < 1.0) || !(mu > 0.0 && mu < 1.0) || !(phi > 0.0)) return kNegInf;
  const double a = mu * phi;
  const double b = (1.0 - mu) * phi;
  return log_gamma(phi) - log_gamma(a) - log_gamma(b) + (a - 1.0) * std::log(r) +
         (b - 1.0) * std::log1p(-r);
}

double multinomial_log_pmf(const std::array<std::int64_t, 3>& y,
                           const std::array<double, 3>& p) {
  double n = 0.0;
  double v = 0.0;
  for (int q = 0; q < 3; ++q) {
    if (y[q] < 0 || !(p[q] >= 0.0 && p[q] <= 1.0)) return kNegInf;
    const double yq = static_cast<double>(y[q]);
    n += yq;
    v += xlogy(yq, p[q]) - log_gamma(yq + 1);
  }
  v += log_gamma(n + 1);
  return std::isnan(v) ? kNegInf : v;
}

double gaussian_log_pdf(double y, double mean, double variance) {
  if (!(variance > 0.0)) return kNegInf;
  const double d = y - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * variance) - 0.5 * d * d / variance;
}

double log_likelihood(Family family, const ObservationTarget& target,
                      std::span<const double> mean, double dispersion) {
  switch (family) {
    case Family::Poisson:
      return poisson_log_pmf(payload<CountTarget>(family, target).y, mean[0]);
    case Family::NegativeBinomial:
      return negbin_log_pmf(payload<CountTarget>(family, target).y, mean[0], dispersion);
    case Family::Binomial: {
      const auto& t = payload<BinomialTarget>(family, target);
      return binomial_log_pmf(t.y, t.trials, mean[0]);
    }
    case Family::Beta:
      return beta_log_pdf(payload<RateTarget>(family, target).r, mean[0], dispersion);
    case Family::Multinomial:
      return multinomial_log_pmf(payload<CategoryTarget>(family, target).y,
                                 {mean[0], mean[1], mean[2]});
    case Family::Gaussian:
      return gaussian_log_pdf(payload<GaussianTarget>(family, target).y, mean[0], dispersion);
  }
  return kNegInf;
}

// --------------------------------------------------- linear predictor scale

PreparedTarget prepare_target(Family family, const ObservationTarget& target) {
  PreparedTarget p;
  switch (family) {
    case Family::Poisson:
    case Family::NegativeBinomial: {
      const auto& t = payload<CountTarget>(family, target);
      p.y = static_cast<double>(t.y);
      p.constant = t.y < 0 ? kNegInf : -log_gamma(p.y + 1);
      break;
    }
    case Family::Binomial: {
      const auto& t = payload<BinomialTarget>(family, target);
      p.y = static_cast<double>(t.y);
      p.trials = static_cast<double>(t.trials);
      p.constant =
          (t.y < 0 || t.y > t.trials) ? kNegInf : log_choose(p.trials, p.y);
      break;
    }
    case Family::Beta: {
      const auto& t = payload<RateTarget>(family, target);
      if (t.r > 0.0 && t.r < 1.0) {
        p.y = t.r;
        p.log_r = std::log(t.r);
        p.log_1mr = std::log1p(-t.r);
        p.constant = -p.log_r - p.log_1mr;
      } else {
        p.constant = kNegInf;
      }
      break;
    }
    case Family::Multinomial: {
      const auto& t = payload<CategoryTarget>(family, target);
      double n = 0.0;
      double c = 0.0;
      for (int q = 0; q < 3; ++q) {
        p.counts[q] = static_cast<double>(t.y[q]);
        if (t.y[q] < 0) c = kNegInf;
        n += p.counts[q];
        c -= log_gamma(p.counts[q] + 1);
      }
      p.trials = n;
      p.constant = c + log_gamma(n + 1);
      break;
    }
    case Family::Gaussian:
      p.y = payload<GaussianTarget>(family, target).y;
      break;
  }
  return p;
}

double eta_log_likelihood(Family family, const PreparedTarget& t, const double* eta,
                          double dispersion) {
  switch (family) {
    case Family::Poisson:
      return t.y * eta[0] - std::exp(eta[0]);
    case Family::NegativeBinomial:
      if (!(eta[0] < 0.0)) return kNegInf;
      return t.y * eta[0] + dispersion * std::log(-std::expm1(eta[0]));
    case Family::Binomial:
      return t.y * eta[0] - t.trials * log1pexp(eta[0]);
    case Family::Beta: {
      const double mu = logistic(eta[0]);
      const double a = mu * dispersion;
      const double b = (1.0 - mu) * dispersion;
      if (!(a > 0.0 && b > 0.0)) return kNegInf;
      return -log_gamma(a) - log_gamma(b) + a * (t.log_r - t.log_1mr);
    }
    case Family::Multinomial: {
      const double top = std::max({eta[0], eta[1], 0.0});
      const double log_z =
          top + std::log(std::exp(eta[0] - top) + std::exp(eta[1] - top) + std::exp(-top));
      return t.counts[0] * eta[0] + t.counts[1] * eta[1] - t.trials * log_z;
    }
    case Family::Gaussian: {
      const double d = t.y - eta[0];
      return -0.5 * d * d / dispersion;
    }
  }
  return kNegInf;
}

double dispersion_log_likelihood(Family family, const PreparedTarget& t, double dispersion) {
  switch (family) {
    case Family::NegativeBinomial:
      return log_gamma(t.y + dispersion) - log_gamma(dispersion);
    case Family::Beta:
      return log_gamma(dispersion) + dispersion * t.log_1mr;
    case Family::Gaussian:
      return -0.5 * std::log(2.0 * std::numbers::pi * dispersion);
    default:
      return 0.0;
  }
}

double log_likelihood_eta(Family family, const ObservationTarget& target,
                          std::span<const double> eta, double dispersion) {
  const PreparedTarget t = prepare_target(family, target);
  if (has_dispersion(family) && !(dispersion > 0.0)) return kNegInf;
  const double v = eta_log_likelihood(family, t, eta.data(), dispersion) +
                   dispersion_log_likelihood(family, t, dispersion) + t.constant;
  return std::isnan(v) ? kNegInf : v;
}

void gradient_eta(Family family, const ObservationTarget& target,
                  std::span<const double> eta, double dispersion, std::span<double> out) {
  const PreparedTarget t = prepare_target(family, target);
  switch (family) {
    case Family::Poisson:
      out[0] = t.y - std::exp(eta[0]);
      break;
    case Family::NegativeBinomial:
      // y - mu with mu = phi e^eta / (1 - e^eta)
      out[0] = t.y - dispersion / std::expm1(-eta[0]);
      break;
    case Family::Binomial:
      out[0] = t.y - t.trials * logistic(eta[0]);
      break;
    case Family::Beta: {
      const double mu = logistic(eta[0]);
      const double a = mu * dispersion;
      const double b = (1.0 - mu) * dispersion;
      out[0] = dispersion * mu * (1.0 - mu) *
               (t.log_r - t.log_1mr - digamma(a) + digamma(b));
      break;
    }
    case Family::Multinomial: {
      const auto p = multinomial_probabilities(eta[0], eta[1]);
      out[0] = t.counts[0] - t.trials * p[0];
      out[1] = t.counts[1] - t.trials * p[1];
      break;
    }
    case Family::Gaussian:
      out[0] = (t.y - eta[0]) / dispersion;
      break;
  }
}

double gradient_dispersion(Family family, const ObservationTarget& target,
                           std::span<const double> eta, double dispersion) {
  const PreparedTarget t = prepare_target(family, target);
  switch (family) {
    case Family::NegativeBinomial:
      return digamma(t.y + dispersion) - digamma(dispersion) + std::log(-std::expm1(eta[0]));
    case Family::Beta: {
      const double mu = logistic(eta[0]);
      return digamma(dispersion) - mu * digamma(mu * dispersion) -
             (1.0 - mu) * digamma((1.0 - mu) * dispersion) + mu * t.log_r +
             (1.0 - mu) * t.log_1mr;
    }
    case Family::Gaussian:
      return -0.5 / dispersion + 0.5 * (t.y - eta[0]) * (t.y - eta[0]) /
                                     (dispersion * dispersion);
    default:
      return 0.0;
  }
}

// ------------------------------------------------------ predictive pieces

namespace {

PitPieces binomial_pieces(std::int64_t y, std::int64_t m, double p) {
  PitPieces out;
  out.at = std::exp(binomial_log_pmf(y, m, p));
  if (y <= 0) return out;
  if (y > m) {
    out.below = 1.0;
    return out;
  }
  if (p <= 0.0) {
    out.below = 1.0;
  } else if (p >= 1.0) {
    out.below = 0.0;
  } else {
    // P(Y <= y - 1) = I_{1-p}(m - y + 1, y)
    out.below = boost::math::ibeta(static_cast<double>(m - y + 1), static_cast<double>(y),
                                   1.0 - p);
  }
  return out;
}

}  // namespace

PitPieces pit_pieces(Family family, const ObservationTarget& target,
                     std::span<const double> mean, double dispersion) {
  PitPieces out;
  switch (family) {
    case Family::Poisson: {
      const auto y = payload<CountTarget>(family, target).y;
      out.at = std::exp(poisson_log_pmf(y, mean[0]));
      if (y > 0)
        out.below = mean[0] > 0.0 ? boost::math::gamma_q(static_cast<double>(y), mean[0]) : 1.0;
      break;
    }
    case Family::NegativeBinomial: {
      const auto y = payload<CountTarget>(family, target).y;
      out.at = std::exp(negbin_log_pmf(y, mean[0], dispersion));
      if (y > 0) {
        const double prob = dispersion / (mean[0] + dispersion);
        out.below = mean[0] > 0.0
                        ? boost::math::ibeta(dispersion, static_cast<double>(y), prob)
                        : 1.0;
      }
      break;
    }
    case Family::Binomial: {
      const auto& t = payload<BinomialTarget>(family, target);
      out = binomial_pieces(t.y, t.trials, mean[0]);
      break;
    }
    case Family::Beta: {
      const double r = payload<RateTarget>(family, target).r;
      if (r <= 0.0) {
        out.below = 0.0;
      } else if (r >= 1.0) {
        out.below = 1.0;
      } else {
        out.below = boost::math::ibeta(mean[0] * dispersion, (1.0 - mean[0]) * dispersion, r);
      }
      break;
    }
    case Family::Multinomial: {
      const auto& t = payload<CategoryTarget>(family, target);
      out = binomial_pieces(t.y[1], t.total(), mean[1]);
      break;
    }
    case Family::Gaussian: {
      const double y = payload<GaussianTarget>(family, target).y;
      out.below = 0.5 * std::erfc(-(y - mean[0]) / std::sqrt(2.0 * dispersion));
      break;
    }
  }
  return out;
}

void mean_from_eta(Family family, std::span<const double> eta, double dispersion,
                   std::span<double> mean) {
  if (family == Family::Multinomial) {
    const auto p = multinomial_probabilities(eta[0], eta[1]);
    std::copy(p.begin(), p.end(), mean.begin());
    return;
  }
  mean[0] = link_apply(family, eta[0], dispersion);
}

ObservationTarget sample_observation(Family family, std::span<const double> mean,
                                     double dispersion, std::int64_t size, Rng& rng) {
  switch (family) {
    case Family::Poisson: {
      if (!(mean[0] > 0.0)) return CountTarget{0};
      return CountTarget{std::poisson_distribution<std::int64_t>(mean[0])(rng)};
    }
    case Family::NegativeBinomial: {
      if (!(mean[0] > 0.0)) return CountTarget{0};
      const double lambda =
          std::gamma_distribution<double>(dispersion, mean[0] / dispersion)(rng);
      if (!(lambda > 0.0)) return CountTarget{0};
      return CountTarget{std::poisson_distribution<std::int64_t>(lambda)(rng)};
    }
    case Family::Binomial: {
      const double p = std::clamp(mean[0], 0.0, 1.0);
      return BinomialTarget{std::binomial_distribution<std::int64_t>(size, p)(rng), size};
    }
    case Family::Beta: {
      const double a = std::gamma_distribution<double>(mean[0] * dispersion, 1.0)(rng);
      const double b = std::gamma_distribution<double>((1.0 - mean[0]) * dispersion, 1.0)(rng);
      double r = a / (a + b);
      if (!(r > 0.0)) r = std::numeric_limits<double>::min();
      if (!(r < 1.0)) r = std::nextafter(1.0, 0.0);
      return RateTarget{r};
    }
    case Family::Multinomial: {
      CategoryTarget t;
      std::int64_t left = size;
      double mass = 1.0;
      for (int q = 0; q < 2; ++q) {
        const double p = mass > 0.0 ? std::clamp(mean[q] / mass, 0.0, 1.0) : 0.0;
        t.y[q] = left > 0 ? std::binomial_distribution<std::int64_t>(left, p)(rng) : 0;
        left -= t.y[q];
        mass -= mean[q];
      }
      t.y[2] = left;
      return t;
    }
    case Family::Gaussian:
      return GaussianTarget{mean[0] + std::sqrt(dispersion) * standard_normal(rng)};
  }
  return CountTarget{0};
}

double deviance_from_log_likelihoods(std::span<const double> log_likelihoods) {
  double s = 0.0;
  for (double v : log_likelihoods) {
    if (!(v > kNegInf)) return std::numeric_limits<double>::infinity();
    s += v;
  }
  return -2.0 * s;
}

}  // namespace saeb
