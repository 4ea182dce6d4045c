#include "saeb/latent_field.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <numeric>

#include "saeb/errors.hpp"

namespace saeb {

namespace {

double log_norm(double tau) { return std::log(tau / (2.0 * std::numbers::pi)); }

}  // namespace

double icar_quadratic_form(std::span<const double> w, const RegionGraph& graph) {
  double q = 0.0;
  for (const auto& [i, k] : graph.edges()) {
    const double d = w[static_cast<std::size_t>(i)] - w[static_cast<std::size_t>(k)];
    q += d * d;
  }
  return q;
}

double rw1_quadratic_form(std::span<const double> w) {
  double q = 0.0;
  for (std::size_t t = 1; t < w.size(); ++t) {
    const double d = w[t] - w[t - 1];
    q += d * d;
  }
  return q;
}

double icar_logdensity(std::span<const double> w, double tau, const RegionGraph& graph) {
  if (w.size() != static_cast<std::size_t>(graph.num_regions()))
    throw SpecError("icar vector length does not match the graph");
  const double rank = graph.num_regions() - 1.0;
  return 0.5 * rank * log_norm(tau) - 0.5 * tau * icar_quadratic_form(w, graph);
}

double rw1_logdensity(std::span<const double> w, double tau) {
  if (w.size() < 2) throw SpecError("random walk needs at least two time points");
  const double rank = static_cast<double>(w.size()) - 1.0;
  return 0.5 * rank * log_norm(tau) - 0.5 * tau * rw1_quadratic_form(w);
}

double ar1_logdensity(std::span<const double> w, double tau, double rho) {
  if (w.empty()) return 0.0;
  const double n = static_cast<double>(w.size());
  double q = (1.0 - rho * rho) * w[0] * w[0];
  for (std::size_t t = 1; t < w.size(); ++t) {
    const double d = w[t] - rho * w[t - 1];
    q += d * d;
  }
  return 0.5 * n * log_norm(tau) + 0.5 * std::log1p(-rho * rho) - 0.5 * tau * q;
}

double iid_logdensity(std::span<const double> x, double tau) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  return 0.5 * static_cast<double>(x.size()) * log_norm(tau) - 0.5 * tau * ss;
}

std::vector<double> icar_gradient(std::span<const double> w, double tau,
                                  const RegionGraph& graph) {
  std::vector<double> g(w.size(), 0.0);
  for (const auto& [i, k] : graph.edges()) {
    const auto a = static_cast<std::size_t>(i);
    const auto b = static_cast<std::size_t>(k);
    const double d = tau * (w[a] - w[b]);
    g[a] -= d;
    g[b] += d;
  }
  return g;
}

std::vector<double> rw1_gradient(std::span<const double> w, double tau) {
  std::vector<double> g(w.size(), 0.0);
  for (std::size_t t = 1; t < w.size(); ++t) {
    const double d = tau * (w[t] - w[t - 1]);
    g[t] -= d;
    g[t - 1] += d;
  }
  return g;
}

std::vector<double> ar1_gradient(std::span<const double> w, double tau, double rho) {
  std::vector<double> g(w.size(), 0.0);
  if (w.empty()) return g;
  g[0] = -tau * (1.0 - rho * rho) * w[0];
  for (std::size_t t = 1; t < w.size(); ++t) {
    const double d = tau * (w[t] - rho * w[t - 1]);
    g[t] -= d;
    g[t - 1] += rho * d;
  }
  return g;
}

std::vector<double> iid_gradient(std::span<const double> x, double tau) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = -tau * x[i];
  return g;
}

std::vector<double> center(std::span<const double> w) {
  std::vector<double> out(w.begin(), w.end());
  center_in_place(out);
  return out;
}

void center_in_place(std::span<double> w) {
  if (w.empty()) return;
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  for (double& v : w) v -= mean;
}

std::vector<double> sample_icar(const RegionGraph& graph, double tau, Rng& rng) {
  const int n = graph.num_regions();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [i, k] : graph.edges()) {
    Q(i, i) += 1.0;
    Q(k, k) += 1.0;
    Q(i, k) -= 1.0;
    Q(k, i) -= 1.0;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Q);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  // Eigenvalues ascend; the first is the constant (null) direction.
  for (int c = 1; c < n; ++c) {
    const double z = standard_normal(rng);
    w += eig.eigenvectors().col(c) * (z / std::sqrt(tau * eig.eigenvalues()(c)));
  }
  std::vector<double> out(w.data(), w.data() + n);
  center_in_place(out);
  return out;
}

std::vector<double> sample_rw1(int length, double tau, Rng& rng) {
  std::vector<double> w(static_cast<std::size_t>(length), 0.0);
  const double sd = 1.0 / std::sqrt(tau);
  for (std::size_t t = 1; t < w.size(); ++t) w[t] = w[t - 1] + sd * standard_normal(rng);
  center_in_place(w);
  return w;
}

std::vector<double> sample_ar1(int length, double tau, double rho, Rng& rng) {
  std::vector<double> w(static_cast<std::size_t>(length), 0.0);
  if (w.empty()) return w;
  const double sd = 1.0 / std::sqrt(tau);
  w[0] = sd / std::sqrt(1.0 - rho * rho) * standard_normal(rng);
  for (std::size_t t = 1; t < w.size(); ++t) w[t] = rho * w[t - 1] + sd * standard_normal(rng);
  return w;
}

std::vector<double> sample_iid(int length, double tau, Rng& rng) {
  std::vector<double> x(static_cast<std::size_t>(length));
  const double sd = 1.0 / std::sqrt(tau);
  for (double& v : x) v = sd * standard_normal(rng);
  return x;
}

}  // namespace saeb
