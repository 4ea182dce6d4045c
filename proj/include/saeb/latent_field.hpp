#pragma once

#include <span>
#include <vector>

#include "saeb/data.hpp"
#include "saeb/numeric.hpp"

namespace saeb {

/// sum over edges (w_i - w_k)^2, i.e. w'(D - A)w.
double icar_quadratic_form(std::span<const double> w, const RegionGraph& graph);
/// sum_{t >= 1} (w_t - w_{t-1})^2.
double rw1_quadratic_form(std::span<const double> w);

/// ((J - 1) / 2) log(tau / 2 pi) - (tau / 2) w'(D - A)w for a connected graph.
double icar_logdensity(std::span<const double> w, double tau, const RegionGraph& graph);
/// ((T - 1) / 2) log(tau / 2 pi) - (tau / 2) sum (w_t - w_{t-1})^2. T < 2
/// raises SpecError.
double rw1_logdensity(std::span<const double> w, double tau);
/// Stationary AR(1) with innovation precision tau and fixed |rho| < 1:
/// w_1 ~ N(0, 1 / (tau (1 - rho^2))), w_t | w_{t-1} ~ N(rho w_{t-1}, 1 / tau).
double ar1_logdensity(std::span<const double> w, double tau, double rho);
/// sum_i [ (1/2) log(tau / 2 pi) - (tau / 2) x_i^2 ].
double iid_logdensity(std::span<const double> x, double tau);

/// Gradients with respect to the vector argument.
std::vector<double> icar_gradient(std::span<const double> w, double tau,
                                  const RegionGraph& graph);
std::vector<double> rw1_gradient(std::span<const double> w, double tau);
std::vector<double> ar1_gradient(std::span<const double> w, double tau, double rho);
std::vector<double> iid_gradient(std::span<const double> x, double tau);

/// Subtracts the mean.
std::vector<double> center(std::span<const double> w);
void center_in_place(std::span<double> w);

/// Draw from the ICAR prior restricted to the sum-to-zero subspace, via the
/// eigen-decomposition of D - A (Moore-Penrose square root).
std::vector<double> sample_icar(const RegionGraph& graph, double tau, Rng& rng);
/// RW1 draw: cumulative N(0, 1/tau) increments, then centred.
std::vector<double> sample_rw1(int length, double tau, Rng& rng);
std::vector<double> sample_ar1(int length, double tau, double rho, Rng& rng);
std::vector<double> sample_iid(int length, double tau, Rng& rng);

}  // namespace saeb
