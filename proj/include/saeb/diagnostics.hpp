#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "saeb/inference.hpp"

namespace saeb {

// ---------------------------------------------------------------- DIC

struct DicResult {
  double dic = 0.0;
  double p_d = 0.0;
  double d_bar = 0.0;
  /// Draws with non-finite deviance left out of d_bar.
  std::size_t excluded = 0;
};

/// dic = d_bar + p_d.
DicResult dic_from_parts(double d_bar, double p_d);
/// d_bar from the stored deviances, p_d = d_bar - D(posterior means).
/// More than 1% non-finite deviances raise DiagnosticsError.
DicResult dic(const PosteriorSamples& samples, const Model& model);

// ---------------------------------------------------------------- CPO / PIT

struct ObservationOptions {
  /// Randomised PIT for discrete families instead of the mid-PIT.
  bool randomized_pit = false;
  std::uint64_t pit_seed = 1;
  /// Relative Monte-Carlo error above which a CPO is flagged.
  double flag_threshold = 0.1;
};

struct ObservationDiagnostics {
  /// Harmonic-mean CPO per row, with its log; inactive rows hold NaN.
  std::vector<double> cpo;
  std::vector<double> log_cpo;
  /// Relative Monte-Carlo error of the harmonic-mean estimator.
  std::vector<double> relative_error;
  /// Unreliable estimate or a draw with zero likelihood.
  std::vector<bool> flagged;
  std::vector<double> pit;
  std::vector<bool> active;
};

/// Leave-one-out CPO and PIT from importance weights 1 / p(y_i | theta_s).
ObservationDiagnostics observation_diagnostics(const PosteriorSamples& samples,
                                               const Model& model,
                                               const ObservationOptions& options = {});

/// Beta log-CPOs are densities of the rate; dividing by m_jt gives the
/// probability scale of the count y = r m_jt, comparable with count models.
/// Other families are returned unchanged.
std::vector<double> count_scale_log_cpo(const Model& model, const std::vector<double>& log_cpo);

struct LogScore {
  double value = 0.0;
  /// Zero (or non-finite) CPOs left out.
  std::size_t excluded = 0;
};

/// -(1/N) sum log CPO over positive entries; DiagnosticsError when none is.
LogScore log_score(const std::vector<double>& cpo);
LogScore log_score_from_log(const std::vector<double>& log_cpo);

/// Kolmogorov-Smirnov distance of the values from Uniform(0, 1).
double ks_uniform(std::vector<double> values);

// ---------------------------------------------------------------- RRMSE

struct DirectEstimate {
  int region = 0;
  int quarter = 0;
  double rate = 0.0;
  double total = 0.0;
  double variance = 0.0;
  double rrmse = 0.0;
  bool missing = false;
};

/// Weighted ratio estimator per cell with the linearisation variance
/// n r (1 - r) / ((n - 1) m); missing when nobody in the cell is active.
std::vector<DirectEstimate> direct_estimate(const PanelDataset& dataset);

/// sqrt(mean((e - t)^2 / t^2)) over the paired values, excluding zero (or
/// non-finite) truths; NaN when nothing remains.
double relative_rmse(const std::vector<double>& estimates, const std::vector<double>& truth);
/// Posterior-only variant: sd / mean.
double relative_sd(double mean, double sd);

// ---------------------------------------------------------------- reports

struct ModelReportRow {
  std::string model;
  DicResult dic;
  std::optional<double> log_score;
};

void write_summary_report(const std::vector<ModelReportRow>& rows, std::ostream& out);
/// Per-observation CPO/PIT table; `cpo_available` false blanks the CPO and
/// PIT columns.
void write_observation_report(const Model& model, const ObservationDiagnostics& obs,
                              bool cpo_available, std::ostream& out);

}  // namespace saeb
