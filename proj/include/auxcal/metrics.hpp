#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace auxcal {

struct ConfidenceSeries {
  std::vector<double> confidences;
  std::vector<bool> correct;
  std::string label;

  std::size_t size() const noexcept { return confidences.size(); }
};

// Throws PreconditionError unless the series is nonempty, aligned and every
// confidence lies in [0,1].
void validate_series(const ConfidenceSeries& series);

// Equal-width bins over [0,1]; bin m holds [m/M, (m+1)/M) except the last,
// which is closed on the right.
std::size_t bin_index(double confidence, std::size_t n_bins);

double compute_ece(const ConfidenceSeries& series, std::size_t n_bins = 10);

struct SmeceOptions {
  std::size_t grid_size = 2048;
  double tol = 1e-4;
};

// Integral over [0,1] of the absolute kernel-smoothed residual (y - p) at
// bandwidth `sigma`, with the Gaussian kernel reflected at both boundaries.
double smece_at_bandwidth(const ConfidenceSeries& series, double sigma, std::size_t grid_size = 2048);

// smECE at the self-consistent bandwidth sigma* = smECE(sigma*), located by
// bisection on [1/grid_size, 1].
double compute_smece(const ConfidenceSeries& series, const SmeceOptions& options = {});

double compute_brier(const ConfidenceSeries& series);

// Probability that a correct answer gets higher confidence than an incorrect
// one, ties counted one half. Throws PreconditionError when one class is
// absent.
double compute_auroc(const ConfidenceSeries& series);

struct BinSummary {
  std::size_t index = 0;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;
  double mean_confidence = 0.0;
  double proportion = 0.0;
};

std::vector<BinSummary> reliability_table(const ConfidenceSeries& series, std::size_t n_bins = 10);

using MetricFn = std::function<double(const ConfidenceSeries&)>;

enum class Metric { brier, ece, smece, auroc };
MetricFn metric_function(Metric metric);
const char* to_string(Metric metric);

struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

struct BootstrapOptions {
  std::size_t n_resamples = 100;
  std::uint64_t seed = 0;
  // Redraws allowed per resample when the metric rejects it (e.g. AUROC on
  // a single-class resample).
  std::size_t max_redraws = 100;
  std::size_t workers = 1;
};

// Metric on the full series plus the standard deviation of the metric over
// with-replacement resamples. Each resample has its own seed derived from
// the master seed, so the result does not depend on `workers`.
Estimate bootstrap_se(const MetricFn& metric, const ConfidenceSeries& series,
                      const BootstrapOptions& options = {});

enum class Better { lower, higher };

// One-sided p-value for "A beats B": the share of joint resamples where A
// is not better, ties counted one half.
double paired_bootstrap_pvalue(const ConfidenceSeries& a, const ConfidenceSeries& b,
                               const MetricFn& metric, Better better,
                               std::size_t n_resamples = 1000, std::uint64_t seed = 0);

// One row of the calibration results table.
struct MethodReport {
  std::string method;
  std::size_t n = 0;
  std::size_t excluded = 0;
  std::optional<double> success;
  Estimate brier;
  Estimate ece;
  Estimate smece;
  std::optional<Estimate> auroc;
};

struct ReportOptions {
  std::size_t n_bins = 10;
  SmeceOptions smece;
  BootstrapOptions bootstrap;
};

MethodReport evaluate_series(const ConfidenceSeries& series, const ReportOptions& options,
                             std::optional<double> success = std::nullopt, std::size_t excluded = 0);

void write_metric_csv(std::ostream& out, std::span<const MethodReport> rows);

}  // namespace auxcal
