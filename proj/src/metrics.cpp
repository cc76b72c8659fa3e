#include "auxcal/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <memory>
#include <mutex>
#include <numeric>
#include <ostream>

#include <fftw3.h>

#include "auxcal/error.hpp"
#include "auxcal/parallel.hpp"
#include "auxcal/random.hpp"

namespace auxcal {

void validate_series(const ConfidenceSeries& s) {
  if (s.confidences.empty()) throw PreconditionError("confidence series is empty");
  if (s.confidences.size() != s.correct.size()) {
    throw PreconditionError("confidences and correctness differ in length");
  }
  for (double p : s.confidences) {
    if (!(p >= 0.0 && p <= 1.0)) throw PreconditionError("confidence outside [0,1]");
  }
}

std::size_t bin_index(double p, std::size_t n_bins) {
  const double m = static_cast<double>(n_bins);
  std::size_t b = std::min(static_cast<std::size_t>(std::floor(p * m)), n_bins - 1);
  // p * M can round across an edge; settle against the edges themselves.
  if (b > 0 && p < static_cast<double>(b) / m) {
    --b;
  } else if (b + 1 < n_bins && p >= static_cast<double>(b + 1) / m) {
    ++b;
  }
  return b;
}

std::vector<BinSummary> reliability_table(const ConfidenceSeries& s, std::size_t n_bins) {
  validate_series(s);
  if (n_bins < 1) throw PreconditionError("n_bins must be at least 1");
  std::vector<BinSummary> bins(n_bins);
  std::vector<double> hits(n_bins, 0.0), conf(n_bins, 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::size_t b = bin_index(s.confidences[i], n_bins);
    ++bins[b].count;
    hits[b] += s.correct[i] ? 1.0 : 0.0;
    conf[b] += s.confidences[i];
  }
  const double n = static_cast<double>(s.size());
  for (std::size_t b = 0; b < n_bins; ++b) {
    auto& bin = bins[b];
    bin.index = b;
    bin.lower = static_cast<double>(b) / static_cast<double>(n_bins);
    bin.upper = static_cast<double>(b + 1) / static_cast<double>(n_bins);
    if (bin.count > 0) {
      bin.accuracy = hits[b] / static_cast<double>(bin.count);
      bin.mean_confidence = conf[b] / static_cast<double>(bin.count);
      bin.proportion = static_cast<double>(bin.count) / n;
    }
  }
  return bins;
}

double compute_ece(const ConfidenceSeries& s, std::size_t n_bins) {
  if (n_bins < 1) throw PreconditionError("n_bins must be at least 1");
  double ece = 0.0;
  for (const auto& bin : reliability_table(s, n_bins)) {
    if (bin.count == 0) continue;
    ece += bin.proportion * std::abs(bin.accuracy - bin.mean_confidence);
  }
  return ece;
}

double compute_brier(const ConfidenceSeries& s) {
  validate_series(s);
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = s.confidences[i] - (s.correct[i] ? 1.0 : 0.0);
    total += d * d;
  }
  return total / static_cast<double>(s.size());
}

double compute_auroc(const ConfidenceSeries& s) {
  validate_series(s);
  const std::size_t n = s.size();
  const std::size_t n_pos = static_cast<std::size_t>(std::count(s.correct.begin(), s.correct.end(), true));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw PreconditionError("AUROC needs both correct and incorrect examples");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return s.confidences[a] < s.confidences[b]; });
  // Mann-Whitney U with mid-ranks for ties.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && s.confidences[order[j]] == s.confidences[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (s.correct[order[k]]) rank_sum += mid_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

namespace {

std::mutex& fftw_planner_mutex() {
  static std::mutex mu;
  return mu;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    real_.reset(static_cast<double*>(fftw_malloc(sizeof(double) * n)));
    spectrum_.reset(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1))));
    std::lock_guard lock(fftw_planner_mutex());
    const int len = static_cast<int>(n);
    forward_ = fftw_plan_dft_r2c_1d(len, real_.get(), spectrum_.get(), FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r_1d(len, spectrum_.get(), real_.get(), FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  double* real() { return real_.get(); }
  fftw_complex* spectrum() { return spectrum_.get(); }
  void forward() { fftw_execute(forward_); }
  // Unnormalized: the result is scaled by size().
  void backward() { fftw_execute(backward_); }

 private:
  std::size_t n_;
  FftwBuffer<double> real_;
  FftwBuffer<fftw_complex> spectrum_;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

// The reflected kernel on [0,1] equals a period-2 Gaussian acting on the
// residual measure mirrored onto [-1,1). Both live on a circular grid of
// 2(G-1) nodes with spacing 1/(G-1), so smoothing is one circular
// convolution and the integral over [0,1] is half the total over the
// circle.
class SmoothedResidual {
 public:
  SmoothedResidual(const ConfidenceSeries& s, std::size_t grid_size)
      : grid_(grid_size), circle_(2 * (grid_size - 1)), fft_(circle_),
        residual_spectrum_(circle_ / 2 + 1) {
    const double step = 1.0 / static_cast<double>(grid_ - 1);
    std::vector<double> mass(circle_, 0.0);
    const double w = 1.0 / static_cast<double>(s.size());
    auto deposit = [&](double u, double r) {
      const double base = std::floor(u);
      const double frac = u - base;
      const auto i0 = static_cast<std::size_t>(base) % circle_;
      mass[i0] += r * (1.0 - frac);
      mass[(i0 + 1) % circle_] += r * frac;
    };
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double p = s.confidences[i];
      const double r = w * ((s.correct[i] ? 1.0 : 0.0) - p);
      const double u = p / step;
      deposit(u, r);
      deposit(static_cast<double>(circle_) - u, r);
    }
    std::copy(mass.begin(), mass.end(), fft_.real());
    fft_.forward();
    for (std::size_t k = 0; k < residual_spectrum_.size(); ++k) {
      residual_spectrum_[k] = {fft_.spectrum()[k][0], fft_.spectrum()[k][1]};
    }
  }

  double integral(double sigma) {
    const double step = 1.0 / static_cast<double>(grid_ - 1);
    std::vector<double> kernel(circle_);
    double total = 0.0;
    for (std::size_t m = 0; m < circle_; ++m) {
      const double d = static_cast<double>(std::min(m, circle_ - m)) * step;
      double k = 0.0;
      // Period is 2; images beyond +-3 periods are below double precision
      // for sigma <= 1.
      for (int j = -3; j <= 3; ++j) {
        const double x = d + 2.0 * j;
        k += std::exp(-0.5 * (x * x) / (sigma * sigma));
      }
      kernel[m] = k;
      total += k;
    }
    for (std::size_t m = 0; m < circle_; ++m) fft_.real()[m] = kernel[m] / total;
    fft_.forward();
    for (std::size_t k = 0; k < residual_spectrum_.size(); ++k) {
      const double a = residual_spectrum_[k][0], b = residual_spectrum_[k][1];
      const double c = fft_.spectrum()[k][0], d = fft_.spectrum()[k][1];
      fft_.spectrum()[k][0] = a * c - b * d;
      fft_.spectrum()[k][1] = a * d + b * c;
    }
    fft_.backward();
    double sum = 0.0;
    for (std::size_t m = 0; m < circle_; ++m) sum += std::abs(fft_.real()[m]);
    return 0.5 * sum / static_cast<double>(circle_);
  }

 private:
  std::size_t grid_;
  std::size_t circle_;
  RealFft fft_;
  std::vector<std::array<double, 2>> residual_spectrum_;
};

}  // namespace

double smece_at_bandwidth(const ConfidenceSeries& s, double sigma, std::size_t grid_size) {
  validate_series(s);
  if (grid_size < 2) throw PreconditionError("grid_size must be at least 2");
  if (!(sigma > 0.0)) throw PreconditionError("bandwidth must be positive");
  SmoothedResidual smoothed(s, grid_size);
  return smoothed.integral(sigma);
}

double compute_smece(const ConfidenceSeries& s, const SmeceOptions& options) {
  validate_series(s);
  if (options.grid_size < 2) throw PreconditionError("grid_size must be at least 2");
  SmoothedResidual smoothed(s, options.grid_size);
  double lo = 1.0 / static_cast<double>(options.grid_size);
  double hi = 1.0;
  const double at_lo = smoothed.integral(lo);
  if (at_lo - lo <= 0.0) return at_lo;
  const double at_hi = smoothed.integral(hi);
  if (at_hi - hi >= 0.0) return at_hi;
  double value = at_lo;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    value = smoothed.integral(mid);
    const double gap = value - mid;
    if (std::abs(gap) <= options.tol) break;
    (gap > 0.0 ? lo : hi) = mid;
  }
  return value;
}

MetricFn metric_function(Metric metric) {
  switch (metric) {
    case Metric::brier: return [](const ConfidenceSeries& s) { return compute_brier(s); };
    case Metric::ece: return [](const ConfidenceSeries& s) { return compute_ece(s); };
    case Metric::smece: return [](const ConfidenceSeries& s) { return compute_smece(s); };
    case Metric::auroc: return [](const ConfidenceSeries& s) { return compute_auroc(s); };
  }
  throw PreconditionError("unknown metric");
}

const char* to_string(Metric metric) {
  switch (metric) {
    case Metric::brier: return "brier";
    case Metric::ece: return "ece";
    case Metric::smece: return "smece";
    case Metric::auroc: return "auroc";
  }
  return "?";
}

namespace {

ConfidenceSeries resample(const ConfidenceSeries& s, std::span<const std::size_t> idx) {
  ConfidenceSeries out;
  out.label = s.label;
  out.confidences.reserve(idx.size());
  out.correct.reserve(idx.size());
  for (std::size_t i : idx) {
    out.confidences.push_back(s.confidences[i]);
    out.correct.push_back(s.correct[i]);
  }
  return out;
}

std::vector<std::size_t> draw_indices(std::size_t n, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

}  // namespace

Estimate bootstrap_se(const MetricFn& metric, const ConfidenceSeries& s, const BootstrapOptions& o) {
  validate_series(s);
  Estimate est;
  est.value = metric(s);
  if (o.n_resamples < 2) return est;

  std::vector<double> values(o.n_resamples);
  parallel_for(o.n_resamples, o.workers, [&](std::size_t r) {
    Rng rng(derive_seed(o.seed, r));
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt > o.max_redraws) {
        throw PreconditionError("bootstrap redraw budget exhausted for resample " + std::to_string(r));
      }
      try {
        values[r] = metric(resample(s, draw_indices(s.size(), rng)));
        return;
      } catch (const PreconditionError&) {
      }
    }
  });
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  est.se = std::sqrt(var / static_cast<double>(values.size() - 1));
  return est;
}

double paired_bootstrap_pvalue(const ConfidenceSeries& a, const ConfidenceSeries& b, const MetricFn& metric,
                               Better better, std::size_t n_resamples, std::uint64_t seed) {
  validate_series(a);
  validate_series(b);
  if (a.size() != b.size() || a.correct != b.correct) {
    throw PreconditionError("paired series must be aligned on the same records");
  }
  if (n_resamples == 0) throw PreconditionError("n_resamples must be positive");
  double not_better = 0.0;
  std::size_t done = 0;
  Rng rng(seed);
  std::size_t attempts = 0;
  while (done < n_resamples) {
    if (attempts++ > 100 * n_resamples) throw PreconditionError("paired bootstrap redraw budget exhausted");
    const auto idx = draw_indices(a.size(), rng);
    double ma = 0.0, mb = 0.0;
    try {
      ma = metric(resample(a, idx));
      mb = metric(resample(b, idx));
    } catch (const PreconditionError&) {
      continue;
    }
    const double delta = better == Better::lower ? mb - ma : ma - mb;
    if (delta < 0.0) {
      not_better += 1.0;
    } else if (delta == 0.0) {
      not_better += 0.5;
    }
    ++done;
  }
  return not_better / static_cast<double>(n_resamples);
}

MethodReport evaluate_series(const ConfidenceSeries& s, const ReportOptions& o, std::optional<double> success,
                             std::size_t excluded) {
  validate_series(s);
  MethodReport row;
  row.method = s.label;
  row.n = s.size();
  row.excluded = excluded;
  row.success = success;
  const std::size_t bins = o.n_bins;
  const SmeceOptions sm = o.smece;
  row.brier = bootstrap_se(metric_function(Metric::brier), s, o.bootstrap);
  row.ece = bootstrap_se([bins](const ConfidenceSeries& x) { return compute_ece(x, bins); }, s, o.bootstrap);
  row.smece = bootstrap_se([sm](const ConfidenceSeries& x) { return compute_smece(x, sm); }, s, o.bootstrap);
  const bool both = std::find(s.correct.begin(), s.correct.end(), true) != s.correct.end() &&
                    std::find(s.correct.begin(), s.correct.end(), false) != s.correct.end();
  if (both) row.auroc = bootstrap_se(metric_function(Metric::auroc), s, o.bootstrap);
  return row;
}

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void write_metric_csv(std::ostream& out, std::span<const MethodReport> rows) {
  out << "method,n,excluded,success,brier,brier_se,ece,ece_se,smece,smece_se,auroc,auroc_se\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.n << ',' << r.excluded << ',' << (r.success ? fixed(*r.success) : "") << ','
        << fixed(r.brier.value) << ',' << fixed(r.brier.se) << ',' << fixed(r.ece.value) << ','
        << fixed(r.ece.se) << ',' << fixed(r.smece.value) << ',' << fixed(r.smece.se) << ','
        << (r.auroc ? fixed(r.auroc->value) : "") << ',' << (r.auroc ? fixed(r.auroc->se) : "") << '\n';
  }
}

}  // namespace auxcal
