#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace ergosim {

double normal_cdf(double x, double variance = 1.0);

/// Sup distance between the empirical CDF of `sample` and N(0, target_variance).
double ks_distance(std::span<const double> sample, double target_variance);

/// Asymptotic one-sample KS critical value sqrt(-ln(level/2)/2) / sqrt(n).
double ks_threshold(std::size_t n, double level = 0.01);

double mean(std::span<const double> v);
/// Unbiased sample variance.
double variance(std::span<const double> v);
double standard_error(std::span<const double> v);

/// Least-squares slope of log y against log x.
double loglog_slope(std::span<const double> x, std::span<const double> y);

/// 0 means "auto": the hardware concurrency.
unsigned resolve_threads(unsigned requested);

/// Runs body(i) for i in [0, n) on up to `threads` workers. Results must be
/// written by index; the caller reduces them in index order.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

}  // namespace ergosim
