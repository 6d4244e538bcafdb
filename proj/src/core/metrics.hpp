#pragma once

#include <optional>
#include <span>
#include <vector>

namespace sep {

double mean(std::span<const double> v);
double sample_sd(std::span<const double> v);

// Median with the usual midpoint convention for even sizes.
double median(std::span<const double> v);

// Linear-interpolation quantile of sorted-on-demand data, q in [0, 100].
double percentile(std::span<const double> v, double q);

double rmse(std::span<const double> predicted, std::span<const double> observed);

// Product-moment correlation; nullopt when either side has zero variance.
std::optional<double> pearson(std::span<const double> a, std::span<const double> b);

// Pearson correlation of average-tied ranks.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> v);

}  // namespace sep
