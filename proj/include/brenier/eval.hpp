#pragma once

#include "brenier/data.hpp"
#include "brenier/networks.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace brenier {

/// Isotropic Gaussian KDE, normalized; one value per column of `query`.
Vector kde_density(const SampleSet& samples, double bandwidth,
                   const Matrix& query);

/// Values on a regular 2-D grid of cell midpoints; values(i, j) is the
/// density at (x0 + (i + 1/2) dx, y0 + (j + 1/2) dy).
struct DensityGrid {
  double x0 = 0.0, y0 = 0.0;
  double dx = 1.0, dy = 1.0;
  Matrix values;

  Vector point(Eigen::Index i, Eigen::Index j) const;
  /// nx x ny grid over [lo, hi]^2 filled by `fill` (d x n -> n values).
  template <class F>
  static DensityGrid build(double lo, double hi, int n, F&& fill);
};

template <class F>
DensityGrid DensityGrid::build(double lo, double hi, int n, F&& fill) {
  DensityGrid g;
  g.x0 = g.y0 = lo;
  g.dx = g.dy = (hi - lo) / n;
  Matrix pts(2, static_cast<Eigen::Index>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      pts.col(static_cast<Eigen::Index>(i) * n + j) = g.point(i, j);
    }
  }
  const Vector v = fill(pts);
  g.values.resize(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      g.values(i, j) = v(static_cast<Eigen::Index>(i) * n + j);
    }
  }
  return g;
}

constexpr double kModeThresholdFraction = 0.2;
constexpr double kModeMinSeparation = 0.1;

/// Local maxima above `threshold_fraction` of the global max, greedily
/// suppressed within `min_separation` of a stronger peak. Strongest first.
std::vector<Vector> detect_modes(const DensityGrid& grid,
                                 double min_separation = kModeMinSeparation,
                                 double threshold_fraction =
                                     kModeThresholdFraction);

struct JsEstimate {
  double value = 0.0;           // at bandwidth h
  double value_double_h = 0.0;  // at 2h, for sensitivity
};

/// KDE both sets and integrate the JS divergence on a grid covering both
/// sample clouds padded by 4 bandwidths; d <= 2.
JsEstimate js_from_samples(const SampleSet& a, const SampleSet& b,
                           double bandwidth, int grid);

struct Balance {
  double mean_real = 0.0;
  double mean_fake = 0.0;
};
Balance discriminator_balance(const DiscriminatorNet& disc,
                              const SampleSet& real, const SampleSet& fake);

constexpr double kLogFloor = 1e-10;

/// Named columns of a CSV file with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(const std::string& name) const;
};
CsvTable read_csv(const std::filesystem::path& path);

/// The `penalty` series with exact zeros replaced by 1e-10.
std::vector<double> convexity_history(const std::filesystem::path& metrics_csv);
std::vector<double> floor_zeros(std::vector<double> series,
                                double floor = kLogFloor);

/// Writes `metric,value` rows.
void write_eval_csv(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, double>>& rows);

}  // namespace brenier
