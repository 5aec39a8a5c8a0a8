#include "brenier/eval.hpp"

#include "brenier/losses.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace brenier {

Vector kde_density(const SampleSet& samples, double bandwidth,
                   const Matrix& query) {
  if (!(bandwidth > 0)) throw std::invalid_argument("kde: bandwidth must be > 0");
  if (samples.size() == 0) throw std::invalid_argument("kde: no samples");
  if (query.rows() != samples.dim()) {
    throw ad::ShapeError("kde: query dimension " + std::to_string(query.rows()) +
                         " vs samples " + std::to_string(samples.dim()));
  }
  const auto d = static_cast<double>(samples.dim());
  const double h2 = bandwidth * bandwidth;
  const double norm = 1.0 / (static_cast<double>(samples.size()) *
                             std::pow(2.0 * std::numbers::pi * h2, d / 2.0));
  const Vector sample_sq = samples.points.colwise().squaredNorm().transpose();
  Vector out(query.cols());
  // Blocked |q - s|^2 = |q|^2 + |s|^2 - 2 q.s.
  constexpr Eigen::Index kBlock = 512;
  for (Eigen::Index start = 0; start < query.cols(); start += kBlock) {
    const Eigen::Index len = std::min(kBlock, query.cols() - start);
    const auto q = query.middleCols(start, len);
    Matrix dist = -2.0 * (samples.points.transpose() * q);
    dist.colwise() += sample_sq;
    dist.rowwise() += q.colwise().squaredNorm();
    const Eigen::ArrayXXd k = (-dist.array().max(0.0) / (2.0 * h2)).exp();
    out.segment(start, len) = norm * k.colwise().sum().transpose().matrix();
  }
  return out;
}

Vector DensityGrid::point(Eigen::Index i, Eigen::Index j) const {
  Vector p(2);
  p << x0 + (static_cast<double>(i) + 0.5) * dx,
      y0 + (static_cast<double>(j) + 0.5) * dy;
  return p;
}

std::vector<Vector> detect_modes(const DensityGrid& grid,
                                 double min_separation,
                                 double threshold_fraction) {
  const Matrix& v = grid.values;
  if (v.size() == 0) return {};
  const double top = v.maxCoeff();
  if (!(top > 0)) return {};
  const double threshold = threshold_fraction * top;
  struct Peak {
    double value;
    Eigen::Index i, j;
  };
  std::vector<Peak> peaks;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      const double c = v(i, j);
      if (c < threshold) continue;
      bool is_max = true;
      bool strictly_above_one = false;
      for (int di = -1; di <= 1 && is_max; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          const Eigen::Index a = i + di, b = j + dj;
          if (a < 0 || b < 0 || a >= v.rows() || b >= v.cols()) continue;
          if (v(a, b) > c) {
            is_max = false;
            break;
          }
          if (v(a, b) < c) strictly_above_one = true;
        }
      }
      // Plateaus (all neighbours equal) are not peaks.
      if (is_max && strictly_above_one) peaks.push_back({c, i, j});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Peak& a, const Peak& b) { return a.value > b.value; });
  std::vector<Vector> kept;
  for (const auto& p : peaks) {
    const Vector loc = grid.point(p.i, p.j);
    const bool near = std::any_of(kept.begin(), kept.end(), [&](const Vector& k) {
      return (k - loc).norm() < min_separation;
    });
    if (!near) kept.push_back(loc);
  }
  return kept;
}

namespace {

double js_on_grid(const SampleSet& a, const SampleSet& b, double h, int grid,
                  double lo, double hi) {
  const auto d = a.dim();
  const double step = (hi - lo) / grid;
  Matrix pts;
  if (d == 1) {
    pts.resize(1, grid);
    for (int i = 0; i < grid; ++i) pts(0, i) = lo + (i + 0.5) * step;
  } else {
    pts.resize(2, static_cast<Eigen::Index>(grid) * grid);
    for (int i = 0; i < grid; ++i) {
      for (int j = 0; j < grid; ++j) {
        pts.col(static_cast<Eigen::Index>(i) * grid + j)
            << lo + (i + 0.5) * step, lo + (j + 0.5) * step;
      }
    }
  }
  const Vector p = kde_density(a, h, pts);
  const Vector q = kde_density(b, h, pts);
  const double vol = d == 1 ? step : step * step;
  auto term = [](double x, double m) { return x > 0 ? x * std::log(x / m) : 0.0; };
  double total = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    const double m = 0.5 * (p(k) + q(k));
    if (m <= 0) continue;
    // Sum the two terms in a fixed order that is symmetric in (p, q).
    const double tp = term(p(k), m);
    const double tq = term(q(k), m);
    total += 0.5 * (std::min(tp, tq) + std::max(tp, tq)) * vol;
  }
  return std::clamp(total, 0.0, std::numbers::ln2);
}

}  // namespace

JsEstimate js_from_samples(const SampleSet& a, const SampleSet& b,
                           double bandwidth, int grid) {
  if (a.dim() != b.dim()) throw ad::ShapeError("js_from_samples: dimension mismatch");
  if (a.dim() < 1 || a.dim() > 2) {
    throw std::invalid_argument("js_from_samples: grid method needs d <= 2");
  }
  if (!(bandwidth > 0)) throw std::invalid_argument("bandwidth must be > 0");
  // Square support covering both clouds with a 4-bandwidth margin at 2h.
  const double lo = std::min(a.points.minCoeff(), b.points.minCoeff()) - 8.0 * bandwidth;
  const double hi = std::max(a.points.maxCoeff(), b.points.maxCoeff()) + 8.0 * bandwidth;
  return {js_on_grid(a, b, bandwidth, grid, lo, hi),
          js_on_grid(a, b, 2.0 * bandwidth, grid, lo, hi)};
}

Balance discriminator_balance(const DiscriminatorNet& disc,
                              const SampleSet& real, const SampleSet& fake) {
  if (real.size() == 0 || fake.size() == 0) {
    throw std::invalid_argument("discriminator_balance: empty sample set");
  }
  return {disc.evaluate(real.points).mean(), disc.evaluate(fake.points).mean()};
}

std::vector<double> CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw std::invalid_argument("CSV has no column '" + name + "'");
  }
  const auto idx = static_cast<std::size_t>(it - header.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.at(idx));
  return out;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + " is empty");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != t.header.size()) {
      throw std::runtime_error(path.string() + ": row with " +
                               std::to_string(row.size()) + " fields, header has " +
                               std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<double> floor_zeros(std::vector<double> series, double floor) {
  for (double& v : series) {
    if (v == 0.0) v = floor;
  }
  return series;
}

std::vector<double> convexity_history(const std::filesystem::path& metrics_csv) {
  return floor_zeros(read_csv(metrics_csv).column("penalty"));
}

void write_eval_csv(const std::filesystem::path& path,
                    const std::vector<std::pair<std::string, double>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "metric,value\n" << std::setprecision(17);
  for (const auto& [k, v] : rows) out << k << ',' << v << '\n';
}

}  // namespace brenier
