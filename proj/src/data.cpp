#include "brenier/data.hpp"

#include "brenier/rng.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace brenier {

std::string_view to_string(SourceDomain d) {
  return d == SourceDomain::unit_box ? "unit_box" : "symmetric_box";
}

SourceDomain source_domain_from_string(std::string_view s) {
  if (s == "unit_box") return SourceDomain::unit_box;
  if (s == "symmetric_box") return SourceDomain::symmetric_box;
  throw std::invalid_argument("unknown source domain '" + std::string(s) + "'");
}

double domain_low(SourceDomain d) {
  return d == SourceDomain::unit_box ? 0.0 : -1.0;
}

double domain_high(SourceDomain) { return 1.0; }

SampleSet uniform_source(Eigen::Index n, Eigen::Index d, SourceDomain domain,
                         std::uint64_t seed) {
  if (n < 1 || d < 1) throw std::invalid_argument("uniform_source: n, d >= 1");
  auto rng = make_rng(seed, {0x50c});
  std::uniform_real_distribution<double> dist(domain_low(domain),
                                              domain_high(domain));
  SampleSet s;
  s.origin = Origin::source;
  s.points.resize(d, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) s.points(i, j) = dist(rng);
  }
  return s;
}

void GmmSpec::validate() const {
  if (modes.empty()) throw std::invalid_argument("GmmSpec: no modes");
  if (weights.size() != modes.size()) {
    throw std::invalid_argument("GmmSpec: weights and modes differ in count");
  }
  double total = 0.0;
  for (double w : weights) {
    if (w < 0) throw std::invalid_argument("GmmSpec: negative weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("GmmSpec: weights sum to " +
                                std::to_string(total));
  }
  for (const auto& m : modes) {
    if (!(m.variance > 0)) {
      throw std::invalid_argument("GmmSpec: variance must be > 0");
    }
    if (m.mean.size() != modes.front().mean.size()) {
      throw std::invalid_argument("GmmSpec: inconsistent mode dimensions");
    }
  }
}

GmmSpec seven_mode_gmm(double radius, double variance, double center_x,
                       double center_y) {
  return ring_gmm(7, radius, variance, center_x, center_y);
}

GmmSpec ring_gmm(int modes, double radius, double variance, double center_x,
                 double center_y) {
  if (modes < 1) throw std::invalid_argument("ring_gmm: modes must be >= 1");
  GmmSpec spec;
  for (int k = 0; k < modes; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / modes;
    Vector mean(2);
    mean << center_x + radius * std::cos(angle),
        center_y + radius * std::sin(angle);
    spec.modes.push_back({mean, variance});
  }
  spec.weights.assign(static_cast<std::size_t>(modes), 1.0 / modes);
  return spec;
}

SampleSet gmm_sample(const GmmSpec& spec, Eigen::Index n, std::uint64_t seed) {
  spec.validate();
  auto rng = make_rng(seed, {0x6a3});
  std::discrete_distribution<int> pick(spec.weights.begin(),
                                       spec.weights.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index d = spec.dim();
  SampleSet s;
  s.origin = Origin::real;
  s.points.resize(d, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& mode = spec.modes[pick(rng)];
    const double sd = std::sqrt(mode.variance);
    for (Eigen::Index i = 0; i < d; ++i) {
      s.points(i, j) = mode.mean(i) + sd * normal(rng);
    }
  }
  return s;
}

Vector gmm_density(const GmmSpec& spec, const Matrix& x) {
  spec.validate();
  const auto d = static_cast<double>(spec.dim());
  Vector out = Vector::Zero(x.cols());
  for (std::size_t m = 0; m < spec.modes.size(); ++m) {
    const auto& mode = spec.modes[m];
    const double norm =
        spec.weights[m] / std::pow(2.0 * std::numbers::pi * mode.variance,
                                   d / 2.0);
    const Matrix diff = x.colwise() - mode.mean;
    const Vector sq = diff.colwise().squaredNorm().transpose();
    out.array() += norm * (-sq.array() / (2.0 * mode.variance)).exp();
  }
  return out;
}

// ---- IDX -------------------------------------------------------------------

namespace {

std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << std::setw(8) << std::setfill('0') << v;
  return os.str();
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError("cannot open IDX file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf,
                        std::size_t offset, const std::filesystem::path& path) {
  if (offset + 4 > buf.size()) {
    throw IdxError("truncated IDX header in " + path.string());
  }
  return (std::uint32_t{buf[offset]} << 24) |
         (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes, 4);
}

// Validates magic and returns the declared dimensions.
std::vector<std::uint32_t> parse_header(const std::vector<std::uint8_t>& buf,
                                        std::uint32_t expected_magic,
                                        const std::filesystem::path& path) {
  const std::uint32_t magic = read_be32(buf, 0, path);
  if (magic != expected_magic) {
    throw IdxError("bad IDX magic in " + path.string() + ": found " +
                   hex32(magic) + ", expected " + hex32(expected_magic));
  }
  const std::size_t ndims = magic & 0xff;
  std::vector<std::uint32_t> dims;
  for (std::size_t i = 0; i < ndims; ++i) {
    dims.push_back(read_be32(buf, 4 + 4 * i, path));
  }
  // Overflow-checked element count.
  std::uint64_t count = 1;
  for (auto d : dims) {
    if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / d) {
      throw IdxError("IDX dimension overflow in " + path.string());
    }
    count *= d;
  }
  const std::uint64_t header = 4 + 4 * ndims;
  if (count > (std::uint64_t{1} << 40)) {
    throw IdxError("IDX dimension overflow in " + path.string());
  }
  if (buf.size() < header + count) {
    throw IdxError("truncated IDX payload in " + path.string() + ": expected " +
                   std::to_string(count) + " bytes, found " +
                   std::to_string(buf.size() - header));
  }
  return dims;
}

}  // namespace

IdxImages load_idx_images(const std::filesystem::path& path, PixelScale scale,
                          int pad_to) {
  const auto buf = read_all(path);
  const auto dims = parse_header(buf, kIdxImageMagic, path);
  const std::size_t n = dims[0];
  const int rows = static_cast<int>(dims[1]);
  const int cols = static_cast<int>(dims[2]);
  if (pad_to > 0 && (pad_to < rows || pad_to < cols)) {
    throw IdxError("cannot pad " + std::to_string(rows) + "x" +
                   std::to_string(cols) + " images to " +
                   std::to_string(pad_to));
  }
  const int out_rows = pad_to > 0 ? pad_to : rows;
  const int out_cols = pad_to > 0 ? pad_to : cols;
  const int top = (out_rows - rows) / 2;
  const int left = (out_cols - cols) / 2;

  auto to_float = [scale](std::uint8_t px) {
    const double u = px / 255.0;
    return scale == PixelScale::unit ? u : 2.0 * u - 1.0;
  };
  IdxImages out;
  out.rows = out_rows;
  out.cols = out_cols;
  out.images.origin = Origin::real;
  out.images.points = Matrix::Constant(static_cast<Eigen::Index>(out_rows) * out_cols,
                                       static_cast<Eigen::Index>(n), to_float(0));
  const std::size_t header = 4 + 4 * dims.size();
  const std::size_t per_image = static_cast<std::size_t>(rows) * cols;
  for (std::size_t img = 0; img < n; ++img) {
    const std::uint8_t* src = buf.data() + header + img * per_image;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const auto dst = static_cast<Eigen::Index>(r + top) * out_cols + (c + left);
        out.images.points(dst, static_cast<Eigen::Index>(img)) =
            to_float(src[r * cols + c]);
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path) {
  const auto buf = read_all(path);
  const auto dims = parse_header(buf, kIdxLabelMagic, path);
  return {buf.begin() + 8, buf.begin() + 8 + dims[0]};
}

void write_idx_images(const std::filesystem::path& path, int rows, int cols,
                      const std::vector<std::vector<std::uint8_t>>& images) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IdxError("cannot write " + path.string());
  write_be32(out, kIdxImageMagic);
  write_be32(out, static_cast<std::uint32_t>(images.size()));
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  for (const auto& img : images) {
    if (img.size() != static_cast<std::size_t>(rows) * cols) {
      throw IdxError("image size does not match rows x cols");
    }
    out.write(reinterpret_cast<const char*>(img.data()),
              static_cast<std::streamsize>(img.size()));
  }
}

void write_idx_labels(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IdxError("cannot write " + path.string());
  write_be32(out, kIdxLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
}

SampleSet class_filter(const SampleSet& images,
                       const std::vector<std::uint8_t>& labels,
                       std::uint8_t keep) {
  if (static_cast<Eigen::Index>(labels.size()) != images.size()) {
    throw std::invalid_argument("class_filter: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(images.size()) +
                                " images");
  }
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == keep) idx.push_back(static_cast<Eigen::Index>(i));
  }
  SampleSet out;
  out.origin = images.origin;
  out.points.resize(images.dim(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    out.points.col(static_cast<Eigen::Index>(j)) = images.points.col(idx[j]);
  }
  return out;
}

}  // namespace brenier
