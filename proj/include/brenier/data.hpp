#pragma once

#include "brenier/networks.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace brenier {

/// Support of the uniform source measure.
enum class SourceDomain { unit_box, symmetric_box };

std::string_view to_string(SourceDomain d);
SourceDomain source_domain_from_string(std::string_view s);
double domain_low(SourceDomain d);
double domain_high(SourceDomain d);

enum class Origin { real, generated, source };

/// Points stored one per column: `points` is d x n.
struct SampleSet {
  Matrix points;
  Origin origin = Origin::real;

  Eigen::Index dim() const { return points.rows(); }
  Eigen::Index size() const { return points.cols(); }
};

SampleSet uniform_source(Eigen::Index n, Eigen::Index d, SourceDomain domain,
                         std::uint64_t seed);

struct GmmMode {
  Vector mean;
  double variance = 1.0;
};

struct GmmSpec {
  std::vector<GmmMode> modes;
  std::vector<double> weights;

  Eigen::Index dim() const { return modes.front().mean.size(); }
  void validate() const;
};

/// `modes` equally weighted isotropic modes at angles 2 pi k / modes on a
/// circle around (center_x, center_y).
GmmSpec ring_gmm(int modes, double radius, double variance, double center_x,
                 double center_y);
/// Seven equally weighted modes at angles 2 pi k / 7 on a circle.
GmmSpec seven_mode_gmm(double radius = 0.3, double variance = 0.02,
                       double center_x = 0.5, double center_y = 0.5);

SampleSet gmm_sample(const GmmSpec& spec, Eigen::Index n, std::uint64_t seed);
/// Mixture density at every column of x.
Vector gmm_density(const GmmSpec& spec, const Matrix& x);

// ---- IDX files -----------------------------------------------------------

class IdxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

enum class PixelScale { unit, symmetric };

struct IdxImages {
  SampleSet images;  // one flattened image per column, row-major pixels
  int rows = 0;
  int cols = 0;
};

/// Reads a ubyte image file. With `pad_to` > 0 each image is zero padded,
/// centered, to pad_to x pad_to. Pixel 0 maps to 0 (unit) or -1 (symmetric)
/// before padding; padding uses the value of pixel 0.
IdxImages load_idx_images(const std::filesystem::path& path,
                          PixelScale scale = PixelScale::symmetric,
                          int pad_to = 0);
std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path);

/// Writes an IDX ubyte file; images are given as raw bytes per image.
void write_idx_images(const std::filesystem::path& path, int rows, int cols,
                      const std::vector<std::vector<std::uint8_t>>& images);
void write_idx_labels(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& labels);

SampleSet class_filter(const SampleSet& images,
                       const std::vector<std::uint8_t>& labels,
                       std::uint8_t keep);

}  // namespace brenier
