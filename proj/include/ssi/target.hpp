#pragma once

#include "ssi/image.hpp"

#include <string>
#include <vector>

namespace ssi::target {

/// Vertical bars repeat along x (columns alternate); horizontal bars repeat along y.
enum class Orientation { vertical, horizontal };

const char *to_string(Orientation o);
Orientation orientation_from_string(const std::string &s);

/// Axis-aligned rectangle in pixels, [x, x + w) x [y, y + h).
struct Rect {
  double x = 0, y = 0, w = 0, h = 0;
};

/// `bar_count` foreground bars of width period/2, starting at the rectangle's leading edge,
/// separated by background gaps of the same width.
struct BarGroup {
  double period = 4.0;
  Orientation orientation = Orientation::vertical;
  int bar_count = 3;
  Rect rect;
};

struct BarTargetSpec {
  int side = 64;
  std::vector<BarGroup> groups;
  double foreground = 1.0;
  double background = 0.0;

  void validate() const;
};

/// Rendered with 4x4 supersampled box averaging, so values lie between background and foreground.
Image generate_bar_target(const BarTargetSpec &spec);

/// Where the target sits in an image: image_coord = scale * target_coord + offset,
/// coordinates measured from the image's top-left pixel edge.
struct Placement {
  double scale = 1.0;
  double offset_x = 0.0;
  double offset_y = 0.0;
};

/// Michelson contrast of group `group_index` sampled (bilinear) along the bar and gap
/// centrelines: (bright - dark) / (bright + dark), clamped to [0, 1].
double resolved_contrast(const Image &img, const BarTargetSpec &spec, std::size_t group_index,
                         const Placement &placement = {});

/// The "resolved" threshold on resolved_contrast.
inline constexpr double kResolvedContrast = 0.2;

} // namespace ssi::target
