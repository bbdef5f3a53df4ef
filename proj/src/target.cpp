#include "ssi/target.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ssi::target {

const char *to_string(Orientation o) { return o == Orientation::vertical ? "vertical" : "horizontal"; }

Orientation orientation_from_string(const std::string &s) {
  if (s == "vertical")
    return Orientation::vertical;
  if (s == "horizontal")
    return Orientation::horizontal;
  throw std::invalid_argument("unknown bar orientation '" + s + "'");
}

namespace {

bool overlaps(const Rect &a, const Rect &b) {
  return a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h && b.y < a.y + a.h;
}

/// Extent of the bars along the repeat axis.
double bar_span(const BarGroup &g) { return (g.bar_count - 1) * g.period + 0.5 * g.period; }

} // namespace

void BarTargetSpec::validate() const {
  if (side < 1)
    throw std::invalid_argument("bar target: side must be >= 1");
  if (foreground < 0.0 || foreground > 1.0 || background < 0.0 || background > 1.0)
    throw std::invalid_argument("bar target: levels must lie in [0, 1]");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto &g = groups[i];
    const std::string tag = "bar target group " + std::to_string(i) + ": ";
    if (!(g.period >= 2.0))
      throw std::invalid_argument(tag + "period must be >= 2 px");
    if (g.bar_count < 1)
      throw std::invalid_argument(tag + "bar_count must be >= 1");
    const auto &r = g.rect;
    if (!(r.w > 0 && r.h > 0) || r.x < 0 || r.y < 0 || r.x + r.w > side || r.y + r.h > side)
      throw std::invalid_argument(tag + "rectangle must lie within the image");
    const double extent = g.orientation == Orientation::vertical ? r.w : r.h;
    if (bar_span(g) > extent)
      throw std::invalid_argument(tag + "bars do not fit in the rectangle");
    for (std::size_t j = 0; j < i; ++j)
      if (overlaps(r, groups[j].rect))
        throw std::invalid_argument(tag + "overlaps group " + std::to_string(j));
  }
}

Image generate_bar_target(const BarTargetSpec &spec) {
  spec.validate();
  constexpr int kSuper = 4;
  Image img(spec.side, spec.side);
  img.pixels.setConstant(spec.background);

  const auto covered = [](const BarGroup &g, double x, double y) {
    const auto &r = g.rect;
    if (x < r.x || x >= r.x + r.w || y < r.y || y >= r.y + r.h)
      return false;
    const double along = g.orientation == Orientation::vertical ? x - r.x : y - r.y;
    if (along >= bar_span(g))
      return false;
    const double phase = along - std::floor(along / g.period) * g.period;
    return phase < 0.5 * g.period;
  };

  for (const auto &g : spec.groups) {
    const int x0 = static_cast<int>(std::floor(g.rect.x));
    const int y0 = static_cast<int>(std::floor(g.rect.y));
    const int x1 = std::min(spec.side, static_cast<int>(std::ceil(g.rect.x + g.rect.w)));
    const int y1 = std::min(spec.side, static_cast<int>(std::ceil(g.rect.y + g.rect.h)));
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        int hits = 0;
        for (int sy = 0; sy < kSuper; ++sy)
          for (int sx = 0; sx < kSuper; ++sx)
            hits += covered(g, x + (sx + 0.5) / kSuper, y + (sy + 0.5) / kSuper);
        if (hits == 0)
          continue;
        const double coverage = static_cast<double>(hits) / (kSuper * kSuper);
        img.pixels(y, x) = spec.background + (spec.foreground - spec.background) * coverage;
      }
    }
  }
  return img;
}

double resolved_contrast(const Image &img, const BarTargetSpec &spec, std::size_t group_index,
                         const Placement &placement) {
  if (group_index >= spec.groups.size())
    throw std::invalid_argument("resolved_contrast: group index out of range");
  if (!(placement.scale > 0.0))
    throw std::invalid_argument("resolved_contrast: placement scale must be > 0");
  const auto expected = static_cast<Eigen::Index>(std::lround(spec.side * placement.scale));
  if (img.width() != expected || img.height() != expected)
    throw std::invalid_argument("resolved_contrast: image size does not match the target placement");

  const auto &g = spec.groups[group_index];
  const bool vertical = g.orientation == Orientation::vertical;
  const double s = placement.scale;
  // Leading edge along the repeat axis and the bar length range, in image coordinates.
  const double lead = vertical ? s * g.rect.x + placement.offset_x : s * g.rect.y + placement.offset_y;
  const double len0 = vertical ? s * g.rect.y + placement.offset_y : s * g.rect.x + placement.offset_x;
  const double len = s * (vertical ? g.rect.h : g.rect.w);
  const double period = s * g.period;

  // Sample along the central 80% of each centreline, one sample per image pixel.
  std::vector<double> along;
  const Eigen::Index limit = vertical ? img.height() : img.width();
  for (Eigen::Index i = 0; i < limit; ++i) {
    const double c = static_cast<double>(i) + 0.5;
    if (c >= len0 + 0.1 * len && c <= len0 + 0.9 * len)
      along.push_back(c);
  }
  if (along.empty())
    along.push_back(len0 + 0.5 * len);

  const auto line_mean = [&](double across) {
    double sum = 0.0;
    for (double a : along) {
      // Edge coordinates to pixel-index coordinates.
      const double x = (vertical ? across : a) - 0.5;
      const double y = (vertical ? a : across) - 0.5;
      sum += sample_bilinear(img.pixels, x, y);
    }
    return sum / static_cast<double>(along.size());
  };

  double bright = 0.0;
  for (int i = 0; i < g.bar_count; ++i)
    bright += line_mean(lead + (i + 0.25) * period);
  bright /= g.bar_count;

  double dark = 0.0;
  if (g.bar_count > 1) {
    for (int i = 0; i + 1 < g.bar_count; ++i)
      dark += line_mean(lead + (i + 0.75) * period);
    dark /= (g.bar_count - 1);
  } else {
    dark = line_mean(lead + 0.75 * period);
  }

  const double denom = bright + dark;
  if (!(denom > 0.0))
    return 0.0;
  return std::clamp(std::abs(bright - dark) / denom, 0.0, 1.0);
}

} // namespace ssi::target
