#include "ssi/registration.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <string>

namespace ssi::registration {

void RegistrationOptions::validate() const {
  if (!(epsilon > 0.0))
    throw std::invalid_argument("registration: epsilon must be > 0");
  if (max_iterations < 1)
    throw std::invalid_argument("registration: max_iterations must be >= 1");
  if (border_margin < 0)
    throw std::invalid_argument("registration: border_margin must be >= 0");
  if (!(presmooth_sigma >= 0.0) || !std::isfinite(presmooth_sigma))
    throw std::invalid_argument("registration: presmooth_sigma must be finite and >= 0");
}

Image gaussian_blur(const Image &img, double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("gaussian_blur: sigma must be finite and >= 0");
  if (sigma == 0.0)
    return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  Eigen::VectorXd kernel(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i)
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  kernel /= kernel.sum();

  const Eigen::Index w = img.width();
  const Eigen::Index h = img.height();
  const auto clamp = [](Eigen::Index v, Eigen::Index n) { return std::clamp<Eigen::Index>(v, 0, n - 1); };
  Raster<double> rows(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * img.pixels(y, clamp(x + i, w));
      rows(y, x) = acc;
    }
  Image out = img;
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * rows(clamp(y + i, h), x);
      out.pixels(y, x) = acc;
    }
  return out;
}

GradientField image_gradient(const Image &img) {
  const Eigen::Index w = img.width();
  const Eigen::Index h = img.height();
  if (w < 3 || h < 3)
    throw std::invalid_argument("image_gradient: image must be at least 3x3");
  const auto &I = img.pixels;
  GradientField g{Raster<double>(h, w), Raster<double>(h, w)};
  for (Eigen::Index y = 0; y < h; ++y) {
    g.gx(y, 0) = I(y, 1) - I(y, 0);
    g.gx(y, w - 1) = I(y, w - 1) - I(y, w - 2);
    for (Eigen::Index x = 1; x < w - 1; ++x)
      g.gx(y, x) = 0.5 * (I(y, x + 1) - I(y, x - 1));
  }
  for (Eigen::Index x = 0; x < w; ++x) {
    g.gy(0, x) = I(1, x) - I(0, x);
    g.gy(h - 1, x) = I(h - 1, x) - I(h - 2, x);
    for (Eigen::Index y = 1; y < h - 1; ++y)
      g.gy(y, x) = 0.5 * (I(y + 1, x) - I(y - 1, x));
  }
  return g;
}

namespace {

struct Region {
  Eigen::Index x0, y0, x1, y1; // inclusive bounds

  Eigen::Index size() const { return (x1 - x0 + 1) * (y1 - y0 + 1); }
};

Region summation_region(const Image &img, const RegistrationOptions &opts) {
  const Region r{opts.border_margin, opts.border_margin, img.width() - 1 - opts.border_margin,
                 img.height() - 1 - opts.border_margin};
  if (r.x1 < r.x0 || r.y1 < r.y0)
    throw std::invalid_argument("registration: border_margin leaves no pixels to compare");
  return r;
}

/// Samples of `src` at x + p over the region, flattened row-major.
Eigen::VectorXd sample_region(const Raster<double> &src, const Region &r, const WarpParams &p) {
  Eigen::VectorXd out(r.size());
  Eigen::Index i = 0;
  for (Eigen::Index y = r.y0; y <= r.y1; ++y)
    for (Eigen::Index x = r.x0; x <= r.x1; ++x)
      out[i++] = sample_bilinear(src, static_cast<double>(x) + p.x(), static_cast<double>(y) + p.y());
  return out;
}

/// Zero-mean, unit-RMS in place. Returns the scale divided out (1 for constant input).
double normalize_in_place(Eigen::VectorXd &v) {
  v.array() -= v.mean();
  const double rms = std::sqrt(v.squaredNorm() / static_cast<double>(v.size()));
  if (rms > 0.0) {
    v /= rms;
    return rms;
  }
  return 1.0;
}

struct Residuals {
  Eigen::VectorXd warped; // I(W(x; p))
  Eigen::VectorXd templ;  // T(x)
  double warped_scale = 1.0;
};

Residuals prepare(const Image &warped, const Image &templ, const Region &r, const WarpParams &p,
                  bool normalize) {
  Residuals res{sample_region(warped.pixels, r, p), sample_region(templ.pixels, r, WarpParams::Zero())};
  if (normalize) {
    res.warped_scale = normalize_in_place(res.warped);
    normalize_in_place(res.templ);
  }
  return res;
}

} // namespace

double objective(const Image &warped, const Image &templ, const WarpParams &p,
                 const RegistrationOptions &opts) {
  require_same_shape(warped, templ, "objective");
  opts.validate();
  const auto r = summation_region(templ, opts);
  const auto res = prepare(warped, templ, r, p, opts.normalize);
  return (res.warped - res.templ).squaredNorm();
}

SdUpdate sd_update(const Image &warped, const Image &templ, const WarpParams &p_current,
                   const RegistrationOptions &opts) {
  require_same_shape(warped, templ, "sd_update");
  opts.validate();
  const auto r = summation_region(templ, opts);
  const auto res = prepare(warped, templ, r, p_current, opts.normalize);
  const auto grad = image_gradient(warped);
  // Translation warp: dW/dp is the identity, so the steepest-descent images are grad(I)
  // sampled at W(x; p).
  Eigen::VectorXd gx = sample_region(grad.gx, r, p_current) / res.warped_scale;
  Eigen::VectorXd gy = sample_region(grad.gy, r, p_current) / res.warped_scale;
  const Eigen::VectorXd error = res.templ - res.warped;

  SdUpdate out;
  out.hessian << gx.squaredNorm(), gx.dot(gy), gx.dot(gy), gy.squaredNorm();
  const double half_trace = 0.5 * out.hessian.trace();
  const double det = out.hessian.determinant();
  if (!(half_trace > 0.0) || std::abs(det) < 1e-12 * half_trace * half_trace)
    throw SingularHessianError("sd_update: Hessian is singular (image lacks texture)");
  const Eigen::Vector2d b(gx.dot(error), gy.dot(error));
  out.delta = out.hessian.inverse() * b;
  return out;
}

ShiftEstimate estimate_shift(const Image &warped, const Image &templ,
                             const RegistrationOptions &opts) {
  require_same_shape(warped, templ, "estimate_shift");
  opts.validate();
  const Image I = gaussian_blur(warped, opts.presmooth_sigma);
  const Image T = gaussian_blur(templ, opts.presmooth_sigma);
  ShiftEstimate est;
  double current = objective(I, T, est.p, opts);
  for (int it = 1; it <= opts.max_iterations; ++it) {
    est.iterations = it;
    const auto step = sd_update(I, T, est.p, opts);
    // Full Gauss-Newton step first, halved while it would raise the objective. Once the trial
    // step is shorter than epsilon without any decrease, p is stationary to that resolution.
    WarpParams delta = step.delta;
    bool accepted = false;
    while (delta.norm() >= opts.epsilon) {
      const double next = objective(I, T, est.p + delta, opts);
      if (next <= current) {
        est.p += delta;
        current = next;
        accepted = true;
        break;
      }
      delta *= 0.5;
    }
    est.final_update_norm = accepted ? delta.norm() : 0.0;
    if (!accepted || delta.norm() < opts.epsilon) {
      est.converged = true;
      break;
    }
  }
  est.final_objective = current;
  return est;
}

std::vector<ShiftEstimate> estimate_stack_shifts(const optics::LowResStack &stack,
                                                 const RegistrationOptions &opts) {
  stack.validate();
  opts.validate();
  const auto &templ = stack.frames[static_cast<std::size_t>(stack.template_index)];
  std::vector<ShiftEstimate> out(stack.frames.size());
  for (std::size_t k = 0; k < stack.frames.size(); ++k) {
    if (static_cast<int>(k) == stack.template_index) {
      out[k].converged = true;
      continue;
    }
    try {
      out[k] = estimate_shift(stack.frames[k], templ, opts);
    } catch (const SingularHessianError &) {
      out[k].converged = false;
    }
  }
  return out;
}

} // namespace ssi::registration
