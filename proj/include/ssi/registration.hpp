#pragma once

#include "ssi/image.hpp"
#include "ssi/optics.hpp"

#include <Eigen/Core>
#include <stdexcept>
#include <vector>

namespace ssi::registration {

/// Translation p = (p1, p2) in low-res pixels; W(x; p) = x + p maps template points
/// into the warped image.
using WarpParams = Eigen::Vector2d;

struct RegistrationOptions {
  double epsilon = 1e-4;
  int max_iterations = 100;
  bool normalize = true;
  int border_margin = 2;
  // Gaussian pre-smoothing (std in low-res pixels) of both images before iterating. Blurring
  // commutes with translation, so the minimiser is unchanged, but the linearisation stays
  // valid on edges only a pixel wide. 0 disables it.
  double presmooth_sigma = 0.0;

  void validate() const;
};

struct ShiftEstimate {
  WarpParams p = WarpParams::Zero();
  int iterations = 0;
  double final_update_norm = 0.0;
  bool converged = false;
  double final_objective = 0.0;
};

struct GradientField {
  Raster<double> gx;
  Raster<double> gy;
};

/// Raised when the Gauss-Newton Hessian is (numerically) singular, e.g. featureless input.
class SingularHessianError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Central differences in the interior, one-sided on the border. Needs width, height >= 3.
GradientField image_gradient(const Image &img);

/// Separable Gaussian blur with replicate border, kernel truncated at 3 sigma.
Image gaussian_blur(const Image &img, double sigma);

/// O(p) = sum over the interior region of [I(x + p) - T(x)]^2.
double objective(const Image &warped, const Image &templ, const WarpParams &p,
                 const RegistrationOptions &opts = {});

struct SdUpdate {
  WarpParams delta = WarpParams::Zero();
  Eigen::Matrix2d hessian = Eigen::Matrix2d::Zero();
};

/// One Gauss-Newton step about p_current: delta = H^-1 sum grad(I)^T [T(x) - I(W(x; p))].
SdUpdate sd_update(const Image &warped, const Image &templ, const WarpParams &p_current,
                   const RegistrationOptions &opts = {});

/// Iterates sd_update from p = 0 until |delta| < epsilon or max_iterations. A step that
/// would raise the objective is halved until it does not; the objective never increases.
ShiftEstimate estimate_shift(const Image &warped, const Image &templ,
                             const RegistrationOptions &opts = {});

/// Shift of every frame relative to frames[template_index]. A frame whose estimation
/// throws is reported with converged = false.
std::vector<ShiftEstimate> estimate_stack_shifts(const optics::LowResStack &stack,
                                                 const RegistrationOptions &opts = {});

} // namespace ssi::registration
