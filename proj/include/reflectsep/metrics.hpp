#pragma once

#include "reflectsep/image.hpp"

namespace reflectsep {

// 10*log10(1/MSE) with peak 1.0; returns +infinity when MSE is 0.
double psnr(const Image& a, const Image& b);

// Mean local SSIM over all fully-contained 11x11 Gaussian windows (sigma 1.5,
// C1=0.01^2, C2=0.03^2), averaged over channels. Requires min side >= 11.
double ssim(const Image& a, const Image& b);

} // namespace reflectsep
