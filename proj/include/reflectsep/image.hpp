#pragma once

#include <vector>

#include "reflectsep/rng.hpp"

namespace reflectsep {

// Float raster in [0,1], HWC layout, 1 or 3 channels.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c),
          data(static_cast<std::size_t>(h) * w * c, fill) {}

    double& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::size_t numel() const { return data.size(); }
    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
    bool all_finite() const;
};

struct Kernel {
    int kh = 0;
    int kw = 0;
    std::vector<double> weights; // row-major

    double& at(int y, int x) { return weights[static_cast<std::size_t>(y) * kw + x]; }
    double at(int y, int x) const { return weights[static_cast<std::size_t>(y) * kw + x]; }
};

// Elementwise clamp to [0,1]; throws on non-finite input.
Image clip01(const Image& img);

// Corner-aligned bilinear resize: output sample i maps to source coordinate
// i * (in-1)/(out-1) (0 when out == 1). Resizing to the input size is exact.
Image resize_bilinear(const Image& img, int out_h, int out_w);

// Crop a patch with height/width each uniform in [192,256] at a uniform valid
// position, then resize to 128x128. Input must be 256x256.
Image random_crop_resize(const Image& img, RandomState& rng);

// Mirror columns with probability 0.5.
Image flip_lr(const Image& img, RandomState& rng);
Image mirror_lr(const Image& img);

// Isotropic Gaussian, side 2*ceil(2*sigma)+1, normalized to sum 1.
Kernel gaussian_kernel(double sigma);

// Per-channel 2-D convolution, "same" size, symmetric reflect padding.
Image conv2d_same(const Image& img, const Kernel& k);

} // namespace reflectsep
