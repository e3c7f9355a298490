#include "reflectsep/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace reflectsep {

bool Image::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

Image clip01(const Image& img) {
    if (!img.all_finite()) throw std::invalid_argument("clip01: non-finite input");
    Image out = img;
    for (double& v : out.data) v = std::min(std::max(v, 0.0), 1.0);
    return out;
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: target size must be >= 1");
    if (out_h == img.height && out_w == img.width) return img;
    Image out(out_h, out_w, img.channels);
    const double sy = out_h > 1 ? static_cast<double>(img.height - 1) / (out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(img.width - 1) / (out_w - 1) : 0.0;
    for (int oy = 0; oy < out_h; ++oy) {
        const double fy = oy * sy;
        const int y0 = std::min(static_cast<int>(fy), img.height - 1);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            const double fx = ox * sx;
            const int x0 = std::min(static_cast<int>(fx), img.width - 1);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < img.channels; ++c) {
                const double top = (1.0 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
                const double bot = (1.0 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
                out.at(oy, ox, c) = (1.0 - wy) * top + wy * bot;
            }
        }
    }
    return out;
}

Image random_crop_resize(const Image& img, RandomState& rng) {
    if (img.height != 256 || img.width != 256)
        throw std::invalid_argument("random_crop_resize: input must be 256x256");
    const int ch = rng.uniform_int(192, 256);
    const int cw = rng.uniform_int(192, 256);
    const int y0 = rng.uniform_int(0, 256 - ch);
    const int x0 = rng.uniform_int(0, 256 - cw);
    Image crop(ch, cw, img.channels);
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x)
            for (int c = 0; c < img.channels; ++c)
                crop.at(y, x, c) = img.at(y0 + y, x0 + x, c);
    return resize_bilinear(crop, 128, 128);
}

Image mirror_lr(const Image& img) {
    Image out(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    return out;
}

Image flip_lr(const Image& img, RandomState& rng) {
    return rng.coin() ? mirror_lr(img) : img;
}

Kernel gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
    const int half = static_cast<int>(std::ceil(2.0 * sigma));
    const int side = 2 * half + 1;
    Kernel k{side, side, std::vector<double>(static_cast<std::size_t>(side) * side)};
    double sum = 0.0;
    for (int y = -half; y <= half; ++y) {
        for (int x = -half; x <= half; ++x) {
            const double v = std::exp(-(y * static_cast<double>(y) + x * static_cast<double>(x)) /
                                      (2.0 * sigma * sigma));
            k.at(y + half, x + half) = v;
            sum += v;
        }
    }
    for (double& v : k.weights) v /= sum;
    return k;
}

namespace {
// Symmetric (edge-inclusive) reflection of an out-of-range index.
int reflect_index(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}
} // namespace

// True convolution (kernel flipped), centered at (kh/2, kw/2). Mostly-zero
// kernels (ghost kernels) take a per-tap scatter path instead of the dense loop.
Image conv2d_same(const Image& img, const Kernel& k) {
    if (k.kh > img.height || k.kw > img.width)
        throw std::invalid_argument("conv2d_same: kernel larger than image");
    const int cy = k.kh / 2;
    const int cx = k.kw / 2;
    Image out(img.height, img.width, img.channels);

    struct Tap { int dy, dx; double w; };
    std::vector<Tap> taps;
    taps.reserve(static_cast<std::size_t>(k.kh) * k.kw);
    for (int ky = 0; ky < k.kh; ++ky)
        for (int kx = 0; kx < k.kw; ++kx)
            if (k.at(ky, kx) != 0.0) taps.push_back({ky - cy, kx - cx, k.at(ky, kx)});

    if (taps.size() * 4 < static_cast<std::size_t>(k.kh) * k.kw) {
        for (const Tap& t : taps) {
            for (int y = 0; y < img.height; ++y) {
                const int sy = reflect_index(y - t.dy, img.height);
                for (int x = 0; x < img.width; ++x) {
                    const int sx = reflect_index(x - t.dx, img.width);
                    for (int c = 0; c < img.channels; ++c)
                        out.at(y, x, c) += t.w * img.at(sy, sx, c);
                }
            }
        }
        return out;
    }

    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int ky = 0; ky < k.kh; ++ky) {
                    const int sy = reflect_index(y - (ky - cy), img.height);
                    for (int kx = 0; kx < k.kw; ++kx) {
                        const int sx = reflect_index(x - (kx - cx), img.width);
                        acc += k.at(ky, kx) * img.at(sy, sx, c);
                    }
                }
                out.at(y, x, c) = acc;
            }
        }
    }
    return out;
}

} // namespace reflectsep
