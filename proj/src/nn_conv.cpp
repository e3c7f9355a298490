#include <Eigen/Dense>

#include <stdexcept>

#include "reflectsep/autodiff.hpp"

namespace reflectsep::ad {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<Mat>;
using CMapM = Eigen::Map<const Mat>;

int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

// Gather patches of one sample (C,H,W) into a (C*KH*KW) x (OH*OW) matrix,
// zero padding outside the image.
void im2col(const double* x, int C, int H, int W, int KH, int KW, int stride, int pad,
            double* col) {
    const int OH = conv_out(H, KH, stride, pad), OW = conv_out(W, KW, stride, pad);
    const std::size_t P = static_cast<std::size_t>(OH) * OW;
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < KH; ++ky) {
            for (int kx = 0; kx < KW; ++kx) {
                double* row = col + ((static_cast<std::size_t>(c) * KH + ky) * KW + kx) * P;
                for (int oy = 0; oy < OH; ++oy) {
                    const int sy = oy * stride - pad + ky;
                    if (sy < 0 || sy >= H) {
                        std::fill(row + static_cast<std::size_t>(oy) * OW,
                                  row + static_cast<std::size_t>(oy + 1) * OW, 0.0);
                        continue;
                    }
                    const double* src = x + (static_cast<std::size_t>(c) * H + sy) * W;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int sx = ox * stride - pad + kx;
                        row[static_cast<std::size_t>(oy) * OW + ox] =
                            (sx >= 0 && sx < W) ? src[sx] : 0.0;
                    }
                }
            }
        }
    }
}

// Scatter-add the adjoint of im2col.
void col2im(const double* col, int C, int H, int W, int KH, int KW, int stride, int pad,
            double* x) {
    const int OH = conv_out(H, KH, stride, pad), OW = conv_out(W, KW, stride, pad);
    const std::size_t P = static_cast<std::size_t>(OH) * OW;
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < KH; ++ky) {
            for (int kx = 0; kx < KW; ++kx) {
                const double* row = col + ((static_cast<std::size_t>(c) * KH + ky) * KW + kx) * P;
                for (int oy = 0; oy < OH; ++oy) {
                    const int sy = oy * stride - pad + ky;
                    if (sy < 0 || sy >= H) continue;
                    double* dst = x + (static_cast<std::size_t>(c) * H + sy) * W;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int sx = ox * stride - pad + kx;
                        if (sx >= 0 && sx < W) dst[sx] += row[static_cast<std::size_t>(oy) * OW + ox];
                    }
                }
            }
        }
    }
}

} // namespace

NodeP conv2d(const NodeP& x, const NodeP& w, const NodeP& b, int stride, int pad) {
    if (x->value.ndim() != 4 || w->value.ndim() != 4)
        throw std::invalid_argument("conv2d: expected 4-D input and weight");
    const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    const int OC = w->value.dim(0), KH = w->value.dim(2), KW = w->value.dim(3);
    if (w->value.dim(1) != C) throw std::invalid_argument("conv2d: channel mismatch");
    const int OH = conv_out(H, KH, stride, pad), OW = conv_out(W, KW, stride, pad);
    if (OH < 1 || OW < 1) throw std::invalid_argument("conv2d: empty output");
    const int K = C * KH * KW;
    const std::size_t P = static_cast<std::size_t>(OH) * OW;

    auto n = std::make_shared<Node>();
    n->value = Tensor::zeros({N, OC, OH, OW});
    std::vector<double> col(static_cast<std::size_t>(K) * P);
    CMapM wm(w->value.data(), OC, K);
    for (int s = 0; s < N; ++s) {
        im2col(x->value.data() + static_cast<std::size_t>(s) * C * H * W, C, H, W, KH, KW,
               stride, pad, col.data());
        MapM ym(n->value.data() + static_cast<std::size_t>(s) * OC * P, OC, static_cast<int>(P));
        CMapM cm(col.data(), K, static_cast<int>(P));
        ym.noalias() = wm * cm;
        for (int oc = 0; oc < OC; ++oc) ym.row(oc).array() += b->value[oc];
    }

    if (x->requires_grad || w->requires_grad || b->requires_grad) {
        n->requires_grad = true;
        n->parents = {x, w, b};
        auto raw = n.get();
        auto px = x.get();
        auto pw = w.get();
        auto pb = b.get();
        n->backprop = [raw, px, pw, pb, N, C, H, W, OC, KH, KW, stride, pad, K, P]() {
            std::vector<double> col(static_cast<std::size_t>(K) * P);
            std::vector<double> dcol(static_cast<std::size_t>(K) * P);
            CMapM wm(pw->value.data(), OC, K);
            for (int s = 0; s < N; ++s) {
                CMapM dym(raw->grad.data() + static_cast<std::size_t>(s) * OC * P, OC,
                          static_cast<int>(P));
                if (pb->requires_grad)
                    for (int oc = 0; oc < OC; ++oc) pb->grad[oc] += dym.row(oc).sum();
                if (pw->requires_grad) {
                    im2col(px->value.data() + static_cast<std::size_t>(s) * C * H * W, C, H, W,
                           KH, KW, stride, pad, col.data());
                    CMapM cm(col.data(), K, static_cast<int>(P));
                    MapM dwm(pw->grad.data(), OC, K);
                    dwm.noalias() += dym * cm.transpose();
                }
                if (px->requires_grad) {
                    MapM dcm(dcol.data(), K, static_cast<int>(P));
                    dcm.noalias() = wm.transpose() * dym;
                    col2im(dcol.data(), C, H, W, KH, KW, stride, pad,
                           px->grad.data() + static_cast<std::size_t>(s) * C * H * W);
                }
            }
        };
    }
    return n;
}

NodeP conv_transpose2d(const NodeP& x, const NodeP& w, const NodeP& b, int stride, int pad,
                       int outpad) {
    if (x->value.ndim() != 4 || w->value.ndim() != 4)
        throw std::invalid_argument("conv_transpose2d: expected 4-D input and weight");
    const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    const int OC = w->value.dim(1), KH = w->value.dim(2), KW = w->value.dim(3);
    if (w->value.dim(0) != C) throw std::invalid_argument("conv_transpose2d: channel mismatch");
    if (outpad >= stride) throw std::invalid_argument("conv_transpose2d: outpad must be < stride");
    const int OH = (H - 1) * stride - 2 * pad + KH + outpad;
    const int OW = (W - 1) * stride - 2 * pad + KW + outpad;
    if (conv_out(OH, KH, stride, pad) != H || conv_out(OW, KW, stride, pad) != W)
        throw std::invalid_argument("conv_transpose2d: inconsistent geometry");
    const int K = OC * KH * KW;
    const std::size_t P = static_cast<std::size_t>(H) * W;
    const std::size_t OP = static_cast<std::size_t>(OH) * OW;

    auto n = std::make_shared<Node>();
    n->value = Tensor::zeros({N, OC, OH, OW});
    std::vector<double> col(static_cast<std::size_t>(K) * P);
    CMapM wm(w->value.data(), C, K); // (C, OC*KH*KW)
    for (int s = 0; s < N; ++s) {
        CMapM xm(x->value.data() + static_cast<std::size_t>(s) * C * P, C, static_cast<int>(P));
        MapM cm(col.data(), K, static_cast<int>(P));
        cm.noalias() = wm.transpose() * xm;
        double* y = n->value.data() + static_cast<std::size_t>(s) * OC * OP;
        col2im(col.data(), OC, OH, OW, KH, KW, stride, pad, y);
        for (int oc = 0; oc < OC; ++oc) {
            double* q = y + static_cast<std::size_t>(oc) * OP;
            for (std::size_t i = 0; i < OP; ++i) q[i] += b->value[oc];
        }
    }

    if (x->requires_grad || w->requires_grad || b->requires_grad) {
        n->requires_grad = true;
        n->parents = {x, w, b};
        auto raw = n.get();
        auto px = x.get();
        auto pw = w.get();
        auto pb = b.get();
        n->backprop = [raw, px, pw, pb, N, C, OC, OH, OW, KH, KW, stride, pad, K, P, OP]() {
            std::vector<double> dcol(static_cast<std::size_t>(K) * P);
            CMapM wm(pw->value.data(), C, K);
            for (int s = 0; s < N; ++s) {
                const double* dy = raw->grad.data() + static_cast<std::size_t>(s) * OC * OP;
                if (pb->requires_grad)
                    for (int oc = 0; oc < OC; ++oc) {
                        const double* q = dy + static_cast<std::size_t>(oc) * OP;
                        double acc = 0.0;
                        for (std::size_t i = 0; i < OP; ++i) acc += q[i];
                        pb->grad[oc] += acc;
                    }
                im2col(dy, OC, OH, OW, KH, KW, stride, pad, dcol.data());
                CMapM dcm(dcol.data(), K, static_cast<int>(P));
                if (px->requires_grad) {
                    MapM dxm(px->grad.data() + static_cast<std::size_t>(s) * C * P, C,
                             static_cast<int>(P));
                    dxm.noalias() += wm * dcm;
                }
                if (pw->requires_grad) {
                    CMapM xm(px->value.data() + static_cast<std::size_t>(s) * C * P, C,
                             static_cast<int>(P));
                    MapM dwm(pw->grad.data(), C, K);
                    dwm.noalias() += xm * dcm.transpose();
                }
            }
        };
    }
    return n;
}

} // namespace reflectsep::ad
