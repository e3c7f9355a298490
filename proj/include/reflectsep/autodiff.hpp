#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "reflectsep/tensor.hpp"

namespace reflectsep::ad {

// Trainable (or tracked) array with its gradient accumulator and optimizer
// moments. Shared parameters are shared_ptrs aliased by multiple layers.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m, v;   // adaptive-moment buffers, shape-matched to value
    long step = 0; // per-parameter update count (bias correction)
    bool trainable = true;

    explicit Parameter(std::string n, Tensor val, bool train = true)
        : name(std::move(n)), value(std::move(val)), trainable(train) {
        grad = Tensor::zeros(value.shape);
        if (trainable) {
            m = Tensor::zeros(value.shape);
            v = Tensor::zeros(value.shape);
        }
    }
    void zero_grad() { std::fill(grad.data(), grad.data() + grad.numel(), 0.0); }
};
using ParamP = std::shared_ptr<Parameter>;

// One vertex of the define-by-run tape.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop; // reads this->grad, accumulates into parents
    ParamP param;                   // set for parameter leaves

    void ensure_grad() {
        if (grad.numel() == 0) grad = Tensor::zeros(value.shape);
    }
};
using NodeP = std::shared_ptr<Node>;

NodeP constant(Tensor v);
NodeP param_node(const ParamP& p);
NodeP detach(const NodeP& x);

// Runs reverse-mode accumulation from a scalar root; parameter leaves add
// into their Parameter::grad.
void backward(const NodeP& root);

// --- elementwise / broadcast ---
// Binary ops broadcast dims of size 1 (same rank required).
NodeP add(const NodeP& a, const NodeP& b);
NodeP sub(const NodeP& a, const NodeP& b);
NodeP mul(const NodeP& a, const NodeP& b);
NodeP scale(const NodeP& x, double s);
NodeP add_scalar(const NodeP& x, double s);
NodeP relu(const NodeP& x);
NodeP leaky_relu(const NodeP& x, double slope);
NodeP sigmoid(const NodeP& x);
NodeP clamp(const NodeP& x, double lo, double hi); // zero gradient outside [lo,hi]
NodeP log_op(const NodeP& x);
NodeP reshape(const NodeP& x, std::vector<int> shape);

// --- reductions / losses ---
NodeP mean_all(const NodeP& x);                    // scalar
NodeP l1_mean(const NodeP& a, const NodeP& b);     // mean |a-b|; subgradient 0 at 0
NodeP l2_norm_mean(const NodeP& a, const NodeP& b); // ||a-b||_2 / numel; gradient 0 at 0

// --- structure ---
NodeP concat_channels(const std::vector<NodeP>& xs); // along dim 1 of NCHW

// --- network layers ---
// x (N,C,H,W), w (OC,C,KH,KW), b (OC); zero padding.
NodeP conv2d(const NodeP& x, const NodeP& w, const NodeP& b, int stride, int pad);
// x (N,C,H,W), w (C,OC,KH,KW), b (OC); OH = (H-1)*stride - 2*pad + KH + outpad.
NodeP conv_transpose2d(const NodeP& x, const NodeP& w, const NodeP& b,
                       int stride, int pad, int outpad);
// Per-channel batch norm over (N,H,W). In training mode uses batch statistics
// and updates the running buffers in place (momentum towards history).
NodeP batch_norm(const NodeP& x, const NodeP& gamma, const NodeP& beta,
                 const ParamP& running_mean, const ParamP& running_var,
                 bool training, double momentum = 0.9, double eps = 1e-5);
NodeP global_avg_pool(const NodeP& x); // (N,C,H,W) -> (N,C)
NodeP linear(const NodeP& x, const NodeP& w, const NodeP& b); // (N,C)x(C,M)+(M)

} // namespace reflectsep::ad
