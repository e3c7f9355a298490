#include "reflectsep/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace reflectsep::ad {

NodeP constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    return n;
}

NodeP param_node(const ParamP& p) {
    auto n = std::make_shared<Node>();
    n->value = p->value; // shared buffer: optimizer updates are visible
    n->requires_grad = true;
    n->param = p;
    auto raw = n.get();
    n->backprop = [raw]() {
        Tensor& g = raw->param->grad;
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += raw->grad[i];
    };
    return n;
}

NodeP detach(const NodeP& x) { return constant(x->value); }

void backward(const NodeP& root) {
    if (root->value.numel() != 1) throw std::invalid_argument("backward: root must be scalar");
    // Topological order, children before parents.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<NodeP, std::size_t>> stack{{root, 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            NodeP next = node->parents[idx++];
            if (seen.insert(next.get()).second) stack.emplace_back(next, 0);
        } else {
            order.push_back(node.get());
            stack.pop_back();
        }
    }
    // order is postorder (parents before children); reverse for backprop.
    std::reverse(order.begin(), order.end());
    root->ensure_grad();
    root->grad[0] = 1.0;
    for (Node* n : order) {
        if (!n->requires_grad || !n->backprop) continue;
        n->ensure_grad();
        for (auto& p : n->parents) p->ensure_grad();
        n->backprop();
    }
}

namespace {

bool any_grad(std::initializer_list<const NodeP*> xs) {
    for (auto* x : xs)
        if ((*x)->requires_grad) return true;
    return false;
}

std::vector<int> broadcast_shape(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("broadcast: rank mismatch");
    std::vector<int> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == b[i] || b[i] == 1)
            out[i] = a[i];
        else if (a[i] == 1)
            out[i] = b[i];
        else
            throw std::invalid_argument("broadcast: incompatible shapes");
    }
    return out;
}

std::vector<std::size_t> strides_for(const std::vector<int>& shape) {
    std::vector<std::size_t> s(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        s[i] = s[i + 1] * static_cast<std::size_t>(shape[i + 1]);
    return s;
}

// Iterate an output shape, applying f(out_index, a_index, b_index).
template <typename F>
void broadcast_iterate(const std::vector<int>& out_shape, const std::vector<int>& a_shape,
                       const std::vector<int>& b_shape, F&& f) {
    const auto out_str = strides_for(out_shape);
    const auto a_str = strides_for(a_shape);
    const auto b_str = strides_for(b_shape);
    const std::size_t n = Tensor::numel_of(out_shape);
    const std::size_t rank = out_shape.size();
    std::vector<int> idx(rank, 0);
    std::size_t ai = 0, bi = 0;
    for (std::size_t i = 0; i < n; ++i) {
        f(i, ai, bi);
        for (int d = static_cast<int>(rank) - 1; d >= 0; --d) {
            ++idx[d];
            if (a_shape[d] != 1) ai += a_str[d];
            if (b_shape[d] != 1) bi += b_str[d];
            if (idx[d] < out_shape[d]) break;
            idx[d] = 0;
            if (a_shape[d] != 1) ai -= a_str[d] * static_cast<std::size_t>(a_shape[d]);
            if (b_shape[d] != 1) bi -= b_str[d] * static_cast<std::size_t>(b_shape[d]);
        }
    }
}

NodeP binary_op(const NodeP& a, const NodeP& b, double (*fwd)(double, double),
                void (*bwd)(double va, double vb, double g, double& ga, double& gb)) {
    auto n = std::make_shared<Node>();
    const auto& as = a->value.shape;
    const auto& bs = b->value.shape;
    if (as == bs) {
        n->value = Tensor::zeros(as);
        for (std::size_t i = 0; i < n->value.numel(); ++i)
            n->value[i] = fwd(a->value[i], b->value[i]);
    } else {
        n->value = Tensor::zeros(broadcast_shape(as, bs));
        broadcast_iterate(n->value.shape, as, bs, [&](std::size_t oi, std::size_t ai, std::size_t bi) {
            n->value[oi] = fwd(a->value[ai], b->value[bi]);
        });
    }
    if (any_grad({&a, &b})) {
        n->requires_grad = true;
        n->parents = {a, b};
        auto raw = n.get();
        auto pa = a.get();
        auto pb = b.get();
        n->backprop = [raw, pa, pb, bwd]() {
            broadcast_iterate(raw->value.shape, pa->value.shape, pb->value.shape,
                              [&](std::size_t oi, std::size_t ai, std::size_t bi) {
                                  double ga = 0, gb = 0;
                                  bwd(pa->value[ai], pb->value[bi], raw->grad[oi], ga, gb);
                                  if (pa->requires_grad) pa->grad[ai] += ga;
                                  if (pb->requires_grad) pb->grad[bi] += gb;
                              });
        };
    }
    return n;
}

NodeP unary_op(const NodeP& x, double (*fwd)(double), double (*deriv)(double vx, double vy)) {
    auto n = std::make_shared<Node>();
    n->value = Tensor::zeros(x->value.shape);
    for (std::size_t i = 0; i < n->value.numel(); ++i) n->value[i] = fwd(x->value[i]);
    if (x->requires_grad) {
        n->requires_grad = true;
        n->parents = {x};
        auto raw = n.get();
        auto px = x.get();
        n->backprop = [raw, px, deriv]() {
            for (std::size_t i = 0; i < raw->value.numel(); ++i)
                px->grad[i] += raw->grad[i] * deriv(px->value[i], raw->value[i]);
        };
    }
    return n;
}

} // namespace

NodeP add(const NodeP& a, const NodeP& b) {
    return binary_op(
        a, b, [](double x, double y) { return x + y; },
        [](double, double, double g, double& ga, double& gb) {
            ga = g;
            gb = g;
        });
}

NodeP sub(const NodeP& a, const NodeP& b) {
    return binary_op(
        a, b, [](double x, double y) { return x - y; },
        [](double, double, double g, double& ga, double& gb) {
            ga = g;
            gb = -g;
        });
}

NodeP mul(const NodeP& a, const NodeP& b) {
    return binary_op(
        a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double g, double& ga, double& gb) {
            ga = g * y;
            gb = g * x;
        });
}

NodeP scale(const NodeP& x, double s) {
    auto n = std::make_shared<Node>();
    n->value = Tensor::zeros(x->value.shape);
    for (std::size_t i = 0; i < n->value.numel(); ++i) n->value[i] = s * x->value[i];
    if (x->requires_grad) {
        n->requires_grad = true;
        n->parents = {x};
        auto raw = n.get();
        auto px = x.get();
        n->backprop = [raw, px, s]() {
            for (std::size_t i = 0; i < raw->value.numel(); ++i) px->grad[i] += s * raw->grad[i];
        };
    }
    return n;
}

NodeP add_scalar(const NodeP& x, double s) {
    auto n = std::make_shared<Node>();
    n->value = Tensor::zeros(x->value.shape);
    for (std::size_t i = 0; i < n->value.numel(); ++i) n->value[i] = x->value[i] + s;
    if (x->requires_grad) {
        n->requires_grad = true;
        n->parents = {x};
        auto raw = n.get();
        auto px = x.get();
        n->backprop = [raw, px]() {
            for (std::size_t i = 0; i < raw->value.numel(); ++i) px->grad[i] += raw->grad[i];
        };
    }
    return n;
}

NodeP relu(const NodeP& x) {
    return unary_op(
        x, [](double v) { return v > 0 ? v : 0.0; },
        [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

NodeP leaky_relu(const NodeP& x, double slope) {
    auto n = std::make_shared<Node>();
    n->value = Tensor::zeros(x->value.shape);
    for (std::size_t i = 0; i < n->value.numel(); ++i) {
        const double v = x->value[i];
        n->value[i] = v > 0 ? v : slope * v;
    }
    if (x->requires_grad) {
        n->requires_grad = true;
        n->parents = {x};
        auto raw = n.get();
        auto px = x.get();
        n->backprop = [raw, px, slope]() {
            for (std::size_t i = 0; i < raw->value.numel(); ++i)
                px->grad[i] += raw->grad[i] * (px->value[i] > 0 ? 1.0 : slope);
        };
    }
    return n;
}

NodeP sigmoid(const NodeP& x) {
    return unary_op(
        x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

NodeP clamp(const NodeP& x, double lo, double hi) {
    auto n = std::make_shared<Node>();
    n->value = Tensor::zeros(x->value.shape);
    for (std::size_t i = 0; i < n->value.numel(); ++i)
        n->value[i] = std::min(std::max(x->value[i], lo), hi);
    if (x->requires_grad) {
        n->requires_grad = true;
        n->parents = {x};
        auto raw = n.get();
        auto px = x.get();
        n->backprop = [raw, px, lo, hi]() {
            for (std::size_t i = 0; i < raw->value.numel(); ++i) {
                const double v = px->value[i];
                if (v >= lo && v <= hi) px->grad[i] += raw->grad[i];
            }
        };
    }
    return n;
}

NodeP log_op(const NodeP& x) {
    return unary_op(
        x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

NodeP reshape(const NodeP& x, std::vector<int> shape) {
    auto n = std::make_shared<Node>();
    n->value = x->value.reshaped(std::move(shape));
    if (x->requires_grad) {
        n->requires_grad = true;
        n->parents = {x};
        auto raw = n.get();
        auto px = x.get();
        n->backprop = [raw, px]() {
            for (std::size_t i = 0; i < raw->grad.numel(); ++i) px->grad[i] += raw->grad[i];
        };
    }
    return n;
}

NodeP mean_all(const NodeP& x) {
    auto n = std::make_shared<Node>();
    const std::size_t cnt = x->value.numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < cnt; ++i) acc += x->value[i];
    n->value = Tensor::scalar(acc / static_cast<double>(cnt));
    if (x->requires_grad) {
        n->requires_grad = true;
        n->parents = {x};
        auto raw = n.get();
        auto px = x.get();
        n->backprop = [raw, px, cnt]() {
            const double g = raw->grad[0] / static_cast<double>(cnt);
            for (std::size_t i = 0; i < cnt; ++i) px->grad[i] += g;
        };
    }
    return n;
}

NodeP l1_mean(const NodeP& a, const NodeP& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("l1_mean: shape mismatch");
    auto n = std::make_shared<Node>();
    const std::size_t cnt = a->value.numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < cnt; ++i) acc += std::fabs(a->value[i] - b->value[i]);
    n->value = Tensor::scalar(acc / static_cast<double>(cnt));
    if (any_grad({&a, &b})) {
        n->requires_grad = true;
        n->parents = {a, b};
        auto raw = n.get();
        auto pa = a.get();
        auto pb = b.get();
        n->backprop = [raw, pa, pb, cnt]() {
            const double g = raw->grad[0] / static_cast<double>(cnt);
            for (std::size_t i = 0; i < cnt; ++i) {
                const double d = pa->value[i] - pb->value[i];
                const double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); // subgradient 0 at 0
                if (pa->requires_grad) pa->grad[i] += g * s;
                if (pb->requires_grad) pb->grad[i] -= g * s;
            }
        };
    }
    return n;
}

NodeP l2_norm_mean(const NodeP& a, const NodeP& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("l2_norm_mean: shape mismatch");
    auto n = std::make_shared<Node>();
    const std::size_t cnt = a->value.numel();
    double ss = 0.0;
    for (std::size_t i = 0; i < cnt; ++i) {
        const double d = a->value[i] - b->value[i];
        ss += d * d;
    }
    const double norm = std::sqrt(ss);
    n->value = Tensor::scalar(norm / static_cast<double>(cnt));
    if (any_grad({&a, &b})) {
        n->requires_grad = true;
        n->parents = {a, b};
        auto raw = n.get();
        auto pa = a.get();
        auto pb = b.get();
        n->backprop = [raw, pa, pb, cnt, norm]() {
            if (norm == 0.0) return; // gradient defined as 0 at the kink
            const double g = raw->grad[0] / (norm * static_cast<double>(cnt));
            for (std::size_t i = 0; i < cnt; ++i) {
                const double d = pa->value[i] - pb->value[i];
                if (pa->requires_grad) pa->grad[i] += g * d;
                if (pb->requires_grad) pb->grad[i] -= g * d;
            }
        };
    }
    return n;
}

NodeP concat_channels(const std::vector<NodeP>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: empty input");
    const int N = xs[0]->value.dim(0), H = xs[0]->value.dim(2), W = xs[0]->value.dim(3);
    int C = 0;
    for (const auto& x : xs) {
        if (x->value.ndim() != 4 || x->value.dim(0) != N || x->value.dim(2) != H ||
            x->value.dim(3) != W)
            throw std::invalid_argument("concat_channels: shape mismatch");
        C += x->value.dim(1);
    }
    auto n = std::make_shared<Node>();
    n->value = Tensor::zeros({N, C, H, W});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int s = 0; s < N; ++s) {
        std::size_t off = static_cast<std::size_t>(s) * C * plane;
        for (const auto& x : xs) {
            const std::size_t sz = static_cast<std::size_t>(x->value.dim(1)) * plane;
            std::copy(x->value.data() + s * sz, x->value.data() + (s + 1) * sz,
                      n->value.data() + off);
            off += sz;
        }
    }
    bool grad = false;
    for (const auto& x : xs) grad |= x->requires_grad;
    if (grad) {
        n->requires_grad = true;
        n->parents = xs;
        auto raw = n.get();
        std::vector<Node*> parts;
        for (const auto& x : xs) parts.push_back(x.get());
        n->backprop = [raw, parts, N, C, plane]() {
            for (int s = 0; s < N; ++s) {
                std::size_t off = static_cast<std::size_t>(s) * C * plane;
                for (Node* x : parts) {
                    const std::size_t sz = static_cast<std::size_t>(x->value.dim(1)) * plane;
                    if (x->requires_grad)
                        for (std::size_t i = 0; i < sz; ++i)
                            x->grad[s * sz + i] += raw->grad[off + i];
                    off += sz;
                }
            }
        };
    }
    return n;
}

NodeP batch_norm(const NodeP& x, const NodeP& gamma, const NodeP& beta,
                 const ParamP& running_mean, const ParamP& running_var, bool training,
                 double momentum, double eps) {
    if (x->value.ndim() != 4) throw std::invalid_argument("batch_norm: expected NCHW");
    const int N = x->value.dim(0), C = x->value.dim(1), H = x->value.dim(2), W = x->value.dim(3);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const std::size_t per_c = static_cast<std::size_t>(N) * plane;

    auto n = std::make_shared<Node>();
    n->value = Tensor::zeros(x->value.shape);
    auto mean = std::make_shared<std::vector<double>>(C, 0.0);
    auto inv_std = std::make_shared<std::vector<double>>(C, 0.0);

    for (int c = 0; c < C; ++c) {
        double mu = 0.0, var = 0.0;
        if (training) {
            for (int s = 0; s < N; ++s) {
                const double* p = x->value.data() + (static_cast<std::size_t>(s) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) mu += p[i];
            }
            mu /= static_cast<double>(per_c);
            for (int s = 0; s < N; ++s) {
                const double* p = x->value.data() + (static_cast<std::size_t>(s) * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double d = p[i] - mu;
                    var += d * d;
                }
            }
            var /= static_cast<double>(per_c);
            running_mean->value[c] = momentum * running_mean->value[c] + (1.0 - momentum) * mu;
            running_var->value[c] = momentum * running_var->value[c] + (1.0 - momentum) * var;
        } else {
            mu = running_mean->value[c];
            var = running_var->value[c];
        }
        (*mean)[c] = mu;
        (*inv_std)[c] = 1.0 / std::sqrt(var + eps);
        const double g = gamma->value[c], b = beta->value[c];
        for (int s = 0; s < N; ++s) {
            const double* p = x->value.data() + (static_cast<std::size_t>(s) * C + c) * plane;
            double* q = n->value.data() + (static_cast<std::size_t>(s) * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) q[i] = g * (p[i] - mu) * (*inv_std)[c] + b;
        }
    }

    if (any_grad({&x, &gamma, &beta})) {
        n->requires_grad = true;
        n->parents = {x, gamma, beta};
        auto raw = n.get();
        auto px = x.get();
        auto pg = gamma.get();
        auto pb = beta.get();
        n->backprop = [raw, px, pg, pb, mean, inv_std, N, C, plane, per_c, training]() {
            for (int c = 0; c < C; ++c) {
                const double mu = (*mean)[c], is = (*inv_std)[c], g = pg->value[c];
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (int s = 0; s < N; ++s) {
                    const std::size_t off = (static_cast<std::size_t>(s) * C + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        const double dy = raw->grad[off + i];
                        const double xhat = (px->value[off + i] - mu) * is;
                        sum_dy += dy;
                        sum_dy_xhat += dy * xhat;
                    }
                }
                if (pg->requires_grad) pg->grad[c] += sum_dy_xhat;
                if (pb->requires_grad) pb->grad[c] += sum_dy;
                if (px->requires_grad) {
                    const double inv_n = 1.0 / static_cast<double>(per_c);
                    for (int s = 0; s < N; ++s) {
                        const std::size_t off = (static_cast<std::size_t>(s) * C + c) * plane;
                        for (std::size_t i = 0; i < plane; ++i) {
                            const double dy = raw->grad[off + i];
                            const double xhat = (px->value[off + i] - mu) * is;
                            double dx;
                            if (training)
                                dx = g * is * (dy - inv_n * sum_dy - xhat * inv_n * sum_dy_xhat);
                            else
                                dx = g * is * dy;
                            px->grad[off + i] += dx;
                        }
                    }
                }
            }
        };
    }
    return n;
}

NodeP global_avg_pool(const NodeP& x) {
    if (x->value.ndim() != 4) throw std::invalid_argument("global_avg_pool: expected NCHW");
    const int N = x->value.dim(0), C = x->value.dim(1);
    const std::size_t plane = static_cast<std::size_t>(x->value.dim(2)) * x->value.dim(3);
    auto n = std::make_shared<Node>();
    n->value = Tensor::zeros({N, C});
    for (int s = 0; s < N; ++s)
        for (int c = 0; c < C; ++c) {
            const double* p = x->value.data() + (static_cast<std::size_t>(s) * C + c) * plane;
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            n->value[static_cast<std::size_t>(s) * C + c] = acc / static_cast<double>(plane);
        }
    if (x->requires_grad) {
        n->requires_grad = true;
        n->parents = {x};
        auto raw = n.get();
        auto px = x.get();
        n->backprop = [raw, px, N, C, plane]() {
            for (int s = 0; s < N; ++s)
                for (int c = 0; c < C; ++c) {
                    const double g = raw->grad[static_cast<std::size_t>(s) * C + c] /
                                     static_cast<double>(plane);
                    double* q = px->grad.data() + (static_cast<std::size_t>(s) * C + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) q[i] += g;
                }
        };
    }
    return n;
}

NodeP linear(const NodeP& x, const NodeP& w, const NodeP& b) {
    if (x->value.ndim() != 2 || w->value.ndim() != 2)
        throw std::invalid_argument("linear: expected 2-D input and weight");
    const int N = x->value.dim(0), C = x->value.dim(1), M = w->value.dim(1);
    if (w->value.dim(0) != C || b->value.dim(0) != M)
        throw std::invalid_argument("linear: shape mismatch");
    auto n = std::make_shared<Node>();
    n->value = Tensor::zeros({N, M});
    for (int s = 0; s < N; ++s)
        for (int m = 0; m < M; ++m) {
            double acc = b->value[m];
            for (int c = 0; c < C; ++c)
                acc += x->value[static_cast<std::size_t>(s) * C + c] *
                       w->value[static_cast<std::size_t>(c) * M + m];
            n->value[static_cast<std::size_t>(s) * M + m] = acc;
        }
    if (any_grad({&x, &w, &b})) {
        n->requires_grad = true;
        n->parents = {x, w, b};
        auto raw = n.get();
        auto px = x.get();
        auto pw = w.get();
        auto pbias = b.get();
        n->backprop = [raw, px, pw, pbias, N, C, M]() {
            for (int s = 0; s < N; ++s)
                for (int m = 0; m < M; ++m) {
                    const double g = raw->grad[static_cast<std::size_t>(s) * M + m];
                    if (pbias->requires_grad) pbias->grad[m] += g;
                    for (int c = 0; c < C; ++c) {
                        if (pw->requires_grad)
                            pw->grad[static_cast<std::size_t>(c) * M + m] +=
                                g * px->value[static_cast<std::size_t>(s) * C + c];
                        if (px->requires_grad)
                            px->grad[static_cast<std::size_t>(s) * C + c] +=
                                g * pw->value[static_cast<std::size_t>(c) * M + m];
                    }
                }
        };
    }
    return n;
}

} // namespace reflectsep::ad
