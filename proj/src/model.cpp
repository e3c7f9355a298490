#include "reflectsep/model.hpp"

#include <algorithm>
#include <stdexcept>

#include "reflectsep/errors.hpp"

namespace reflectsep {

using ad::NodeP;
using ad::ParamP;

std::string to_string(Variant v) {
    switch (v) {
        case Variant::B1: return "b1";
        case Variant::B2: return "b2";
        case Variant::B3: return "b3";
        case Variant::MASK: return "mask";
    }
    return "?";
}

Variant variant_from_string(const std::string& s) {
    if (s == "b1") return Variant::B1;
    if (s == "b2") return Variant::B2;
    if (s == "b3") return Variant::B3;
    if (s == "mask") return Variant::MASK;
    throw DataError("unknown variant: " + s);
}

namespace {
constexpr double kLReluSlope = 0.2;
constexpr double kInitStd = 0.02;

std::string branch_tag(Branch b) {
    switch (b) {
        case Branch::T: return "t";
        case Branch::R: return "r";
        case Branch::Y: return "y";
        case Branch::M: return "m";
    }
    return "?";
}
} // namespace

ParamP SeparatorModel::make_param(const std::string& name, std::vector<int> shape,
                                  RandomState& rng, double stddev, bool trainable) {
    Tensor t(shape);
    if (stddev > 0.0)
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
    auto p = std::make_shared<ad::Parameter>(name, std::move(t), trainable);
    params_.push_back(p);
    return p;
}

ConvLayer SeparatorModel::make_conv(const std::string& name, int in_c, int out_c, int k,
                                    int stride, int pad, RandomState& rng) {
    ConvLayer l;
    l.w = make_param(name + ".w", {out_c, in_c, k, k}, rng, kInitStd);
    l.b = make_param(name + ".b", {out_c}, rng, 0.0);
    l.stride = stride;
    l.pad = pad;
    return l;
}

ConvTLayer SeparatorModel::make_convt(const std::string& name, int in_c, int out_c, int stride,
                                      RandomState& rng) {
    ConvTLayer l;
    l.w = make_param(name + ".w", {in_c, out_c, 5, 5}, rng, kInitStd);
    l.b = make_param(name + ".b", {out_c}, rng, 0.0);
    l.stride = stride;
    l.pad = 2;
    l.outpad = stride == 2 ? 1 : 0;
    return l;
}

BNLayer SeparatorModel::make_bn(const std::string& name, int c, RandomState& rng) {
    BNLayer l;
    l.gamma = make_param(name + ".gamma", {c}, rng, 0.0);
    std::fill(l.gamma->value.data(), l.gamma->value.data() + c, 1.0);
    l.beta = make_param(name + ".beta", {c}, rng, 0.0);
    l.rmean = make_param(name + ".rmean", {c}, rng, 0.0, /*trainable=*/false);
    l.rvar = make_param(name + ".rvar", {c}, rng, 0.0, /*trainable=*/false);
    std::fill(l.rvar->value.data(), l.rvar->value.data() + c, 1.0);
    return l;
}

DecoderBranch SeparatorModel::make_decoder(const std::string& prefix, int out_channels,
                                           RandomState& rng, const DecoderBranch* shared) {
    DecoderBranch d;
    d.out_channels = out_channels;
    const int c256 = ch(256), c128 = ch(128), c64 = ch(64), c32 = ch(32);
    // Decoder stage strides mirror the encoder halvings (stride 1 where the
    // matching encoder stage saturated at 1x1).
    auto stage_stride = [&](int stage) {
        const int in = enc_sizes_[7 - stage], out = enc_sizes_[6 - stage];
        return out == in ? 1 : 2;
    };
    if (shared) {
        d.conv1 = shared->conv1;
        d.bn1 = shared->bn1;
        d.fconv[0] = shared->fconv[0];
        d.bn[0] = shared->bn[0];
        d.fconv[1] = shared->fconv[1];
        d.bn[1] = shared->bn[1];
        for (const char* leaf : {"conv1.w", "conv1.b", "bn1.gamma", "bn1.beta", "bn1.rmean",
                                 "bn1.rvar", "fconv2.w", "fconv2.b", "bn2.gamma", "bn2.beta",
                                 "bn2.rmean", "bn2.rvar", "fconv3.w", "fconv3.b", "bn3.gamma",
                                 "bn3.beta", "bn3.rmean", "bn3.rvar"})
            sharing_map_.emplace_back(prefix + "." + leaf, std::string("gen.shared.") + leaf);
    } else {
        d.conv1 = make_conv(prefix + ".conv1", ch(128), c256, 1, 1, 0, rng);
        d.bn1 = make_bn(prefix + ".bn1", c256, rng);
        d.fconv[0] = make_convt(prefix + ".fconv2", c256, c256, stage_stride(2), rng);
        d.bn[0] = make_bn(prefix + ".bn2", c256, rng);
        d.fconv[1] = make_convt(prefix + ".fconv3", c256 + ch(256), c128, stage_stride(3), rng);
        d.bn[1] = make_bn(prefix + ".bn3", c128, rng);
    }
    d.fconv[2] = make_convt(prefix + ".fconv4", c128 + ch(128), c64, stage_stride(4), rng);
    d.bn[2] = make_bn(prefix + ".bn4", c64, rng);
    d.fconv[3] = make_convt(prefix + ".fconv5", c64 + ch(64), c32, stage_stride(5), rng);
    d.bn[3] = make_bn(prefix + ".bn5", c32, rng);
    d.fconv[4] = make_convt(prefix + ".fconv6", c32 + ch(32), out_channels, stage_stride(6), rng);
    return d;
}

Discriminator SeparatorModel::make_disc(const std::string& prefix, int in_c, RandomState& rng) {
    Discriminator d;
    const int c[6] = {ch(32), ch(64), ch(128), ch(256), ch(256), 1};
    int prev = in_c;
    for (int i = 0; i < 5; ++i) {
        d.conv[i] = make_conv(prefix + ".conv" + std::to_string(i + 1), prev, c[i], 5, 2, 2, rng);
        prev = c[i];
    }
    d.conv[5] = make_conv(prefix + ".conv6", prev, 1, 1, 1, 0, rng);
    for (int i = 0; i < 4; ++i)
        d.bn[i] = make_bn(prefix + ".bn" + std::to_string(i + 2), c[i + 1], rng);
    return d;
}

SeparatorModel::SeparatorModel(Variant variant, RandomState& rng, int input_size, int channel_div)
    : variant_(variant), input_size_(input_size), channel_div_(channel_div) {
    conditional_ = variant != Variant::MASK;
    enc_sizes_.push_back(input_size);
    for (int i = 0; i < 5; ++i) {
        const int prev = enc_sizes_.back();
        const int next = (prev + 1) / 2; // k5 s2 p2
        if (prev != 2 * next && prev != next)
            throw std::invalid_argument("SeparatorModel: unsupported input size");
        enc_sizes_.push_back(next);
    }

    const int encC[5] = {ch(32), ch(64), ch(128), ch(256), ch(256)};
    int prev = 3;
    for (int i = 0; i < 5; ++i) {
        enc_conv_[i] = make_conv("enc.conv" + std::to_string(i + 1), prev, encC[i], 5, 2, 2, rng);
        prev = encC[i];
    }
    enc_conv_[5] = make_conv("enc.conv6", prev, ch(128), 1, 1, 0, rng);

    const bool share = variant != Variant::B1;
    std::optional<DecoderBranch> shared;
    if (share) shared = make_decoder("gen.shared", 3, rng, nullptr);
    // gen.shared only contributes the first three layers; drop its tail params.
    if (share) {
        params_.erase(std::remove_if(params_.begin(), params_.end(),
                                     [](const ParamP& p) {
                                         return p->name.rfind("gen.shared.fconv4", 0) == 0 ||
                                                p->name.rfind("gen.shared.fconv5", 0) == 0 ||
                                                p->name.rfind("gen.shared.fconv6", 0) == 0 ||
                                                p->name.rfind("gen.shared.bn4", 0) == 0 ||
                                                p->name.rfind("gen.shared.bn5", 0) == 0;
                                     }),
                      params_.end());
    }
    for (Branch b : active_branches()) {
        const int out_c = b == Branch::M ? 1 : 3;
        dec_.emplace(b, make_decoder("dec." + branch_tag(b), out_c, rng,
                                     share ? &*shared : nullptr));
    }
    if (variant_ == Variant::B3) {
        wy_w_ = make_param("wy.w", {ch(128), 1}, rng, kInitStd);
        wy_b_ = make_param("wy.b", {1}, rng, 0.0);
    }
    const int disc_in = conditional_ ? 6 : 3;
    disc_t_ = make_disc("disc.t", disc_in, rng);
    disc_r_ = make_disc("disc.r", disc_in, rng);
}

std::vector<Branch> SeparatorModel::active_branches() const {
    switch (variant_) {
        case Variant::B1: return {Branch::T, Branch::R};
        case Variant::B2:
        case Variant::B3: return {Branch::T, Branch::R, Branch::Y};
        case Variant::MASK: return {Branch::T, Branch::R, Branch::Y, Branch::M};
    }
    return {};
}

bool SeparatorModel::branch_active(Branch b) const {
    auto v = active_branches();
    return std::find(v.begin(), v.end(), b) != v.end();
}

EncOut SeparatorModel::encode(const NodeP& y) const {
    if (y->value.ndim() != 4 || y->value.dim(1) != 3 || y->value.dim(2) != input_size_ ||
        y->value.dim(3) != input_size_)
        throw std::invalid_argument("encode: expected (N,3," + std::to_string(input_size_) + "," +
                                    std::to_string(input_size_) + "), got " + y->value.shape_str());
    ++encode_calls;
    EncOut out;
    NodeP h = y;
    for (int i = 0; i < 5; ++i) {
        const ConvLayer& l = enc_conv_[i];
        h = ad::leaky_relu(ad::conv2d(h, ad::param_node(l.w), ad::param_node(l.b), l.stride, l.pad),
                           kLReluSlope);
        out.f[i] = h;
    }
    const ConvLayer& l6 = enc_conv_[5];
    out.bottleneck = ad::leaky_relu(
        ad::conv2d(h, ad::param_node(l6.w), ad::param_node(l6.b), l6.stride, l6.pad), kLReluSlope);
    return out;
}

NodeP SeparatorModel::decode(Branch branch, const EncOut& enc) const {
    auto it = dec_.find(branch);
    if (it == dec_.end())
        throw std::invalid_argument("decode: branch inactive for variant " + to_string(variant_));
    const DecoderBranch& d = it->second;
    const bool train = training_mode;

    NodeP h = ad::conv2d(enc.bottleneck, ad::param_node(d.conv1.w), ad::param_node(d.conv1.b),
                         d.conv1.stride, d.conv1.pad);
    h = ad::relu(ad::batch_norm(h, ad::param_node(d.bn1.gamma), ad::param_node(d.bn1.beta),
                                d.bn1.rmean, d.bn1.rvar, train));
    for (int s = 0; s < 5; ++s) {
        if (s >= 1) h = ad::concat_channels({h, enc.f[4 - s]}); // skips: f4, f3, f2, f1
        const ConvTLayer& l = d.fconv[s];
        h = ad::conv_transpose2d(h, ad::param_node(l.w), ad::param_node(l.b), l.stride, l.pad,
                                 l.outpad);
        if (s < 4) {
            const BNLayer& bn = d.bn[s];
            h = ad::relu(ad::batch_norm(h, ad::param_node(bn.gamma), ad::param_node(bn.beta),
                                        bn.rmean, bn.rvar, train));
        } else {
            h = ad::sigmoid(h);
        }
    }
    return h;
}

NodeP SeparatorModel::ratio_head(const EncOut& enc) const {
    if (variant_ != Variant::B3)
        throw std::invalid_argument("ratio_head: only available for variant b3");
    NodeP pooled = ad::global_avg_pool(enc.bottleneck);
    return ad::sigmoid(ad::linear(pooled, ad::param_node(wy_w_), ad::param_node(wy_b_)));
}

NodeP SeparatorModel::disc_forward(const Discriminator& d, const NodeP& x) const {
    NodeP h = x;
    for (int i = 0; i < 5; ++i) {
        const ConvLayer& l = d.conv[i];
        h = ad::conv2d(h, ad::param_node(l.w), ad::param_node(l.b), l.stride, l.pad);
        if (i >= 1) {
            const BNLayer& bn = d.bn[i - 1];
            h = ad::batch_norm(h, ad::param_node(bn.gamma), ad::param_node(bn.beta), bn.rmean,
                               bn.rvar, training_mode);
        }
        h = ad::leaky_relu(h, kLReluSlope);
    }
    const ConvLayer& l6 = d.conv[5];
    h = ad::conv2d(h, ad::param_node(l6.w), ad::param_node(l6.b), l6.stride, l6.pad);
    return ad::sigmoid(h);
}

NodeP SeparatorModel::discriminate(Branch which, const NodeP& x, const NodeP& cond) const {
    if (which != Branch::T && which != Branch::R)
        throw std::invalid_argument("discriminate: which must be T or R");
    if (conditional_ && !cond)
        throw std::invalid_argument("discriminate: conditional discriminator needs cond input");
    if (!conditional_ && cond)
        throw std::invalid_argument("discriminate: unconditional discriminator takes no cond");
    NodeP in = cond ? ad::concat_channels({cond, x}) : x;
    return disc_forward(which == Branch::T ? disc_t_ : disc_r_, in);
}

SepOut SeparatorModel::separate(const NodeP& y) const {
    SepOut out;
    out.enc = encode(y);
    out.t_hat = decode(Branch::T, out.enc);
    out.r_hat = decode(Branch::R, out.enc);
    if (branch_active(Branch::Y)) out.y_hat = decode(Branch::Y, out.enc);
    if (branch_active(Branch::M)) {
        out.mask = decode(Branch::M, out.enc);
        out.mt = ad::mul(out.mask, out.t_hat);
        out.mr = ad::mul(ad::add_scalar(ad::scale(out.mask, -1.0), 1.0), out.r_hat);
    }
    if (variant_ == Variant::B3) out.wy = ratio_head(out.enc);
    return out;
}

SepOut SeparatorModel::separate_values(const Tensor& y_batch) const {
    return separate(ad::constant(y_batch));
}

ParamP SeparatorModel::find_param(const std::string& name) const {
    for (const auto& p : params_)
        if (p->name == name) return p;
    throw std::invalid_argument("unknown parameter: " + name);
}

std::size_t SeparatorModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_)
        if (p->trainable) n += p->value.numel();
    return n;
}

std::vector<ParamP> SeparatorModel::params_with_prefix(
    const std::vector<std::string>& prefixes) const {
    std::vector<ParamP> out;
    for (const auto& p : params_)
        for (const auto& pre : prefixes)
            if (p->name.rfind(pre, 0) == 0) {
                out.push_back(p);
                break;
            }
    return out;
}

SeparatorModel init_model(Variant variant, RandomState& rng, int input_size, int channel_div) {
    return SeparatorModel(variant, rng, input_size, channel_div);
}

Tensor images_to_tensor(const std::vector<Image>& imgs) {
    if (imgs.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
    const int H = imgs[0].height, W = imgs[0].width, C = imgs[0].channels;
    Tensor t({static_cast<int>(imgs.size()), C, H, W});
    for (std::size_t n = 0; n < imgs.size(); ++n) {
        if (!imgs[n].same_shape(imgs[0]))
            throw std::invalid_argument("images_to_tensor: inconsistent shapes");
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    t[((static_cast<std::size_t>(n) * C + c) * H + y) * W + x] = imgs[n].at(y, x, c);
    }
    return t;
}

std::vector<Image> tensor_to_images(const Tensor& t) {
    if (t.ndim() != 4) throw std::invalid_argument("tensor_to_images: expected NCHW");
    const int N = t.dim(0), C = t.dim(1), H = t.dim(2), W = t.dim(3);
    std::vector<Image> out;
    out.reserve(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) {
        Image img(H, W, C);
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    img.at(y, x, c) = t[((static_cast<std::size_t>(n) * C + c) * H + y) * W + x];
        out.push_back(std::move(img));
    }
    return out;
}

} // namespace reflectsep
