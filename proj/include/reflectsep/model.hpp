#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reflectsep/autodiff.hpp"
#include "reflectsep/image.hpp"
#include "reflectsep/rng.hpp"

namespace reflectsep {

enum class Variant { B1, B2, B3, MASK };
enum class Branch { T, R, Y, M };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

// Encoder features f1..f5 plus the bottleneck map. For a 128x128x3 input the
// spatial sizes are 64,32,16,8,4 with channels 32,64,128,256,256 and the
// bottleneck is 4x4x128.
struct EncOut {
    std::array<ad::NodeP, 5> f;
    ad::NodeP bottleneck;
};

struct SepOut {
    ad::NodeP t_hat, r_hat;
    ad::NodeP y_hat;     // B2/B3/MASK
    ad::NodeP mask;      // MASK, (N,1,H,W)
    ad::NodeP mt, mr;    // MASK: mask*t_hat, (1-mask)*r_hat
    ad::NodeP wy;        // B3, (N,1)
    EncOut enc;
};

struct ConvLayer {
    ad::ParamP w, b;
    int stride = 1, pad = 0;
};
struct ConvTLayer {
    ad::ParamP w, b;
    int stride = 2, pad = 2, outpad = 1;
};
struct BNLayer {
    ad::ParamP gamma, beta, rmean, rvar;
};

struct DecoderBranch {
    ConvLayer conv1;          // 1x1 to 256/div channels
    BNLayer bn1;
    std::array<ConvTLayer, 5> fconv; // stages 2..6
    std::array<BNLayer, 4> bn;       // stages 2..5 (no BN on the output stage)
    int out_channels = 3;
};

struct Discriminator {
    std::array<ConvLayer, 6> conv;
    std::array<BNLayer, 4> bn; // layers 2..5
};

// The four separator architectures: shared encoder, generation branches, an
// optional ratio head, and two discriminators. For B2/B3/MASK the first three
// decoder layers of every generation branch alias the same parameter storage.
class SeparatorModel {
public:
    SeparatorModel(Variant variant, RandomState& rng, int input_size = 128, int channel_div = 1);

    Variant variant() const { return variant_; }
    int input_size() const { return input_size_; }
    int channel_div() const { return channel_div_; }
    bool conditional_discriminators() const { return conditional_; }

    mutable bool training_mode = true;

    std::vector<Branch> active_branches() const;
    bool branch_active(Branch b) const;

    // --- forward graphs (autodiff) ---
    EncOut encode(const ad::NodeP& y) const;
    ad::NodeP decode(Branch branch, const EncOut& enc) const;
    ad::NodeP ratio_head(const EncOut& enc) const;                 // B3 only, (N,1)
    ad::NodeP discriminate(Branch which, const ad::NodeP& x,
                           const ad::NodeP& cond = nullptr) const; // which in {T,R}
    SepOut separate(const ad::NodeP& y) const;                     // one encoder pass

    // Value-level separation for inference (no gradient tracking).
    SepOut separate_values(const Tensor& y_batch) const;

    // --- parameters ---
    const std::vector<ad::ParamP>& params() const { return params_; }
    ad::ParamP find_param(const std::string& name) const;
    std::size_t parameter_count() const; // trainable scalars
    // Aliased name -> canonical name, e.g. dec.t.conv1.w -> gen.shared.conv1.w.
    const std::vector<std::pair<std::string, std::string>>& sharing_map() const {
        return sharing_map_;
    }
    // Parameters whose name starts with any of the given prefixes.
    std::vector<ad::ParamP> params_with_prefix(const std::vector<std::string>& prefixes) const;

    mutable long encode_calls = 0; // instrumentation

private:
    Variant variant_;
    int input_size_;
    int channel_div_;
    bool conditional_;
    std::vector<int> enc_sizes_; // spatial sizes: input, f1..f5
    std::vector<ad::ParamP> params_;
    std::vector<std::pair<std::string, std::string>> sharing_map_;

    std::array<ConvLayer, 6> enc_conv_;
    std::map<Branch, DecoderBranch> dec_;
    Discriminator disc_t_, disc_r_;
    ad::ParamP wy_w_, wy_b_;

    int ch(int base) const { return std::max(1, base / channel_div_); }
    ad::ParamP make_param(const std::string& name, std::vector<int> shape, RandomState& rng,
                          double stddev, bool trainable = true);
    ConvLayer make_conv(const std::string& name, int in_c, int out_c, int k, int stride, int pad,
                        RandomState& rng);
    ConvTLayer make_convt(const std::string& name, int in_c, int out_c, int stride,
                          RandomState& rng);
    BNLayer make_bn(const std::string& name, int c, RandomState& rng);
    DecoderBranch make_decoder(const std::string& prefix, int out_channels, RandomState& rng,
                               const DecoderBranch* shared);
    Discriminator make_disc(const std::string& prefix, int in_c, RandomState& rng);
    ad::NodeP disc_forward(const Discriminator& d, const ad::NodeP& x) const;
};

// Convenience: construct and initialize (weights Gaussian(0, 0.02)).
SeparatorModel init_model(Variant variant, RandomState& rng, int input_size = 128,
                          int channel_div = 1);

// Batch conversion between HWC images and NCHW tensors.
Tensor images_to_tensor(const std::vector<Image>& imgs);
std::vector<Image> tensor_to_images(const Tensor& t);

} // namespace reflectsep
