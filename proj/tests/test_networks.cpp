#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "reflectsep/model.hpp"
#include "test_support.hpp"

using namespace reflectsep;
using ad::NodeP;

namespace {

Tensor random_batch(int n, int size, RandomState& rng) {
    Tensor t({n, 3, size, size});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform();
    return t;
}

// Independent parameter-count oracle assembled from the layer tables.
std::size_t conv_n(std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; }
std::size_t bn_n(std::size_t c) { return 2 * c; } // gamma + beta (running stats frozen)

std::size_t encoder_n() {
    return conv_n(3, 32, 5) + conv_n(32, 64, 5) + conv_n(64, 128, 5) + conv_n(128, 256, 5) +
           conv_n(256, 256, 5) + conv_n(256, 128, 1);
}
std::size_t dec_head_n() { // 1x1 conv + first two upsampling stages
    return conv_n(128, 256, 1) + bn_n(256) + conv_n(256, 256, 5) + bn_n(256) +
           conv_n(512, 128, 5) + bn_n(128);
}
std::size_t dec_tail_n(std::size_t out) { // stages 4..6 with skip-concat inputs
    return conv_n(256, 64, 5) + bn_n(64) + conv_n(128, 32, 5) + bn_n(32) + conv_n(64, out, 5);
}
std::size_t disc_n(std::size_t in) {
    return conv_n(in, 32, 5) + conv_n(32, 64, 5) + bn_n(64) + conv_n(64, 128, 5) + bn_n(128) +
           conv_n(128, 256, 5) + bn_n(256) + conv_n(256, 256, 5) + bn_n(256) + conv_n(256, 1, 1);
}

std::size_t oracle_count(Variant v) {
    switch (v) {
        case Variant::B1:
            return encoder_n() + 2 * (dec_head_n() + dec_tail_n(3)) + 2 * disc_n(6);
        case Variant::B2:
            return encoder_n() + dec_head_n() + 3 * dec_tail_n(3) + 2 * disc_n(6);
        case Variant::B3:
            return oracle_count(Variant::B2) + 128 * 1 + 1;
        case Variant::MASK:
            return encoder_n() + dec_head_n() + 3 * dec_tail_n(3) + dec_tail_n(1) +
                   2 * disc_n(3);
    }
    return 0;
}

double checksum(const SeparatorModel& m) {
    double s = 0.0;
    for (const auto& p : m.params())
        for (std::size_t i = 0; i < p->value.numel(); ++i) s += p->value[i] * ((i % 7) + 1);
    return s;
}

} // namespace

TEST_CASE("encoder shapes and batch independence") {
    RandomState rng(1);
    SeparatorModel m = init_model(Variant::B1, rng);
    RandomState ir(2);
    Tensor y = random_batch(2, 128, ir);
    EncOut e = m.encode(ad::constant(y));
    const int chans[5] = {32, 64, 128, 256, 256};
    const int sizes[5] = {64, 32, 16, 8, 4};
    for (int i = 0; i < 5; ++i)
        CHECK(e.f[i]->value.shape == std::vector<int>({2, chans[i], sizes[i], sizes[i]}));
    CHECK(e.bottleneck->value.shape == std::vector<int>({2, 128, 4, 4}));
    CHECK(e.bottleneck->value.all_finite());

    // identical batch rows -> identical features (no batch norm in the encoder)
    Tensor twin({2, 3, 128, 128});
    for (std::size_t i = 0; i < twin.numel() / 2; ++i)
        twin[i] = twin[i + twin.numel() / 2] = y[i];
    EncOut et = m.encode(ad::constant(twin));
    const std::size_t half = et.bottleneck->value.numel() / 2;
    for (std::size_t i = 0; i < half; ++i)
        CHECK(et.bottleneck->value[i] == et.bottleneck->value[i + half]);

    Tensor bad({2, 3, 64, 64});
    CHECK_THROWS(m.encode(ad::constant(bad)));
}

TEST_CASE("separate shape suite for every variant at batch 1 and 4") {
    for (Variant v : {Variant::B1, Variant::B2, Variant::B3, Variant::MASK}) {
        CAPTURE(to_string(v));
        RandomState rng(3);
        SeparatorModel m = init_model(v, rng);
        for (int n : {1, 4}) {
            RandomState ir(4);
            Tensor y = random_batch(n, 128, ir);
            SepOut s = m.separate(ad::constant(y));
            CHECK(s.t_hat->value.shape == std::vector<int>({n, 3, 128, 128}));
            CHECK(s.r_hat->value.shape == std::vector<int>({n, 3, 128, 128}));
            CHECK(s.t_hat->value.all_finite());
            for (std::size_t i = 0; i < s.t_hat->value.numel(); ++i) {
                CHECK(s.t_hat->value[i] >= 0.0);
                CHECK(s.t_hat->value[i] <= 1.0);
            }
            if (v == Variant::B1) {
                CHECK(s.y_hat == nullptr);
                CHECK(s.mask == nullptr);
                CHECK(s.wy == nullptr);
            } else {
                CHECK(s.y_hat->value.shape == std::vector<int>({n, 3, 128, 128}));
            }
            if (v == Variant::B3) {
                CHECK(s.wy->value.shape == std::vector<int>({n, 1}));
                for (std::size_t i = 0; i < s.wy->value.numel(); ++i) {
                    CHECK(s.wy->value[i] > 0.0);
                    CHECK(s.wy->value[i] < 1.0);
                }
            }
            if (v == Variant::MASK) {
                CHECK(s.mask->value.shape == std::vector<int>({n, 1, 128, 128}));
                for (std::size_t i = 0; i < s.mask->value.numel(); ++i) {
                    CHECK(s.mask->value[i] >= 0.0);
                    CHECK(s.mask->value[i] <= 1.0);
                }
                // G_mt = mask (x) t_hat, G_mr = (1-mask) (x) r_hat, elementwise
                const auto& mk = s.mask->value;
                for (int b = 0; b < n; ++b)
                    for (int c = 0; c < 3; ++c)
                        for (int px = 0; px < 128 * 128; px += 997) {
                            const std::size_t mi = (static_cast<std::size_t>(b)) * 128 * 128 + px;
                            const std::size_t ti =
                                ((static_cast<std::size_t>(b) * 3 + c)) * 128 * 128 + px;
                            CHECK(s.mt->value[ti] ==
                                  doctest::Approx(mk[mi] * s.t_hat->value[ti]).epsilon(1e-12));
                            CHECK(s.mr->value[ti] ==
                                  doctest::Approx((1.0 - mk[mi]) * s.r_hat->value[ti])
                                      .epsilon(1e-12));
                        }
            } else {
                CHECK(s.mask == nullptr);
            }
        }
    }
}

TEST_CASE("discriminator shapes, conditioning, and score range") {
    RandomState rng(5);
    SeparatorModel sup = init_model(Variant::B2, rng);
    RandomState ir(6);
    Tensor x = random_batch(2, 128, ir);
    Tensor y = random_batch(2, 128, ir);
    NodeP s = sup.discriminate(Branch::T, ad::constant(x), ad::constant(y));
    CHECK(s->value.shape == std::vector<int>({2, 1, 4, 4}));
    for (std::size_t i = 0; i < s->value.numel(); ++i) {
        CHECK(s->value[i] > 0.0);
        CHECK(s->value[i] < 1.0);
    }
    // conditional discriminators require the condition
    CHECK_THROWS(sup.discriminate(Branch::T, ad::constant(x)));

    RandomState rng2(5);
    SeparatorModel weak = init_model(Variant::MASK, rng2);
    NodeP su = weak.discriminate(Branch::R, ad::constant(x));
    CHECK(su->value.shape == std::vector<int>({2, 1, 4, 4}));
    CHECK_THROWS(weak.discriminate(Branch::R, ad::constant(x), ad::constant(y)));

    // 6- vs 3-channel first layer shows up in the parameter count
    auto first_sup = sup.find_param("disc.t.conv1.w");
    auto first_weak = weak.find_param("disc.t.conv1.w");
    CHECK(first_sup->value.dim(1) == 6);
    CHECK(first_weak->value.dim(1) == 3);
}

TEST_CASE("parameter counts match golden values and the layer-table oracle") {
    const std::size_t golden[4] = {15848392, 13053995, 13054124, 13563084};
    const Variant vs[4] = {Variant::B1, Variant::B2, Variant::B3, Variant::MASK};
    for (int i = 0; i < 4; ++i) {
        CAPTURE(to_string(vs[i]));
        RandomState rng(7);
        SeparatorModel m(vs[i], rng);
        CHECK(m.parameter_count() == golden[i]);
        CHECK(m.parameter_count() == oracle_count(vs[i]));
    }
}

TEST_CASE("weight sharing: aliased blocks exist only as shared storage") {
    RandomState rng(8);
    SeparatorModel b1(Variant::B1, rng);
    CHECK(b1.sharing_map().empty());
    CHECK_NOTHROW(b1.find_param("dec.t.conv1.w"));

    RandomState rng2(8);
    SeparatorModel b2(Variant::B2, rng2);
    CHECK_FALSE(b2.sharing_map().empty());
    // the alias names have no storage of their own
    CHECK_THROWS(b2.find_param("dec.t.conv1.w"));
    CHECK_NOTHROW(b2.find_param("gen.shared.conv1.w"));
    // every generation branch appears in the sharing map
    int t_aliases = 0, y_aliases = 0;
    for (const auto& [alias, canon] : b2.sharing_map()) {
        CHECK(canon.rfind("gen.shared.", 0) == 0);
        if (alias.rfind("dec.t.", 0) == 0) ++t_aliases;
        if (alias.rfind("dec.y.", 0) == 0) ++y_aliases;
    }
    CHECK(t_aliases == 18);
    CHECK(y_aliases == 18);

    // mutating the shared storage changes every branch's output
    RandomState ir(9);
    Tensor y = random_batch(1, 128, ir);
    b2.training_mode = false;
    SepOut before = b2.separate_values(y);
    auto w = b2.find_param("gen.shared.fconv2.w");
    for (std::size_t i = 0; i < w->value.numel(); ++i) w->value[i] += 0.05;
    SepOut after = b2.separate_values(y);
    double dt = 0.0, dr = 0.0, dy = 0.0;
    for (std::size_t i = 0; i < before.t_hat->value.numel(); ++i) {
        dt += std::fabs(before.t_hat->value[i] - after.t_hat->value[i]);
        dr += std::fabs(before.r_hat->value[i] - after.r_hat->value[i]);
        dy += std::fabs(before.y_hat->value[i] - after.y_hat->value[i]);
    }
    CHECK(dt > 0.0);
    CHECK(dr > 0.0);
    CHECK(dy > 0.0);

    RandomState rng3(8);
    SeparatorModel mk(Variant::MASK, rng3);
    int branches_in_map = 0;
    for (const char* pre : {"dec.t.", "dec.r.", "dec.y.", "dec.m."}) {
        bool found = false;
        for (const auto& [alias, canon] : mk.sharing_map())
            if (alias.rfind(pre, 0) == 0) found = true;
        if (found) ++branches_in_map;
    }
    CHECK(branches_in_map == 4);
}

TEST_CASE("initialization is deterministic in the seed") {
    RandomState a(11), b(11), c(12);
    SeparatorModel ma(Variant::B3, a);
    SeparatorModel mb(Variant::B3, b);
    SeparatorModel mc(Variant::B3, c);
    CHECK(checksum(ma) == checksum(mb));
    CHECK(checksum(ma) != checksum(mc));
}

TEST_CASE("ratio head: zero weights give exactly 0.5, wrong variant throws") {
    RandomState rng(13);
    SeparatorModel m = init_model(Variant::B3, rng);
    auto w = m.find_param("wy.w");
    auto b = m.find_param("wy.b");
    std::fill(w->value.data(), w->value.data() + w->value.numel(), 0.0);
    b->value[0] = 0.0;
    RandomState ir(14);
    Tensor y = random_batch(2, 128, ir);
    EncOut e = m.encode(ad::constant(y));
    NodeP wy = m.ratio_head(e);
    CHECK(wy->value[0] == 0.5);
    CHECK(wy->value[1] == 0.5);

    RandomState rng2(13);
    SeparatorModel b1 = init_model(Variant::B1, rng2);
    EncOut e1 = b1.encode(ad::constant(y));
    CHECK_THROWS(b1.ratio_head(e1));
}

TEST_CASE("decode rejects inactive branches and skip connections are live") {
    RandomState rng(15);
    SeparatorModel m = init_model(Variant::B1, rng, 32, 4);
    RandomState ir(16);
    Tensor y = random_batch(1, 32, ir);
    EncOut e = m.encode(ad::constant(y));
    CHECK_THROWS(m.decode(Branch::Y, e));
    CHECK_THROWS(m.decode(Branch::M, e));

    NodeP base = m.decode(Branch::T, e);
    EncOut perturbed = e;
    perturbed.f[0] = ad::add_scalar(e.f[0], 0.25);
    NodeP moved = m.decode(Branch::T, perturbed);
    double diff = 0.0;
    for (std::size_t i = 0; i < base->value.numel(); ++i)
        diff += std::fabs(base->value[i] - moved->value[i]);
    CHECK(diff > 0.0);
}

TEST_CASE("separate runs the encoder exactly once per call") {
    RandomState rng(17);
    SeparatorModel m = init_model(Variant::MASK, rng, 32, 4);
    RandomState ir(18);
    Tensor y = random_batch(2, 32, ir);
    m.encode_calls = 0;
    (void)m.separate(ad::constant(y));
    CHECK(m.encode_calls == 1);
    (void)m.separate(ad::constant(y));
    CHECK(m.encode_calls == 2);
}

TEST_CASE("frozen batch statistics make separate deterministic") {
    RandomState rng(19);
    SeparatorModel m = init_model(Variant::B2, rng, 32, 4);
    m.training_mode = false;
    RandomState ir(20);
    Tensor y = random_batch(2, 32, ir);
    SepOut a = m.separate_values(y);
    SepOut b = m.separate_values(y);
    for (std::size_t i = 0; i < a.t_hat->value.numel(); ++i)
        CHECK(a.t_hat->value[i] == b.t_hat->value[i]);
}

TEST_CASE("reduced input sizes keep the mirror geometry") {
    for (int size : {16, 32, 64, 128}) {
        RandomState rng(21);
        SeparatorModel m = init_model(Variant::B1, rng, size, 8);
        RandomState ir(22);
        Tensor y({1, 3, size, size});
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] = ir.uniform();
        SepOut s = m.separate(ad::constant(y));
        CHECK(s.t_hat->value.shape == std::vector<int>({1, 3, size, size}));
    }
    RandomState rng(23);
    CHECK_THROWS(SeparatorModel(Variant::B1, rng, 20, 8));
}
