#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "reflectsep/synthesis.hpp"
#include "test_support.hpp"

using namespace reflectsep;
using testsup::random_image;

TEST_CASE("sample_params singleton, determinism, ranges, w mean") {
    RandomState rng(1);
    for (int i = 0; i < 50; ++i) {
        SynthParams p = sample_params({SynthModelKind::LINEAR}, rng);
        CHECK(p.kind == SynthModelKind::LINEAR);
    }

    RandomState a(2), b(2);
    for (int i = 0; i < 20; ++i) {
        SynthParams pa = sample_params({SynthModelKind::BLUR, SynthModelKind::GHOST}, a);
        SynthParams pb = sample_params({SynthModelKind::BLUR, SynthModelKind::GHOST}, b);
        CHECK(pa.kind == pb.kind);
        CHECK(pa.w == pb.w);
        CHECK(pa.sigma == pb.sigma);
        CHECK(pa.ghost_dx == pb.ghost_dx);
        CHECK(pa.ghost_dy == pb.ghost_dy);
        CHECK(pa.ghost_alpha == pb.ghost_alpha);
    }

    const std::set<SynthModelKind> all = {SynthModelKind::LINEAR, SynthModelKind::BLUR,
                                          SynthModelKind::GHOST, SynthModelKind::CLIP,
                                          SynthModelKind::CLIP_NOBLUR};
    RandomState wr(3);
    double wmean = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        SynthParams p = sample_params(all, wr);
        CHECK(p.w >= 0.5);
        CHECK(p.w <= 0.7);
        CHECK(p.sigma >= 2.0);
        CHECK(p.sigma <= 5.0);
        CHECK(p.ghost_dx >= 4);
        CHECK(p.ghost_dx <= 16);
        CHECK(p.ghost_dy >= 4);
        CHECK(p.ghost_dy <= 16);
        CHECK(p.ghost_alpha >= 0.4);
        CHECK(p.ghost_alpha <= 0.8);
        wmean += p.w;
    }
    wmean /= n;
    // w ~ U[0.5,0.7]: sd of the mean = 0.2/sqrt(12 n)
    const double sd = 0.2 / std::sqrt(12.0 * n);
    CHECK(std::fabs(wmean - 0.6) < 3.0 * sd);

    CHECK_THROWS(sample_params({}, wr));
}

TEST_CASE("ghost_kernel structure and impulse response") {
    SynthParams p;
    p.kind = SynthModelKind::GHOST;
    p.ghost_dx = 4;
    p.ghost_dy = 4;
    p.ghost_alpha = 0.4;
    Kernel k = ghost_kernel(p);
    int nonzeros = 0;
    double sum = 0.0;
    for (double w : k.weights) {
        if (w != 0.0) ++nonzeros;
        sum += w;
    }
    CHECK(nonzeros == 2);
    CHECK(sum == doctest::Approx(1.4).epsilon(1e-12));

    // impulse: pulses at origin and at (+dy,+dx)
    Image delta(32, 32, 1);
    delta.at(5, 6, 0) = 1.0;
    Image resp = conv2d_same(delta, k);
    CHECK(resp.at(5, 6, 0) == doctest::Approx(1.0));
    CHECK(resp.at(9, 10, 0) == doctest::Approx(0.4));
    double total = 0.0;
    for (double v : resp.data) total += v;
    CHECK(total == doctest::Approx(1.4).epsilon(1e-9));

    SynthParams wrong;
    wrong.kind = SynthModelKind::LINEAR;
    CHECK_THROWS(ghost_kernel(wrong));
}

TEST_CASE("synth_linear closed forms and oracle") {
    RandomState rng(4);
    Image t = random_image(16, 16, 3, rng);
    Image r = random_image(16, 16, 3, rng);

    SynthParams p;
    p.kind = SynthModelKind::LINEAR;
    p.w = 1.0; // test override outside the sampled range
    CHECK(synth_linear(t, r, p).data == t.data);

    Image ones(8, 8, 3, 1.0), zeros(8, 8, 3, 0.0);
    p.w = 0.6;
    Image y = synth_linear(ones, zeros, p);
    for (double v : y.data) CHECK(v == doctest::Approx(0.6).epsilon(1e-12));

    p.w = 0.55;
    y = synth_linear(t, r, p);
    for (std::size_t i = 0; i < y.numel(); ++i)
        CHECK(y.data[i] ==
              doctest::Approx(0.55 * t.data[i] + 0.45 * r.data[i]).epsilon(1e-9));

    Image wrong(4, 4, 3);
    CHECK_THROWS(synth_linear(t, wrong, p));
}

TEST_CASE("synth_blur constant reduction, range, primitive composition") {
    RandomState rng(5);
    Image t = random_image(32, 32, 3, rng);
    Image rconst(32, 32, 3, 0.3);
    SynthParams p;
    p.kind = SynthModelKind::BLUR;
    p.w = 0.6;
    p.sigma = 2.0;

    Image yb = synth_blur(t, rconst, p);
    SynthParams pl = p;
    pl.kind = SynthModelKind::LINEAR;
    Image yl = synth_linear(t, rconst, pl);
    for (std::size_t i = 0; i < yb.numel(); ++i)
        CHECK(yb.data[i] == doctest::Approx(yl.data[i]).epsilon(1e-9));

    Image r = random_image(32, 32, 3, rng);
    Image y = synth_blur(t, r, p);
    Image blurred = conv2d_same(r, gaussian_kernel(p.sigma));
    for (std::size_t i = 0; i < y.numel(); ++i) {
        CHECK(y.data[i] >= 0.0);
        CHECK(y.data[i] <= 1.0);
        CHECK(y.data[i] ==
              doctest::Approx(0.6 * t.data[i] + 0.4 * blurred.data[i]).epsilon(1e-6));
    }
}

TEST_CASE("synth_blur sigma->0 limit agrees with linear") {
    RandomState rng(6);
    Image t = random_image(32, 32, 3, rng);
    Image r = random_image(32, 32, 3, rng);
    SynthParams p;
    p.kind = SynthModelKind::BLUR;
    p.w = 0.6;
    p.sigma = 0.1; // test override below the sampled range
    Image yb = synth_blur(t, r, p);
    SynthParams pl = p;
    pl.kind = SynthModelKind::LINEAR;
    Image yl = synth_linear(t, r, pl);
    for (std::size_t i = 0; i < yb.numel(); ++i)
        CHECK(std::fabs(yb.data[i] - yl.data[i]) <= 0.01);
}

TEST_CASE("synth_ghost normalization and impulse oracle") {
    RandomState rng(7);
    Image t = random_image(32, 32, 3, rng);
    SynthParams p;
    p.kind = SynthModelKind::GHOST;
    p.w = 0.6;
    p.ghost_dx = 4;
    p.ghost_dy = 4;
    p.ghost_alpha = 0.5;

    Image delta(32, 32, 3, 0.0);
    delta.at(5, 5, 0) = delta.at(5, 5, 1) = delta.at(5, 5, 2) = 1.0;
    // pre-combination ghost term: pulses 1 and 0.5; after /max, unchanged
    Image ghost = conv2d_same(delta, ghost_kernel(p));
    CHECK(ghost.at(5, 5, 0) == doctest::Approx(1.0));
    CHECK(ghost.at(9, 9, 0) == doctest::Approx(0.5));

    Image y = synth_ghost(t, delta, p);
    // normalized ghost has max exactly 1 -> y at the bright pixel = 0.6 t + 0.4
    CHECK(y.at(5, 5, 0) == doctest::Approx(0.6 * t.at(5, 5, 0) + 0.4).epsilon(1e-9));
    CHECK(y.at(9, 9, 0) == doctest::Approx(0.6 * t.at(9, 9, 0) + 0.2).epsilon(1e-9));
    for (double v : y.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    Image zeros(32, 32, 3, 0.0);
    CHECK_THROWS(synth_ghost(t, zeros, p));
}

TEST_CASE("synth_clip branches and oracle") {
    SynthParams p;
    p.kind = SynthModelKind::CLIP_NOBLUR;
    p.sigma = 2.0;

    // no overflow: y = t + r exactly
    Image t(16, 16, 3, 0.3), r(16, 16, 3, 0.4);
    Image y = synth_clip(t, r, p, false);
    for (double v : y.data) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));

    // full saturation
    Image ones(16, 16, 3, 1.0);
    y = synth_clip(ones, ones, p, false);
    for (double v : y.data) CHECK(v == 1.0);

    // random pair vs the stated three-step oracle
    RandomState rng(8);
    Image tr = random_image(32, 32, 3, rng);
    Image rr = random_image(32, 32, 3, rng);
    y = synth_clip(tr, rr, p, false);
    double m = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < tr.numel(); ++i) {
        const double raw = tr.data[i] + rr.data[i];
        if (raw > 1.0) {
            m += raw - 1.0;
            ++count;
        }
    }
    if (count > 0) m /= count;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        const double want = std::clamp(tr.data[i] + rr.data[i] - m, 0.0, 1.0);
        CHECK(y.data[i] == doctest::Approx(want).epsilon(1e-9));
        CHECK(y.data[i] >= 0.0);
        CHECK(y.data[i] <= 1.0);
    }
}

TEST_CASE("clip with and without blur agree for constant reflection") {
    RandomState rng(9);
    Image t = random_image(32, 32, 3, rng);
    Image rconst(32, 32, 3, 0.45);
    SynthParams p;
    p.kind = SynthModelKind::CLIP;
    p.sigma = 3.0;
    Image yb = synth_clip(t, rconst, p, true);
    Image yn = synth_clip(t, rconst, p, false);
    for (std::size_t i = 0; i < yb.numel(); ++i)
        CHECK(yb.data[i] == doctest::Approx(yn.data[i]).epsilon(1e-6));
}

TEST_CASE("pixel range holds for all five kinds on random pairs") {
    const std::set<SynthModelKind> all = {SynthModelKind::LINEAR, SynthModelKind::BLUR,
                                          SynthModelKind::GHOST, SynthModelKind::CLIP,
                                          SynthModelKind::CLIP_NOBLUR};
    RandomState rng(10);
    for (SynthModelKind kind : all) {
        for (int i = 0; i < 10; ++i) {
            Image t = random_image(48, 48, 3, rng);
            Image r = random_image(48, 48, 3, rng);
            SynthParams p = sample_params({kind}, rng);
            Image y = synthesize(t, r, p);
            for (double v : y.data) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
    }
}

TEST_CASE("build_batch pinned pipeline, shapes, determinism, re-synthesis") {
    const auto dir = testsup::scratch_dir("synth_batch");
    testsup::write_corpus(dir / "t", 1, 21);
    testsup::write_corpus(dir / "r", 1, 22);
    ImageSet tset = ImageSet::from_directory(dir / "t");
    ImageSet rset = ImageSet::from_directory(dir / "r");

    // flips/crops disabled: y is exactly w*t128 + (1-w)*r128
    RandomState rng(30);
    BatchOptions plain;
    plain.augment = false;
    auto batch = build_batch(tset, rset, {SynthModelKind::LINEAR}, 1, rng, plain);
    REQUIRE(batch.size() == 1);
    const TrainingPair& pr = batch[0];
    REQUIRE(pr.params.has_value());
    Image expect = synth_linear(pr.t, pr.r, *pr.params);
    CHECK(pr.y.data == expect.data);
    Image t128 = resize_bilinear(resize_bilinear(tset.load(0), 256, 256), 128, 128);
    CHECK(pr.t.data == t128.data);

    const std::set<SynthModelKind> all = {SynthModelKind::LINEAR, SynthModelKind::BLUR,
                                          SynthModelKind::GHOST, SynthModelKind::CLIP,
                                          SynthModelKind::CLIP_NOBLUR};
    testsup::write_corpus(dir / "t", 4, 21);
    testsup::write_corpus(dir / "r", 4, 22);
    tset = ImageSet::from_directory(dir / "t");
    rset = ImageSet::from_directory(dir / "r");
    RandomState ra(31), rb(31);
    auto ba = build_batch(tset, rset, all, 6, ra);
    auto bb = build_batch(tset, rset, all, 6, rb);
    REQUIRE(ba.size() == 6);
    for (std::size_t i = 0; i < ba.size(); ++i) {
        CHECK(ba[i].y.height == 128);
        CHECK(ba[i].y.width == 128);
        CHECK(ba[i].y.channels == 3);
        CHECK(ba[i].t.height == 128);
        CHECK(ba[i].r.height == 128);
        CHECK(ba[i].y.data == bb[i].y.data);
        CHECK(ba[i].t.data == bb[i].t.data);
        CHECK(ba[i].r.data == bb[i].r.data);
        // recorded params re-synthesize y bitwise
        REQUIRE(ba[i].params.has_value());
        Image resynth = synthesize(ba[i].t, ba[i].r, *ba[i].params);
        CHECK(ba[i].y.data == resynth.data);
    }

    ImageSet empty;
    RandomState re(32);
    CHECK_THROWS(build_batch(empty, rset, all, 1, re));
}
