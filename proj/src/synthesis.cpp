#include "reflectsep/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "reflectsep/errors.hpp"

namespace reflectsep {

std::string to_string(SynthModelKind k) {
    switch (k) {
        case SynthModelKind::LINEAR: return "linear";
        case SynthModelKind::BLUR: return "blur";
        case SynthModelKind::GHOST: return "ghost";
        case SynthModelKind::CLIP: return "clip";
        case SynthModelKind::CLIP_NOBLUR: return "clip_noblur";
    }
    return "?";
}

SynthModelKind synth_kind_from_string(const std::string& s) {
    if (s == "linear") return SynthModelKind::LINEAR;
    if (s == "blur") return SynthModelKind::BLUR;
    if (s == "ghost") return SynthModelKind::GHOST;
    if (s == "clip") return SynthModelKind::CLIP;
    if (s == "clip_noblur") return SynthModelKind::CLIP_NOBLUR;
    throw DataError("unknown synthesis model kind: " + s);
}

SynthParams sample_params(const std::set<SynthModelKind>& kinds, RandomState& rng) {
    if (kinds.empty()) throw std::invalid_argument("sample_params: empty kind set");
    std::vector<SynthModelKind> v(kinds.begin(), kinds.end());
    SynthParams p;
    p.kind = v[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(v.size()) - 1))];
    p.w = rng.uniform(0.5, 0.7);
    p.sigma = rng.uniform(2.0, 5.0);
    p.ghost_dx = rng.uniform_int(4, 16);
    p.ghost_dy = rng.uniform_int(4, 16);
    p.ghost_alpha = rng.uniform(0.4, 0.8);
    return p;
}

Kernel ghost_kernel(const SynthParams& p) {
    if (p.kind != SynthModelKind::GHOST)
        throw std::invalid_argument("ghost_kernel: params are not for the ghost model");
    const int kh = 2 * p.ghost_dy + 1;
    const int kw = 2 * p.ghost_dx + 1;
    Kernel k{kh, kw, std::vector<double>(static_cast<std::size_t>(kh) * kw, 0.0)};
    k.at(p.ghost_dy, p.ghost_dx) = 1.0;                    // origin (kernel center)
    k.at(2 * p.ghost_dy, 2 * p.ghost_dx) = p.ghost_alpha;  // center + (dy, dx)
    return k;
}

namespace {
void require_same_shape(const Image& t, const Image& r, const char* op) {
    if (!t.same_shape(r)) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}
} // namespace

Image synth_linear(const Image& t, const Image& r, const SynthParams& p) {
    require_same_shape(t, r, "synth_linear");
    Image y = t;
    for (std::size_t i = 0; i < y.data.size(); ++i)
        y.data[i] = p.w * t.data[i] + (1.0 - p.w) * r.data[i];
    return y;
}

Image synth_blur(const Image& t, const Image& r, const SynthParams& p) {
    require_same_shape(t, r, "synth_blur");
    const Image rb = conv2d_same(r, gaussian_kernel(p.sigma));
    Image y = t;
    for (std::size_t i = 0; i < y.data.size(); ++i)
        y.data[i] = p.w * t.data[i] + (1.0 - p.w) * rb.data[i];
    return y;
}

Image synth_ghost(const Image& t, const Image& r, const SynthParams& p) {
    require_same_shape(t, r, "synth_ghost");
    SynthParams gp = p;
    gp.kind = SynthModelKind::GHOST;
    const Image rg = conv2d_same(r, ghost_kernel(gp));
    const double mx = *std::max_element(rg.data.begin(), rg.data.end());
    if (mx <= 0.0) throw std::invalid_argument("synth_ghost: reflection is all zero");
    Image y = t;
    for (std::size_t i = 0; i < y.data.size(); ++i)
        y.data[i] = p.w * t.data[i] + (1.0 - p.w) * (rg.data[i] / mx);
    return y;
}

Image synth_clip(const Image& t, const Image& r, const SynthParams& p, bool with_blur) {
    require_same_shape(t, r, "synth_clip");
    const Image rp = with_blur ? conv2d_same(r, gaussian_kernel(p.sigma)) : r;
    Image raw = t;
    for (std::size_t i = 0; i < raw.data.size(); ++i) raw.data[i] = t.data[i] + rp.data[i];
    double overflow = 0.0;
    std::size_t count = 0;
    for (double v : raw.data) {
        if (v > 1.0) {
            overflow += v - 1.0;
            ++count;
        }
    }
    const double m = count > 0 ? overflow / static_cast<double>(count) : 0.0;
    for (double& v : raw.data) v -= m;
    return clip01(raw);
}

Image synthesize(const Image& t, const Image& r, const SynthParams& p) {
    switch (p.kind) {
        case SynthModelKind::LINEAR: return synth_linear(t, r, p);
        case SynthModelKind::BLUR: return synth_blur(t, r, p);
        case SynthModelKind::GHOST: return synth_ghost(t, r, p);
        case SynthModelKind::CLIP: return synth_clip(t, r, p, true);
        case SynthModelKind::CLIP_NOBLUR: return synth_clip(t, r, p, false);
    }
    throw std::invalid_argument("synthesize: bad kind");
}

std::vector<TrainingPair> build_batch(const ImageSet& t_source, const ImageSet& r_source,
                                      const std::set<SynthModelKind>& kinds, int n,
                                      RandomState& rng, const BatchOptions& opts,
                                      std::vector<std::pair<std::string, std::string>>* source_names) {
    if (t_source.size() == 0 || r_source.size() == 0)
        throw DataError("build_batch: empty image source");
    if (n < 1) throw std::invalid_argument("build_batch: n must be >= 1");
    const std::uint64_t base = rng.next_u64();
    std::vector<TrainingPair> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        RandomState pr = RandomState::substream(base, static_cast<std::uint64_t>(i));
        const auto ti = static_cast<std::size_t>(pr.uniform_int(0, static_cast<int>(t_source.size()) - 1));
        const auto ri = static_cast<std::size_t>(pr.uniform_int(0, static_cast<int>(r_source.size()) - 1));
        Image t = resize_bilinear(t_source.load(ti), 256, 256);
        Image r = resize_bilinear(r_source.load(ri), 256, 256);
        if (opts.augment) {
            t = flip_lr(random_crop_resize(t, pr), pr);
            r = flip_lr(random_crop_resize(r, pr), pr);
        } else {
            t = resize_bilinear(t, 128, 128);
            r = resize_bilinear(r, 128, 128);
        }
        TrainingPair pair;
        pair.params = sample_params(kinds, pr);
        pair.y = synthesize(t, r, *pair.params);
        pair.t = std::move(t);
        pair.r = std::move(r);
        out.push_back(std::move(pair));
        if (source_names)
            source_names->emplace_back(t_source.files[ti].filename().string(),
                                       r_source.files[ri].filename().string());
    }
    return out;
}

void export_corpus(const std::vector<TrainingPair>& pairs,
                   const std::vector<std::pair<std::string, std::string>>& source_names,
                   const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir / "pairs");
    std::ostringstream manifest;
    manifest << "index\tkind\tw\tsigma\tghost_dx\tghost_dy\tghost_alpha\tt_file\tr_file\n";
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        char idx[16];
        std::snprintf(idx, sizeof(idx), "%05zu", i);
        save_image(out_dir / "pairs" / (std::string(idx) + "_y.png"), pairs[i].y);
        save_image(out_dir / "pairs" / (std::string(idx) + "_t.png"), pairs[i].t);
        save_image(out_dir / "pairs" / (std::string(idx) + "_r.png"), pairs[i].r);
        const SynthParams p = pairs[i].params.value_or(SynthParams{});
        manifest << i << '\t' << to_string(p.kind) << '\t' << p.w << '\t' << p.sigma << '\t'
                 << p.ghost_dx << '\t' << p.ghost_dy << '\t' << p.ghost_alpha << '\t'
                 << (i < source_names.size() ? source_names[i].first : "") << '\t'
                 << (i < source_names.size() ? source_names[i].second : "") << '\n';
    }
    std::ofstream f(out_dir / "manifest.tsv");
    if (!f) throw DataError("cannot write manifest: " + (out_dir / "manifest.tsv").string());
    f << manifest.str();
}

} // namespace reflectsep
