#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "reflectsep/image.hpp"
#include "reflectsep/imageio.hpp"
#include "reflectsep/rng.hpp"

namespace reflectsep {

enum class SynthModelKind { LINEAR, BLUR, GHOST, CLIP, CLIP_NOBLUR };

std::string to_string(SynthModelKind k);
SynthModelKind synth_kind_from_string(const std::string& s);

// Sampled parameters for one synthesized observation. Fields irrelevant to
// `kind` are still populated but ignored by the synthesis functions.
struct SynthParams {
    SynthModelKind kind = SynthModelKind::LINEAR;
    double w = 0.6;        // combination weight, [0.5, 0.7]
    double sigma = 3.0;    // blur std-dev in pixels, [2, 5]
    int ghost_dx = 8;      // ghost shift in pixels, [4, 16]
    int ghost_dy = 8;
    double ghost_alpha = 0.6; // second-pulse attenuation, [0.4, 0.8]
};

struct TrainingPair {
    Image y;
    Image t;
    Image r;
    std::optional<SynthParams> params; // absent in weak mode
};

SynthParams sample_params(const std::set<SynthModelKind>& kinds, RandomState& rng);

// Two-pulse kernel: weight 1 at the origin, ghost_alpha at offset
// (ghost_dy, ghost_dx). Not normalized; sums to 1 + alpha.
Kernel ghost_kernel(const SynthParams& p);

Image synth_linear(const Image& t, const Image& r, const SynthParams& p);
Image synth_blur(const Image& t, const Image& r, const SynthParams& p);
Image synth_ghost(const Image& t, const Image& r, const SynthParams& p);
Image synth_clip(const Image& t, const Image& r, const SynthParams& p, bool with_blur);

// Dispatch on p.kind.
Image synthesize(const Image& t, const Image& r, const SynthParams& p);

struct BatchOptions {
    bool augment = true; // random crop + flip; when false, plain resize to 128
};

// Full pipeline per pair: load, resize 256, random crop/resize 128 and flip
// (independently for t and r), sample params, synthesize. Pair i draws its
// RandomState from (base, i) so results are order-independent.
std::vector<TrainingPair> build_batch(const ImageSet& t_source, const ImageSet& r_source,
                                      const std::set<SynthModelKind>& kinds, int n,
                                      RandomState& rng, const BatchOptions& opts = {},
                                      std::vector<std::pair<std::string, std::string>>* source_names = nullptr);

// Corpus export: pairs/NNNNN_{y,t,r}.png plus manifest.tsv with columns
// (index, kind, w, sigma, ghost_dx, ghost_dy, ghost_alpha, t_file, r_file).
void export_corpus(const std::vector<TrainingPair>& pairs,
                   const std::vector<std::pair<std::string, std::string>>& source_names,
                   const std::filesystem::path& out_dir);

} // namespace reflectsep
