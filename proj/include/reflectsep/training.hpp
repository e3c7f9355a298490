#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "reflectsep/losses.hpp"
#include "reflectsep/model.hpp"
#include "reflectsep/synthesis.hpp"

namespace reflectsep {

enum class TrainMode { SUPERVISED, WEAK };

struct TrainConfig {
    Variant variant = Variant::B3;
    TrainMode mode = TrainMode::SUPERVISED;
    std::set<SynthModelKind> kinds = {SynthModelKind::LINEAR, SynthModelKind::BLUR,
                                      SynthModelKind::GHOST, SynthModelKind::CLIP,
                                      SynthModelKind::CLIP_NOBLUR};
    int steps = 1;
    int batch_size = 16;
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    LossWeights weights;
    std::uint64_t seed = 0;
    int checkpoint_every = 1000;
    std::string t_dir, r_dir;
    std::string out_dir = "train_out";
    int input_size = 128;
    int channel_div = 1;

    void validate() const;
};

// Flat key=value config file; unknown keys are errors. Keys mirror the
// TrainConfig fields (see README for the full list and defaults).
TrainConfig parse_config_file(const std::filesystem::path& path);

struct TrainState {
    SeparatorModel model;
    long step = 0;
    RandomState rng;

    TrainState(SeparatorModel m, long s, RandomState r)
        : model(std::move(m)), step(s), rng(std::move(r)) {}
};

// One training batch: y plus either paired ground truth (supervised) or
// unconditional real pools (weak).
struct Batch {
    Tensor y, t, r;
};

// Deterministic split by index parity of a seeded shuffle; disjoint halves
// whose union is the input. Odd counts put the extra file in the first half.
std::pair<std::vector<std::string>, std::vector<std::string>>
split_halves(const std::vector<std::string>& files, std::uint64_t seed);

// One discriminator update (both D_t and D_r) followed by one generator
// update. For MASK, generator updates alternate by step parity: even steps
// update {encoder, shared layers, G_t, G_r, G_y}, odd steps update G_m.
LossReport train_step(TrainState& state, const TrainConfig& cfg, const Batch& batch);

// Parameter-name prefixes updated by the generator phase at a given step.
std::vector<std::string> generator_partition(Variant v, long step);

// Full loop: builds batches from the configured directories, logs one TSV
// line per step to out_dir/train_log.tsv, checkpoints every checkpoint_every
// steps and at the end.
TrainState fit(const TrainConfig& cfg, const std::filesystem::path& resume = {});

struct GradCheckReport {
    double max_rel_err = 0.0;
    int n_checked = 0;
    bool passed(double rel_tol = 1e-3) const { return max_rel_err < rel_tol; }
};

// Central finite differences over 64 sampled parameter coordinates on a
// reduced model (channels /8, 16x16 inputs, batch 2), double precision.
// loss_kind: l1 | gan_g | gan_d | content | supervised | weak.
GradCheckReport grad_check(Variant variant, const std::string& loss_kind,
                           std::uint64_t seed = 42);

// --- checkpointing (bitwise-lossless round trip) ---
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

} // namespace reflectsep
