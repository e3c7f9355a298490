#pragma once

#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "reflectsep/model.hpp"
#include "reflectsep/synthesis.hpp"

namespace reflectsep {

// One aggregate over the eval set. Infinite values (identical images under
// PSNR) are excluded from mean/std and counted in n_excluded; a cell whose
// values are all infinite reports mean = +infinity, std = 0.
struct EvalCell {
    double mean = 0.0;
    double stddev = 0.0;
    int n = 0;
    int n_excluded = 0;
};

struct EvalRow {
    SynthModelKind kind = SynthModelKind::LINEAR;
    std::string target; // "transmission" | "reflection"
    EvalCell psnr, ssim;
};

struct EvalGrid {
    std::vector<EvalRow> rows; // kind-major, transmission before reflection
    int n_per_kind = 0;

    std::string tsv() const;
    std::string text() const; // aligned plain-text table
};

// (t_hat, r_hat) for one pair. The pair carries ground truth so that oracle
// separators can be expressed in tests; models must only read pair.y.
using SeparatorFn = std::function<std::pair<Image, Image>(const TrainingPair&)>;

// Aggregate PSNR/SSIM over pre-built pairs grouped by synthesis kind.
// Accumulation sorts each cell's values first, so the grid is exactly
// invariant to pair order.
EvalGrid evaluate_pairs(const SeparatorFn& sep, const std::vector<TrainingPair>& pairs);

// Synthesizes n seeded pairs per kind from the two directories and evaluates
// the model with frozen batch-norm statistics.
EvalGrid evaluate(const SeparatorModel& model, const std::filesystem::path& t_dir,
                  const std::filesystem::path& r_dir, const std::set<SynthModelKind>& kinds,
                  int n, std::uint64_t seed);

// One composite PNG per pair: tiles left-to-right are
//   y | t_hat | r_hat | t | r            (B1/B2/B3)
//   y | t_hat | r_hat | mask | mt | mr | t | r   (MASK)
// separated by a 2-pixel white gutter; files are panel_NNNNN.png.
std::vector<std::filesystem::path> dump_panels(const SeparatorModel& model,
                                               const std::vector<TrainingPair>& pairs,
                                               const std::filesystem::path& out_dir);

} // namespace reflectsep
