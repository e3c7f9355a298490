#include "reflectsep/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "reflectsep/errors.hpp"
#include "reflectsep/imageio.hpp"
#include "reflectsep/metrics.hpp"

namespace reflectsep {

namespace {

EvalCell aggregate(std::vector<double> values) {
    EvalCell c;
    std::vector<double> finite;
    for (double v : values) {
        if (std::isinf(v)) ++c.n_excluded;
        else finite.push_back(v);
    }
    c.n = static_cast<int>(values.size());
    if (finite.empty()) {
        c.mean = std::numeric_limits<double>::infinity();
        return c;
    }
    std::sort(finite.begin(), finite.end());
    double sum = 0.0;
    for (double v : finite) sum += v;
    c.mean = sum / static_cast<double>(finite.size());
    double sq = 0.0;
    for (double v : finite) sq += (v - c.mean) * (v - c.mean);
    c.stddev = std::sqrt(sq / static_cast<double>(finite.size()));
    return c;
}

std::string fmt_cell(const EvalCell& c) {
    std::ostringstream os;
    if (std::isinf(c.mean)) os << "inf";
    else os << std::fixed << std::setprecision(4) << c.mean << " +- " << c.stddev;
    if (c.n_excluded > 0) os << " (" << c.n_excluded << " inf)";
    return os.str();
}

} // namespace

std::string EvalGrid::tsv() const {
    std::ostringstream os;
    os << "kind\ttarget\tpsnr_mean\tpsnr_std\tpsnr_inf_count\tssim_mean\tssim_std\tn\n";
    for (const auto& r : rows) {
        os << to_string(r.kind) << '\t' << r.target << '\t';
        if (std::isinf(r.psnr.mean)) os << "inf";
        else os << r.psnr.mean;
        os << '\t' << r.psnr.stddev << '\t' << r.psnr.n_excluded << '\t' << r.ssim.mean << '\t'
           << r.ssim.stddev << '\t' << r.psnr.n << '\n';
    }
    return os.str();
}

std::string EvalGrid::text() const {
    std::vector<std::array<std::string, 4>> cells;
    cells.push_back({"kind", "target", "PSNR", "SSIM"});
    for (const auto& r : rows)
        cells.push_back({to_string(r.kind), r.target, fmt_cell(r.psnr), fmt_cell(r.ssim)});
    std::array<std::size_t, 4> widths{};
    for (const auto& row : cells)
        for (int j = 0; j < 4; ++j) widths[j] = std::max(widths[j], row[j].size());
    std::ostringstream os;
    for (const auto& row : cells) {
        for (int j = 0; j < 4; ++j)
            os << std::left << std::setw(static_cast<int>(widths[j]) + 2) << row[j];
        os << '\n';
    }
    os << "n per cell: " << n_per_kind << " (infinite PSNR values excluded from mean/std)\n";
    return os.str();
}

EvalGrid evaluate_pairs(const SeparatorFn& sep, const std::vector<TrainingPair>& pairs) {
    // kind -> {psnr_t, ssim_t, psnr_r, ssim_r}
    std::map<SynthModelKind, std::array<std::vector<double>, 4>> by_kind;
    for (const auto& p : pairs) {
        if (!p.params) throw DataError("evaluate: pair lacks synthesis parameters");
        auto [t_hat, r_hat] = sep(p);
        auto& v = by_kind[p.params->kind];
        v[0].push_back(psnr(p.t, t_hat));
        v[1].push_back(ssim(p.t, t_hat));
        v[2].push_back(psnr(p.r, r_hat));
        v[3].push_back(ssim(p.r, r_hat));
    }
    EvalGrid grid;
    for (auto& [kind, v] : by_kind) {
        grid.n_per_kind = static_cast<int>(v[0].size());
        EvalRow rt{kind, "transmission", aggregate(v[0]), aggregate(v[1])};
        EvalRow rr{kind, "reflection", aggregate(v[2]), aggregate(v[3])};
        grid.rows.push_back(rt);
        grid.rows.push_back(rr);
    }
    return grid;
}

EvalGrid evaluate(const SeparatorModel& model, const std::filesystem::path& t_dir,
                  const std::filesystem::path& r_dir, const std::set<SynthModelKind>& kinds,
                  int n, std::uint64_t seed) {
    ImageSet tset = ImageSet::from_directory(t_dir);
    ImageSet rset = ImageSet::from_directory(r_dir);
    if (tset.size() == 0 || rset.size() == 0)
        throw DataError("evaluate: empty image directory (" + t_dir.string() + ", " +
                        r_dir.string() + ")");
    const bool prev_mode = model.training_mode;
    model.training_mode = false;

    std::vector<TrainingPair> pairs;
    RandomState rng(splitmix64(seed ^ 0x9e3779b97f4a7c15ull));
    for (SynthModelKind k : kinds) {
        auto batch = build_batch(tset, rset, {k}, n, rng);
        for (auto& p : batch) pairs.push_back(std::move(p));
    }

    const int size = model.input_size();
    SeparatorFn sep = [&](const TrainingPair& p) {
        Image y = p.y;
        if (y.height != size || y.width != size) y = resize_bilinear(y, size, size);
        SepOut out = model.separate_values(images_to_tensor({y}));
        Image t_hat = tensor_to_images(out.t_hat->value)[0];
        Image r_hat = tensor_to_images(out.r_hat->value)[0];
        if (t_hat.height != p.y.height || t_hat.width != p.y.width) {
            t_hat = resize_bilinear(t_hat, p.y.height, p.y.width);
            r_hat = resize_bilinear(r_hat, p.y.height, p.y.width);
        }
        return std::make_pair(t_hat, r_hat);
    };
    EvalGrid grid = evaluate_pairs(sep, pairs);
    model.training_mode = prev_mode;
    return grid;
}

namespace {

Image to_rgb(const Image& img) {
    if (img.channels == 3) return img;
    Image out(img.height, img.width, 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, 0);
    return out;
}

Image compose_row(const std::vector<Image>& tiles) {
    const int h = tiles[0].height;
    const int gutter = 2;
    int w = 0;
    for (const auto& t : tiles) w += t.width;
    w += gutter * static_cast<int>(tiles.size() - 1);
    Image out(h, w, 3, 1.0); // white gutters
    int x0 = 0;
    for (const auto& t : tiles) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < t.width; ++x)
                for (int c = 0; c < 3; ++c) out.at(y, x0 + x, c) = t.at(y, x, c);
        x0 += t.width + gutter;
    }
    return out;
}

} // namespace

std::vector<std::filesystem::path> dump_panels(const SeparatorModel& model,
                                               const std::vector<TrainingPair>& pairs,
                                               const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    const bool prev_mode = model.training_mode;
    model.training_mode = false;
    const int size = model.input_size();
    std::vector<std::filesystem::path> out_files;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        Image y = p.y.height == size && p.y.width == size ? p.y : resize_bilinear(p.y, size, size);
        SepOut out = model.separate_values(images_to_tensor({y}));
        std::vector<Image> tiles{y, tensor_to_images(out.t_hat->value)[0],
                                 tensor_to_images(out.r_hat->value)[0]};
        if (model.variant() == Variant::MASK) {
            tiles.push_back(to_rgb(tensor_to_images(out.mask->value)[0]));
            tiles.push_back(tensor_to_images(out.mt->value)[0]);
            tiles.push_back(tensor_to_images(out.mr->value)[0]);
        }
        tiles.push_back(resize_bilinear(p.t, size, size));
        tiles.push_back(resize_bilinear(p.r, size, size));
        char name[32];
        std::snprintf(name, sizeof(name), "panel_%05zu.png", i);
        const auto path = out_dir / name;
        save_image(path, compose_row(tiles));
        out_files.push_back(path);
    }
    model.training_mode = prev_mode;
    return out_files;
}

} // namespace reflectsep
