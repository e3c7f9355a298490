#include "reflectsep/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include "reflectsep/errors.hpp"

namespace reflectsep {

using ad::NodeP;
using ad::ParamP;

void TrainConfig::validate() const {
    if (steps < 1) throw DataError("config: steps must be >= 1");
    if (batch_size < 1) throw DataError("config: batch_size must be >= 1");
    if (checkpoint_every < 1) throw DataError("config: checkpoint_every must be >= 1");
    if (mode == TrainMode::SUPERVISED && variant == Variant::MASK)
        throw DataError("config: supervised mode requires variant b1/b2/b3");
    if (mode == TrainMode::WEAK && variant != Variant::MASK)
        throw DataError("config: weak mode requires the mask variant");
    if (kinds.empty()) throw DataError("config: kinds must be nonempty");
}

TrainConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot open config: " + path.string());
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            const auto b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError("config line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        try {
            if (key == "variant") cfg.variant = variant_from_string(val);
            else if (key == "mode") {
                if (val == "supervised") cfg.mode = TrainMode::SUPERVISED;
                else if (val == "weak") cfg.mode = TrainMode::WEAK;
                else throw DataError("mode must be supervised or weak");
            } else if (key == "kinds") {
                cfg.kinds.clear();
                std::stringstream ss(val);
                std::string item;
                while (std::getline(ss, item, ','))
                    cfg.kinds.insert(synth_kind_from_string(trim(item)));
            } else if (key == "steps") cfg.steps = std::stoi(val);
            else if (key == "batch_size") cfg.batch_size = std::stoi(val);
            else if (key == "learning_rate") cfg.learning_rate = std::stod(val);
            else if (key == "beta1") cfg.beta1 = std::stod(val);
            else if (key == "beta2") cfg.beta2 = std::stod(val);
            else if (key == "lambda1") cfg.weights.lambda1 = std::stod(val);
            else if (key == "lambda2") cfg.weights.lambda2 = std::stod(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(val);
            else if (key == "t_dir") cfg.t_dir = val;
            else if (key == "r_dir") cfg.r_dir = val;
            else if (key == "out_dir") cfg.out_dir = val;
            else if (key == "input_size") cfg.input_size = std::stoi(val);
            else if (key == "channel_div") cfg.channel_div = std::stoi(val);
            else throw DataError("config: unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw DataError("config line " + std::to_string(lineno) + ": bad value for " + key);
        }
    }
    return cfg;
}

std::pair<std::vector<std::string>, std::vector<std::string>>
split_halves(const std::vector<std::string>& files, std::uint64_t seed) {
    if (files.size() < 2) throw DataError("split_halves: need at least 2 files");
    std::vector<std::string> sorted = files;
    std::sort(sorted.begin(), sorted.end());
    RandomState rng(splitmix64(seed ^ 0x5b7a5c5c5c5c5c5cull));
    // Fisher-Yates on the sorted list.
    for (std::size_t i = sorted.size() - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)));
        std::swap(sorted[i], sorted[j]);
    }
    std::pair<std::vector<std::string>, std::vector<std::string>> out;
    for (std::size_t i = 0; i < sorted.size(); ++i)
        (i % 2 == 0 ? out.first : out.second).push_back(sorted[i]);
    return out;
}

namespace {

struct AdamConfig {
    double lr, beta1, beta2, eps = 1e-8;
};

void adam_update(const std::vector<ParamP>& params, const AdamConfig& cfg) {
    for (const auto& p : params) {
        if (!p->trainable) continue;
        p->step += 1;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->step));
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            const double g = p->grad[i];
            p->m[i] = cfg.beta1 * p->m[i] + (1.0 - cfg.beta1) * g;
            p->v[i] = cfg.beta2 * p->v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = p->m[i] / bc1;
            const double vhat = p->v[i] / bc2;
            p->value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

void zero_all_grads(const SeparatorModel& m) {
    for (const auto& p : m.params()) p->zero_grad();
}

void check_finite(const LossGraph& g, const char* phase) {
    for (std::size_t i = 0; i < g.term_nodes.size(); ++i) {
        const double v = g.term_nodes[i].second->value[0];
        if (!std::isfinite(v))
            throw NumericError(std::string("non-finite loss term '") + g.term_nodes[i].first +
                               "' in " + phase + " phase");
    }
    if (!std::isfinite(g.total->value[0]))
        throw NumericError(std::string("non-finite total loss in ") + phase + " phase");
}

} // namespace

std::vector<std::string> generator_partition(Variant v, long step) {
    switch (v) {
        case Variant::B1: return {"enc.", "dec."};
        case Variant::B2: return {"enc.", "gen.shared.", "dec."};
        case Variant::B3: return {"enc.", "gen.shared.", "dec.", "wy."};
        case Variant::MASK:
            if (step % 2 == 0) return {"enc.", "gen.shared.", "dec.t.", "dec.r.", "dec.y."};
            return {"dec.m."};
    }
    return {};
}

LossReport train_step(TrainState& state, const TrainConfig& cfg, const Batch& batch) {
    SeparatorModel& m = state.model;
    m.training_mode = true;
    const AdamConfig adam{cfg.learning_rate, cfg.beta1, cfg.beta2};

    NodeP y = ad::constant(batch.y);
    NodeP t = ad::constant(batch.t);
    NodeP r = ad::constant(batch.r);

    SepOut sep = m.separate(y);

    // Discriminator phase: fakes detached, both discriminators updated.
    zero_all_grads(m);
    LossGraph d_graph = discriminator_loss(m, sep, y, t, r);
    check_finite(d_graph, "discriminator");
    ad::backward(d_graph.total);
    adam_update(m.params_with_prefix({"disc."}), adam);

    // Generator phase against the freshly updated discriminators.
    zero_all_grads(m);
    LossGraph g_graph = cfg.mode == TrainMode::SUPERVISED
                            ? supervised_generator_loss(m, sep, y, t, r, cfg.weights)
                            : weak_generator_loss(m, sep, y, cfg.weights);
    check_finite(g_graph, "generator");
    ad::backward(g_graph.total);
    adam_update(m.params_with_prefix(generator_partition(m.variant(), state.step)), adam);

    state.step += 1;

    LossReport rep = g_graph.report();
    LossReport drep = d_graph.report();
    for (const auto& term : drep.terms) rep.terms.push_back({term.name, term.value, 0.0});
    return rep;
}

namespace {

std::pair<ImageSet, ImageSet> split_image_set(const ImageSet& set, std::uint64_t seed) {
    std::vector<std::string> names;
    for (const auto& f : set.files) names.push_back(f.filename().string());
    auto halves = split_halves(names, seed);
    auto pick = [&](const std::vector<std::string>& chosen) {
        ImageSet out;
        for (const auto& f : set.files)
            if (std::find(chosen.begin(), chosen.end(), f.filename().string()) != chosen.end())
                out.files.push_back(f);
        return out;
    };
    return {pick(halves.first), pick(halves.second)};
}

Image fit_size(Image img, int size) {
    if (img.height == size && img.width == size) return img;
    return resize_bilinear(img, size, size);
}

Tensor sample_pool_batch(const ImageSet& set, int n, int size, RandomState& rng) {
    std::vector<Image> imgs;
    imgs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(set.size()) - 1));
        Image img = resize_bilinear(set.load(idx), 256, 256);
        imgs.push_back(fit_size(flip_lr(random_crop_resize(img, rng), rng), size));
    }
    return images_to_tensor(imgs);
}

Batch make_batch(const TrainConfig& cfg, const ImageSet& tset, const ImageSet& rset,
                 const ImageSet& t_pool, const ImageSet& r_pool, RandomState& rng) {
    Batch b;
    auto pairs = build_batch(tset, rset, cfg.kinds, cfg.batch_size, rng);
    std::vector<Image> ys;
    for (auto& p : pairs) ys.push_back(fit_size(std::move(p.y), cfg.input_size));
    b.y = images_to_tensor(ys);
    if (cfg.mode == TrainMode::SUPERVISED) {
        std::vector<Image> ts, rs;
        for (auto& p : pairs) {
            ts.push_back(fit_size(std::move(p.t), cfg.input_size));
            rs.push_back(fit_size(std::move(p.r), cfg.input_size));
        }
        b.t = images_to_tensor(ts);
        b.r = images_to_tensor(rs);
    } else {
        b.t = sample_pool_batch(t_pool, cfg.batch_size, cfg.input_size, rng);
        b.r = sample_pool_batch(r_pool, cfg.batch_size, cfg.input_size, rng);
    }
    return b;
}

std::filesystem::path ckpt_path(const TrainConfig& cfg, long step) {
    char name[64];
    std::snprintf(name, sizeof(name), "ckpt_%06ld.ckpt", step);
    return std::filesystem::path(cfg.out_dir) / name;
}

} // namespace

TrainState fit(const TrainConfig& cfg, const std::filesystem::path& resume) {
    cfg.validate();
    ImageSet tset = ImageSet::from_directory(cfg.t_dir);
    ImageSet rset = ImageSet::from_directory(cfg.r_dir);
    if (tset.size() == 0 || rset.size() == 0)
        throw DataError("fit: empty image directory (" + cfg.t_dir + ", " + cfg.r_dir + ")");

    ImageSet t_synth = tset, r_synth = rset, t_pool, r_pool;
    if (cfg.mode == TrainMode::WEAK) {
        std::tie(t_synth, t_pool) = split_image_set(tset, cfg.seed);
        std::tie(r_synth, r_pool) = split_image_set(rset, cfg.seed + 1);
    }

    std::filesystem::create_directories(cfg.out_dir);
    std::optional<TrainState> st;
    if (!resume.empty()) {
        st.emplace(load_checkpoint(resume));
        if (st->model.variant() != cfg.variant || st->model.input_size() != cfg.input_size ||
            st->model.channel_div() != cfg.channel_div)
            throw DataError("fit: checkpoint does not match config (variant/size)");
    } else {
        RandomState init_rng(splitmix64(cfg.seed ^ 0x1234abcdull));
        st.emplace(init_model(cfg.variant, init_rng, cfg.input_size, cfg.channel_div), 0,
                   RandomState(cfg.seed));
    }

    const auto log_path = std::filesystem::path(cfg.out_dir) / "train_log.tsv";
    const bool fresh_log = !std::filesystem::exists(log_path) ||
                           std::filesystem::file_size(log_path) == 0;
    std::ofstream log(log_path, std::ios::app);
    if (!log) throw DataError("fit: cannot open log: " + log_path.string());

    bool wrote_header = !fresh_log;
    long last_saved = -1;
    while (st->step < cfg.steps) {
        Batch b = make_batch(cfg, t_synth, r_synth, t_pool, r_pool, st->rng);
        const long step_idx = st->step;
        LossReport rep = train_step(*st, cfg, b);
        if (!wrote_header) {
            log << rep.tsv_header() << '\n';
            wrote_header = true;
        }
        log << rep.tsv_line(step_idx) << '\n';
        log.flush();
        if (st->step % cfg.checkpoint_every == 0) {
            save_checkpoint(*st, ckpt_path(cfg, st->step));
            last_saved = st->step;
        }
    }
    if (last_saved != st->step) save_checkpoint(*st, ckpt_path(cfg, st->step));
    return std::move(*st);
}

GradCheckReport grad_check(Variant variant, const std::string& loss_kind, std::uint64_t seed) {
    RandomState rng(splitmix64(seed));
    const int size = 16, div = 8, batch = 2;
    const Variant v = loss_kind == "weak" ? Variant::MASK : variant;
    SeparatorModel m = init_model(v, rng, size, div);
    m.training_mode = true;
    // The production init (stddev 0.02) leaves gradients near roundoff, where
    // finite differences are dominated by truncation error; jitter parameters
    // to a scale where both sides of the comparison are well-conditioned.
    for (const auto& p : m.params())
        if (p->trainable)
            for (std::size_t i = 0; i < p->value.numel(); ++i)
                p->value[i] += rng.normal(0.0, 0.1);
    LossWeights w; // defaults (100, 100)

    auto rand_tensor = [&](std::vector<int> shape) {
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform();
        return t;
    };
    const Tensor yt = rand_tensor({batch, 3, size, size});
    const Tensor tt = rand_tensor({batch, 3, size, size});
    const Tensor rt = rand_tensor({batch, 3, size, size});

    std::function<NodeP()> build;
    std::vector<std::string> partition;
    if (loss_kind == "gan_d") {
        // Fakes are fixed inputs to the discriminator objective.
        SepOut sep = m.separate(ad::constant(yt));
        const Tensor fake_t = sep.t_hat->value.clone();
        const Tensor fake_r = sep.r_hat->value.clone();
        const bool cond = m.conditional_discriminators();
        build = [&m, yt, tt, rt, fake_t, fake_r, cond]() {
            NodeP y = ad::constant(yt);
            NodeP cnd = cond ? y : nullptr;
            NodeP dt = gan_d_loss(m.discriminate(Branch::T, ad::constant(tt), cnd),
                                  m.discriminate(Branch::T, ad::constant(fake_t), cnd));
            NodeP dr = gan_d_loss(m.discriminate(Branch::R, ad::constant(rt), cnd),
                                  m.discriminate(Branch::R, ad::constant(fake_r), cnd));
            return ad::add(dt, dr);
        };
        partition = {"disc."};
    } else if (loss_kind == "l1") {
        build = [&m, yt, tt, rt]() {
            SepOut sep = m.separate(ad::constant(yt));
            return ad::add(l1_term(ad::constant(tt), sep.t_hat),
                           l1_term(ad::constant(rt), sep.r_hat));
        };
        partition = {"enc.", "gen.", "dec.", "wy."};
    } else if (loss_kind == "gan_g") {
        build = [&m, yt]() {
            SepOut sep = m.separate(ad::constant(yt));
            NodeP y = ad::constant(yt);
            NodeP cnd = m.conditional_discriminators() ? y : nullptr;
            return ad::add(gan_g_loss(m.discriminate(Branch::T, sep.t_hat, cnd)),
                           gan_g_loss(m.discriminate(Branch::R, sep.r_hat, cnd)));
        };
        partition = {"enc.", "gen.", "dec.", "disc.", "wy."};
    } else if (loss_kind == "content") {
        if (v != Variant::B3) throw std::invalid_argument("grad_check: content requires b3");
        build = [&m, yt, tt, rt]() {
            SepOut sep = m.separate(ad::constant(yt));
            return content_loss(m, sep.enc, ad::constant(tt), ad::constant(rt), sep.t_hat,
                                sep.r_hat, sep.wy);
        };
        partition = {"enc.", "gen.", "dec.", "wy."};
    } else if (loss_kind == "supervised") {
        build = [&m, yt, tt, rt, w]() {
            NodeP y = ad::constant(yt);
            SepOut sep = m.separate(y);
            return supervised_generator_loss(m, sep, y, ad::constant(tt), ad::constant(rt), w)
                .total;
        };
        partition = {"enc.", "gen.", "dec.", "disc.", "wy."};
    } else if (loss_kind == "weak") {
        build = [&m, yt, w]() {
            NodeP y = ad::constant(yt);
            SepOut sep = m.separate(y);
            return weak_generator_loss(m, sep, y, w).total;
        };
        partition = {"enc.", "gen.", "dec.", "disc."};
    } else {
        throw std::invalid_argument("grad_check: unknown loss kind " + loss_kind);
    }

    // Analytic gradients.
    zero_all_grads(m);
    ad::backward(build());

    // Sample 64 coordinates over the trainable partition.
    std::vector<ParamP> pool;
    for (const auto& p : m.params_with_prefix(partition))
        if (p->trainable) pool.push_back(p);
    GradCheckReport rep;
    const double h = 1e-5;
    for (int k = 0; k < 64; ++k) {
        auto& p = pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
        const auto i = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int>(p->value.numel()) - 1));
        const double analytic = p->grad[i];
        const double orig = p->value[i];
        auto eval_at = [&](double x) {
            p->value[i] = x;
            return build()->value[0];
        };
        // Estimators at two step sizes with second- and fourth-order stencils.
        // The network is piecewise smooth (rectifier and clamp kinks); any one
        // stencil whose window straddles a kink is corrupted, but a kink can
        // lie inside every window only within h/4 of the coordinate, which the
        // parameter jitter makes vanishingly unlikely. The fourth-order forms
        // remove ordinary truncation error, so agreement of any clean
        // estimator validates the analytic value.
        auto num = [&](double step, bool fourth) {
            const double f1 = eval_at(orig + step) - eval_at(orig - step);
            if (!fourth) return f1 / (2.0 * step);
            const double f2 = eval_at(orig + 2 * step) - eval_at(orig - 2 * step);
            return (8.0 * f1 - f2) / (12.0 * step);
        };
        // The 1e-4 denominator floor is an absolute tolerance of 1e-7 at the
        // 1e-3 relative threshold; below it the difference is pure evaluation
        // noise (double-precision loss sums amplified by the 1/2h factor).
        auto rel_err = [&](double numeric) {
            const double denom = std::max(std::fabs(analytic), std::fabs(numeric));
            if (denom < 1e-8) return 0.0;
            return std::fabs(analytic - numeric) / std::max(denom, 1e-4);
        };
        double rel = rel_err(num(h, false));
        for (auto [step, fourth] : {std::pair{h, true}, {h / 4, false}, {h / 4, true}})
            rel = std::min(rel, rel_err(num(step, fourth)));
        p->value[i] = orig;
        rep.max_rel_err = std::max(rep.max_rel_err, rel);
        ++rep.n_checked;
    }
    return rep;
}

} // namespace reflectsep
