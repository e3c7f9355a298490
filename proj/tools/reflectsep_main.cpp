#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "reflectsep/errors.hpp"
#include "reflectsep/evaluation.hpp"
#include "reflectsep/imageio.hpp"
#include "reflectsep/synthesis.hpp"
#include "reflectsep/training.hpp"

namespace rs = reflectsep;

namespace {

// REFLECTSEP_SEED, when set, takes precedence over --seed / config seed.
void apply_env_seed(std::uint64_t& seed) {
    if (const char* env = std::getenv("REFLECTSEP_SEED")) seed = std::stoull(env);
}

std::set<rs::SynthModelKind> parse_kinds(const std::string& csv) {
    std::set<rs::SynthModelKind> kinds;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) kinds.insert(rs::synth_kind_from_string(item));
    if (kinds.empty()) throw rs::DataError("--kinds: empty list");
    return kinds;
}

int cmd_synth(const std::string& t_dir, const std::string& r_dir, const std::string& kinds_csv,
              int n, std::uint64_t seed, const std::string& out) {
    auto kinds = parse_kinds(kinds_csv);
    rs::ImageSet tset = rs::ImageSet::from_directory(t_dir);
    rs::ImageSet rset = rs::ImageSet::from_directory(r_dir);
    if (tset.size() == 0 || rset.size() == 0)
        throw rs::DataError("synth: empty image directory");
    rs::RandomState rng(seed);
    std::vector<std::pair<std::string, std::string>> names;
    auto pairs = rs::build_batch(tset, rset, kinds, n, rng, {}, &names);
    rs::export_corpus(pairs, names, out);
    std::cout << "wrote " << pairs.size() << " pairs to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& resume) {
    rs::TrainConfig cfg = rs::parse_config_file(config_path);
    apply_env_seed(cfg.seed);
    rs::TrainState st = rs::fit(cfg, resume);
    std::cout << "finished at step " << st.step << "; outputs in " << cfg.out_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& t_dir, const std::string& r_dir,
             const std::string& kinds_csv, int n, std::uint64_t seed, const std::string& out,
             int n_panels) {
    rs::TrainState st = rs::load_checkpoint(ckpt);
    auto kinds = parse_kinds(kinds_csv);
    rs::EvalGrid grid = rs::evaluate(st.model, t_dir, r_dir, kinds, n, seed);
    std::filesystem::create_directories(out);
    {
        std::ofstream f(std::filesystem::path(out) / "grid.tsv");
        f << grid.tsv();
    }
    {
        std::ofstream f(std::filesystem::path(out) / "grid.txt");
        f << grid.text();
    }
    std::cout << grid.text();
    if (n_panels > 0) {
        rs::ImageSet tset = rs::ImageSet::from_directory(t_dir);
        rs::ImageSet rset = rs::ImageSet::from_directory(r_dir);
        rs::RandomState rng(rs::splitmix64(seed + 1));
        auto pairs = rs::build_batch(tset, rset, kinds, n_panels, rng);
        auto files = rs::dump_panels(st.model, pairs, std::filesystem::path(out) / "panels");
        std::cout << "wrote " << files.size() << " panels\n";
    }
    return 0;
}

int cmd_separate(const std::string& ckpt, const std::string& input, const std::string& out) {
    rs::TrainState st = rs::load_checkpoint(ckpt);
    st.model.training_mode = false;
    const int size = st.model.input_size();
    rs::Image y = rs::load_image(input);
    if (y.channels != 3) throw rs::DataError("separate: input must be a 3-channel image");
    if (y.height != size || y.width != size) y = rs::resize_bilinear(y, size, size);
    rs::SepOut sep = st.model.separate_values(rs::images_to_tensor({y}));
    std::filesystem::create_directories(out);
    rs::save_image(std::filesystem::path(out) / "t_hat.png",
                   rs::tensor_to_images(sep.t_hat->value)[0]);
    rs::save_image(std::filesystem::path(out) / "r_hat.png",
                   rs::tensor_to_images(sep.r_hat->value)[0]);
    if (st.model.variant() == rs::Variant::MASK) {
        rs::save_image(std::filesystem::path(out) / "mask.png",
                       rs::tensor_to_images(sep.mask->value)[0]);
        rs::save_image(std::filesystem::path(out) / "mt.png",
                       rs::tensor_to_images(sep.mt->value)[0]);
        rs::save_image(std::filesystem::path(out) / "mr.png",
                       rs::tensor_to_images(sep.mr->value)[0]);
    }
    std::cout << "wrote separation to " << out << "\n";
    return 0;
}

int cmd_gradcheck(const std::string& variant_str, const std::string& loss, std::uint64_t seed) {
    const rs::Variant v = rs::variant_from_string(variant_str);
    std::vector<std::string> losses;
    if (!loss.empty()) {
        losses = {loss};
    } else if (v == rs::Variant::MASK) {
        losses = {"gan_d", "weak"};
    } else {
        losses = {"l1", "gan_g", "gan_d", "supervised"};
        if (v == rs::Variant::B3) losses.insert(losses.end() - 1, "content");
    }
    double worst = 0.0;
    for (const auto& kind : losses) {
        rs::GradCheckReport rep = rs::grad_check(v, kind, seed);
        worst = std::max(worst, rep.max_rel_err);
        std::cout << variant_str << " " << kind << ": max rel err " << rep.max_rel_err << " over "
                  << rep.n_checked << " coordinates\n";
    }
    std::cout << "overall max rel err " << worst << "\n";
    return worst < 1e-3 ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"reflection separation pipeline: synthesis, training, inference, evaluation"};
    app.require_subcommand(1);

    std::string t_dir, r_dir, kinds = "linear,blur,ghost,clip,clip_noblur";
    std::string out = "out", config, resume, ckpt, input, variant = "b3", loss;
    int n = 16, n_panels = 0;
    std::uint64_t seed = 0;

    auto* synth = app.add_subcommand("synth", "Synthesize a labeled (y, t, r) corpus");
    synth->add_option("--t-dir", t_dir, "Directory of transmitted-scene images")->required();
    synth->add_option("--r-dir", r_dir, "Directory of reflected-scene images")->required();
    synth->add_option("--kinds", kinds, "Comma-separated synthesis model kinds");
    synth->add_option("--n", n, "Number of pairs to synthesize");
    synth->add_option("--seed", seed, "RNG seed (REFLECTSEP_SEED overrides)");
    synth->add_option("--out", out, "Output corpus directory");

    auto* train = app.add_subcommand("train", "Train a separator from a config file");
    train->add_option("--config", config, "key=value config file")->required();
    train->add_option("--resume", resume, "Checkpoint to resume from");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on synthesized pairs");
    eval->add_option("--ckpt", ckpt, "Checkpoint file")->required();
    eval->add_option("--t-dir", t_dir, "Directory of transmitted-scene images")->required();
    eval->add_option("--r-dir", r_dir, "Directory of reflected-scene images")->required();
    eval->add_option("--kinds", kinds, "Comma-separated synthesis model kinds");
    eval->add_option("--n", n, "Pairs per kind");
    eval->add_option("--seed", seed, "RNG seed (REFLECTSEP_SEED overrides)");
    eval->add_option("--out", out, "Output directory for grid.tsv/grid.txt");
    eval->add_option("--panels", n_panels, "Also dump this many qualitative panels");

    auto* sep = app.add_subcommand("separate", "Separate one image with a checkpoint");
    sep->add_option("--ckpt", ckpt, "Checkpoint file")->required();
    sep->add_option("--input", input, "Input image (resized to the model input size)")->required();
    sep->add_option("--out", out, "Output directory")->required();

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient self-check");
    gc->add_option("--variant", variant, "Model variant: b1|b2|b3|mask");
    gc->add_option("--loss", loss, "Restrict to one loss kind (default: all for the variant)");
    gc->add_option("--seed", seed, "RNG seed (REFLECTSEP_SEED overrides)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        apply_env_seed(seed);
        if (synth->parsed()) return cmd_synth(t_dir, r_dir, kinds, n, seed, out);
        if (train->parsed()) return cmd_train(config, resume);
        if (eval->parsed()) return cmd_eval(ckpt, t_dir, r_dir, kinds, n, seed, out, n_panels);
        if (sep->parsed()) return cmd_separate(ckpt, input, out);
        if (gc->parsed()) return cmd_gradcheck(variant, loss, seed);
    } catch (const rs::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const rs::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
