#include <cstring>
#include <fstream>

#include "reflectsep/errors.hpp"
#include "reflectsep/training.hpp"

namespace reflectsep {

namespace {

constexpr char kMagic[8] = {'R', 'S', 'E', 'P', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_i64(std::ostream& os, std::int64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void put_f64s(std::ostream& os, const Tensor& t) {
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw DataError("checkpoint: truncated file");
    return v;
}
std::int64_t get_i64(std::istream& is) {
    std::int64_t v;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw DataError("checkpoint: truncated file");
    return v;
}
std::string get_str(std::istream& is) {
    const auto n = get_u32(is);
    if (n > (1u << 20)) throw DataError("checkpoint: corrupt string length");
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw DataError("checkpoint: truncated file");
    return s;
}
void get_f64s(std::istream& is, Tensor& t) {
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!is) throw DataError("checkpoint: truncated file");
}

} // namespace

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("checkpoint: cannot write " + tmp);
        os.write(kMagic, sizeof kMagic);
        put_u32(os, kVersion);
        put_str(os, to_string(state.model.variant()));
        put_u32(os, static_cast<std::uint32_t>(state.model.input_size()));
        put_u32(os, static_cast<std::uint32_t>(state.model.channel_div()));
        put_i64(os, state.step);
        put_str(os, state.rng.serialize());
        const auto& params = state.model.params();
        put_u32(os, static_cast<std::uint32_t>(params.size()));
        for (const auto& p : params) {
            put_str(os, p->name);
            os.put(p->trainable ? 1 : 0);
            put_u32(os, static_cast<std::uint32_t>(p->value.ndim()));
            for (int d : p->value.shape) put_u32(os, static_cast<std::uint32_t>(d));
            put_f64s(os, p->value);
            if (p->trainable) {
                put_f64s(os, p->m);
                put_f64s(os, p->v);
                put_i64(os, p->step);
            }
        }
        if (!os) throw DataError("checkpoint: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open " + path.string());
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw DataError("checkpoint: bad magic in " + path.string());
    const auto version = get_u32(is);
    if (version != kVersion)
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    const Variant variant = variant_from_string(get_str(is));
    const int input_size = static_cast<int>(get_u32(is));
    const int channel_div = static_cast<int>(get_u32(is));
    const long step = static_cast<long>(get_i64(is));
    RandomState rng = RandomState::deserialize(get_str(is));

    RandomState scratch(0);
    TrainState st(init_model(variant, scratch, input_size, channel_div), step, rng);

    const auto n_params = get_u32(is);
    if (n_params != st.model.params().size())
        throw DataError("checkpoint: parameter count mismatch");
    for (std::uint32_t i = 0; i < n_params; ++i) {
        const std::string name = get_str(is);
        const bool trainable = is.get() == 1;
        const auto ndim = get_u32(is);
        if (ndim > 8) throw DataError("checkpoint: corrupt shape");
        std::vector<int> shape;
        for (std::uint32_t d = 0; d < ndim; ++d)
            shape.push_back(static_cast<int>(get_u32(is)));
        ad::ParamP p;
        try {
            p = st.model.find_param(name);
        } catch (const std::invalid_argument&) {
            throw DataError("checkpoint: unknown parameter " + name);
        }
        if (p->value.shape != shape)
            throw DataError("checkpoint: shape mismatch for " + name + " (file " +
                            Tensor::zeros(shape).shape_str() + ", model " +
                            p->value.shape_str() + ")");
        if (p->trainable != trainable)
            throw DataError("checkpoint: trainability mismatch for " + name);
        get_f64s(is, p->value);
        if (trainable) {
            get_f64s(is, p->m);
            get_f64s(is, p->v);
            p->step = static_cast<long>(get_i64(is));
        }
    }
    return st;
}

} // namespace reflectsep
