#include "potgui/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "potgui/rng.hpp"

namespace potgui {

namespace {

// Class embeddings are kept small relative to the noise floor so a freshly
// initialized head does not solve the task in one epoch.
constexpr double kEmbeddingScale = 0.18;

void draw_shape(std::vector<int>& labels, int base, int height, int width,
                int class_id, ShapeKind kind, Rng& rng) {
    switch (kind) {
    case ShapeKind::rectangle: {
        const int max_h = std::max(4, height / 2);
        const int max_w = std::max(4, width / 2);
        const int h = rng.uniform_int(std::max(3, height / 6), max_h + 1);
        const int w = rng.uniform_int(std::max(3, width / 6), max_w + 1);
        const int y0 = rng.uniform_int(0, height - h + 1);
        const int x0 = rng.uniform_int(0, width - w + 1);
        for (int y = y0; y < y0 + h; ++y)
            for (int x = x0; x < x0 + w; ++x)
                labels[static_cast<std::size_t>(base) + y * width + x] = class_id;
        break;
    }
    case ShapeKind::disc: {
        const int r = rng.uniform_int(std::max(2, height / 8), std::max(3, height / 4) + 1);
        const int cy = rng.uniform_int(0, height);
        const int cx = rng.uniform_int(0, width);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r)
                    labels[static_cast<std::size_t>(base) + y * width + x] = class_id;
        break;
    }
    case ShapeKind::band: {
        const int h = rng.uniform_int(std::max(2, height / 10), std::max(3, height / 5) + 1);
        const int y0 = rng.uniform_int(0, height - h + 1);
        for (int y = y0; y < y0 + h; ++y)
            for (int x = 0; x < width; ++x)
                labels[static_cast<std::size_t>(base) + y * width + x] = class_id;
        break;
    }
    }
}

bool shares_ok(const std::vector<int>& labels, int classes) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
    for (int id : labels) counts[static_cast<std::size_t>(id)]++;
    const double total = static_cast<double>(labels.size());
    for (std::size_t c = 0; c < counts.size(); ++c) {
        const double share = static_cast<double>(counts[c]) / total;
        if (share < 0.01 || share > 0.90) return false;
    }
    return true;
}

} // namespace

SceneSet generate_scenes(int count, int height, int width, int classes,
                         std::uint64_t seed) {
    if (classes < 2)
        throw InvalidInputError("generate_scenes: needs at least 2 classes, got " +
                                std::to_string(classes));
    if (count < 1)
        throw InvalidInputError("generate_scenes: count must be >= 1");
    if (height < 8 || width < 8)
        throw InvalidInputError("generate_scenes: height and width must be >= 8");
    if (static_cast<long long>(classes) > static_cast<long long>(height) * width)
        throw InvalidInputError("generate_scenes: more classes (" + std::to_string(classes) +
                                ") than pixels (" + std::to_string(height * width) + ")");

    const int pixels = height * width;
    for (std::uint64_t attempt = 0; attempt < 1000; ++attempt) {
        Rng rng(seed + attempt * 0x9E3779B97F4A7C15ULL);
        SceneSet set;
        set.count = count;
        set.height = height;
        set.width = width;
        set.classes = classes;
        set.labels.assign(static_cast<std::size_t>(count) * pixels, 0);
        set.regions.resize(static_cast<std::size_t>(count));
        for (int s = 0; s < count; ++s) {
            const int base = s * pixels;
            std::vector<int> order(static_cast<std::size_t>(classes - 1));
            std::iota(order.begin(), order.end(), 1);
            rng.shuffle(order);
            for (int c : order) {
                const auto kind = static_cast<ShapeKind>(rng.uniform_int(0, 3));
                draw_shape(set.labels, base, height, width, c, kind, rng);
                set.regions[static_cast<std::size_t>(s)].push_back({c, kind});
            }
            // one extra shape so scenes vary in composition
            const int extra = rng.uniform_int(1, classes);
            const auto kind = static_cast<ShapeKind>(rng.uniform_int(0, 3));
            draw_shape(set.labels, base, height, width, extra, kind, rng);
            set.regions[static_cast<std::size_t>(s)].push_back({extra, kind});
        }
        if (shares_ok(set.labels, classes)) return set;
    }
    throw InvalidInputError("generate_scenes: could not satisfy class share bounds "
                            "for this configuration");
}

LabelGrid scene_labels(const SceneSet& scenes) {
    LabelGrid labels(scenes.count, scenes.pixels(), scenes.classes);
    labels.ids = scenes.labels;
    return labels;
}

std::vector<double> snr_profile(int layer_count) {
    std::vector<double> snr(static_cast<std::size_t>(layer_count));
    for (int l = 0; l < layer_count; ++l) {
        const double t = (2.0 * l + 1.0 - layer_count) / layer_count;
        snr[static_cast<std::size_t>(l)] = 1.0 + 3.0 * (1.0 - t * t);
    }
    return snr;
}

FeatureStack synth_features(const SceneSet& scenes, int layer_count, int dims,
                            double base_noise, std::uint64_t seed) {
    if (layer_count < 1)
        throw InvalidInputError("synth_features: layer count must be >= 1");
    if (dims < scenes.classes)
        throw InvalidInputError("synth_features: dims (" + std::to_string(dims) +
                                ") must be >= class count (" +
                                std::to_string(scenes.classes) + ")");
    if (!(base_noise >= 0.0) || !std::isfinite(base_noise))
        throw InvalidInputError("synth_features: base_noise must be finite and >= 0");

    FeatureStack stack;
    stack.samples = scenes.count;
    stack.pixels = scenes.pixels();
    stack.dims = dims;
    stack.layer_snr = snr_profile(layer_count);
    stack.layers.resize(static_cast<std::size_t>(layer_count));

    Rng rng(seed);
    const std::size_t grid = static_cast<std::size_t>(scenes.count) * scenes.pixels();
    for (int l = 0; l < layer_count; ++l) {
        std::vector<double> emb(static_cast<std::size_t>(scenes.classes) * dims);
        for (double& v : emb) v = rng.normal() * kEmbeddingScale;
        const double noise_std = base_noise / stack.layer_snr[static_cast<std::size_t>(l)];
        std::vector<float>& layer = stack.layers[static_cast<std::size_t>(l)];
        layer.resize(grid * static_cast<std::size_t>(dims));
        for (std::size_t px = 0; px < grid; ++px) {
            const double* e = emb.data() +
                              static_cast<std::size_t>(scenes.labels[px]) * dims;
            float* f = layer.data() + px * static_cast<std::size_t>(dims);
            if (noise_std == 0.0) {
                for (int d = 0; d < dims; ++d) f[d] = static_cast<float>(e[d]);
            } else {
                for (int d = 0; d < dims; ++d)
                    f[d] = static_cast<float>(e[d] + rng.normal() * noise_std);
            }
        }
    }
    return stack;
}

LayerMode parse_layer_mode(const std::string& name) {
    if (name == "Last") return LayerMode::last;
    if (name == "Middle_1") return LayerMode::middle_1;
    if (name == "All_Avg") return LayerMode::all_avg;
    if (name == "Middle_4_Avg") return LayerMode::middle_4_avg;
    if (name == "Middle_4") return LayerMode::middle_4;
    if (name == "All") return LayerMode::all;
    throw InvalidInputError("unknown layer mode '" + name +
                            "' (expected Last, Middle_1, All_Avg, Middle_4_Avg, "
                            "Middle_4 or All)");
}

std::string layer_mode_name(LayerMode mode) {
    switch (mode) {
    case LayerMode::last: return "Last";
    case LayerMode::middle_1: return "Middle_1";
    case LayerMode::all_avg: return "All_Avg";
    case LayerMode::middle_4_avg: return "Middle_4_Avg";
    case LayerMode::middle_4: return "Middle_4";
    case LayerMode::all: return "All";
    }
    return "?";
}

FeatureGrid select_layers(const FeatureStack& stack, LayerMode mode) {
    const int layer_count = stack.layer_count();
    if (layer_count < 1)
        throw InvalidInputError("select_layers: empty stack");
    const bool needs_four =
        mode == LayerMode::middle_4 || mode == LayerMode::middle_4_avg;
    if (needs_four && layer_count < 4)
        throw InvalidInputError("select_layers: " + layer_mode_name(mode) +
                                " needs at least 4 layers, stack has " +
                                std::to_string(layer_count));

    const int mid = layer_count / 2;
    const std::size_t grid =
        static_cast<std::size_t>(stack.samples) * stack.pixels;
    const int d = stack.dims;

    auto copy_single = [&](int layer) {
        FeatureGrid out(stack.samples, stack.pixels, d);
        const std::vector<float>& src = stack.layers[static_cast<std::size_t>(layer)];
        for (std::size_t i = 0; i < src.size(); ++i)
            out.values[i] = static_cast<double>(src[i]);
        return out;
    };
    auto average = [&](int first, int n) {
        FeatureGrid out(stack.samples, stack.pixels, d);
        const double inv = 1.0 / n;
        for (int l = first; l < first + n; ++l) {
            const std::vector<float>& src = stack.layers[static_cast<std::size_t>(l)];
            for (std::size_t i = 0; i < src.size(); ++i)
                out.values[i] += static_cast<double>(src[i]);
        }
        for (double& v : out.values) v *= inv;
        return out;
    };
    auto concat = [&](int first, int n) {
        FeatureGrid out(stack.samples, stack.pixels, d * n);
        for (int l = 0; l < n; ++l) {
            const std::vector<float>& src = stack.layers[static_cast<std::size_t>(first + l)];
            for (std::size_t px = 0; px < grid; ++px) {
                const float* s = src.data() + px * static_cast<std::size_t>(d);
                double* o = out.values.data() +
                            px * static_cast<std::size_t>(d) * n +
                            static_cast<std::size_t>(l) * d;
                for (int i = 0; i < d; ++i) o[i] = static_cast<double>(s[i]);
            }
        }
        return out;
    };

    switch (mode) {
    case LayerMode::last: return copy_single(layer_count - 1);
    case LayerMode::middle_1: return copy_single(mid);
    case LayerMode::all_avg: return average(0, layer_count);
    case LayerMode::middle_4_avg: return average(mid - 2, 4);
    case LayerMode::middle_4: return concat(mid - 2, 4);
    case LayerMode::all: return concat(0, layer_count);
    }
    throw InvalidInputError("select_layers: unknown mode");
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_f32(std::string& out, float v) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct ByteReader {
    const std::string& data;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) {
        if (pos + n > data.size())
            throw FormatError(pos, std::string("truncated while reading ") + what);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        const auto lo = static_cast<unsigned char>(data[pos]);
        const auto hi = static_cast<unsigned char>(data[pos + 1]);
        pos += 2;
        return static_cast<std::uint16_t>(lo | (hi << 8));
    }
    float f32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        pos += 4;
        return std::bit_cast<float>(v);
    }
};

} // namespace

void write_dataset(const std::string& path, const SceneSet& scenes,
                   const FeatureStack& stack) {
    if (stack.samples != scenes.count || stack.pixels != scenes.pixels())
        throw InvalidInputError("write_dataset: scenes and feature stack disagree in shape");
    if (scenes.classes > 65536)
        throw InvalidInputError("write_dataset: class count exceeds u16 label range");
    for (int id : scenes.labels)
        if (id < 0 || id >= scenes.classes)
            throw InvalidInputError("write_dataset: label outside class range");

    const int pixels = scenes.pixels();
    const int layer_count = stack.layer_count();
    std::string blob;
    blob.reserve(32 +
                 static_cast<std::size_t>(scenes.count) * pixels *
                     (2 + static_cast<std::size_t>(layer_count) * stack.dims * 4));
    blob += "PGSD";
    put_u32(blob, 1);
    put_u32(blob, static_cast<std::uint32_t>(scenes.count));
    put_u32(blob, static_cast<std::uint32_t>(scenes.height));
    put_u32(blob, static_cast<std::uint32_t>(scenes.width));
    put_u32(blob, static_cast<std::uint32_t>(scenes.classes));
    put_u32(blob, static_cast<std::uint32_t>(layer_count));
    put_u32(blob, static_cast<std::uint32_t>(stack.dims));
    for (int s = 0; s < scenes.count; ++s) {
        const std::size_t base = static_cast<std::size_t>(s) * pixels;
        for (int p = 0; p < pixels; ++p)
            put_u16(blob, static_cast<std::uint16_t>(scenes.labels[base + p]));
        for (int l = 0; l < layer_count; ++l) {
            const std::vector<float>& layer = stack.layers[static_cast<std::size_t>(l)];
            const float* f = layer.data() + base * static_cast<std::size_t>(stack.dims);
            const std::size_t n = static_cast<std::size_t>(pixels) * stack.dims;
            for (std::size_t i = 0; i < n; ++i) put_f32(blob, f[i]);
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw IoError("short write to '" + path + "'");
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.size() < 4 || data.compare(0, 4, "PGSD") != 0)
        throw FormatError(0, "bad magic (expected PGSD)");
    ByteReader r{data};
    r.pos = 4;
    const std::uint32_t version = r.u32("version");
    if (version != 1)
        throw FormatError(4, "unsupported dataset version " + std::to_string(version));
    const std::uint32_t n = r.u32("sample count");
    const std::uint32_t h = r.u32("height");
    const std::uint32_t w = r.u32("width");
    const std::uint32_t c = r.u32("class count");
    const std::uint32_t l = r.u32("layer count");
    const std::uint32_t d = r.u32("feature dims");
    if (n < 1 || h < 1 || w < 1 || c < 2 || l < 1 || d < 1)
        throw FormatError(8, "implausible dataset header");
    const std::size_t pixels = static_cast<std::size_t>(h) * w;
    const std::size_t expect = 32 + static_cast<std::size_t>(n) * pixels *
                                        (2 + static_cast<std::size_t>(l) * d * 4);
    if (data.size() != expect)
        throw FormatError(data.size() < expect ? data.size() : expect,
                          "payload size " + std::to_string(data.size()) +
                              " does not match header (expected " +
                              std::to_string(expect) + " bytes)");

    Dataset ds;
    ds.scenes.count = static_cast<int>(n);
    ds.scenes.height = static_cast<int>(h);
    ds.scenes.width = static_cast<int>(w);
    ds.scenes.classes = static_cast<int>(c);
    ds.scenes.labels.resize(static_cast<std::size_t>(n) * pixels);
    ds.scenes.regions.resize(n);
    ds.features.samples = static_cast<int>(n);
    ds.features.pixels = static_cast<int>(pixels);
    ds.features.dims = static_cast<int>(d);
    ds.features.layer_snr.assign(l, 0.0);
    ds.features.layers.resize(l);
    for (std::uint32_t ll = 0; ll < l; ++ll)
        ds.features.layers[ll].resize(static_cast<std::size_t>(n) * pixels * d);

    for (std::uint32_t s = 0; s < n; ++s) {
        const std::size_t base = static_cast<std::size_t>(s) * pixels;
        for (std::size_t p = 0; p < pixels; ++p) {
            const std::size_t at = r.pos;
            const std::uint16_t id = r.u16("label");
            if (id >= c)
                throw FormatError(at, "label " + std::to_string(id) +
                                          " outside class range [0, " +
                                          std::to_string(c) + ")");
            ds.scenes.labels[base + p] = id;
        }
        for (std::uint32_t ll = 0; ll < l; ++ll) {
            float* f = ds.features.layers[ll].data() + base * d;
            const std::size_t cnt = pixels * d;
            for (std::size_t i = 0; i < cnt; ++i) f[i] = r.f32("feature");
        }
    }
    return ds;
}

} // namespace potgui
