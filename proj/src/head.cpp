#include "potgui/head.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "potgui/rng.hpp"

namespace potgui {

namespace {

void check_widths(const std::vector<int>& widths) {
    if (widths.size() < 2)
        throw InvalidInputError("head widths need at least input and output entries");
    for (int w : widths)
        if (w < 1)
            throw InvalidInputError("head width must be >= 1, got " + std::to_string(w));
    if (widths.back() < 2)
        throw InvalidInputError("head output width must be >= 2 classes, got " +
                                std::to_string(widths.back()));
}

void check_params(const HeadParams& p) {
    check_widths(p.widths);
    if (p.weights.size() + 1 != p.widths.size() || p.biases.size() != p.weights.size())
        throw InvalidInputError("head params: layer lists do not match widths");
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        const std::size_t fan_in = static_cast<std::size_t>(p.widths[l]);
        const std::size_t fan_out = static_cast<std::size_t>(p.widths[l + 1]);
        if (p.weights[l].size() != fan_in * fan_out || p.biases[l].size() != fan_out)
            throw InvalidInputError("head params: layer " + std::to_string(l) +
                                    " storage does not match widths");
        for (double v : p.weights[l])
            if (!std::isfinite(v))
                throw InvalidInputError("head params: non-finite weight");
        for (double v : p.biases[l])
            if (!std::isfinite(v))
                throw InvalidInputError("head params: non-finite bias");
    }
}

// out[row, j] = sum_i in[row, i] * W[i, j] + b[j], optional rectifier
void affine(const double* in, std::size_t rows, int fan_in, int fan_out,
            const std::vector<double>& w, const std::vector<double>& b,
            bool rectify, double* out) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = in + r * static_cast<std::size_t>(fan_in);
        double* y = out + r * static_cast<std::size_t>(fan_out);
        for (int j = 0; j < fan_out; ++j) y[j] = b[static_cast<std::size_t>(j)];
        for (int i = 0; i < fan_in; ++i) {
            const double xi = x[i];
            const double* wrow = w.data() + static_cast<std::size_t>(i) * fan_out;
            for (int j = 0; j < fan_out; ++j) y[j] += xi * wrow[j];
        }
        if (rectify)
            for (int j = 0; j < fan_out; ++j)
                if (y[j] < 0.0) y[j] = 0.0;
    }
}

LogitGrid run_forward(const FeatureGrid& features, const HeadParams& params,
                      HeadTape* tape) {
    check_params(params);
    if (features.dims != params.input_dims())
        throw InvalidInputError("head_forward: feature width " +
                                std::to_string(features.dims) +
                                " does not match head input width " +
                                std::to_string(params.input_dims()));
    const std::size_t rows =
        static_cast<std::size_t>(features.samples) * features.pixels;
    const int layers = params.layer_count();

    if (tape) {
        tape->widths = params.widths;
        tape->samples = features.samples;
        tape->pixels = features.pixels;
        tape->hidden.assign(static_cast<std::size_t>(layers > 0 ? layers - 1 : 0), {});
        tape->recorded = true;
    }

    LogitGrid logits(features.samples, features.pixels, params.output_classes());
    std::vector<double> cur; // current activation buffer for hidden layers
    const double* in = features.values.data();
    int in_width = features.dims;
    for (int l = 0; l < layers; ++l) {
        const int out_width = params.widths[static_cast<std::size_t>(l) + 1];
        const bool last = l == layers - 1;
        if (last) {
            affine(in, rows, in_width, out_width, params.weights[static_cast<std::size_t>(l)],
                   params.biases[static_cast<std::size_t>(l)], false, logits.values.data());
        } else {
            std::vector<double> next(rows * static_cast<std::size_t>(out_width));
            affine(in, rows, in_width, out_width, params.weights[static_cast<std::size_t>(l)],
                   params.biases[static_cast<std::size_t>(l)], true, next.data());
            if (tape) {
                tape->hidden[static_cast<std::size_t>(l)] = std::move(next);
                in = tape->hidden[static_cast<std::size_t>(l)].data();
            } else {
                cur = std::move(next);
                in = cur.data();
            }
            in_width = out_width;
        }
    }
    return logits;
}

} // namespace

std::size_t HeadParams::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += weights[l].size() + biases[l].size();
    return n;
}

HeadParams init_head(const std::vector<int>& widths, std::uint64_t seed) {
    check_widths(widths);
    HeadParams p;
    p.widths = widths;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t fan_in = static_cast<std::size_t>(widths[l]);
        const std::size_t fan_out = static_cast<std::size_t>(widths[l + 1]);
        std::vector<double> w(fan_in * fan_out);
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& v : w) v = rng.normal() * scale;
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(fan_out, 0.0);
    }
    return p;
}

LogitGrid head_forward(const FeatureGrid& features, const HeadParams& params) {
    return run_forward(features, params, nullptr);
}

LogitGrid head_forward(const FeatureGrid& features, const HeadParams& params,
                       HeadTape& tape) {
    return run_forward(features, params, &tape);
}

HeadGradients head_backward(const FeatureGrid& features, const HeadParams& params,
                            const HeadTape& tape, const Grid& upstream) {
    check_params(params);
    if (!tape.recorded)
        throw ContractViolationError("head_backward: no recorded forward tape");
    if (tape.widths != params.widths)
        throw ContractViolationError("head_backward: tape was recorded for a head "
                                     "with different widths");
    if (tape.samples != features.samples || tape.pixels != features.pixels)
        throw ContractViolationError("head_backward: tape was recorded for a "
                                     "different feature grid");
    if (upstream.samples != features.samples || upstream.pixels != features.pixels ||
        upstream.classes != params.output_classes())
        throw InvalidInputError("head_backward: upstream shape does not match");
    if (features.dims != params.input_dims())
        throw InvalidInputError("head_backward: feature width mismatch");

    const std::size_t rows =
        static_cast<std::size_t>(features.samples) * features.pixels;
    const int layers = params.layer_count();

    HeadGradients grads;
    grads.weights.resize(static_cast<std::size_t>(layers));
    grads.biases.resize(static_cast<std::size_t>(layers));
    for (int l = 0; l < layers; ++l) {
        grads.weights[static_cast<std::size_t>(l)]
            .assign(params.weights[static_cast<std::size_t>(l)].size(), 0.0);
        grads.biases[static_cast<std::size_t>(l)]
            .assign(params.biases[static_cast<std::size_t>(l)].size(), 0.0);
    }
    grads.features = FeatureGrid(features.samples, features.pixels, features.dims);

    std::vector<double> delta = upstream.values;
    for (int l = layers - 1; l >= 0; --l) {
        const int fan_in = params.widths[static_cast<std::size_t>(l)];
        const int fan_out = params.widths[static_cast<std::size_t>(l) + 1];
        const double* prev = l == 0 ? features.values.data()
                                    : tape.hidden[static_cast<std::size_t>(l) - 1].data();
        std::vector<double>& dw = grads.weights[static_cast<std::size_t>(l)];
        std::vector<double>& db = grads.biases[static_cast<std::size_t>(l)];
        std::vector<double> next_delta(l > 0 ? rows * static_cast<std::size_t>(fan_in) : 0);
        const std::vector<double>& w = params.weights[static_cast<std::size_t>(l)];

        for (std::size_t r = 0; r < rows; ++r) {
            const double* a = prev + r * static_cast<std::size_t>(fan_in);
            const double* d = delta.data() + r * static_cast<std::size_t>(fan_out);
            for (int j = 0; j < fan_out; ++j) db[static_cast<std::size_t>(j)] += d[j];
            for (int i = 0; i < fan_in; ++i) {
                const double ai = a[i];
                double* dwrow = dw.data() + static_cast<std::size_t>(i) * fan_out;
                for (int j = 0; j < fan_out; ++j) dwrow[j] += ai * d[j];
            }
            if (l > 0) {
                double* nd = next_delta.data() + r * static_cast<std::size_t>(fan_in);
                for (int i = 0; i < fan_in; ++i) {
                    // rectifier sub-gradient: zero wherever the activation is 0
                    if (a[i] > 0.0) {
                        const double* wrow = w.data() + static_cast<std::size_t>(i) * fan_out;
                        double acc = 0.0;
                        for (int j = 0; j < fan_out; ++j) acc += wrow[j] * d[j];
                        nd[i] = acc;
                    } else {
                        nd[i] = 0.0;
                    }
                }
            } else {
                double* fd = grads.features.values.data() + r * static_cast<std::size_t>(fan_in);
                for (int i = 0; i < fan_in; ++i) {
                    const double* wrow = w.data() + static_cast<std::size_t>(i) * fan_out;
                    double acc = 0.0;
                    for (int j = 0; j < fan_out; ++j) acc += wrow[j] * d[j];
                    fd[i] = acc;
                }
            }
        }
        if (l > 0) delta = std::move(next_delta);
    }
    return grads;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct ByteReader {
    const std::string& data;
    std::size_t pos = 0;

    std::uint32_t u32(const char* what) {
        if (pos + 4 > data.size())
            throw FormatError(pos, std::string("truncated while reading ") + what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }

    double f64(const char* what) {
        if (pos + 8 > data.size())
            throw FormatError(pos, std::string("truncated while reading ") + what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        pos += 8;
        return std::bit_cast<double>(v);
    }
};

} // namespace

void save_head(const std::string& path, const HeadParams& params) {
    check_params(params);
    std::string blob;
    blob.reserve(16 + params.parameter_count() * 8);
    blob += "PGHD";
    put_u32(blob, 1);
    put_u32(blob, static_cast<std::uint32_t>(params.widths.size()));
    for (int w : params.widths) put_u32(blob, static_cast<std::uint32_t>(w));
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        for (double v : params.weights[l]) put_f64(blob, v);
        for (double v : params.biases[l]) put_f64(blob, v);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw IoError("short write to '" + path + "'");
}

HeadParams load_head(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ByteReader r{data};
    if (data.size() < 4 || data.compare(0, 4, "PGHD") != 0)
        throw FormatError(0, "bad magic (expected PGHD)");
    r.pos = 4;
    const std::uint32_t version = r.u32("version");
    if (version != 1)
        throw FormatError(4, "unsupported head checkpoint version " + std::to_string(version));
    const std::uint32_t n_widths = r.u32("width count");
    if (n_widths < 2 || n_widths > 64)
        throw FormatError(8, "implausible width count " + std::to_string(n_widths));
    HeadParams p;
    for (std::uint32_t i = 0; i < n_widths; ++i) {
        const std::uint32_t w = r.u32("width");
        if (w < 1 || w > (1u << 20))
            throw FormatError(r.pos - 4, "implausible width " + std::to_string(w));
        p.widths.push_back(static_cast<int>(w));
    }
    for (std::size_t l = 0; l + 1 < p.widths.size(); ++l) {
        const std::size_t fan_in = static_cast<std::size_t>(p.widths[l]);
        const std::size_t fan_out = static_cast<std::size_t>(p.widths[l + 1]);
        std::vector<double> w(fan_in * fan_out);
        for (double& v : w) v = r.f64("weight");
        std::vector<double> b(fan_out);
        for (double& v : b) v = r.f64("bias");
        p.weights.push_back(std::move(w));
        p.biases.push_back(std::move(b));
    }
    if (r.pos != data.size())
        throw FormatError(r.pos, "trailing bytes after checkpoint payload");
    check_params(p);
    return p;
}

std::vector<double> flatten_head(const HeadParams& params) {
    std::vector<double> flat;
    flat.reserve(params.parameter_count());
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        flat.insert(flat.end(), params.weights[l].begin(), params.weights[l].end());
        flat.insert(flat.end(), params.biases[l].begin(), params.biases[l].end());
    }
    return flat;
}

void unflatten_head(const std::vector<double>& flat, HeadParams& params) {
    std::size_t pos = 0;
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        std::copy(flat.begin() + pos, flat.begin() + pos + params.weights[l].size(),
                  params.weights[l].begin());
        pos += params.weights[l].size();
        std::copy(flat.begin() + pos, flat.begin() + pos + params.biases[l].size(),
                  params.biases[l].begin());
        pos += params.biases[l].size();
    }
    if (pos != flat.size())
        throw InvalidInputError("unflatten_head: size mismatch");
}

std::vector<double> flatten_gradients(const HeadGradients& grads) {
    std::vector<double> flat;
    for (std::size_t l = 0; l < grads.weights.size(); ++l) {
        flat.insert(flat.end(), grads.weights[l].begin(), grads.weights[l].end());
        flat.insert(flat.end(), grads.biases[l].begin(), grads.biases[l].end());
    }
    return flat;
}

} // namespace potgui
