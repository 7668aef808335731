#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "potgui/grid.hpp"

namespace potgui {

/// Pixel-wise multilayer perceptron mapping per-pixel features to class
/// logits. Rectifier between layers, identity at the output.
struct HeadParams {
    std::vector<int> widths;                  // input dims, hidden..., classes
    std::vector<std::vector<double>> weights; // [l]: widths[l] x widths[l+1], row-major
    std::vector<std::vector<double>> biases;  // [l]: widths[l+1]

    int layer_count() const { return static_cast<int>(weights.size()); }
    int input_dims() const { return widths.front(); }
    int output_classes() const { return widths.back(); }
    std::size_t parameter_count() const;
};

/// Seeded deterministic initialization: weights are normal draws scaled by
/// 1/sqrt(fan_in), biases zero.
HeadParams init_head(const std::vector<int>& widths, std::uint64_t seed);

/// Hidden activations recorded by a forward pass, needed for the exact
/// backward. Also remembers the shapes it was recorded for, so a backward
/// against different params or features is rejected.
struct HeadTape {
    std::vector<int> widths;
    int samples = 0;
    int pixels = 0;
    std::vector<std::vector<double>> hidden; // post-rectifier, per hidden layer
    bool recorded = false;
};

LogitGrid head_forward(const FeatureGrid& features, const HeadParams& params);
LogitGrid head_forward(const FeatureGrid& features, const HeadParams& params,
                       HeadTape& tape);

struct HeadGradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
    FeatureGrid features;
};

/// Exact gradients for all parameters and the input features, accumulated in
/// fixed sample order. Requires the tape recorded by the matching forward.
HeadGradients head_backward(const FeatureGrid& features, const HeadParams& params,
                            const HeadTape& tape, const Grid& upstream);

/// Versioned binary checkpoint, magic "PGHD": little-endian u32 version and
/// widths, then per layer the row-major weight matrix and the bias vector as
/// little-endian 64-bit reals.
void save_head(const std::string& path, const HeadParams& params);
HeadParams load_head(const std::string& path);

std::vector<double> flatten_head(const HeadParams& params);
void unflatten_head(const std::vector<double>& flat, HeadParams& params);
std::vector<double> flatten_gradients(const HeadGradients& grads);

} // namespace potgui
