#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "potgui/grid.hpp"

namespace potgui {

enum class ShapeKind { rectangle = 0, disc = 1, band = 2 };

struct SceneRegion {
    int class_id;
    ShapeKind kind;
};

/// Synthetic labeled scenes: axis-aligned rectangles, discs and horizontal
/// bands drawn over a background class (class 0).
struct SceneSet {
    int count = 0;
    int height = 0;
    int width = 0;
    int classes = 0;
    std::vector<int> labels; // count * height * width, row-major
    std::vector<std::vector<SceneRegion>> regions;

    int pixels() const { return height * width; }
    int label_at(int s, int y, int x) const {
        return labels[(static_cast<std::size_t>(s) * height + y) * width + x];
    }
};

/// Deterministic per seed. Regenerates with a derived sub-seed until every
/// class appears and each class's pixel share over the whole set lies in
/// [1%, 90%].
SceneSet generate_scenes(int count, int height, int width, int classes,
                         std::uint64_t seed);

LabelGrid scene_labels(const SceneSet& scenes);

/// L layers of per-pixel features standing in for a frozen backbone. Layer l
/// is a per-class embedding plus gaussian noise scaled by base_noise/snr(l);
/// the snr profile is concave with its peak at the middle layers.
struct FeatureStack {
    int samples = 0;
    int pixels = 0;
    int dims = 0;
    std::vector<std::vector<float>> layers; // [l]: samples * pixels * dims
    std::vector<double> layer_snr;

    int layer_count() const { return static_cast<int>(layers.size()); }
};

std::vector<double> snr_profile(int layer_count);

FeatureStack synth_features(const SceneSet& scenes, int layer_count, int dims,
                            double base_noise, std::uint64_t seed);

enum class LayerMode { last, middle_1, all_avg, middle_4_avg, middle_4, all };

LayerMode parse_layer_mode(const std::string& name);
std::string layer_mode_name(LayerMode mode);

/// Reduces the stack to the per-pixel feature tensor the head consumes.
/// Output widths: Last/Middle_1/All_Avg/Middle_4_Avg -> D, Middle_4 -> 4D,
/// All -> L*D. The middle-4 window is layers L/2-2 .. L/2+1.
FeatureGrid select_layers(const FeatureStack& stack, LayerMode mode);

struct Dataset {
    SceneSet scenes;
    FeatureStack features;
};

/// PGSD container: magic "PGSD", little-endian u32 fields version=1, N, H, W,
/// C, L, D, then per sample H*W u16 labels row-major followed by L*H*W*D
/// 32-bit reals layer-major. Feature values are generated f32-exact, so the
/// round trip is bitwise lossless. Shape metadata (regions, layer snr) is not
/// part of the container.
void write_dataset(const std::string& path, const SceneSet& scenes,
                   const FeatureStack& stack);
Dataset read_dataset(const std::string& path);

} // namespace potgui
