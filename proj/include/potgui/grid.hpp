#pragma once

#include <cstddef>
#include <cstdio>
#include <string>
#include <vector>

#include "potgui/error.hpp"

namespace potgui {

/// Dense (samples, pixels, classes) tensor, row-major. Used for logits,
/// probabilities, one-hot encodings and logit-shaped gradients.
struct Grid {
    int samples = 0;
    int pixels = 0;
    int classes = 0;
    std::vector<double> values;

    Grid() = default;
    Grid(int n, int p, int c, double fill = 0.0)
        : samples(n), pixels(p), classes(c),
          values(static_cast<std::size_t>(n) * p * c, fill) {}

    /// Shape product; equals values.size() for a well-formed grid.
    std::size_t size() const {
        return static_cast<std::size_t>(samples) * pixels * classes;
    }

    double& at(int n, int p, int c) {
        return values[(static_cast<std::size_t>(n) * pixels + p) * classes + c];
    }
    double at(int n, int p, int c) const {
        return values[(static_cast<std::size_t>(n) * pixels + p) * classes + c];
    }

    bool same_shape(const Grid& o) const {
        return samples == o.samples && pixels == o.pixels && classes == o.classes;
    }
};

using LogitGrid = Grid;
using ProbGrid = Grid;

/// Integer class id per pixel, shape (samples, pixels).
struct LabelGrid {
    int samples = 0;
    int pixels = 0;
    int classes = 0;
    std::vector<int> ids;

    LabelGrid() = default;
    LabelGrid(int n, int p, int c)
        : samples(n), pixels(p), classes(c),
          ids(static_cast<std::size_t>(n) * p, 0) {}

    int& at(int n, int p) { return ids[static_cast<std::size_t>(n) * pixels + p]; }
    int at(int n, int p) const { return ids[static_cast<std::size_t>(n) * pixels + p]; }
};

/// Per-pixel feature vectors, shape (samples, pixels, dims), row-major.
struct FeatureGrid {
    int samples = 0;
    int pixels = 0;
    int dims = 0;
    std::vector<double> values;

    FeatureGrid() = default;
    FeatureGrid(int n, int p, int d, double fill = 0.0)
        : samples(n), pixels(p), dims(d),
          values(static_cast<std::size_t>(n) * p * d, fill) {}

    double& at(int n, int p, int d) {
        return values[(static_cast<std::size_t>(n) * pixels + p) * dims + d];
    }
    double at(int n, int p, int d) const {
        return values[(static_cast<std::size_t>(n) * pixels + p) * dims + d];
    }
};

/// One-hot encoding of the labels: exactly one 1.0 per pixel row.
Grid one_hot(const LabelGrid& labels);

void check_label_grid(const LabelGrid& labels);
void check_shapes_match(const LabelGrid& labels, const Grid& grid, const char* op);

/// Shortest round-trip formatting for doubles ("%.17g"): identical values
/// always produce identical bytes, so CSV/manifest outputs are diffable.
std::string format_g17(double v);

} // namespace potgui
