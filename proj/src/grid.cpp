#include "potgui/grid.hpp"

namespace potgui {

Grid one_hot(const LabelGrid& labels) {
    check_label_grid(labels);
    Grid out(labels.samples, labels.pixels, labels.classes, 0.0);
    for (int n = 0; n < labels.samples; ++n)
        for (int p = 0; p < labels.pixels; ++p)
            out.at(n, p, labels.at(n, p)) = 1.0;
    return out;
}

void check_label_grid(const LabelGrid& labels) {
    if (labels.classes < 2)
        throw InvalidInputError("label grid needs at least 2 classes, got " +
                                std::to_string(labels.classes));
    if (labels.ids.size() != static_cast<std::size_t>(labels.samples) * labels.pixels)
        throw InvalidInputError("label grid storage does not match its shape");
    for (int id : labels.ids)
        if (id < 0 || id >= labels.classes)
            throw InvalidInputError("label id " + std::to_string(id) +
                                    " outside [0, " + std::to_string(labels.classes) + ")");
}

void check_shapes_match(const LabelGrid& labels, const Grid& grid, const char* op) {
    if (labels.samples != grid.samples || labels.pixels != grid.pixels ||
        labels.classes != grid.classes)
        throw InvalidInputError(std::string(op) + ": labels (" +
                                std::to_string(labels.samples) + "x" +
                                std::to_string(labels.pixels) + "x" +
                                std::to_string(labels.classes) + ") do not match grid (" +
                                std::to_string(grid.samples) + "x" +
                                std::to_string(grid.pixels) + "x" +
                                std::to_string(grid.classes) + ")");
    if (grid.values.size() != grid.size())
        throw InvalidInputError(std::string(op) + ": grid storage does not match its shape");
}

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace potgui
