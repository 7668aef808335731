#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "potgui/grid.hpp"

namespace potgui {

/// Pixel confusion counts; rows are ground-truth class, columns predicted.
struct ConfusionMatrix {
    int classes = 0;
    std::vector<std::int64_t> counts; // classes * classes

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int c)
        : classes(c), counts(static_cast<std::size_t>(c) * c, 0) {}

    std::int64_t& at(int truth, int pred) {
        return counts[static_cast<std::size_t>(truth) * classes + pred];
    }
    std::int64_t at(int truth, int pred) const {
        return counts[static_cast<std::size_t>(truth) * classes + pred];
    }

    /// Matrices over disjoint pixel shards sum associatively.
    ConfusionMatrix& operator+=(const ConfusionMatrix& o);
};

/// Argmax class per pixel; ties break to the lowest class index.
LabelGrid argmax_predictions(const Grid& logits);

ConfusionMatrix confusion(const LabelGrid& truth, const LabelGrid& predictions);

struct ClassMetrics {
    bool present = false; // true unless the class is absent from both truth and prediction
    double iou = 0.0;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

struct MetricsReport {
    std::vector<ClassMetrics> per_class;
    double miou = 0.0;
    double mf1 = 0.0;
    double mprecision = 0.0;
    double mrecall = 0.0;
};

/// Per class: tp = diagonal, fp = column sum - tp, fn = row sum - tp.
/// A class absent from both truth and prediction is excluded from every mean;
/// a defined-but-zero denominator yields 0 for that quantity.
MetricsReport report(const ConfusionMatrix& matrix);

/// Per-class rows plus a final means row; columns class,iou,f1,precision,recall.
std::string metrics_csv(const MetricsReport& rep);

} // namespace potgui
