#include "potgui/metrics.hpp"

#include <sstream>

namespace potgui {

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
    if (classes != o.classes)
        throw InvalidInputError("confusion matrix sum: class counts disagree");
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
    return *this;
}

LabelGrid argmax_predictions(const Grid& logits) {
    if (logits.classes < 2)
        throw InvalidInputError("argmax_predictions: needs at least 2 classes");
    LabelGrid out(logits.samples, logits.pixels, logits.classes);
    const int c_count = logits.classes;
    const std::size_t rows = static_cast<std::size_t>(logits.samples) * logits.pixels;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* v = logits.values.data() + r * c_count;
        int best = 0;
        for (int c = 1; c < c_count; ++c)
            if (v[c] > v[best]) best = c;
        out.ids[r] = best;
    }
    return out;
}

ConfusionMatrix confusion(const LabelGrid& truth, const LabelGrid& predictions) {
    if (truth.samples != predictions.samples || truth.pixels != predictions.pixels ||
        truth.classes != predictions.classes)
        throw InvalidInputError("confusion: label grids disagree in shape");
    check_label_grid(truth);
    check_label_grid(predictions);
    ConfusionMatrix m(truth.classes);
    for (std::size_t i = 0; i < truth.ids.size(); ++i)
        m.at(truth.ids[i], predictions.ids[i])++;
    return m;
}

MetricsReport report(const ConfusionMatrix& matrix) {
    const int c_count = matrix.classes;
    MetricsReport rep;
    rep.per_class.resize(static_cast<std::size_t>(c_count));
    int present = 0;
    double sum_iou = 0.0, sum_f1 = 0.0, sum_prec = 0.0, sum_rec = 0.0;
    for (int c = 0; c < c_count; ++c) {
        std::int64_t tp = matrix.at(c, c);
        std::int64_t row = 0, col = 0;
        for (int k = 0; k < c_count; ++k) {
            row += matrix.at(c, k);
            col += matrix.at(k, c);
        }
        const std::int64_t fp = col - tp;
        const std::int64_t fn = row - tp;
        ClassMetrics& cm = rep.per_class[static_cast<std::size_t>(c)];
        if (tp + fp + fn == 0) continue; // absent from truth and prediction
        cm.present = true;
        cm.iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
        cm.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        cm.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        const double pr = cm.precision + cm.recall;
        cm.f1 = pr > 0.0 ? 2.0 * cm.precision * cm.recall / pr : 0.0;
        ++present;
        sum_iou += cm.iou;
        sum_f1 += cm.f1;
        sum_prec += cm.precision;
        sum_rec += cm.recall;
    }
    if (present > 0) {
        rep.miou = sum_iou / present;
        rep.mf1 = sum_f1 / present;
        rep.mprecision = sum_prec / present;
        rep.mrecall = sum_rec / present;
    }
    return rep;
}

std::string metrics_csv(const MetricsReport& rep) {
    std::ostringstream out;
    out << "class,iou,f1,precision,recall\n";
    for (std::size_t c = 0; c < rep.per_class.size(); ++c) {
        const ClassMetrics& cm = rep.per_class[c];
        out << c << ',';
        if (cm.present)
            out << format_g17(cm.iou) << ',' << format_g17(cm.f1) << ','
                << format_g17(cm.precision) << ',' << format_g17(cm.recall);
        else
            out << ",,,";
        out << '\n';
    }
    out << "mean," << format_g17(rep.miou) << ',' << format_g17(rep.mf1) << ','
        << format_g17(rep.mprecision) << ',' << format_g17(rep.mrecall) << '\n';
    return out.str();
}

} // namespace potgui
