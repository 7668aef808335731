#include "potgui/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace potgui {

namespace {

void check_logits(const LogitGrid& logits, const char* op) {
    if (logits.classes < 2)
        throw InvalidInputError(std::string(op) + ": needs at least 2 classes, got " +
                                std::to_string(logits.classes));
    if (logits.values.size() != logits.size())
        throw InvalidInputError(std::string(op) + ": grid storage does not match its shape");
    for (double v : logits.values)
        if (!std::isfinite(v))
            throw InvalidInputError(std::string(op) + ": non-finite logit");
}

} // namespace

ProbGrid softmax(const LogitGrid& logits) {
    check_logits(logits, "softmax");
    ProbGrid probs(logits.samples, logits.pixels, logits.classes);
    const int c_count = logits.classes;
    const std::size_t rows = static_cast<std::size_t>(logits.samples) * logits.pixels;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = logits.values.data() + r * c_count;
        double* out = probs.values.data() + r * c_count;
        double m = in[0];
        for (int c = 1; c < c_count; ++c) m = std::max(m, in[c]);
        double sum = 0.0;
        for (int c = 0; c < c_count; ++c) {
            out[c] = std::exp(in[c] - m);
            sum += out[c];
        }
        const double inv = 1.0 / sum;
        for (int c = 0; c < c_count; ++c) out[c] *= inv;
    }
    return probs;
}

double cross_entropy(const LabelGrid& labels, const LogitGrid& logits) {
    check_logits(logits, "cross_entropy");
    check_label_grid(labels);
    check_shapes_match(labels, logits, "cross_entropy");
    const int c_count = logits.classes;
    const std::size_t rows = static_cast<std::size_t>(logits.samples) * logits.pixels;
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = logits.values.data() + r * c_count;
        double m = in[0];
        for (int c = 1; c < c_count; ++c) m = std::max(m, in[c]);
        double sum = 0.0;
        for (int c = 0; c < c_count; ++c) sum += std::exp(in[c] - m);
        // -log_softmax(label) = log(sum exp(x - m)) - (x_label - m)
        total += std::log(sum) - (in[labels.ids[r]] - m);
    }
    return total / static_cast<double>(rows);
}

LogitGrid ce_logit_gradient(const LabelGrid& labels, const LogitGrid& logits) {
    check_logits(logits, "ce_logit_gradient");
    check_label_grid(labels);
    check_shapes_match(labels, logits, "ce_logit_gradient");
    LogitGrid grad = softmax(logits);
    const std::size_t rows = static_cast<std::size_t>(logits.samples) * logits.pixels;
    const double inv_n = 1.0 / static_cast<double>(rows);
    const int c_count = logits.classes;
    for (std::size_t r = 0; r < rows; ++r) {
        double* g = grad.values.data() + r * c_count;
        g[labels.ids[r]] -= 1.0;
        for (int c = 0; c < c_count; ++c) g[c] *= inv_n;
    }
    return grad;
}

std::vector<double> finite_diff_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& point, double epsilon) {
    if (!(epsilon > 0.0))
        throw InvalidInputError("finite_diff_gradient: epsilon must be positive");
    std::vector<double> x = point;
    std::vector<double> grad(point.size(), 0.0);
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + epsilon;
        const double hi = f(x);
        x[i] = saved - epsilon;
        const double lo = f(x);
        x[i] = saved;
        grad[i] = (hi - lo) / (2.0 * epsilon);
    }
    return grad;
}

void adam_update(std::vector<double>& params, const std::vector<double>& grads,
                 AdamState& state) {
    if (params.size() != grads.size() ||
        params.size() != state.first_moment.size() ||
        params.size() != state.second_moment.size())
        throw InvalidInputError("adam_update: parameter/gradient/state sizes disagree");
    state.step_count += 1;
    const AdamHyper& h = state.hyper;
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i] + h.weight_decay * params[i];
        state.first_moment[i] = h.beta1 * state.first_moment[i] + (1.0 - h.beta1) * g;
        state.second_moment[i] = h.beta2 * state.second_moment[i] + (1.0 - h.beta2) * g * g;
        const double mhat = state.first_moment[i] / bc1;
        const double vhat = state.second_moment[i] / bc2;
        params[i] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
    }
}

} // namespace potgui
