#pragma once

#include <functional>
#include <vector>

#include "potgui/grid.hpp"

namespace potgui {

/// Per-pixel softmax, max-shifted so |logit| up to 1e4 cannot overflow.
/// Throws InvalidInputError on non-finite input.
ProbGrid softmax(const LogitGrid& logits);

/// Mean cross-entropy over all scored elements (samples x pixels), computed
/// through log-softmax. Never takes the log of a stored probability.
double cross_entropy(const LabelGrid& labels, const LogitGrid& logits);

/// Analytic gradient of cross_entropy with respect to the logits:
/// (softmax(logits) - one_hot(labels)) / (samples * pixels), elementwise.
LogitGrid ce_logit_gradient(const LabelGrid& labels, const LogitGrid& logits);

/// Central-difference gradient oracle: (f(x+eps*e_i) - f(x-eps*e_i)) / (2 eps)
/// per coordinate. `f` must be deterministic.
std::vector<double> finite_diff_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& point, double epsilon);

struct AdamHyper {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct AdamState {
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    long step_count = 0;
    AdamHyper hyper;

    AdamState() = default;
    AdamState(std::size_t n, AdamHyper h)
        : first_moment(n, 0.0), second_moment(n, 0.0), hyper(h) {}
};

/// Classic Adam with bias correction. Weight decay is coupled L2: it is added
/// to the gradient before the moment updates. Deterministic elementwise.
void adam_update(std::vector<double>& params, const std::vector<double>& grads,
                 AdamState& state);

} // namespace potgui
