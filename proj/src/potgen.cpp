#include "potgui/potgen.hpp"

#include <cmath>
#include <string>

#include "potgui/numerics.hpp"

namespace potgui {

PotStack init_stack(int layer_count, ParamMode mode, double alpha0, double eta0) {
    if (layer_count < 0)
        throw InvalidInputError("init_stack: layer count must be >= 0, got " +
                                std::to_string(layer_count));
    if (!std::isfinite(alpha0) || !std::isfinite(eta0))
        throw InvalidInputError("init_stack: non-finite initial step scalars");
    PotStack stack;
    stack.mode = mode;
    stack.alphas.assign(static_cast<std::size_t>(layer_count), alpha0);
    stack.etas.assign(static_cast<std::size_t>(layer_count),
                      mode == ParamMode::one_param ? 1.0 : eta0);
    return stack;
}

namespace {

void check_stack(const PotStack& stack) {
    if (stack.etas.size() != stack.alphas.size())
        throw InvalidInputError("pot stack: alpha/eta lists disagree in length");
    for (std::size_t i = 0; i < stack.alphas.size(); ++i)
        if (!std::isfinite(stack.alphas[i]) || !std::isfinite(stack.etas[i]))
            throw InvalidInputError("pot stack: non-finite step scalar at layer " +
                                    std::to_string(i + 1));
}

} // namespace

PotOutput pot_forward(const LogitGrid& initial_logits, const LabelGrid& labels,
                      PotStack& stack, bool record_tape) {
    check_label_grid(labels);
    check_shapes_match(labels, initial_logits, "pot_forward");
    check_stack(stack);
    for (double v : initial_logits.values)
        if (!std::isfinite(v))
            throw InvalidInputError("pot_forward: non-finite initial logits");

    const int k_count = stack.layer_count();
    const int c_count = initial_logits.classes;
    const std::size_t rows =
        static_cast<std::size_t>(initial_logits.samples) * initial_logits.pixels;

    if (record_tape) {
        stack.tape.clear();
        stack.tape.reserve(static_cast<std::size_t>(k_count));
        stack.tape_valid = true;
    }

    PotOutput out;
    out.guided_logits = initial_logits;
    out.per_layer_loss.reserve(static_cast<std::size_t>(k_count) + 1);

    LogitGrid& o = out.guided_logits;
    ProbGrid probs(o.samples, o.pixels, o.classes);

    // Fused pass: per row compute the max-shifted softmax and the row's
    // -log_softmax(label) term, accumulated exactly like cross_entropy().
    auto softmax_and_loss = [&](ProbGrid& p) {
        double total = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* in = o.values.data() + r * c_count;
            double* pr = p.values.data() + r * c_count;
            double m = in[0];
            for (int c = 1; c < c_count; ++c) m = std::max(m, in[c]);
            double sum = 0.0;
            for (int c = 0; c < c_count; ++c) {
                pr[c] = std::exp(in[c] - m);
                sum += pr[c];
            }
            total += std::log(sum) - (in[labels.ids[r]] - m);
            const double inv = 1.0 / sum;
            for (int c = 0; c < c_count; ++c) pr[c] *= inv;
        }
        return total / static_cast<double>(rows);
    };

    for (int k = 1; k <= k_count; ++k) {
        out.per_layer_loss.push_back(softmax_and_loss(probs));
        if (record_tape) stack.tape.push_back({o, probs});
        const double step = stack.etas[static_cast<std::size_t>(k - 1)] *
                            stack.alphas[static_cast<std::size_t>(k - 1)];
        for (std::size_t r = 0; r < rows; ++r) {
            double* lo = o.values.data() + r * c_count;
            const double* pr = probs.values.data() + r * c_count;
            for (int c = 0; c < c_count; ++c) lo[c] -= step * pr[c];
            lo[labels.ids[r]] += step; // residual is probs - one_hot
        }
        for (double v : o.values)
            if (!std::isfinite(v))
                throw DivergenceError(k, "pot_forward: non-finite logits after unroll layer " +
                                             std::to_string(k));
    }
    out.per_layer_loss.push_back(softmax_and_loss(probs));
    return out;
}

PotGradients pot_backward(PotStack& stack, const LabelGrid& labels,
                          const LogitGrid& upstream) {
    check_label_grid(labels);
    check_shapes_match(labels, upstream, "pot_backward");
    check_stack(stack);
    const int k_count = stack.layer_count();
    if (!stack.tape_valid)
        throw ContractViolationError("pot_backward: no recorded tape (forward with "
                                     "record_tape must precede every backward)");
    if (static_cast<int>(stack.tape.size()) != k_count)
        throw ContractViolationError("pot_backward: tape length " +
                                     std::to_string(stack.tape.size()) +
                                     " does not match layer count " +
                                     std::to_string(k_count));
    for (const auto& entry : stack.tape)
        if (!entry.logits.same_shape(upstream))
            throw ContractViolationError("pot_backward: tape was recorded for a "
                                         "different grid shape");

    PotGradients grads;
    grads.initial_logits = upstream;
    grads.alphas.assign(static_cast<std::size_t>(k_count), 0.0);
    grads.etas.assign(static_cast<std::size_t>(k_count), 0.0);

    const int c_count = upstream.classes;
    const std::size_t rows =
        static_cast<std::size_t>(upstream.samples) * upstream.pixels;
    LogitGrid& u = grads.initial_logits;

    for (int k = k_count; k >= 1; --k) {
        const ProbGrid& probs = stack.tape[static_cast<std::size_t>(k - 1)].probs;
        const double alpha = stack.alphas[static_cast<std::size_t>(k - 1)];
        const double eta = stack.etas[static_cast<std::size_t>(k - 1)];
        const double step = eta * alpha;

        // d(step)/d loss via <u, residual>, then u through the step Jacobian
        // I - step * (diag(p) - p p^T) per pixel.
        double dot = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* pr = probs.values.data() + r * c_count;
            double* ur = u.values.data() + r * c_count;
            double pu = 0.0;
            for (int c = 0; c < c_count; ++c) pu += pr[c] * ur[c];
            dot += pu - ur[labels.ids[r]]; // <u, p - y> for this row
            for (int c = 0; c < c_count; ++c)
                ur[c] -= step * pr[c] * (ur[c] - pu);
        }
        grads.alphas[static_cast<std::size_t>(k - 1)] = -eta * dot;
        grads.etas[static_cast<std::size_t>(k - 1)] = -alpha * dot;
    }

    stack.tape.clear();
    stack.tape_valid = false;
    return grads;
}

ParamMode parse_param_mode(const std::string& name) {
    if (name == "two_param") return ParamMode::two_param;
    if (name == "one_param") return ParamMode::one_param;
    throw InvalidInputError("unknown param mode '" + name +
                            "' (expected two_param or one_param)");
}

std::string param_mode_name(ParamMode mode) {
    return mode == ParamMode::two_param ? "two_param" : "one_param";
}

} // namespace potgui
