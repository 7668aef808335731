#pragma once

#include <string>
#include <vector>

#include "potgui/grid.hpp"

namespace potgui {

enum class ParamMode { two_param, one_param };

/// K unrolled logit-descent layers with learnable per-layer step scalars
/// (alpha_k, eta_k). In one_param mode the pair is stored as (gamma_k, 1)
/// and only gamma is trained.
///
/// Each layer applies o <- o - eta_k * alpha_k * (softmax(o) - onehot(y))
/// elementwise, so every sample's logits descend that sample's own
/// cross-entropy independently of how many samples share the grid.
struct PotStack {
    ParamMode mode = ParamMode::two_param;
    std::vector<double> alphas;
    std::vector<double> etas;

    struct TapeEntry {
        LogitGrid logits; // layer input o_{k-1}
        ProbGrid probs;   // softmax(o_{k-1})
    };
    std::vector<TapeEntry> tape;
    bool tape_valid = false;

    int layer_count() const { return static_cast<int>(alphas.size()); }
};

/// All layers start at (alpha0, eta0); the unit default makes the unroll
/// plain gradient descent before any training. one_param mode stores
/// (alpha0, 1) and treats alpha as the single step scalar.
PotStack init_stack(int layer_count, ParamMode mode = ParamMode::two_param,
                    double alpha0 = 1.0, double eta0 = 1.0);

struct PotOutput {
    LogitGrid guided_logits;
    /// Cross-entropy after each layer, K+1 entries; [0] is the loss at the
    /// initial logits. Diagnostics only.
    std::vector<double> per_layer_loss;
};

/// Runs the K descent layers. With record_tape the per-layer inputs and
/// probabilities are kept on the stack for pot_backward. Throws
/// DivergenceError naming the layer if an intermediate goes non-finite.
PotOutput pot_forward(const LogitGrid& initial_logits, const LabelGrid& labels,
                      PotStack& stack, bool record_tape);

struct PotGradients {
    LogitGrid initial_logits;
    std::vector<double> alphas;
    std::vector<double> etas;
};

/// Exact reverse-mode differentiation through all K layers, including the
/// softmax Jacobian inside each descent step. Consumes the tape; calling
/// again without a fresh recorded forward is a contract violation.
PotGradients pot_backward(PotStack& stack, const LabelGrid& labels,
                          const LogitGrid& upstream);

ParamMode parse_param_mode(const std::string& name);
std::string param_mode_name(ParamMode mode);

} // namespace potgui
