#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "potgui/data.hpp"
#include "potgui/head.hpp"
#include "potgui/metrics.hpp"
#include "potgui/numerics.hpp"
#include "potgui/potgen.hpp"

namespace potgui {

struct TrainConfig {
    int epochs = 10;
    int batch_size = 8;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-4;
    double sigma = 0.5;   // mixing weight on the model logits
    int unroll_layers = 10;
    ParamMode param_mode = ParamMode::two_param;
    std::uint64_t seed = 7;
    int eval_every = 1;   // epochs between metric evaluations
    int hidden_width = 64;
    double eval_fraction = 0.2; // trailing fraction of samples held out for eval
};

void validate_config(const TrainConfig& cfg);

/// First sample index of the held-out eval split: the trailing
/// floor(eval_fraction * total) samples are held out.
int eval_split_start(int total_samples, double eval_fraction);

/// Labels plus the selected per-pixel features the head consumes.
struct TrainingSet {
    LabelGrid labels;
    FeatureGrid features;
};

TrainingSet assemble(const SceneSet& scenes, const FeatureStack& stack, LayerMode mode);

/// sigma * model + (1 - sigma) * guided, elementwise.
LogitGrid mix(const LogitGrid& model_logits, const LogitGrid& guided_logits,
              double sigma);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    bool evaluated = false;
    double miou = 0.0, mf1 = 0.0, mprecision = 0.0, mrecall = 0.0; // eval split, raw logits
    double miou_guided = 0.0; // train split, descent-guided logits (diagnostic)
    double alpha_norm = 0.0, eta_norm = 0.0;
};

struct TrainRecord {
    std::vector<EpochStats> epochs;
    HeadParams head;
    PotStack stack;
};

/// One row per epoch: epoch,train_loss,miou,mf1,mprec,mrec,miou_guided,
/// alpha_norm,eta_norm. Unevaluated epochs carry nan metric fields.
std::string record_csv(const TrainRecord& record);

struct TrainState {
    HeadParams head;
    PotStack stack;
    AdamState adam_head;
    AdamState adam_alpha;
    AdamState adam_eta;
};

/// Loss value and exact gradients of the mixed-objective batch loss with
/// respect to every trainable parameter. Shared by train_step and the
/// gradient-check suites.
struct PipelineGradients {
    double loss = 0.0;
    std::vector<double> head; // flattened, same order as flatten_head
    std::vector<double> alphas;
    std::vector<double> etas;
};

PipelineGradients pipeline_gradients(const FeatureGrid& features,
                                     const LabelGrid& labels, const HeadParams& head,
                                     PotStack& stack, double sigma,
                                     bool with_potgui);

/// One optimizer step on one batch; returns the batch loss.
double train_step(const FeatureGrid& features, const LabelGrid& labels,
                  TrainState& state, const TrainConfig& cfg, bool with_potgui);

/// Full training loop: seeded reshuffle per epoch, last partial batch kept.
/// Evaluation metrics use raw model logits on the held-out split; the guided
/// diagnostic runs on the train split. with_potgui=false trains on the plain
/// cross-entropy objective.
TrainRecord train(const TrainingSet& set, const TrainConfig& cfg, bool with_potgui);

enum class AblateAxis { unroll_layers, sigma, param_mode, layer_mode };

AblateAxis parse_ablate_axis(const std::string& name);
std::string ablate_axis_name(AblateAxis axis);

struct AblateRow {
    std::string value;
    double final_miou = 0.0;
    double final_mf1 = 0.0;
    int epochs_to_90pct_best = 0;
    TrainRecord record;
};

/// One seeded run per value, everything else equal. For the layer_mode axis
/// the features are re-selected from the stack per value.
std::vector<AblateRow> ablate(const SceneSet& scenes, const FeatureStack& stack,
                              const TrainConfig& base, LayerMode base_mode,
                              AblateAxis axis, const std::vector<std::string>& values);

std::string ablate_csv(const std::vector<AblateRow>& rows);

} // namespace potgui
