#include "potgui/trainer.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "potgui/rng.hpp"

namespace potgui {

void validate_config(const TrainConfig& cfg) {
    if (cfg.epochs < 0) throw InvalidInputError("config: epochs must be >= 0");
    if (cfg.batch_size < 1) throw InvalidInputError("config: batch size must be >= 1");
    if (!(cfg.sigma >= 0.0 && cfg.sigma <= 1.0))
        throw InvalidInputError("config: sigma must lie in [0, 1], got " +
                                format_g17(cfg.sigma));
    if (cfg.unroll_layers < 0)
        throw InvalidInputError("config: unroll layer count must be >= 0");
    if (cfg.eval_every < 1) throw InvalidInputError("config: eval_every must be >= 1");
    if (cfg.hidden_width < 1) throw InvalidInputError("config: hidden width must be >= 1");
    if (!(cfg.eval_fraction >= 0.0 && cfg.eval_fraction < 1.0))
        throw InvalidInputError("config: eval fraction must lie in [0, 1)");
    if (!(cfg.lr > 0.0) || !(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) ||
        !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0) || !(cfg.weight_decay >= 0.0))
        throw InvalidInputError("config: optimizer hyperparameters out of range");
}

int eval_split_start(int total_samples, double eval_fraction) {
    const int eval_count =
        static_cast<int>(std::floor(eval_fraction * total_samples));
    return total_samples - eval_count;
}

TrainingSet assemble(const SceneSet& scenes, const FeatureStack& stack, LayerMode mode) {
    TrainingSet set;
    set.labels = scene_labels(scenes);
    set.features = select_layers(stack, mode);
    return set;
}

LogitGrid mix(const LogitGrid& model_logits, const LogitGrid& guided_logits,
              double sigma) {
    if (!model_logits.same_shape(guided_logits))
        throw InvalidInputError("mix: logit grids disagree in shape");
    if (!(sigma >= 0.0 && sigma <= 1.0))
        throw InvalidInputError("mix: sigma must lie in [0, 1], got " + format_g17(sigma));
    if (sigma == 1.0) return model_logits;
    if (sigma == 0.0) return guided_logits;
    LogitGrid out(model_logits.samples, model_logits.pixels, model_logits.classes);
    const double inv = 1.0 - sigma;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = sigma * model_logits.values[i] + inv * guided_logits.values[i];
    return out;
}

PipelineGradients pipeline_gradients(const FeatureGrid& features,
                                     const LabelGrid& labels, const HeadParams& head,
                                     PotStack& stack, double sigma,
                                     bool with_potgui) {
    HeadTape tape;
    const LogitGrid logits = head_forward(features, head, tape);

    PipelineGradients out;
    LogitGrid dlogits;
    if (with_potgui && stack.layer_count() > 0) {
        const PotOutput pot = pot_forward(logits, labels, stack, /*record_tape=*/true);
        const LogitGrid mixed = mix(logits, pot.guided_logits, sigma);
        out.loss = cross_entropy(labels, mixed);
        const LogitGrid upstream = ce_logit_gradient(labels, mixed);
        // chain rule at the mix node: sigma into the model branch, (1-sigma)
        // through the unroll, whose input gradient rejoins the model branch
        LogitGrid pot_upstream = upstream;
        for (double& v : pot_upstream.values) v *= (1.0 - sigma);
        PotGradients pg = pot_backward(stack, labels, pot_upstream);
        dlogits = std::move(pg.initial_logits);
        for (std::size_t i = 0; i < dlogits.values.size(); ++i)
            dlogits.values[i] += sigma * upstream.values[i];
        out.alphas = std::move(pg.alphas);
        out.etas = std::move(pg.etas);
    } else {
        out.loss = cross_entropy(labels, logits);
        dlogits = ce_logit_gradient(labels, logits);
        out.alphas.assign(stack.alphas.size(), 0.0);
        out.etas.assign(stack.etas.size(), 0.0);
    }

    const HeadGradients hg = head_backward(features, head, tape, dlogits);
    out.head = flatten_gradients(hg);
    return out;
}

double train_step(const FeatureGrid& features, const LabelGrid& labels,
                  TrainState& state, const TrainConfig& cfg, bool with_potgui) {
    PipelineGradients grads =
        pipeline_gradients(features, labels, state.head, state.stack, cfg.sigma,
                           with_potgui);

    std::vector<double> flat = flatten_head(state.head);
    adam_update(flat, grads.head, state.adam_head);
    unflatten_head(flat, state.head);

    if (with_potgui && state.stack.layer_count() > 0) {
        adam_update(state.stack.alphas, grads.alphas, state.adam_alpha);
        if (state.stack.mode == ParamMode::two_param)
            adam_update(state.stack.etas, grads.etas, state.adam_eta);
    }
    return grads.loss;
}

namespace {

struct Split {
    FeatureGrid features;
    LabelGrid labels;
};

Split slice_samples(const TrainingSet& set, int first, int count) {
    Split s;
    s.features = FeatureGrid(count, set.features.pixels, set.features.dims);
    s.labels = LabelGrid(count, set.labels.pixels, set.labels.classes);
    const std::size_t fstride =
        static_cast<std::size_t>(set.features.pixels) * set.features.dims;
    const std::size_t lstride = static_cast<std::size_t>(set.labels.pixels);
    for (int i = 0; i < count; ++i) {
        const std::size_t src = static_cast<std::size_t>(first + i);
        std::copy_n(set.features.values.begin() + src * fstride, fstride,
                    s.features.values.begin() + static_cast<std::size_t>(i) * fstride);
        std::copy_n(set.labels.ids.begin() + src * lstride, lstride,
                    s.labels.ids.begin() + static_cast<std::size_t>(i) * lstride);
    }
    return s;
}

Split gather_batch(const Split& pool, const std::vector<int>& order, int first,
                   int count) {
    Split b;
    b.features = FeatureGrid(count, pool.features.pixels, pool.features.dims);
    b.labels = LabelGrid(count, pool.labels.pixels, pool.labels.classes);
    const std::size_t fstride =
        static_cast<std::size_t>(pool.features.pixels) * pool.features.dims;
    const std::size_t lstride = static_cast<std::size_t>(pool.labels.pixels);
    for (int i = 0; i < count; ++i) {
        const std::size_t src = static_cast<std::size_t>(order[static_cast<std::size_t>(first + i)]);
        std::copy_n(pool.features.values.begin() + src * fstride, fstride,
                    b.features.values.begin() + static_cast<std::size_t>(i) * fstride);
        std::copy_n(pool.labels.ids.begin() + src * lstride, lstride,
                    b.labels.ids.begin() + static_cast<std::size_t>(i) * lstride);
    }
    return b;
}

double l2_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace

TrainRecord train(const TrainingSet& set, const TrainConfig& cfg, bool with_potgui) {
    validate_config(cfg);
    check_label_grid(set.labels);
    if (set.labels.samples != set.features.samples ||
        set.labels.pixels != set.features.pixels)
        throw InvalidInputError("train: labels and features disagree in shape");

    const int total = set.labels.samples;
    const int train_count = eval_split_start(total, cfg.eval_fraction);
    const int eval_count = total - train_count;
    if (train_count < 1)
        throw InvalidInputError("train: no training samples after the eval split");

    const Split train_split = slice_samples(set, 0, train_count);
    const Split eval_split = slice_samples(set, train_count, eval_count);

    TrainState state;
    state.head = init_head({set.features.dims, cfg.hidden_width, set.labels.classes},
                           cfg.seed);
    state.stack = with_potgui ? init_stack(cfg.unroll_layers, cfg.param_mode)
                              : init_stack(0, cfg.param_mode);
    const AdamHyper hyper{cfg.lr, cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay};
    state.adam_head = AdamState(flatten_head(state.head).size(), hyper);
    state.adam_alpha = AdamState(state.stack.alphas.size(), hyper);
    state.adam_eta = AdamState(state.stack.etas.size(), hyper);

    // distinct stream from parameter initialization
    Rng shuffle_rng(cfg.seed + 0x9E3779B97F4A7C15ULL);

    TrainRecord record;
    record.epochs.reserve(static_cast<std::size_t>(cfg.epochs));

    std::vector<int> order(static_cast<std::size_t>(train_count));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        int batches = 0;
        for (int first = 0; first < train_count; first += cfg.batch_size) {
            const int count = std::min(cfg.batch_size, train_count - first);
            const Split batch = gather_batch(train_split, order, first, count);
            try {
                loss_sum += train_step(batch.features, batch.labels, state, cfg,
                                       with_potgui);
            } catch (const DivergenceError& e) {
                throw DivergenceError(e.layer(), std::string(e.what()) + " (epoch " +
                                                     std::to_string(epoch) + ", batch " +
                                                     std::to_string(batches) + ")");
            }
            ++batches;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / batches;
        stats.alpha_norm = l2_norm(state.stack.alphas);
        stats.eta_norm = l2_norm(state.stack.etas);
        stats.evaluated = (epoch % cfg.eval_every == 0) || epoch == cfg.epochs;
        if (stats.evaluated) {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            if (eval_count > 0) {
                const LogitGrid eval_logits = head_forward(eval_split.features, state.head);
                const MetricsReport rep =
                    report(confusion(eval_split.labels, argmax_predictions(eval_logits)));
                stats.miou = rep.miou;
                stats.mf1 = rep.mf1;
                stats.mprecision = rep.mprecision;
                stats.mrecall = rep.mrecall;
            } else {
                stats.miou = stats.mf1 = stats.mprecision = stats.mrecall = nan;
            }
            const LogitGrid train_logits = head_forward(train_split.features, state.head);
            if (with_potgui && state.stack.layer_count() > 0) {
                const PotOutput pot = pot_forward(train_logits, train_split.labels,
                                                  state.stack, /*record_tape=*/false);
                stats.miou_guided =
                    report(confusion(train_split.labels,
                                     argmax_predictions(pot.guided_logits)))
                        .miou;
            } else {
                stats.miou_guided =
                    report(confusion(train_split.labels, argmax_predictions(train_logits)))
                        .miou;
            }
        } else {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            stats.miou = stats.mf1 = stats.mprecision = stats.mrecall = nan;
            stats.miou_guided = nan;
        }
        record.epochs.push_back(stats);
    }

    record.head = std::move(state.head);
    record.stack = std::move(state.stack);
    record.stack.tape.clear();
    record.stack.tape_valid = false;
    return record;
}

std::string record_csv(const TrainRecord& record) {
    std::ostringstream out;
    out << "epoch,train_loss,miou,mf1,mprec,mrec,miou_guided,alpha_norm,eta_norm\n";
    for (const EpochStats& s : record.epochs) {
        out << s.epoch << ',' << format_g17(s.train_loss) << ',' << format_g17(s.miou)
            << ',' << format_g17(s.mf1) << ',' << format_g17(s.mprecision) << ','
            << format_g17(s.mrecall) << ',' << format_g17(s.miou_guided) << ','
            << format_g17(s.alpha_norm) << ',' << format_g17(s.eta_norm) << '\n';
    }
    return out.str();
}

AblateAxis parse_ablate_axis(const std::string& name) {
    if (name == "k") return AblateAxis::unroll_layers;
    if (name == "sigma") return AblateAxis::sigma;
    if (name == "param-mode") return AblateAxis::param_mode;
    if (name == "layer-mode") return AblateAxis::layer_mode;
    throw InvalidInputError("unknown ablation axis '" + name +
                            "' (expected k, sigma, param-mode or layer-mode)");
}

std::string ablate_axis_name(AblateAxis axis) {
    switch (axis) {
    case AblateAxis::unroll_layers: return "k";
    case AblateAxis::sigma: return "sigma";
    case AblateAxis::param_mode: return "param-mode";
    case AblateAxis::layer_mode: return "layer-mode";
    }
    return "?";
}

std::vector<AblateRow> ablate(const SceneSet& scenes, const FeatureStack& stack,
                              const TrainConfig& base, LayerMode base_mode,
                              AblateAxis axis, const std::vector<std::string>& values) {
    if (values.empty()) throw InvalidInputError("ablate: value list is empty");
    std::vector<AblateRow> rows;
    rows.reserve(values.size());
    for (const std::string& value : values) {
        TrainConfig cfg = base;
        LayerMode mode = base_mode;
        switch (axis) {
        case AblateAxis::unroll_layers:
            try {
                cfg.unroll_layers = std::stoi(value);
            } catch (const std::exception&) {
                throw InvalidInputError("ablate: bad layer count '" + value + "'");
            }
            break;
        case AblateAxis::sigma:
            try {
                cfg.sigma = std::stod(value);
            } catch (const std::exception&) {
                throw InvalidInputError("ablate: bad sigma '" + value + "'");
            }
            break;
        case AblateAxis::param_mode:
            cfg.param_mode = parse_param_mode(value);
            break;
        case AblateAxis::layer_mode:
            mode = parse_layer_mode(value);
            break;
        }
        validate_config(cfg);

        const TrainingSet set = assemble(scenes, stack, mode);
        AblateRow row;
        row.value = value;
        row.record = train(set, cfg, /*with_potgui=*/true);

        double best = 0.0;
        for (const EpochStats& s : row.record.epochs)
            if (s.evaluated && std::isfinite(s.miou) && s.miou > best) best = s.miou;
        row.epochs_to_90pct_best = 0;
        for (const EpochStats& s : row.record.epochs) {
            if (s.evaluated && std::isfinite(s.miou) && s.miou >= 0.9 * best) {
                row.epochs_to_90pct_best = s.epoch;
                break;
            }
        }
        for (auto it = row.record.epochs.rbegin(); it != row.record.epochs.rend(); ++it) {
            if (it->evaluated) {
                row.final_miou = it->miou;
                row.final_mf1 = it->mf1;
                break;
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablate_csv(const std::vector<AblateRow>& rows) {
    std::ostringstream out;
    out << "value,final_miou,final_mf1,epochs_to_90pct_best\n";
    for (const AblateRow& r : rows)
        out << r.value << ',' << format_g17(r.final_miou) << ',' << format_g17(r.final_mf1)
            << ',' << r.epochs_to_90pct_best << '\n';
    return out.str();
}

} // namespace potgui
