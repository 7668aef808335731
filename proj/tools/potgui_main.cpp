#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "potgui/data.hpp"
#include "potgui/head.hpp"
#include "potgui/metrics.hpp"
#include "potgui/trainer.hpp"

using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "1.0.0";

std::string single_line(std::string s) {
    for (char& c : s)
        if (c == '\n' || c == '\r') c = ';';
    return s;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw potgui::IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw potgui::IoError("short write to '" + path + "'");
}

void write_manifest(const std::string& path, const json& manifest) {
    write_text(path, manifest.dump(2) + "\n");
}

std::uint64_t resolve_seed(const CLI::Option* seed_opt, std::uint64_t flag_value) {
    if (seed_opt->count() > 0) return flag_value;
    if (const char* env = std::getenv("POTGUI_SEED")) {
        try {
            std::size_t used = 0;
            const unsigned long long v = std::stoull(env, &used);
            if (used != std::string(env).size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw potgui::InvalidInputError("POTGUI_SEED is not an unsigned integer: '" +
                                            std::string(env) + "'");
        }
    }
    return flag_value;
}

std::vector<std::string> split_csv_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::string sanitize(const std::string& v) {
    std::string out = v;
    for (char& c : out)
        if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
    return out;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenConfig {
    std::string out;
    int count = 200, height = 32, width = 32, classes = 5, layers = 8, dims = 16;
    double noise = 0.5;
    std::uint64_t seed = 7;
};

json gen_to_json(const GenConfig& c) {
    return json{{"out", c.out},     {"count", c.count},   {"height", c.height},
                {"width", c.width}, {"classes", c.classes}, {"layers", c.layers},
                {"dims", c.dims},   {"noise", c.noise},   {"seed", c.seed}};
}

GenConfig gen_from_json(const json& j) {
    GenConfig c;
    c.out = j.at("out").get<std::string>();
    c.count = j.at("count").get<int>();
    c.height = j.at("height").get<int>();
    c.width = j.at("width").get<int>();
    c.classes = j.at("classes").get<int>();
    c.layers = j.at("layers").get<int>();
    c.dims = j.at("dims").get<int>();
    c.noise = j.at("noise").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

void run_gen(const GenConfig& cfg) {
    const potgui::SceneSet scenes =
        potgui::generate_scenes(cfg.count, cfg.height, cfg.width, cfg.classes, cfg.seed);
    const potgui::FeatureStack stack =
        potgui::synth_features(scenes, cfg.layers, cfg.dims, cfg.noise, cfg.seed + 1);
    potgui::write_dataset(cfg.out, scenes, stack);

    json manifest{{"command", "gen-data"},
                  {"version", kToolVersion},
                  {"seed", cfg.seed},
                  {"outputs", json::array({cfg.out})},
                  {"config", gen_to_json(cfg)}};
    write_manifest(cfg.out + ".manifest.json", manifest);

    std::vector<std::size_t> counts(static_cast<std::size_t>(cfg.classes), 0);
    for (int id : scenes.labels) counts[static_cast<std::size_t>(id)]++;
    const double total = static_cast<double>(scenes.labels.size());
    std::cout << "wrote " << cfg.out << " (" << cfg.count << " samples, " << cfg.height
              << "x" << cfg.width << ", " << cfg.classes << " classes, " << cfg.layers
              << " layers x " << cfg.dims << " dims)\n";
    for (int c = 0; c < cfg.classes; ++c)
        std::cout << "  class " << c << ": " << counts[static_cast<std::size_t>(c)]
                  << " pixels (" << potgui::format_g17(
                         100.0 * counts[static_cast<std::size_t>(c)] / total)
                  << "%)\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainCli {
    std::string data;
    std::string out = "run";
    potgui::TrainConfig cfg;
    std::string param_mode = "two_param";
    std::string layer_mode = "Middle_4";
    bool baseline = false;
};

json train_to_json(const TrainCli& c) {
    return json{{"data", c.data},
                {"out", c.out},
                {"epochs", c.cfg.epochs},
                {"batch", c.cfg.batch_size},
                {"lr", c.cfg.lr},
                {"beta1", c.cfg.beta1},
                {"beta2", c.cfg.beta2},
                {"wd", c.cfg.weight_decay},
                {"sigma", c.cfg.sigma},
                {"k", c.cfg.unroll_layers},
                {"param_mode", c.param_mode},
                {"layer_mode", c.layer_mode},
                {"baseline", c.baseline},
                {"eval_every", c.cfg.eval_every},
                {"hidden_width", c.cfg.hidden_width},
                {"eval_fraction", c.cfg.eval_fraction},
                {"seed", c.cfg.seed}};
}

TrainCli train_from_json(const json& j) {
    TrainCli c;
    c.data = j.at("data").get<std::string>();
    c.out = j.at("out").get<std::string>();
    c.cfg.epochs = j.at("epochs").get<int>();
    c.cfg.batch_size = j.at("batch").get<int>();
    c.cfg.lr = j.at("lr").get<double>();
    c.cfg.beta1 = j.at("beta1").get<double>();
    c.cfg.beta2 = j.at("beta2").get<double>();
    c.cfg.weight_decay = j.at("wd").get<double>();
    c.cfg.sigma = j.at("sigma").get<double>();
    c.cfg.unroll_layers = j.at("k").get<int>();
    c.param_mode = j.at("param_mode").get<std::string>();
    c.layer_mode = j.at("layer_mode").get<std::string>();
    c.baseline = j.at("baseline").get<bool>();
    c.cfg.eval_every = j.at("eval_every").get<int>();
    c.cfg.hidden_width = j.at("hidden_width").get<int>();
    c.cfg.eval_fraction = j.at("eval_fraction").get<double>();
    c.cfg.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

void save_pot(const std::string& path, const potgui::PotStack& stack) {
    json j{{"mode", potgui::param_mode_name(stack.mode)},
           {"alphas", stack.alphas},
           {"etas", stack.etas}};
    write_text(path, j.dump(2) + "\n");
}

void run_train(const TrainCli& cli) {
    potgui::TrainConfig cfg = cli.cfg;
    cfg.param_mode = potgui::parse_param_mode(cli.param_mode);
    const potgui::LayerMode mode = potgui::parse_layer_mode(cli.layer_mode);
    potgui::validate_config(cfg);

    const potgui::Dataset ds = potgui::read_dataset(cli.data);
    const potgui::TrainingSet set = potgui::assemble(ds.scenes, ds.features, mode);
    const potgui::TrainRecord record = potgui::train(set, cfg, !cli.baseline);

    const std::string csv_path = cli.out + ".csv";
    const std::string head_path = cli.out + ".head.pghd";
    const std::string pot_path = cli.out + ".pot.json";
    write_text(csv_path, potgui::record_csv(record));
    potgui::save_head(head_path, record.head);
    save_pot(pot_path, record.stack);

    json manifest{{"command", "train"},
                  {"version", kToolVersion},
                  {"seed", cfg.seed},
                  {"outputs", json::array({csv_path, head_path, pot_path})},
                  {"config", train_to_json(cli)}};
    write_manifest(cli.out + ".manifest.json", manifest);

    if (!record.epochs.empty()) {
        const potgui::EpochStats& last = record.epochs.back();
        std::cout << "epoch " << last.epoch << ": train_loss="
                  << potgui::format_g17(last.train_loss)
                  << " miou=" << potgui::format_g17(last.miou)
                  << " miou_guided=" << potgui::format_g17(last.miou_guided) << "\n";
    }
    std::cout << "wrote " << csv_path << ", " << head_path << ", " << pot_path << "\n";
}

// ---------------------------------------------------------------------------
// eval

struct EvalCli {
    std::string data;
    std::string head;
    std::string layer_mode = "Middle_4";
    std::string split = "eval";
    std::string out = "eval.csv";
    double eval_fraction = 0.2;
};

json eval_to_json(const EvalCli& c) {
    return json{{"data", c.data},   {"head", c.head},
                {"layer_mode", c.layer_mode}, {"split", c.split},
                {"out", c.out},     {"eval_fraction", c.eval_fraction}};
}

EvalCli eval_from_json(const json& j) {
    EvalCli c;
    c.data = j.at("data").get<std::string>();
    c.head = j.at("head").get<std::string>();
    c.layer_mode = j.at("layer_mode").get<std::string>();
    c.split = j.at("split").get<std::string>();
    c.out = j.at("out").get<std::string>();
    c.eval_fraction = j.at("eval_fraction").get<double>();
    return c;
}

void run_eval(const EvalCli& cli) {
    const potgui::LayerMode mode = potgui::parse_layer_mode(cli.layer_mode);
    const potgui::Dataset ds = potgui::read_dataset(cli.data);
    const potgui::HeadParams head = potgui::load_head(cli.head);

    if (head.output_classes() != ds.scenes.classes)
        throw potgui::SchemaError("checkpoint has " +
                                  std::to_string(head.output_classes()) +
                                  " classes but dataset has " +
                                  std::to_string(ds.scenes.classes));
    potgui::TrainingSet set = potgui::assemble(ds.scenes, ds.features, mode);
    if (set.features.dims != head.input_dims())
        throw potgui::SchemaError("selected features have width " +
                                  std::to_string(set.features.dims) +
                                  " but checkpoint expects " +
                                  std::to_string(head.input_dims()));

    const int total = set.labels.samples;
    const int split_start = potgui::eval_split_start(total, cli.eval_fraction);
    int first = 0, count = total;
    if (cli.split == "eval") {
        first = split_start;
        count = total - split_start;
    } else if (cli.split == "train") {
        count = split_start;
    } else if (cli.split != "all") {
        throw potgui::InvalidInputError("unknown split '" + cli.split +
                                        "' (expected eval, train or all)");
    }
    if (count < 1) throw potgui::InvalidInputError("requested split is empty");

    potgui::FeatureGrid feats(count, set.features.pixels, set.features.dims);
    potgui::LabelGrid labels(count, set.labels.pixels, set.labels.classes);
    const std::size_t fstride =
        static_cast<std::size_t>(set.features.pixels) * set.features.dims;
    const std::size_t lstride = static_cast<std::size_t>(set.labels.pixels);
    std::copy_n(set.features.values.begin() + first * fstride,
                count * fstride, feats.values.begin());
    std::copy_n(set.labels.ids.begin() + first * lstride, count * lstride,
                labels.ids.begin());

    const potgui::LogitGrid logits = potgui::head_forward(feats, head);
    const potgui::MetricsReport rep =
        potgui::report(potgui::confusion(labels, potgui::argmax_predictions(logits)));
    write_text(cli.out, potgui::metrics_csv(rep));

    json manifest{{"command", "eval"},
                  {"version", kToolVersion},
                  {"seed", 0},
                  {"outputs", json::array({cli.out})},
                  {"config", eval_to_json(cli)}};
    write_manifest(cli.out + ".manifest.json", manifest);

    std::cout << "miou=" << potgui::format_g17(rep.miou)
              << " mf1=" << potgui::format_g17(rep.mf1)
              << " mprec=" << potgui::format_g17(rep.mprecision)
              << " mrec=" << potgui::format_g17(rep.mrecall) << "\n";
    std::cout << "wrote " << cli.out << "\n";
}

// ---------------------------------------------------------------------------
// ablate

struct AblateCli {
    std::string data;
    std::string out = "ablate";
    std::string axis;
    std::string values;
    TrainCli base; // reuses the train flag set as the base configuration
};

json ablate_to_json(const AblateCli& c) {
    json j{{"data", c.data}, {"out", c.out}, {"axis", c.axis}, {"values", c.values}};
    j["base"] = train_to_json(c.base);
    return j;
}

AblateCli ablate_from_json(const json& j) {
    AblateCli c;
    c.data = j.at("data").get<std::string>();
    c.out = j.at("out").get<std::string>();
    c.axis = j.at("axis").get<std::string>();
    c.values = j.at("values").get<std::string>();
    c.base = train_from_json(j.at("base"));
    return c;
}

void run_ablate(const AblateCli& cli) {
    const potgui::AblateAxis axis = potgui::parse_ablate_axis(cli.axis);
    const std::vector<std::string> values = split_csv_list(cli.values);
    if (values.empty()) throw potgui::InvalidInputError("ablate: --values list is empty");

    potgui::TrainConfig cfg = cli.base.cfg;
    cfg.param_mode = potgui::parse_param_mode(cli.base.param_mode);
    const potgui::LayerMode mode = potgui::parse_layer_mode(cli.base.layer_mode);
    potgui::validate_config(cfg);

    const potgui::Dataset ds = potgui::read_dataset(cli.data);
    const std::vector<potgui::AblateRow> rows =
        potgui::ablate(ds.scenes, ds.features, cfg, mode, axis, values);

    const std::string table_path = cli.out + ".csv";
    write_text(table_path, potgui::ablate_csv(rows));
    json outputs = json::array({table_path});
    for (const potgui::AblateRow& row : rows) {
        const std::string path = cli.out + "." + sanitize(row.value) + ".csv";
        write_text(path, potgui::record_csv(row.record));
        outputs.push_back(path);
    }

    json manifest{{"command", "ablate"},
                  {"version", kToolVersion},
                  {"seed", cfg.seed},
                  {"outputs", outputs},
                  {"config", ablate_to_json(cli)}};
    write_manifest(cli.out + ".manifest.json", manifest);

    std::cout << potgui::ablate_csv(rows);
    std::cout << "wrote " << table_path << "\n";
}

// ---------------------------------------------------------------------------

void run_from_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw potgui::IoError("cannot open manifest '" + path + "'");
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw potgui::FormatError(0, "bad manifest json: " + single_line(e.what()));
    }
    const std::string command = manifest.at("command").get<std::string>();
    const json& config = manifest.at("config");
    if (command == "gen-data")
        run_gen(gen_from_json(config));
    else if (command == "train")
        run_train(train_from_json(config));
    else if (command == "eval")
        run_eval(eval_from_json(config));
    else if (command == "ablate")
        run_ablate(ablate_from_json(config));
    else
        throw potgui::InvalidInputError("manifest names unknown command '" + command + "'");
}

void add_train_flags(CLI::App* cmd, TrainCli& cli, CLI::Option*& seed_opt) {
    cmd->add_option("--data", cli.data, "PGSD dataset path")->required();
    cmd->add_option("--out", cli.out, "output base path");
    cmd->add_option("--epochs", cli.cfg.epochs, "training epochs");
    cmd->add_option("--batch", cli.cfg.batch_size, "batch size");
    cmd->add_option("--lr", cli.cfg.lr, "learning rate");
    cmd->add_option("--beta1", cli.cfg.beta1, "Adam beta1");
    cmd->add_option("--beta2", cli.cfg.beta2, "Adam beta2");
    cmd->add_option("--wd", cli.cfg.weight_decay, "weight decay");
    cmd->add_option("--sigma", cli.cfg.sigma, "mixing weight on model logits")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--k", cli.cfg.unroll_layers, "descent unroll layers");
    cmd->add_option("--param-mode", cli.param_mode, "two_param or one_param");
    cmd->add_option("--layer-mode", cli.layer_mode,
                    "Last, Middle_1, All_Avg, Middle_4_Avg, Middle_4 or All");
    cmd->add_flag("--baseline", cli.baseline, "plain cross-entropy training");
    seed_opt = cmd->add_option("--seed", cli.cfg.seed, "random seed");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"unrolled logit-descent guided segmentation training"};
    app.set_version_flag("--version", std::string("potgui ") + kToolVersion);
    app.require_subcommand(0, 1);

    std::string manifest_path;
    app.add_option("--from-manifest", manifest_path,
                   "re-run a command from its manifest (bit-identical outputs)");

    GenConfig gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen_cmd->add_option("--out", gen.out, "output PGSD path")->required();
    gen_cmd->add_option("--count", gen.count, "sample count");
    gen_cmd->add_option("--height", gen.height, "scene height");
    gen_cmd->add_option("--width", gen.width, "scene width");
    gen_cmd->add_option("--classes", gen.classes, "class count");
    gen_cmd->add_option("--layers", gen.layers, "feature stack depth");
    gen_cmd->add_option("--dims", gen.dims, "feature dims per layer");
    gen_cmd->add_option("--noise", gen.noise, "base noise level");
    CLI::Option* gen_seed = gen_cmd->add_option("--seed", gen.seed, "random seed");

    TrainCli train_cli;
    CLI::Option* train_seed = nullptr;
    CLI::App* train_cmd = app.add_subcommand("train", "train the perception head");
    add_train_flags(train_cmd, train_cli, train_seed);

    EvalCli eval_cli;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a head checkpoint");
    eval_cmd->add_option("--data", eval_cli.data, "PGSD dataset path")->required();
    eval_cmd->add_option("--head", eval_cli.head, "head checkpoint path")->required();
    eval_cmd->add_option("--layer-mode", eval_cli.layer_mode, "feature selection mode");
    eval_cmd->add_option("--split", eval_cli.split, "eval, train or all");
    eval_cmd->add_option("--out", eval_cli.out, "metrics CSV path");

    AblateCli ablate_cli;
    CLI::Option* ablate_seed = nullptr;
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "sweep one axis, all else equal");
    ablate_cmd->add_option("--axis", ablate_cli.axis, "k, sigma, param-mode or layer-mode")
        ->required();
    ablate_cmd->add_option("--values", ablate_cli.values, "comma-separated values")
        ->required();
    {
        ablate_cmd->add_option("--data", ablate_cli.data, "PGSD dataset path")->required();
        ablate_cmd->add_option("--out", ablate_cli.out, "output base path");
        ablate_cmd->add_option("--epochs", ablate_cli.base.cfg.epochs, "training epochs");
        ablate_cmd->add_option("--batch", ablate_cli.base.cfg.batch_size, "batch size");
        ablate_cmd->add_option("--lr", ablate_cli.base.cfg.lr, "learning rate");
        ablate_cmd->add_option("--beta1", ablate_cli.base.cfg.beta1, "Adam beta1");
        ablate_cmd->add_option("--beta2", ablate_cli.base.cfg.beta2, "Adam beta2");
        ablate_cmd->add_option("--wd", ablate_cli.base.cfg.weight_decay, "weight decay");
        ablate_cmd->add_option("--sigma", ablate_cli.base.cfg.sigma, "mixing weight")
            ->check(CLI::Range(0.0, 1.0));
        ablate_cmd->add_option("--k", ablate_cli.base.cfg.unroll_layers, "unroll layers");
        ablate_cmd->add_option("--param-mode", ablate_cli.base.param_mode,
                               "two_param or one_param");
        ablate_cmd->add_option("--layer-mode", ablate_cli.base.layer_mode,
                               "feature selection mode");
        ablate_seed = ablate_cmd->add_option("--seed", ablate_cli.base.cfg.seed,
                                             "random seed");
    }

    try {
        app.parse(argc, argv);

        if (!manifest_path.empty()) {
            run_from_manifest(manifest_path);
            return 0;
        }
        if (gen_cmd->parsed()) {
            gen.seed = resolve_seed(gen_seed, gen.seed);
            run_gen(gen);
        } else if (train_cmd->parsed()) {
            train_cli.cfg.seed = resolve_seed(train_seed, train_cli.cfg.seed);
            run_train(train_cli);
        } else if (eval_cmd->parsed()) {
            run_eval(eval_cli);
        } else if (ablate_cmd->parsed()) {
            ablate_cli.base.cfg.seed = resolve_seed(ablate_seed, ablate_cli.base.cfg.seed);
            run_ablate(ablate_cli);
        } else {
            std::cout << app.help();
        }
        return 0;
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        std::cout << "potgui " << kToolVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: flag: " << single_line(e.what()) << "\n";
        return 1;
    } catch (const potgui::Error& e) {
        std::cerr << "error: " << e.kind() << ": " << single_line(e.what()) << "\n";
        return 1;
    } catch (const json::exception& e) {
        std::cerr << "error: format: " << single_line(e.what()) << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << single_line(e.what()) << "\n";
        return 1;
    }
}
