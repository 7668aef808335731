#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "potgui/data.hpp"
#include "test_support.hpp"

using namespace potgui;

namespace {

std::filesystem::path temp_file(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

// Test-only linear probe: ridge regression from (features, 1) to one-hot
// targets, solved by Gaussian elimination with partial pivoting. Independent
// of the library's head/trainer path.
struct Probe {
    int dims = 0;
    int classes = 0;
    std::vector<double> w; // (dims+1) x classes
};

Probe train_probe(const FeatureStack& stack, int layer, const SceneSet& scenes,
                  double ridge = 1e-6) {
    const int d = stack.dims;
    const int n_aug = d + 1;
    const int classes = scenes.classes;
    const std::vector<float>& layer_vals = stack.layers[static_cast<std::size_t>(layer)];
    const std::size_t rows = static_cast<std::size_t>(stack.samples) * stack.pixels;

    std::vector<double> a(static_cast<std::size_t>(n_aug) * n_aug, 0.0);
    std::vector<double> b(static_cast<std::size_t>(n_aug) * classes, 0.0);
    std::vector<double> x(static_cast<std::size_t>(n_aug));
    for (std::size_t r = 0; r < rows; ++r) {
        for (int i = 0; i < d; ++i)
            x[static_cast<std::size_t>(i)] =
                static_cast<double>(layer_vals[r * static_cast<std::size_t>(d) + i]);
        x[static_cast<std::size_t>(d)] = 1.0;
        const int label = scenes.labels[r];
        for (int i = 0; i < n_aug; ++i) {
            for (int j = 0; j < n_aug; ++j)
                a[static_cast<std::size_t>(i) * n_aug + j] +=
                    x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(j)];
            b[static_cast<std::size_t>(i) * classes + label] += x[static_cast<std::size_t>(i)];
        }
    }
    for (int i = 0; i < n_aug; ++i) a[static_cast<std::size_t>(i) * n_aug + i] += ridge;

    // gaussian elimination on [A | B]
    for (int col = 0; col < n_aug; ++col) {
        int pivot = col;
        for (int r2 = col + 1; r2 < n_aug; ++r2)
            if (std::fabs(a[static_cast<std::size_t>(r2) * n_aug + col]) >
                std::fabs(a[static_cast<std::size_t>(pivot) * n_aug + col]))
                pivot = r2;
        if (pivot != col) {
            for (int j = 0; j < n_aug; ++j)
                std::swap(a[static_cast<std::size_t>(col) * n_aug + j],
                          a[static_cast<std::size_t>(pivot) * n_aug + j]);
            for (int j = 0; j < classes; ++j)
                std::swap(b[static_cast<std::size_t>(col) * classes + j],
                          b[static_cast<std::size_t>(pivot) * classes + j]);
        }
        const double diag = a[static_cast<std::size_t>(col) * n_aug + col];
        for (int r2 = 0; r2 < n_aug; ++r2) {
            if (r2 == col) continue;
            const double factor = a[static_cast<std::size_t>(r2) * n_aug + col] / diag;
            if (factor == 0.0) continue;
            for (int j = 0; j < n_aug; ++j)
                a[static_cast<std::size_t>(r2) * n_aug + j] -=
                    factor * a[static_cast<std::size_t>(col) * n_aug + j];
            for (int j = 0; j < classes; ++j)
                b[static_cast<std::size_t>(r2) * classes + j] -=
                    factor * b[static_cast<std::size_t>(col) * classes + j];
        }
    }
    Probe probe;
    probe.dims = d;
    probe.classes = classes;
    probe.w.resize(static_cast<std::size_t>(n_aug) * classes);
    for (int i = 0; i < n_aug; ++i) {
        const double diag = a[static_cast<std::size_t>(i) * n_aug + i];
        for (int j = 0; j < classes; ++j)
            probe.w[static_cast<std::size_t>(i) * classes + j] =
                b[static_cast<std::size_t>(i) * classes + j] / diag;
    }
    return probe;
}

double probe_accuracy(const Probe& probe, const FeatureStack& stack, int layer,
                      const SceneSet& scenes) {
    const int d = probe.dims;
    const std::vector<float>& layer_vals = stack.layers[static_cast<std::size_t>(layer)];
    const std::size_t rows = static_cast<std::size_t>(stack.samples) * stack.pixels;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        int best = 0;
        double best_score = -1e300;
        for (int c = 0; c < probe.classes; ++c) {
            double score = probe.w[static_cast<std::size_t>(d) * probe.classes + c];
            for (int i = 0; i < d; ++i)
                score += static_cast<double>(layer_vals[r * static_cast<std::size_t>(d) + i]) *
                         probe.w[static_cast<std::size_t>(i) * probe.classes + c];
            if (score > best_score) {
                best_score = score;
                best = c;
            }
        }
        if (best == scenes.labels[r]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(rows);
}

} // namespace

TEST_CASE("scene generation is deterministic and satisfies share bounds") {
    const SceneSet a = generate_scenes(20, 16, 16, 5, 3);
    const SceneSet b = generate_scenes(20, 16, 16, 5, 3);
    CHECK(a.labels == b.labels);

    std::vector<std::size_t> counts(5, 0);
    for (int id : a.labels) {
        REQUIRE(id >= 0);
        REQUIRE(id < 5);
        counts[static_cast<std::size_t>(id)]++;
    }
    const double total = static_cast<double>(a.labels.size());
    for (std::size_t c = 0; c < counts.size(); ++c) {
        const double share = static_cast<double>(counts[c]) / total;
        CHECK(share >= 0.01);
        CHECK(share <= 0.90);
    }

    const SceneSet other = generate_scenes(20, 16, 16, 5, 4);
    CHECK(a.labels != other.labels);
}

TEST_CASE("scene generation rejects impossible configurations") {
    CHECK_THROWS_AS(generate_scenes(1, 8, 8, 1, 0), InvalidInputError);
    CHECK_THROWS_AS(generate_scenes(0, 8, 8, 3, 0), InvalidInputError);
    CHECK_THROWS_AS(generate_scenes(1, 4, 8, 3, 0), InvalidInputError);
    CHECK_THROWS_AS(generate_scenes(1, 8, 8, 65, 0), InvalidInputError);
}

TEST_CASE("snr profile peaks strictly at the middle") {
    for (int layers : {2, 5, 8, 13}) {
        const std::vector<double> snr = snr_profile(layers);
        const std::size_t mid = static_cast<std::size_t>(layers / 2);
        CHECK(snr[mid] > snr.front());
        CHECK(snr[mid] > snr.back());
        for (double v : snr) {
            CHECK(v >= 1.0);
            CHECK(std::isfinite(v));
        }
    }
}

TEST_CASE("noiseless features are linearly separable") {
    const SceneSet scenes = generate_scenes(4, 8, 8, 3, 11);
    const FeatureStack stack = synth_features(scenes, 3, 4, 0.0, 12);
    for (int layer = 0; layer < 3; ++layer) {
        const Probe probe = train_probe(stack, layer, scenes);
        CHECK(probe_accuracy(probe, stack, layer, scenes) == 1.0);
    }
}

TEST_CASE("probe accuracy follows the snr profile on a seeded instance") {
    const SceneSet scenes = generate_scenes(6, 16, 16, 4, 21);
    const FeatureStack stack = synth_features(scenes, 8, 8, 0.75, 22);
    std::vector<double> acc(8);
    for (int layer = 0; layer < 8; ++layer) {
        const Probe probe = train_probe(stack, layer, scenes);
        acc[static_cast<std::size_t>(layer)] = probe_accuracy(probe, stack, layer, scenes);
    }
    const std::size_t mid = 4;
    CHECK(acc[mid] > acc[0] + 0.05);
    CHECK(acc[mid] > acc[7] + 0.05);
    // pairwise consistency wherever the snr gap is substantial
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
            if (stack.layer_snr[static_cast<std::size_t>(i)] >
                1.2 * stack.layer_snr[static_cast<std::size_t>(j)])
                CHECK(acc[static_cast<std::size_t>(i)] >=
                      acc[static_cast<std::size_t>(j)] - 0.02);
}

TEST_CASE("feature synthesis is deterministic and validates input") {
    const SceneSet scenes = generate_scenes(3, 8, 8, 3, 5);
    const FeatureStack a = synth_features(scenes, 4, 5, 0.5, 9);
    const FeatureStack b = synth_features(scenes, 4, 5, 0.5, 9);
    for (int l = 0; l < 4; ++l)
        CHECK(a.layers[static_cast<std::size_t>(l)] == b.layers[static_cast<std::size_t>(l)]);
    CHECK(a.layer_snr == snr_profile(4));

    CHECK_THROWS_AS(synth_features(scenes, 0, 5, 0.5, 9), InvalidInputError);
    CHECK_THROWS_AS(synth_features(scenes, 4, 2, 0.5, 9), InvalidInputError);
    CHECK_THROWS_AS(synth_features(scenes, 4, 5, -1.0, 9), InvalidInputError);
}

TEST_CASE("layer selection widths and windows") {
    const SceneSet scenes = generate_scenes(2, 8, 8, 3, 7);
    const FeatureStack stack = synth_features(scenes, 8, 4, 0.3, 8);

    const FeatureGrid last = select_layers(stack, LayerMode::last);
    CHECK(last.dims == 4);
    CHECK(last.values[0] == static_cast<double>(stack.layers[7][0]));

    const FeatureGrid mid1 = select_layers(stack, LayerMode::middle_1);
    CHECK(mid1.values[5] == static_cast<double>(stack.layers[4][5]));

    const FeatureGrid m4 = select_layers(stack, LayerMode::middle_4);
    CHECK(m4.dims == 16);
    // window is layers 2..5, block-concatenated per pixel
    for (int block = 0; block < 4; ++block)
        for (int d = 0; d < 4; ++d)
            CHECK(m4.at(1, 17, block * 4 + d) ==
                  static_cast<double>(stack.layers[static_cast<std::size_t>(2 + block)]
                                          [(static_cast<std::size_t>(1) * 64 + 17) * 4 + d]));

    const FeatureGrid m4avg = select_layers(stack, LayerMode::middle_4_avg);
    CHECK(m4avg.dims == 4);
    const FeatureGrid all = select_layers(stack, LayerMode::all);
    CHECK(all.dims == 32);
    const FeatureGrid avg = select_layers(stack, LayerMode::all_avg);
    CHECK(avg.dims == 4);
}

TEST_CASE("layer selection degenerate and error cases") {
    const SceneSet scenes = generate_scenes(2, 8, 8, 3, 7);
    const FeatureStack one = synth_features(scenes, 1, 4, 0.3, 8);
    const FeatureGrid base = select_layers(one, LayerMode::last);
    for (LayerMode mode : {LayerMode::middle_1, LayerMode::all_avg, LayerMode::all}) {
        const FeatureGrid same = select_layers(one, mode);
        CHECK(same.dims == base.dims);
        CHECK(same.values == base.values);
    }
    CHECK_THROWS_AS(select_layers(one, LayerMode::middle_4), InvalidInputError);
    CHECK_THROWS_AS(select_layers(one, LayerMode::middle_4_avg), InvalidInputError);

    // averaging identical layers reproduces the layer up to rounding
    FeatureStack same4;
    same4.samples = 1;
    same4.pixels = 4;
    same4.dims = 2;
    same4.layer_snr = {1, 1, 1, 1};
    std::vector<float> layer{0.1f, -2.5f, 3.25f, 0.0f, 7.5f, -0.125f, 1e-3f, 42.0f};
    same4.layers = {layer, layer, layer, layer};
    const FeatureGrid mean = select_layers(same4, LayerMode::all_avg);
    for (std::size_t i = 0; i < layer.size(); ++i)
        CHECK(mean.values[i] == doctest::Approx(static_cast<double>(layer[i])).epsilon(1e-15));
}

TEST_CASE("layer mode names round trip") {
    for (const char* name : {"Last", "Middle_1", "All_Avg", "Middle_4_Avg", "Middle_4", "All"})
        CHECK(layer_mode_name(parse_layer_mode(name)) == name);
    CHECK_THROWS_AS(parse_layer_mode("middle"), InvalidInputError);
}

TEST_CASE("dataset container round trips losslessly") {
    const SceneSet scenes = generate_scenes(3, 8, 8, 3, 31);
    const FeatureStack stack = synth_features(scenes, 2, 3, 0.4, 32);
    const auto path = temp_file("potgui_data_test.pgsd");
    write_dataset(path.string(), scenes, stack);

    const Dataset ds = read_dataset(path.string());
    CHECK(ds.scenes.count == 3);
    CHECK(ds.scenes.height == 8);
    CHECK(ds.scenes.width == 8);
    CHECK(ds.scenes.classes == 3);
    CHECK(ds.scenes.labels == scenes.labels);
    REQUIRE(ds.features.layer_count() == 2);
    CHECK(ds.features.dims == 3);
    for (int l = 0; l < 2; ++l)
        CHECK(ds.features.layers[static_cast<std::size_t>(l)] ==
              stack.layers[static_cast<std::size_t>(l)]);

    // write twice, identical bytes
    const auto path2 = temp_file("potgui_data_test2.pgsd");
    write_dataset(path2.string(), scenes, stack);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    std::filesystem::remove(path2);

    SUBCASE("corrupted magic fails cleanly") {
        std::fstream fs(path, std::ios::in | std::ios::out | std::ios::binary);
        fs.put('Q');
        fs.close();
        try {
            read_dataset(path.string());
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.byte_offset() == 0);
        }
    }
    SUBCASE("unsupported version is rejected") {
        std::fstream fs(path, std::ios::in | std::ios::out | std::ios::binary);
        fs.seekp(4);
        fs.put(static_cast<char>(2));
        fs.close();
        try {
            read_dataset(path.string());
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(e.byte_offset() == 4);
            CHECK(std::string(e.what()).find("version") != std::string::npos);
        }
    }
    SUBCASE("truncation reports an offset") {
        std::filesystem::resize_file(path, 100);
        CHECK_THROWS_AS(read_dataset(path.string()), FormatError);
    }
    std::filesystem::remove(path);
}
