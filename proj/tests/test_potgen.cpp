#include <doctest.h>

#include <cmath>

#include "potgui/numerics.hpp"
#include "potgui/potgen.hpp"
#include "test_support.hpp"

using namespace potgui;

namespace {

LogitGrid make_logits(int samples, int pixels, int classes,
                      const std::vector<double>& values) {
    LogitGrid g(samples, pixels, classes);
    g.values = values;
    return g;
}

LabelGrid make_labels(int samples, int pixels, int classes,
                      const std::vector<int>& ids) {
    LabelGrid l(samples, pixels, classes);
    l.ids = ids;
    return l;
}

// scalar loss of the whole unroll as a function of (initial logits, alphas, etas)
double unroll_loss(const LogitGrid& initial, const LabelGrid& labels,
                   const std::vector<double>& alphas, const std::vector<double>& etas) {
    PotStack stack;
    stack.alphas = alphas;
    stack.etas = etas;
    const PotOutput out = pot_forward(initial, labels, stack, false);
    return cross_entropy(labels, out.guided_logits);
}

} // namespace

TEST_CASE("init_stack defaults and modes") {
    const PotStack s = init_stack(3);
    REQUIRE(s.layer_count() == 3);
    for (double a : s.alphas) CHECK(a == 1.0);
    for (double e : s.etas) CHECK(e == 1.0);
    CHECK_FALSE(s.tape_valid);

    const PotStack one = init_stack(2, ParamMode::one_param, 1.0);
    CHECK(one.alphas == std::vector<double>{1.0, 1.0});
    CHECK(one.etas == std::vector<double>{1.0, 1.0});

    const PotStack empty = init_stack(0);
    CHECK(empty.layer_count() == 0);

    CHECK_THROWS_AS(init_stack(-1), InvalidInputError);
}

TEST_CASE("forward with no layers is the identity") {
    PotStack stack = init_stack(0);
    const LogitGrid logits = make_logits(1, 2, 3, {0.1, -0.2, 0.4, 1.0, 0.0, -1.0});
    const LabelGrid labels = make_labels(1, 2, 3, {2, 0});
    const PotOutput out = pot_forward(logits, labels, stack, true);
    CHECK(out.guided_logits.values == logits.values);
    REQUIRE(out.per_layer_loss.size() == 1);
    CHECK(out.per_layer_loss[0] == cross_entropy(labels, logits));
}

TEST_CASE("single and double descent steps match hand values") {
    const LogitGrid start = make_logits(1, 1, 2, {0.0, 0.0});
    const LabelGrid labels = make_labels(1, 1, 2, {0});

    PotStack one = init_stack(1);
    const PotOutput o1 = pot_forward(start, labels, one, false);
    CHECK(std::fabs(o1.guided_logits.values[0] - 0.5) < 1e-15);
    CHECK(std::fabs(o1.guided_logits.values[1] + 0.5) < 1e-15);

    PotStack two = init_stack(2);
    const PotOutput o2 = pot_forward(start, labels, two, false);
    CHECK(std::fabs(o2.guided_logits.values[0] - 0.7689414213699951) < 1e-12);
    CHECK(std::fabs(o2.guided_logits.values[1] + 0.7689414213699951) < 1e-12);
    REQUIRE(o2.per_layer_loss.size() == 3);
    CHECK(o2.per_layer_loss[0] == cross_entropy(labels, start));
}

TEST_CASE("per-layer loss decreases strictly at unit steps") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        const int classes = rng.uniform_int(2, 7);
        const int samples = rng.uniform_int(1, 3);
        const int pixels = rng.uniform_int(1, 8);
        const LogitGrid logits = support::random_logits(samples, pixels, classes, rng);
        const LabelGrid labels = support::random_labels(samples, pixels, classes, rng);
        PotStack stack = init_stack(10);
        const PotOutput out = pot_forward(logits, labels, stack, false);
        REQUIRE(out.per_layer_loss.size() == 11);
        for (std::size_t k = 1; k < out.per_layer_loss.size(); ++k)
            CHECK(out.per_layer_loss[k] < out.per_layer_loss[k - 1] - 1e-12);
    }
}

TEST_CASE("deep unroll drives the argmax to the labels") {
    Rng rng(29);
    for (int trial = 0; trial < 20; ++trial) {
        const int classes = rng.uniform_int(2, 7);
        const int pixels = rng.uniform_int(4, 13);
        const LogitGrid logits = support::random_logits(1, pixels, classes, rng);
        const LabelGrid labels = support::random_labels(1, pixels, classes, rng);
        PotStack stack = init_stack(200);
        const PotOutput out = pot_forward(logits, labels, stack, false);
        for (int p = 0; p < pixels; ++p) {
            int best = 0;
            for (int c = 1; c < classes; ++c)
                if (out.guided_logits.at(0, p, c) > out.guided_logits.at(0, p, best))
                    best = c;
            CHECK(best == labels.at(0, p));
        }
    }
}

TEST_CASE("trajectory shift invariance") {
    Rng rng(31);
    const LogitGrid logits = support::random_logits(2, 3, 4, rng);
    const LabelGrid labels = support::random_labels(2, 3, 4, rng);
    PotStack stack = init_stack(5);
    const PotOutput base = pot_forward(logits, labels, stack, false);

    LogitGrid shifted = logits;
    for (int n = 0; n < 2; ++n)
        for (int p = 0; p < 3; ++p) {
            const double off = rng.uniform(-20.0, 20.0);
            for (int c = 0; c < 4; ++c) shifted.at(n, p, c) += off;
        }
    const PotOutput moved = pot_forward(shifted, labels, stack, false);
    for (std::size_t i = 0; i < logits.values.size(); ++i) {
        const double delta_base = base.guided_logits.values[i] - logits.values[i];
        const double delta_moved = moved.guided_logits.values[i] - shifted.values[i];
        CHECK(std::fabs(delta_base - delta_moved) < 1e-9);
    }
}

TEST_CASE("divergence guard names the offending layer") {
    const LogitGrid logits = make_logits(1, 1, 2, {0.0, 0.0});
    const LabelGrid labels = make_labels(1, 1, 2, {0});
    PotStack stack = init_stack(3);
    stack.alphas[1] = 1e308;
    stack.etas[1] = 1e308;
    try {
        pot_forward(logits, labels, stack, false);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.layer() == 2);
        CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
    }
}

TEST_CASE("backward with no layers is the identity") {
    PotStack stack = init_stack(0);
    const LogitGrid logits = make_logits(1, 2, 2, {0.3, -0.3, 0.7, 0.1});
    const LabelGrid labels = make_labels(1, 2, 2, {0, 1});
    pot_forward(logits, labels, stack, true);
    LogitGrid upstream = make_logits(1, 2, 2, {1.0, 2.0, 3.0, 4.0});
    const PotGradients g = pot_backward(stack, labels, upstream);
    CHECK(g.initial_logits.values == upstream.values);
    CHECK(g.alphas.empty());
    CHECK(g.etas.empty());
}

TEST_CASE("backward gradients match the central-difference oracle") {
    Rng rng(37);
    for (int layers : {1, 3, 10}) {
        for (int trial = 0; trial < 8; ++trial) {
            const int classes = rng.uniform_int(2, 5);
            const int samples = rng.uniform_int(1, 3);
            const int pixels = rng.uniform_int(1, 5);
            const LogitGrid logits = support::random_logits(samples, pixels, classes, rng);
            const LabelGrid labels = support::random_labels(samples, pixels, classes, rng);
            std::vector<double> alphas(static_cast<std::size_t>(layers));
            std::vector<double> etas(static_cast<std::size_t>(layers));
            for (double& a : alphas) a = rng.uniform(-1.2, 1.2);
            for (double& e : etas) e = rng.uniform(-1.2, 1.2);

            PotStack stack;
            stack.alphas = alphas;
            stack.etas = etas;
            const PotOutput out = pot_forward(logits, labels, stack, true);
            const LogitGrid upstream = ce_logit_gradient(labels, out.guided_logits);
            const PotGradients g = pot_backward(stack, labels, upstream);

            auto f_logits = [&](const std::vector<double>& flat) {
                LogitGrid x = logits;
                x.values = flat;
                return unroll_loss(x, labels, alphas, etas);
            };
            CHECK(support::max_rel_err(g.initial_logits.values,
                                       finite_diff_gradient(f_logits, logits.values, 1e-6)) <
                  1e-5);

            auto f_alpha = [&](const std::vector<double>& a) {
                return unroll_loss(logits, labels, a, etas);
            };
            CHECK(support::max_rel_err(g.alphas, finite_diff_gradient(f_alpha, alphas, 1e-6)) <
                  1e-5);

            auto f_eta = [&](const std::vector<double>& e) {
                return unroll_loss(logits, labels, alphas, e);
            };
            CHECK(support::max_rel_err(g.etas, finite_diff_gradient(f_eta, etas, 1e-6)) <
                  1e-5);
        }
    }
}

TEST_CASE("tied single-parameter gradient matches the tied oracle") {
    Rng rng(41);
    const LogitGrid logits = support::random_logits(1, 4, 3, rng);
    const LabelGrid labels = support::random_labels(1, 4, 3, rng);
    std::vector<double> gammas{0.8, 1.1, 0.9};

    PotStack stack = init_stack(3, ParamMode::one_param);
    stack.alphas = gammas;
    const PotOutput out = pot_forward(logits, labels, stack, true);
    const LogitGrid upstream = ce_logit_gradient(labels, out.guided_logits);
    const PotGradients g = pot_backward(stack, labels, upstream);

    auto f_gamma = [&](const std::vector<double>& gv) {
        return unroll_loss(logits, labels, gv, {1.0, 1.0, 1.0});
    };
    CHECK(support::max_rel_err(g.alphas, finite_diff_gradient(f_gamma, gammas, 1e-6)) < 1e-5);
}

TEST_CASE("tape is consumed and stale use is rejected") {
    Rng rng(43);
    const LogitGrid logits = support::random_logits(1, 3, 3, rng);
    const LabelGrid labels = support::random_labels(1, 3, 3, rng);
    PotStack stack = init_stack(2);

    const LogitGrid upstream = make_logits(1, 3, 3, std::vector<double>(9, 0.1));
    CHECK_THROWS_AS(pot_backward(stack, labels, upstream), ContractViolationError);

    pot_forward(logits, labels, stack, true);
    REQUIRE(stack.tape.size() == 2);
    pot_backward(stack, labels, upstream);
    CHECK(stack.tape.empty());
    CHECK_FALSE(stack.tape_valid);
    CHECK_THROWS_AS(pot_backward(stack, labels, upstream), ContractViolationError);

    // a forward without recording leaves no tape to consume
    pot_forward(logits, labels, stack, false);
    CHECK_THROWS_AS(pot_backward(stack, labels, upstream), ContractViolationError);
}
