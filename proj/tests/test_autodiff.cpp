#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <numbers>

#include "cellnas/autodiff.hpp"
#include "cellnas/checkpoint.hpp"
#include "cellnas/error.hpp"
#include "cellnas/fixtures.hpp"
#include "cellnas/network.hpp"
#include "cellnas/optimizer.hpp"
#include "cellnas/registry.hpp"
#include "support.hpp"

using namespace cellnas;

namespace {

Tensor random_tensor(Rng& rng, Shape shape) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.normal();
    return t;
}

double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}); }

// Builds a scalar from leaves; the test compares the tape gradient of every
// leaf against central differences of the same builder.
using Builder = std::function<ValueId(Tape&, const std::vector<ValueId>&)>;

void check_gradients(const Builder& build, std::vector<Tensor> inputs, double eps = 1e-5, double tol = 1e-6) {
    Tape tape;
    std::vector<ValueId> ids;
    for (const auto& t : inputs) ids.push_back(tape.leaf(t));
    const ValueId out = build(tape, ids);
    ASSERT_EQ(tape.value(out).size(), 1u);
    tape.backward(out);

    const auto eval = [&](const std::vector<Tensor>& xs) {
        Tape t;
        std::vector<ValueId> leaf;
        for (const auto& x : xs) leaf.push_back(t.leaf(x));
        return t.value(build(t, leaf)).item();
    };
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor analytic = tape.grad(ids[k]);
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double saved = inputs[k][i];
            inputs[k][i] = saved + eps;
            const double up = eval(inputs);
            inputs[k][i] = saved - eps;
            const double down = eval(inputs);
            inputs[k][i] = saved;
            EXPECT_LE(rel_error(analytic[i], (up - down) / (2 * eps)), tol) << "input " << k << " entry " << i;
        }
    }
}

// Random linear readout so vector-valued primitives end in a scalar with
// non-trivial upstream gradient.
ValueId readout(Tape& t, ValueId x, Rng& rng) {
    const Tensor v = t.value(x);
    const Tensor weights = random_tensor(rng, v.shape());
    const ValueId w = t.leaf(weights);
    Tensor prod(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i) prod[i] = v[i] * weights[i];
    const ValueId out = t.push("mul", {x, w}, std::move(prod), [](Tape& tape, const Tape::Record& r) {
        const Tensor g = tape.grad(r.output);
        const Tensor wv = tape.value(r.inputs[1]);
        Tensor& gx = tape.grad_buffer(r.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * wv[i];
    });
    return ad::sum(t, out);
}

}  // namespace

TEST(Primitives, FiniteDifferences) {
    for (std::size_t d = 2; d <= 16; d += 7) {
        Rng rng(d);
        const auto a = random_tensor(rng, {3, d});
        const auto b = random_tensor(rng, {d, 4});
        const auto c = random_tensor(rng, {3, d});
        const auto bias = random_tensor(rng, {d});
        std::uint64_t seed = 100 + d;

        check_gradients([&](Tape& t, const auto& x) { Rng r(seed); return readout(t, ad::matmul(t, x[0], x[1]), r); },
                        {a, b});
        check_gradients([&](Tape& t, const auto& x) { Rng r(seed); return readout(t, ad::add(t, x[0], x[1]), r); },
                        {a, c});
        check_gradients([&](Tape& t, const auto& x) { Rng r(seed); return readout(t, ad::sub(t, x[0], x[1]), r); },
                        {a, c});
        check_gradients([&](Tape& t, const auto& x) { Rng r(seed); return readout(t, ad::scale(t, x[0], -1.7), r); },
                        {a});
        check_gradients(
            [&](Tape& t, const auto& x) { Rng r(seed); return readout(t, ad::add_row_bias(t, x[0], x[1]), r); },
            {a, bias});
        check_gradients([&](Tape& t, const auto& x) { Rng r(seed); return readout(t, ad::relu(t, x[0]), r); }, {a});
        check_gradients(
            [&](Tape& t, const auto& x) {
                Rng r(seed);
                const std::vector<ValueId> parts{x[0], x[1]};
                return readout(t, ad::concat_cols(t, parts), r);
            },
            {a, c});
        check_gradients([&](Tape& t, const auto& x) { return ad::half_squared_norm(t, x[0]); }, {a});
        const std::vector<std::size_t> labels{0, 1, d - 1};
        check_gradients([&](Tape& t, const auto& x) { return ad::softmax_cross_entropy(t, x[0], labels); }, {a});
    }
}

TEST(Primitives, SoftmaxOnEqualLogits) {
    Tape t;
    const ValueId logits = t.leaf(Tensor({2, 4}, 0.3));
    const std::vector<std::size_t> labels{1, 3};
    const ValueId loss = ad::softmax_cross_entropy(t, logits, labels);
    EXPECT_NEAR(t.value(loss).item(), std::log(4.0), 1e-15);
    t.backward(loss);
    const Tensor g = t.grad(logits);
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            const double onehot = c == labels[r] ? 1.0 : 0.0;
            EXPECT_NEAR(g.at(r, c), (0.25 - onehot) / 2.0, 1e-15);
        }
    }
}

TEST(Primitives, UnreachedLeafHasZeroGradient) {
    Tape t;
    const ValueId a = t.leaf(Tensor({2, 2}, 1.0));
    const ValueId unused = t.leaf(Tensor({3}, 5.0));
    const ValueId loss = ad::half_squared_norm(t, a);
    t.backward(loss);
    EXPECT_EQ(t.grad(unused), Tensor({3}, 0.0));
}

TEST(Primitives, ShapeChecks) {
    Tape t;
    const ValueId a = t.leaf(Tensor({2, 3}));
    const ValueId b = t.leaf(Tensor({2, 3}));
    EXPECT_THROW(ad::matmul(t, a, b), Error);
    EXPECT_THROW(ad::add(t, a, t.leaf(Tensor({3, 2}))), Error);
}

TEST(Tape, BackwardWithoutRecordsThrows) {
    Tape t;
    const ValueId a = t.leaf(Tensor::scalar(1.0));
    try {
        t.backward(a);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NoTape);
    }
}

TEST(Tape, RecordsAreTopological) {
    Tape t;
    const ValueId a = t.leaf(Tensor({2, 2}, 1.0));
    const ValueId b = ad::relu(t, a);
    const ValueId c = ad::add(t, a, b);
    ad::sum(t, c);
    for (const auto& r : t.records()) {
        for (auto in : r.inputs) EXPECT_LT(in, r.output);
    }
}

TEST(Registry, EveryKindHasRules) {
    const auto ops = registered_operations();
    ASSERT_EQ(ops.size(), 3u);
    for (const auto& rule : ops) {
        EXPECT_NE(rule.forward, nullptr);
        EXPECT_NE(rule.backward, nullptr);
        EXPECT_NE(rule.parameter_shapes, nullptr);
    }
    EXPECT_EQ(operation_rule(OperationKind::Linear).parameter_shapes(5), (std::vector<Shape>{{5, 5}, {5}}));
    EXPECT_TRUE(operation_rule(OperationKind::Identity).parameter_shapes(5).empty());
    EXPECT_TRUE(operation_rule(OperationKind::Zero).parameter_shapes(5).empty());
    EXPECT_EQ(operation_rule("sep_conv_3x3").kind, OperationKind::Linear);
    EXPECT_THROW(operation_rule("no_such_op"), Error);
}

TEST(Registry, OperationsMatchFiniteDifferences) {
    for (std::size_t d = 2; d <= 16; d += 2) {
        for (const auto& rule : registered_operations()) {
            Rng rng(d * 31 + static_cast<std::size_t>(rule.kind));
            std::vector<Tensor> inputs{random_tensor(rng, {3, d})};
            for (const auto& s : rule.parameter_shapes(d)) inputs.push_back(random_tensor(rng, s));
            const std::uint64_t seed = d;
            check_gradients(
                [&](Tape& t, const std::vector<ValueId>& x) {
                    Rng r(seed);
                    const std::vector<ValueId> params(x.begin() + 1, x.end());
                    return readout(t, apply_operation(t, rule, x[0], params), r);
                },
                inputs);
        }
    }
}

TEST(Registry, ZeroOperationIsExactlyZero) {
    Rng rng(3);
    Tape t;
    const ValueId x = t.leaf(random_tensor(rng, {4, 6}));
    const ValueId y = apply_operation(t, operation_rule(OperationKind::Zero), x, {});
    for (double v : t.value(y).values()) EXPECT_EQ(v, 0.0);
    t.backward(ad::sum(t, y));
    const Tensor gx = t.grad(x);
    for (double v : gx.values()) EXPECT_EQ(v, 0.0);
}

TEST(Registry, IdentityPassesThrough) {
    Rng rng(4);
    Tape t;
    const Tensor value = random_tensor(rng, {4, 6});
    const ValueId x = t.leaf(value);
    EXPECT_EQ(t.value(apply_operation(t, operation_rule(OperationKind::Identity), x, {})), value);
}

TEST(Registry, LinearWithZeroWeightsGivesZero) {
    Rng rng(5);
    Tape t;
    const ValueId x = t.leaf(random_tensor(rng, {4, 6}));
    const std::vector<ValueId> params{t.leaf(Tensor({6, 6}, 0.0)), t.leaf(Tensor({6}, 0.0))};
    const ValueId y = apply_operation(t, operation_rule(OperationKind::Linear), x, params);
    for (double v : t.value(y).values()) EXPECT_EQ(v, 0.0);
}

TEST(Registry, GradientsAreLinearInTheSeed) {
    Rng rng(6);
    Tape t;
    const ValueId x = t.leaf(random_tensor(rng, {3, 5}));
    const std::vector<ValueId> params{t.leaf(random_tensor(rng, {5, 5})), t.leaf(random_tensor(rng, {5}))};
    const ValueId y = apply_operation(t, operation_rule(OperationKind::Linear), x, params);
    const Tensor s1 = random_tensor(rng, {3, 5});
    const Tensor s2 = random_tensor(rng, {3, 5});
    Tensor s12 = s1;
    for (std::size_t i = 0; i < s12.size(); ++i) s12[i] += 2.0 * s2[i];

    const auto grad_for = [&](const Tensor& seed) {
        t.clear_grads();
        t.backward(y, seed);
        return t.grad(params[0]);
    };
    const Tensor g1 = grad_for(s1), g2 = grad_for(s2), g12 = grad_for(s12);
    for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_NEAR(g12[i], g1[i] + 2.0 * g2[i], 1e-12);
}

TEST(NetworkGradient, MatchesFiniteDifferences) {
    Rng rng(7);
    NetworkConfig cfg;
    cfg.layers = 3;
    cfg.dim = 4;
    cfg.input_dim = 3;
    cfg.num_classes = 3;
    for (int trial = 0; trial < 3; ++trial) {
        const auto g = oracle::random_genotype(rng, 3);
        const Network net(g, cfg);
        auto params = net.init_parameters(rng);
        const Tensor x = random_tensor(rng, {5, 3});
        const std::vector<std::size_t> labels{0, 1, 2, 1, 0};
        const auto analytic = loss_and_gradient(net, params, x, labels);
        const double eps = 1e-4;
        for (std::size_t b = 0; b < params.size(); ++b) {
            for (std::size_t i = 0; i < params[b].size(); ++i) {
                const double saved = params[b][i];
                params[b][i] = saved + eps;
                const double up = loss_and_gradient(net, params, x, labels).loss;
                params[b][i] = saved - eps;
                const double down = loss_and_gradient(net, params, x, labels).loss;
                params[b][i] = saved;
                EXPECT_LE(rel_error(analytic.grads[b][i], (up - down) / (2 * eps)), 1e-5)
                    << params.name(b) << "[" << i << "]";
            }
        }
    }
}

TEST(NetworkGradient, ForwardMatchesPredict) {
    Rng rng(8);
    const Network net(builtin_genotype("darts"), NetworkConfig{});
    const auto params = net.init_parameters(rng);
    const Tensor x = random_tensor(rng, {7, 8});
    Tape tape;
    std::vector<ValueId> ids;
    for (const auto& p : params.tensors()) ids.push_back(tape.leaf(p));
    const ValueId logits = net.forward(tape, ids, tape.leaf(x));
    EXPECT_EQ(tape.value(logits), predict(net, params, x));
    EXPECT_EQ(tape.value(logits).shape(), (Shape{7, 4}));
}

TEST(Sgd, ZeroGradientNoDecayLeavesParameters) {
    ParameterSet p;
    p.add("w", Tensor({3}, std::vector<double>{1.0, -2.0, 3.0}));
    const ParameterSet before = p;
    OptimizerState state;
    const std::vector<Tensor> grads{Tensor({3}, 0.0)};
    sgd_step(p, grads, state, 0.5, SgdConfig{0.0, 0.0});
    EXPECT_EQ(p, before);
}

TEST(Sgd, PlainStep) {
    ParameterSet p;
    p.add("w", Tensor::scalar(1.0));
    OptimizerState state;
    const std::vector<Tensor> grads{Tensor::scalar(1.0)};
    sgd_step(p, grads, state, 0.1, SgdConfig{0.0, 0.0});
    EXPECT_DOUBLE_EQ(p[0].item(), 0.9);
}

TEST(Sgd, MomentumRecurrence) {
    ParameterSet p;
    p.add("w", Tensor::scalar(0.0));
    OptimizerState state;
    const std::vector<Tensor> grads{Tensor::scalar(1.0)};
    const SgdConfig cfg{0.9, 0.0};
    // hand-rolled: v1 = 1, w1 = -0.1; v2 = 0.9 + 1, w2 = -0.1 - 0.19
    double v = 0.0, w = 0.0;
    for (int step = 0; step < 2; ++step) {
        sgd_step(p, grads, state, 0.1, cfg);
        v = 0.9 * v + 1.0;
        w -= 0.1 * v;
    }
    EXPECT_DOUBLE_EQ(p[0].item(), w);
    EXPECT_NEAR(p[0].item(), -0.29, 1e-15);
    EXPECT_EQ(state.step, 2u);
}

TEST(Sgd, WeightDecayFoldsIntoGradient) {
    ParameterSet p;
    p.add("w", Tensor::scalar(2.0));
    OptimizerState state;
    const std::vector<Tensor> grads{Tensor::scalar(0.0)};
    sgd_step(p, grads, state, 1.0, SgdConfig{0.9, 3e-4});
    EXPECT_DOUBLE_EQ(p[0].item(), 2.0 - 3e-4 * 2.0);
}

TEST(Sgd, ShapeMismatch) {
    ParameterSet p;
    p.add("w", Tensor({2}, 0.0));
    OptimizerState state;
    EXPECT_THROW(sgd_step(p, std::vector<Tensor>{Tensor({3}, 0.0)}, state, 0.1, SgdConfig{}), Error);
    EXPECT_THROW(sgd_step(p, std::vector<Tensor>{}, state, 0.1, SgdConfig{}), Error);
}

TEST(Cosine, Endpoints) {
    EXPECT_DOUBLE_EQ(cosine_lr(0, 30, 0.025), 0.025);
    EXPECT_NEAR(cosine_lr(30, 30, 0.025), 0.0, 1e-18);
    EXPECT_NEAR(cosine_lr(15, 30, 0.025), 0.0125, 1e-15);
    for (std::size_t t = 0; t <= 30; ++t) {
        EXPECT_NEAR(cosine_lr(t, 30, 1.0), 0.5 * (1 + std::cos(std::numbers::pi * static_cast<double>(t) / 30.0)), 1e-15);
    }
    EXPECT_THROW(cosine_lr(0, 0, 0.1), Error);
    EXPECT_THROW(cosine_lr(31, 30, 0.1), Error);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    Rng rng(9);
    const Network net(builtin_genotype("snas"), NetworkConfig{});
    Checkpoint ckpt;
    ckpt.parameters = net.init_parameters(rng);
    ckpt.parameters[0][0] = -0.0;
    ckpt.parameters[0][1] = 1e-310;  // subnormal
    ckpt.meta = {{"note", "x"}};
    const auto bytes = encode_checkpoint(ckpt);
    const auto back = decode_checkpoint(bytes);
    EXPECT_EQ(back.parameters, ckpt.parameters);
    EXPECT_TRUE(std::signbit(back.parameters[0][0]));
    EXPECT_EQ(back.meta, ckpt.meta);
    EXPECT_EQ(encode_checkpoint(back), bytes);

    const auto path = std::filesystem::temp_directory_path() / "cellnas_ckpt_test.ckpt";
    save_checkpoint(ckpt, path);
    EXPECT_EQ(load_checkpoint(path).parameters, ckpt.parameters);
    std::filesystem::remove(path);
}

TEST(Checkpoint, TruncatedInputIsAParseError) {
    Rng rng(10);
    Checkpoint ckpt;
    ckpt.parameters.add("w", random_tensor(rng, {3, 3}));
    const auto bytes = encode_checkpoint(ckpt);
    for (std::size_t cut : {std::size_t{2}, std::size_t{10}, bytes.size() - 8}) {
        try {
            decode_checkpoint(bytes.substr(0, cut));
            FAIL() << cut;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::ParseError);
        }
    }
}
