#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cellnas/error.hpp"
#include "cellnas/experiment.hpp"
#include "cellnas/fixtures.hpp"
#include "support.hpp"

using namespace cellnas;

namespace {

NetworkConfig small_net() {
    NetworkConfig cfg;
    cfg.layers = 2;
    cfg.dim = 8;
    return cfg;
}

DatasetSpec small_data(std::uint64_t seed = 0) {
    DatasetSpec spec;
    spec.train_size = 240;
    spec.test_size = 120;
    spec.seed = seed;
    return spec;
}

TrainConfig short_run(std::size_t epochs = 3) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 40;
    return cfg;
}

CellGenotype chain_cell(std::size_t n) {
    CellGenotype g;
    g.name = "chain" + std::to_string(n);
    g.nodes.push_back({{{"linear", 0}, {"identity", 1}}});
    for (std::size_t i = 1; i < n; ++i) g.nodes.push_back({{{"linear", i + 1}, {"identity", i + 1}}});
    g.concat = {n + 1};
    return g;
}

}  // namespace

TEST(Network, ParameterCountMatchesLayout) {
    for (const auto& g : published_cells()) {
        const Network net(g, NetworkConfig{});
        std::size_t total = 0;
        for (const auto& [name, shape] : net.layout()) total += element_count(shape);
        EXPECT_EQ(total, parameter_count(g, NetworkConfig{})) << g.name;
        Rng rng(1);
        EXPECT_EQ(net.init_parameters(rng).scalar_count(), total);
    }
}

TEST(Network, RejectsOtherInputCounts) {
    CellGenotype g;
    g.name = "three_inputs";
    g.num_inputs = 3;
    g.nodes.push_back({{{"linear", 0}, {"linear", 1}, {"linear", 2}}});
    concat_all(g);
    try {
        Network net(g, NetworkConfig{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::UnsupportedInputCount);
    }
    try {
        adapt_to_widest_shallowest(g);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::UnsupportedInputCount);
    }
}

TEST(Network, ForwardIsDeterministic) {
    const Network net(builtin_genotype("darts"), small_net());
    Rng rng(2);
    const auto params = net.init_parameters(rng);
    const auto data = make_dataset(small_data());
    EXPECT_EQ(predict(net, params, data.test.x), predict(net, params, data.test.x));
}

TEST(Dataset, SameSeedSameData) {
    for (auto kind : {DatasetKind::GaussianMixture, DatasetKind::Spirals}) {
        auto spec = small_data(4);
        spec.kind = kind;
        const auto a = make_dataset(spec);
        const auto b = make_dataset(spec);
        EXPECT_EQ(a.train.x, b.train.x);
        EXPECT_EQ(a.test.labels, b.test.labels);
        spec.seed = 5;
        EXPECT_NE(make_dataset(spec).train.x, a.train.x);
        EXPECT_NE(a.train.x, a.test.x);
    }
}

TEST(Dataset, ClassesAreBalanced) {
    auto spec = small_data();
    spec.train_size = 1003;
    spec.classes = 4;
    const auto data = make_dataset(spec);
    std::vector<std::size_t> counts(4, 0);
    for (auto l : data.train.labels) {
        ASSERT_LT(l, 4u);
        ++counts[l];
    }
    for (auto c : counts) EXPECT_LE(std::abs(static_cast<double>(c) - 1003.0 / 4.0), 1.0);
}

TEST(Dataset, NoiselessMixtureIsLinearlySeparable) {
    auto spec = small_data();
    spec.noise = 0.0;
    spec.classes = 2;
    const auto data = make_dataset(spec);
    // Every sample sits on its class mean; the bisecting hyperplane of the two
    // means is a linear classifier.
    std::vector<double> mu0(spec.dim), mu1(spec.dim);
    for (std::size_t c = 0; c < spec.dim; ++c) {
        mu0[c] = data.train.x.at(0, c);
        mu1[c] = data.train.x.at(1, c);
    }
    std::size_t correct = 0;
    for (std::size_t r = 0; r < data.test.size(); ++r) {
        double score = 0.0;
        for (std::size_t c = 0; c < spec.dim; ++c) {
            score += (mu1[c] - mu0[c]) * (data.test.x.at(r, c) - 0.5 * (mu0[c] + mu1[c]));
        }
        correct += (score > 0.0 ? 1u : 0u) == data.test.labels[r];
    }
    EXPECT_EQ(correct, data.test.size());
}

TEST(Dataset, InvalidSpecs) {
    auto spec = small_data();
    spec.train_size = 0;
    EXPECT_THROW(make_dataset(spec), Error);
    spec = small_data();
    spec.classes = 1;
    EXPECT_THROW(make_dataset(spec), Error);
    spec = small_data();
    spec.noise = -1.0;
    EXPECT_THROW(make_dataset(spec), Error);
}

TEST(Dataset, SpecJsonRoundTrip) {
    auto spec = small_data(9);
    spec.kind = DatasetKind::Spirals;
    const auto back = dataset_spec_from_json(to_json(spec));
    EXPECT_EQ(to_json(back), to_json(spec));
}

TEST(Train, ZeroEpochsGivesInitialRowOnly) {
    const Network net(builtin_genotype("darts"), small_net());
    const auto data = make_dataset(small_data());
    const auto trace = train(net, data, short_run(0));
    ASSERT_EQ(trace.rows.size(), 1u);
    EXPECT_EQ(trace.rows[0].epoch, 0u);
    EXPECT_FALSE(trace.diverged_at);
}

TEST(Train, ZeroLearningRateLeavesParameters) {
    const Network net(builtin_genotype("snas"), small_net());
    const auto data = make_dataset(small_data());
    auto cfg = short_run(2);
    cfg.lr = 0.0;
    Rng init = Rng(cfg.seed).stream("init");
    const auto start = net.init_parameters(init);
    const auto trace = train(net, data, cfg);
    EXPECT_EQ(trace.final_parameters, start);
    for (const auto& row : trace.rows) {
        EXPECT_EQ(row.test_loss, trace.rows[0].test_loss);
        EXPECT_EQ(row.train_loss, trace.rows[0].train_loss);
    }
}

TEST(Train, IsBitReproducible) {
    const Network net(builtin_genotype("darts"), small_net());
    const auto data = make_dataset(small_data());
    const auto a = train(net, data, short_run());
    const auto b = train(net, data, short_run());
    EXPECT_EQ(trace_csv(a), trace_csv(b));
    EXPECT_EQ(a.final_parameters, b.final_parameters);
}

TEST(Train, TraceInvariants) {
    const Network net(builtin_genotype("enas"), small_net());
    const auto data = make_dataset(small_data());
    const auto trace = train(net, data, short_run(4));
    ASSERT_EQ(trace.rows.size(), 5u);
    for (std::size_t e = 0; e < trace.rows.size(); ++e) {
        EXPECT_EQ(trace.rows[e].epoch, e);
        EXPECT_GE(trace.rows[e].test_accuracy, 0.0);
        EXPECT_LE(trace.rows[e].test_accuracy, 1.0);
    }
    EXPECT_EQ(trace.rows[1].lr, 0.025);
    EXPECT_DOUBLE_EQ(trace.rows[3].lr, cosine_lr(2, 4, 0.025));

    std::istringstream csv(trace_csv(trace));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "epoch,lr,train_loss,test_loss,test_acc");
    std::size_t rows = 0;
    while (std::getline(csv, line)) ++rows;
    EXPECT_EQ(rows, 5u);
}

TEST(Train, ToyCellImprovesOnSeparableData) {
    CellGenotype g;
    g.name = "toy";
    g.nodes = {{{{"linear", 0}, {"linear", 1}}}, {{{"linear", 0}, {"linear", 2}}}};
    concat_all(g);
    const Network net(g, small_net());
    auto spec = small_data();
    spec.noise = 0.0;
    std::vector<double> ratio;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto cfg = short_run(30);
        cfg.seed = seed;
        const auto trace = train(net, make_dataset(spec), cfg);
        ratio.push_back(trace.rows.back().train_loss / trace.rows.front().train_loss);
    }
    std::sort(ratio.begin(), ratio.end());
    EXPECT_LT(ratio[2], 1.0);
}

TEST(Train, HugeLearningRateIsRecordedAsDivergence) {
    const Network net(chain_variant(builtin_genotype("darts")), small_net());
    auto spec = small_data();
    spec.noise = 1.0;
    spec.radius = 2.0;
    auto cfg = short_run(5);
    cfg.lr = 50.0;
    const auto trace = train(net, make_dataset(spec), cfg);
    ASSERT_TRUE(trace.diverged_at.has_value());
    EXPECT_EQ(trace.rows.size(), *trace.diverged_at + 1);
    EXPECT_TRUE(std::isinf(loss_curve_area(trace)));
}

TEST(Train, RejectsBadConfig) {
    const Network net(builtin_genotype("darts"), small_net());
    const auto data = make_dataset(small_data());
    auto cfg = short_run();
    cfg.batch_size = 0;
    EXPECT_THROW(train(net, data, cfg), Error);
    auto spec = small_data();
    spec.dim = 5;
    EXPECT_THROW(train(net, make_dataset(spec), short_run()), Error);
}

TEST(Metrics, EpochsToThresholdIsAntitone) {
    TrainTrace trace;
    const std::vector<double> losses{1.4, 1.1, 0.9, 0.95, 0.6, 0.5};
    for (std::size_t e = 0; e < losses.size(); ++e) trace.rows.push_back({e, 0.1, 0.0, losses[e], 0.5});
    EXPECT_EQ(epochs_to_threshold(trace, 1.0), 2u);
    EXPECT_EQ(epochs_to_threshold(trace, 0.7), 4u);
    EXPECT_FALSE(epochs_to_threshold(trace, 0.4).has_value());
    EXPECT_DOUBLE_EQ(loss_curve_area(trace), 5.45);

    std::optional<std::size_t> previous;
    for (double t = 0.3; t <= 2.0; t += 0.05) {
        const auto e = epochs_to_threshold(trace, t);
        if (previous && e) EXPECT_LE(*e, *previous);
        if (previous) EXPECT_TRUE(e.has_value());
        if (e) previous = e;
    }
}

TEST(Adapt, SnasIsAlreadyWidestShallowest) {
    const auto snas = builtin_genotype("snas");
    const auto adapted = adapt_to_widest_shallowest(snas);
    ASSERT_EQ(adapted.nodes.size(), snas.nodes.size());
    for (std::size_t i = 0; i < snas.nodes.size(); ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            EXPECT_EQ(adapted.nodes[i].ops[j].source, snas.nodes[i].ops[j].source);
            EXPECT_EQ(adapted.nodes[i].ops[j].kind, snas.nodes[i].ops[j].kind);
        }
    }
}

TEST(Adapt, DartsBecomesFourWideDepthTwo) {
    const auto r = width_depth(validate_genotype(adapt_to_widest_shallowest(builtin_genotype("darts"))));
    EXPECT_EQ(r.width_in_c, Rational(4));
    EXPECT_EQ(r.depth, 2u);
}

TEST(Adapt, ChainOfThree) {
    auto chain = chain_cell(3);
    chain.concat = {2, 3, 4};
    const auto r = width_depth(validate_genotype(adapt_to_widest_shallowest(chain)));
    EXPECT_EQ(r.width_in_c, Rational(3));
    EXPECT_EQ(r.depth, 2u);
}

TEST(Adapt, AlwaysExtremal) {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const auto g = oracle::random_genotype(rng, 1 + rng.uniform_index(6));
        const auto adapted = adapt_to_widest_shallowest(g);
        const auto r = width_depth(validate_genotype(adapted));
        const auto ext = extremal_width_depth(adapted.node_count(), 2);
        EXPECT_EQ(r.width_in_c, ext.max_width_in_c);
        EXPECT_EQ(r.depth, ext.min_depth);
    }
}

TEST(Adapt, ChainVariantIsNarrowestDeepest) {
    const auto chain = chain_variant(builtin_genotype("darts"));
    const auto r = width_depth(validate_genotype(chain));
    EXPECT_EQ(r.width_in_c, Rational(1));
    EXPECT_EQ(r.depth, 5u);
}

TEST(Compare, DuplicateGenotypesGiveIdenticalMetrics) {
    auto a = builtin_genotype("darts");
    auto b = a;
    b.name = "darts_again";
    ConvergenceOptions opts;
    opts.network = small_net();
    opts.train = short_run(3);
    opts.lrs = {0.025};
    opts.seeds = {0, 1};
    const auto report = compare_convergence({a, b}, make_dataset(small_data()), opts);
    ASSERT_EQ(report.runs.size(), 4u);
    for (const auto& run : report.runs) {
        const auto twin = std::find_if(report.runs.begin(), report.runs.end(), [&](const RunResult& r) {
            return r.genotype != run.genotype && r.seed == run.seed;
        });
        ASSERT_NE(twin, report.runs.end());
        EXPECT_EQ(twin->loss_area, run.loss_area);
        EXPECT_EQ(twin->epochs_to_threshold, run.epochs_to_threshold);
    }
    EXPECT_EQ(report.summaries[0].median_area, report.summaries[1].median_area);
}

TEST(Compare, WorkerCountDoesNotChangeResults) {
    const std::vector<CellGenotype> gs{builtin_genotype("darts"), chain_variant(builtin_genotype("darts"))};
    ConvergenceOptions opts;
    opts.network = small_net();
    opts.train = short_run(2);
    opts.lrs = {0.025, 0.25};
    opts.seeds = {0, 1};
    const auto data = make_dataset(small_data());
    const auto serial = to_json(compare_convergence(gs, data, opts));
    opts.workers = 3;
    EXPECT_EQ(to_json(compare_convergence(gs, data, opts)), serial);
}

TEST(Compare, DivergenceIsReportedNotThrown) {
    const std::vector<CellGenotype> gs{builtin_genotype("darts"), chain_variant(builtin_genotype("darts"))};
    ConvergenceOptions opts;
    opts.network = small_net();
    opts.train = short_run(3);
    opts.lrs = {50.0};
    opts.seeds = {0};
    auto spec = small_data();
    spec.noise = 1.0;
    spec.radius = 2.0;
    const auto report = compare_convergence(gs, make_dataset(spec), opts);
    bool any = false;
    for (const auto& r : report.runs) any = any || r.diverged;
    EXPECT_TRUE(any);
    const auto j = to_json(report);
    EXPECT_NO_THROW((void)j.dump());
}

TEST(Compare, NeedsTwoGenotypesAndASeed) {
    ConvergenceOptions opts;
    const auto data = make_dataset(small_data());
    EXPECT_THROW(compare_convergence({builtin_genotype("darts")}, data, opts), Error);
    opts.seeds.clear();
    EXPECT_THROW(compare_convergence({builtin_genotype("darts"), builtin_genotype("snas")}, data, opts), Error);
}
