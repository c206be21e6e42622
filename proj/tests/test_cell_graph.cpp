#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cellnas/cell_graph.hpp"
#include "cellnas/error.hpp"
#include "cellnas/fixtures.hpp"
#include "cellnas/operation_kind.hpp"
#include "support.hpp"

using namespace cellnas;

namespace {

CellGenotype make(std::vector<std::vector<std::size_t>> sources, std::vector<std::size_t> concat = {},
                  std::string kind = "linear") {
    CellGenotype g;
    g.name = "toy";
    for (const auto& s : sources) {
        IntermediateNodeSpec node;
        for (std::size_t src : s) node.ops.push_back({kind, src});
        g.nodes.push_back(node);
    }
    g.concat = std::move(concat);
    if (g.concat.empty()) concat_all(g);
    return g;
}

CellGenotype chain(std::size_t n) {
    std::vector<std::vector<std::size_t>> sources{{0, 1}};
    for (std::size_t i = 1; i < n; ++i) sources.push_back({i + 1, i + 1});
    return make(sources, {n + 1});
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorKind::InvalidSpec;
}

}  // namespace

TEST(CellGraph, PublishedCellsHaveKnownWidthAndDepth) {
    const std::vector<std::tuple<std::string, Rational, std::size_t>> expected{
        {"nasnet", Rational(5), 2}, {"amoebanet", Rational(4), 4}, {"enas", Rational(5), 2},
        {"darts", Rational(7, 2), 3},   {"snas", Rational(4), 2}};
    for (const auto& [name, width, depth] : expected) {
        const auto r = width_depth(validate_genotype(builtin_genotype(name)));
        EXPECT_EQ(r.width_in_c, width) << name;
        EXPECT_EQ(r.depth, depth) << name;
    }
}

TEST(CellGraph, DartsConnectionVariants) {
    const std::vector<std::pair<Rational, std::size_t>> expected{
        {Rational(5, 2), 3}, {Rational(5, 2), 3}, {Rational(2), 4}, {Rational(2), 4}};
    const auto variants = darts_connection_variants();
    ASSERT_EQ(variants.size(), 4u);
    const auto darts = builtin_genotype("darts");
    for (std::size_t i = 0; i < 4; ++i) {
        const auto r = width_depth(validate_genotype(variants[i]));
        EXPECT_EQ(r.width_in_c, expected[i].first) << i;
        EXPECT_EQ(r.depth, expected[i].second) << i;
        // same operations per node as the original cell
        for (std::size_t n = 0; n < darts.nodes.size(); ++n) {
            for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(variants[i].nodes[n].ops[j].kind, darts.nodes[n].ops[j].kind);
        }
    }
}

TEST(CellGraph, DartsNodeWidths) {
    const auto r = width_depth(validate_genotype(builtin_genotype("darts")));
    ASSERT_EQ(r.per_node_width.size(), 4u);
    EXPECT_EQ(r.per_node_width[0], Rational(1));
    EXPECT_EQ(r.per_node_width[1], Rational(1));
    EXPECT_EQ(r.per_node_width[2], Rational(1));
    EXPECT_EQ(r.per_node_width[3], Rational(1, 2));
}

TEST(CellGraph, ToyCellWidth) {
    const auto dag = validate_genotype(make({{0, 1}, {0, 2}}));
    EXPECT_EQ(cell_width(dag), Rational(3, 2));
    EXPECT_EQ(cell_depth(dag), 3u);
}

TEST(CellGraph, ChainDepth) {
    const auto dag = validate_genotype(chain(5));
    EXPECT_EQ(cell_depth(dag), 6u);
    EXPECT_EQ(cell_width(dag), Rational(1));
    EXPECT_EQ(oracle::brute_force_depth(chain(5)), 6u);
}

TEST(CellGraph, AllInputCell) {
    const auto dag = validate_genotype(make({{0, 1}, {1, 0}, {0, 0}, {1, 1}, {0, 1}}));
    EXPECT_EQ(cell_width(dag), Rational(5));
    EXPECT_EQ(cell_depth(dag), 2u);
}

TEST(CellGraph, DuplicateInputSourceCountsFully) {
    EXPECT_EQ(cell_width(validate_genotype(make({{1, 1}}))), Rational(1));
}

TEST(CellGraph, ExtremalValues) {
    EXPECT_EQ(extremal_width_depth(7, 2).max_width_in_c, Rational(4));
    EXPECT_EQ(extremal_width_depth(7, 2).min_depth, 2u);
    EXPECT_EQ(extremal_width_depth(8, 2).max_width_in_c, Rational(5));
    EXPECT_EQ(extremal_width_depth(8, 2).min_depth, 2u);
    EXPECT_EQ(extremal_width_depth(4, 2).max_width_in_c, Rational(1));
    EXPECT_EQ(kind_of([] { extremal_width_depth(3, 2); }), ErrorKind::InvalidSearchSpace);
}

TEST(CellGraph, ValidationErrors) {
    auto g = make({{0, 1}, {0, 2}});
    g.nodes[0].ops[0].source = 3;
    EXPECT_EQ(kind_of([&] { validate_genotype(g); }), ErrorKind::ForwardReference);

    g = make({{0, 1}, {0, 2}});
    g.nodes[1].ops.pop_back();
    EXPECT_EQ(kind_of([&] { validate_genotype(g); }), ErrorKind::InvalidArity);

    g = make({{0, 1}});
    g.nodes[0].ops[1].kind = "warp_drive";
    EXPECT_EQ(kind_of([&] { validate_genotype(g); }), ErrorKind::UnknownOperationKind);

    g = make({{0, 1}});
    g.concat.clear();
    EXPECT_EQ(kind_of([&] { validate_genotype(g); }), ErrorKind::EmptyConcat);

    CellGenotype empty;
    empty.name = "empty";
    EXPECT_EQ(kind_of([&] { validate_genotype(empty); }), ErrorKind::EmptyConcat);
}

TEST(CellGraph, DepthMatchesBruteForceOnRandomCells) {
    Rng rng(11);
    for (int trial = 0; trial < 600; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(6);
        const auto g = oracle::random_genotype(rng, n);
        const auto dag = validate_genotype(g);
        ASSERT_EQ(cell_depth(dag), oracle::brute_force_depth(g)) << genotype_to_json(g).dump();
    }
}

TEST(CellGraph, MetricBoundsHold) {
    Rng rng(5);
    for (int trial = 0; trial < 400; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(6);
        const auto g = oracle::random_genotype(rng, n);
        const auto r = width_depth(validate_genotype(g));
        EXPECT_GE(r.width_in_c, Rational(0));
        EXPECT_LE(r.width_in_c, Rational(static_cast<std::int64_t>(n)));
        EXPECT_GE(r.depth, 2u);
        EXPECT_LE(r.depth, n + 1);
        if (r.width_in_c == Rational(static_cast<std::int64_t>(n))) EXPECT_EQ(r.depth, 2u);
    }
}

TEST(CellGraph, MetricsIgnoreOperationKinds) {
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        auto g = oracle::random_genotype(rng, 4);
        const auto before = width_depth(validate_genotype(g));
        for (auto& node : g.nodes) {
            for (auto& e : node.ops) e.kind = "zero";
        }
        const auto after = width_depth(validate_genotype(g));
        EXPECT_EQ(before.width_in_c, after.width_in_c);
        EXPECT_EQ(before.depth, after.depth);
    }
}

TEST(CellGraph, JsonRoundTrip) {
    for (const auto& f : builtin_fixtures()) {
        const auto g = builtin_genotype(f.name);
        EXPECT_EQ(genotype_from_json(genotype_to_json(g)), g) << f.name;
    }
}

TEST(CellGraph, ConcatDefaultsToAllIntermediates) {
    const auto g = parse_genotype(R"({"name":"x","num_inputs":2,"nodes":[{"ops":[{"kind":"linear","source":0},{"kind":"linear","source":1}]},{"ops":[{"kind":"linear","source":2},{"kind":"linear","source":1}]}]})");
    EXPECT_EQ(g.concat, (std::vector<std::size_t>{2, 3}));
}

TEST(CellGraph, ParseErrorsCarryLineAndField) {
    try {
        parse_genotype("{\n  \"name\": \"x\",\n  \"nodes\": [ oops ]\n}");
        FAIL() << "expected ParseError";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ParseError);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
    try {
        parse_genotype(R"({"name":"x","num_inputs":2,"nodes":[{"ops":[{"kind":"linear","source":0},{"kind":"linear","source":"one"}]}]})");
        FAIL() << "expected ParseError";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ParseError);
        EXPECT_NE(std::string(e.what()).find("nodes[0].ops[1].source"), std::string::npos) << e.what();
    }
}

TEST(CellGraph, SaveAndLoad) {
    const auto path = std::filesystem::temp_directory_path() / "cellnas_graph_roundtrip.json";
    const auto g = builtin_genotype("amoebanet");
    save_genotype(g, path);
    EXPECT_EQ(load_genotype(path), g);
    std::filesystem::remove(path);
    EXPECT_EQ(kind_of([&] { load_genotype(path); }), ErrorKind::IoFailure);
}

TEST(CellGraph, ParameterCountMatchesShapeArithmetic) {
    NetworkConfig cfg;  // L=6, d=16, 8 inputs, 4 classes
    const auto g = builtin_genotype("darts");
    std::size_t linear = 0;
    for (const auto& node : g.nodes) {
        for (const auto& e : node.ops) linear += resolve_operation_kind(e.kind) == OperationKind::Linear;
    }
    const std::size_t d = 16;
    const std::size_t per_cell = linear * (d * d + d) + g.concat.size() * d * d + d;
    const std::size_t expected = (8 * d + d) + 6 * per_cell + (d * 4 + 4);
    EXPECT_EQ(parameter_count(g, cfg), expected);
}

TEST(CellGraph, IdentityCellsHaveNoCellOpParameters) {
    const auto g = make({{0, 1}, {0, 2}}, {}, "identity");
    const auto p = parameter_breakdown(g, NetworkConfig{});
    EXPECT_EQ(p.cell_ops, 0u);
    EXPECT_EQ(p.stem, 8u * 16 + 16);
    EXPECT_EQ(p.head, 16u * 4 + 4);
}

TEST(CellGraph, DroppingLinearOpsRemovesTheirBlocks) {
    NetworkConfig cfg;
    cfg.layers = 3;
    const auto all_linear = make({{0, 1}, {0, 2}});
    auto half = all_linear;
    half.nodes[0].ops[1].kind = "identity";
    half.nodes[1].ops[0].kind = "identity";
    EXPECT_EQ(parameter_count(all_linear, cfg) - parameter_count(half, cfg), 3u * 2 * (16 * 16 + 16));
}

TEST(CellGraph, RewiringPreservesParameterCount) {
    const auto darts = builtin_genotype("darts");
    for (const auto& v : darts_connection_variants()) {
        EXPECT_EQ(parameter_count(v, NetworkConfig{}), parameter_count(darts, NetworkConfig{}));
    }
}
