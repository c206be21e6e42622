#include "cellnas/variant_sampler.hpp"

#include <algorithm>
#include <set>

#include "cellnas/error.hpp"
#include "cellnas/operation_kind.hpp"

namespace cellnas {

namespace {

std::size_t intermediates(std::size_t node_count, std::size_t num_inputs) {
    if (num_inputs < 1 || node_count < num_inputs + 2) {
        throw Error(ErrorKind::InvalidSearchSpace, "N=" + std::to_string(node_count) + ", M=" +
                                                       std::to_string(num_inputs));
    }
    return node_count - num_inputs - 1;
}

BigInt factorial(std::size_t k) {
    BigInt out = 1;
    for (std::size_t i = 2; i <= k; ++i) out *= i;
    return out;
}

BigInt binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0;
    BigInt out = 1;
    for (std::size_t i = 1; i <= k; ++i) out = out * (n - k + i) / i;
    return out;
}

// A node with its pairs sorted; two genotypes are the same cell iff their
// canonical node lists agree.
std::vector<std::vector<std::pair<std::string, std::size_t>>> canonical(const CellGenotype& g) {
    std::vector<std::vector<std::pair<std::string, std::size_t>>> out;
    out.reserve(g.nodes.size());
    for (const auto& node : g.nodes) {
        std::vector<std::pair<std::string, std::size_t>> pairs;
        for (const auto& e : node.ops) pairs.emplace_back(e.kind, e.source);
        std::sort(pairs.begin(), pairs.end());
        out.push_back(std::move(pairs));
    }
    return out;
}

}  // namespace

BigInt count_connection_variants(std::size_t node_count, std::size_t num_inputs) {
    intermediates(node_count, num_inputs);
    return factorial(node_count - 2) / factorial(num_inputs - 1);
}

BigInt count_slot_assignments(std::size_t node_count, std::size_t num_inputs) {
    const std::size_t n = intermediates(node_count, num_inputs);
    BigInt out = 1;
    for (std::size_t i = 0; i < n; ++i) out *= boost::multiprecision::pow(BigInt(num_inputs + i), static_cast<unsigned>(num_inputs));
    return out;
}

BigInt count_unordered_distinct_sources(std::size_t node_count, std::size_t num_inputs) {
    const std::size_t n = intermediates(node_count, num_inputs);
    BigInt out = 1;
    for (std::size_t i = 0; i < n; ++i) out *= binomial(num_inputs + i, num_inputs);
    return out;
}

std::vector<CellGenotype> enumerate_connection_variants(const CellGenotype& g, EnumerationLimits limits) {
    const std::size_t n = g.nodes.size();
    const std::size_t m = g.num_inputs;
    if (n == 0) return {};
    validate_genotype(g);
    if (n > limits.max_nodes) {
        throw Error(ErrorKind::TooLarge, std::to_string(n) + " intermediate nodes exceed the enumeration limit of " +
                                             std::to_string(limits.max_nodes));
    }
    const BigInt total = count_slot_assignments(g.node_count(), m);
    if (total > limits.max_assignments) {
        throw Error(ErrorKind::TooLarge, total.str() + " slot assignments exceed the cap of " +
                                             std::to_string(limits.max_assignments));
    }

    // slot k belongs to node k / m and may pick any of m + k / m predecessors.
    const std::size_t slots = n * m;
    std::vector<std::size_t> digits(slots, 0);
    std::vector<CellGenotype> out;
    std::set<std::vector<std::vector<std::pair<std::string, std::size_t>>>> seen;
    CellGenotype variant = g;
    while (true) {
        for (std::size_t k = 0; k < slots; ++k) variant.nodes[k / m].ops[k % m].source = digits[k];
        if (seen.insert(canonical(variant)).second) {
            out.push_back(variant);
            out.back().name = g.name + "_e" + std::to_string(out.size() - 1);
        }
        // Odometer increment, last slot fastest.
        std::size_t k = slots;
        while (k > 0) {
            --k;
            if (++digits[k] < m + k / m) break;
            digits[k] = 0;
            if (k == 0) return out;
        }
    }
}

ConnectionSpaceReport connection_space_report(const CellGenotype& g, EnumerationLimits limits) {
    ConnectionSpaceReport report;
    report.formula = count_connection_variants(g.node_count(), g.num_inputs);
    report.slot_assignments = count_slot_assignments(g.node_count(), g.num_inputs);
    report.unordered_distinct_sources = count_unordered_distinct_sources(g.node_count(), g.num_inputs);
    report.enumerated = enumerate_connection_variants(g, limits).size();
    return report;
}

CellGenotype sample_connection_variant(const CellGenotype& g, Rng& rng) {
    validate_genotype(g);
    CellGenotype out = g;
    for (std::size_t i = 0; i < out.nodes.size(); ++i) {
        for (auto& edge : out.nodes[i].ops) edge.source = rng.uniform_index(g.num_inputs + i);
    }
    return out;
}

CellGenotype sample_operation_variant(const CellGenotype& g, std::span<const std::string> ops, Rng& rng) {
    validate_genotype(g);
    if (ops.empty()) throw Error(ErrorKind::InvalidSpec, "operation set is empty");
    for (const auto& kind : ops) {
        if (!is_known_operation(kind)) throw Error(ErrorKind::UnknownOperationKind, "'" + kind + "'");
    }
    CellGenotype out = g;
    for (auto& node : out.nodes) {
        for (auto& edge : node.ops) edge.kind = ops[rng.uniform_index(ops.size())];
    }
    return out;
}

std::vector<CellGenotype> sample_variants(const CellGenotype& g, const SampleSpec& spec) {
    if (spec.count < 1) throw Error(ErrorKind::InvalidSpec, "variant count must be >= 1");
    if (spec.mode == SampleMode::Operation && spec.operation_set.empty()) {
        throw Error(ErrorKind::InvalidSpec, "operation mode needs a non-empty operation set");
    }
    const Rng root = Rng(spec.seed).stream("sampling");
    std::vector<CellGenotype> out;
    out.reserve(spec.count);
    for (std::size_t i = 0; i < spec.count; ++i) {
        Rng draw = root.stream(static_cast<std::uint64_t>(i));
        if (spec.mode == SampleMode::Connection) {
            out.push_back(sample_connection_variant(g, draw));
            out.back().name = g.name + "_conn" + std::to_string(i + 1);
        } else {
            out.push_back(sample_operation_variant(g, spec.operation_set, draw));
            out.back().name = g.name + "_ops" + std::to_string(i + 1);
        }
    }
    return out;
}

std::vector<CellGenotype> rank_variants(std::vector<CellGenotype> gs) {
    struct Keyed {
        Rational width;
        std::size_t depth;
        CellGenotype g;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(gs.size());
    for (auto& g : gs) {
        const auto report = width_depth(validate_genotype(g));
        keyed.push_back({report.width_in_c, report.depth, std::move(g)});
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        if (a.width != b.width) return a.width < b.width;
        if (a.depth != b.depth) return a.depth > b.depth;
        return a.g.name < b.g.name;
    });
    std::vector<CellGenotype> out;
    out.reserve(keyed.size());
    for (auto& k : keyed) out.push_back(std::move(k.g));
    return out;
}

}  // namespace cellnas
