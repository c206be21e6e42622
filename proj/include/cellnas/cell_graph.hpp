#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/rational.hpp>
#include "json.hpp"

#include "cellnas/network_config.hpp"

namespace cellnas {

/// Exact width values, in units of the per-node width c.
using Rational = boost::rational<std::int64_t>;

/// One (operation, source) pair feeding an intermediate node. Sources use the
/// cell's node numbering: 0..M-1 are input nodes, M+i is intermediate node i.
struct OpEdge {
    std::string kind;
    std::size_t source = 0;

    friend bool operator==(const OpEdge&, const OpEdge&) = default;
};

struct IntermediateNodeSpec {
    std::vector<OpEdge> ops;

    friend bool operator==(const IntermediateNodeSpec&, const IntermediateNodeSpec&) = default;
};

struct CellGenotype {
    std::string name;
    std::size_t num_inputs = 2;
    std::vector<IntermediateNodeSpec> nodes;
    /// Node indices (same numbering as sources) aggregated by the output node.
    std::vector<std::size_t> concat;

    /// N: inputs, intermediates and the single output node.
    std::size_t node_count() const noexcept { return num_inputs + nodes.size() + 1; }

    friend bool operator==(const CellGenotype&, const CellGenotype&) = default;
};

/// Sets concat to every intermediate node.
void concat_all(CellGenotype& g);

/// Edge structure of a validated genotype. Node ids follow the genotype
/// numbering; the output node is M+n. Declaration order is a topological order.
class CellDag {
public:
    std::size_t num_inputs() const noexcept { return num_inputs_; }
    std::size_t num_intermediate() const noexcept { return sources_.size(); }
    std::size_t output_node() const noexcept { return num_inputs_ + sources_.size(); }

    std::span<const std::size_t> sources(std::size_t intermediate) const { return sources_.at(intermediate); }
    std::span<const std::size_t> concat() const noexcept { return concat_; }
    bool is_input(std::size_t node) const noexcept { return node < num_inputs_; }

    /// All directed edges, including concat-node -> output.
    std::vector<std::pair<std::size_t, std::size_t>> edges() const;

private:
    friend CellDag validate_genotype(const CellGenotype& g);

    std::size_t num_inputs_ = 0;
    std::vector<std::vector<std::size_t>> sources_;
    std::vector<std::size_t> concat_;
};

struct WidthDepthReport {
    Rational width_in_c;
    std::size_t depth = 0;
    std::vector<Rational> per_node_width;
};

struct ExtremalValues {
    Rational max_width_in_c;
    std::size_t min_depth = 0;
};

/// Throws Error{InvalidArity | ForwardReference | EmptyConcat | UnknownOperationKind}.
CellDag validate_genotype(const CellGenotype& g);

/// Edges on the longest input -> output path, the aggregation edge included.
std::size_t cell_depth(const CellDag& dag);

/// Per intermediate node: the fraction of its incoming edges that leave an input node.
std::vector<Rational> node_widths(const CellDag& dag);

/// Sum of node_widths().
Rational cell_width(const CellDag& dag);

WidthDepthReport width_depth(const CellDag& dag);

/// Widest and shallowest values attainable by any cell with N nodes and M inputs.
ExtremalValues extremal_width_depth(std::size_t node_count, std::size_t num_inputs);

struct ParameterCount {
    std::size_t stem = 0;
    std::size_t cell_ops = 0;
    std::size_t projection = 0;
    std::size_t head = 0;

    std::size_t total() const noexcept { return stem + cell_ops + projection + head; }
};

/// Scalar parameter count of the stacked network, from shape arithmetic alone.
ParameterCount parameter_breakdown(const CellGenotype& g, const NetworkConfig& cfg);

inline std::size_t parameter_count(const CellGenotype& g, const NetworkConfig& cfg) {
    return parameter_breakdown(g, cfg).total();
}

// JSON <-> genotype.
CellGenotype genotype_from_json(const nlohmann::json& j);
nlohmann::json genotype_to_json(const CellGenotype& g);
CellGenotype parse_genotype(const std::string& text);
CellGenotype load_genotype(const std::filesystem::path& path);
void save_genotype(const CellGenotype& g, const std::filesystem::path& path);

/// "7/2", or "3" when integral.
std::string to_string(const Rational& r);
double to_double(const Rational& r);

}  // namespace cellnas
