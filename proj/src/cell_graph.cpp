#include "cellnas/cell_graph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cellnas/error.hpp"
#include "cellnas/operation_kind.hpp"

namespace cellnas {

void validate(const NetworkConfig& cfg) {
    if (cfg.layers < 1) throw Error(ErrorKind::InvalidSpec, "network needs at least one cell");
    if (cfg.dim < 2) throw Error(ErrorKind::InvalidSpec, "feature dimension must be >= 2");
    if (cfg.input_dim < 1) throw Error(ErrorKind::InvalidSpec, "input dimension must be >= 1");
    if (cfg.num_classes < 2) throw Error(ErrorKind::InvalidSpec, "need at least two classes");
}

void concat_all(CellGenotype& g) {
    g.concat.clear();
    for (std::size_t i = 0; i < g.nodes.size(); ++i) g.concat.push_back(g.num_inputs + i);
}

std::vector<std::pair<std::size_t, std::size_t>> CellDag::edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < sources_.size(); ++i) {
        for (std::size_t s : sources_[i]) out.emplace_back(s, num_inputs_ + i);
    }
    for (std::size_t c : concat_) out.emplace_back(c, output_node());
    return out;
}

CellDag validate_genotype(const CellGenotype& g) {
    const std::size_t m = g.num_inputs;
    if (m < 1) throw Error(ErrorKind::InvalidArity, "cell needs at least one input node");

    CellDag dag;
    dag.num_inputs_ = m;
    dag.sources_.reserve(g.nodes.size());
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const auto& node = g.nodes[i];
        if (node.ops.size() != m) {
            throw Error(ErrorKind::InvalidArity, "node " + std::to_string(i) + " has " +
                                                     std::to_string(node.ops.size()) + " inputs, expected " +
                                                     std::to_string(m));
        }
        std::vector<std::size_t> sources;
        for (const auto& edge : node.ops) {
            if (!is_known_operation(edge.kind)) {
                throw Error(ErrorKind::UnknownOperationKind, "node " + std::to_string(i) + ": '" + edge.kind + "'");
            }
            if (edge.source >= m + i) {
                throw Error(ErrorKind::ForwardReference, "node " + std::to_string(i) + " (id " +
                                                             std::to_string(m + i) + ") sources node " +
                                                             std::to_string(edge.source));
            }
            sources.push_back(edge.source);
        }
        dag.sources_.push_back(std::move(sources));
    }

    if (g.concat.empty()) throw Error(ErrorKind::EmptyConcat, "output node aggregates nothing");
    std::vector<std::size_t> concat = g.concat;
    std::sort(concat.begin(), concat.end());
    for (std::size_t k = 0; k < concat.size(); ++k) {
        const std::size_t c = concat[k];
        if (c < m || c >= m + g.nodes.size()) {
            throw Error(ErrorKind::ForwardReference, "concat entry " + std::to_string(c) +
                                                         " is not an intermediate node");
        }
        if (k > 0 && concat[k - 1] == c) {
            throw Error(ErrorKind::ForwardReference, "concat entry " + std::to_string(c) + " repeated");
        }
    }
    dag.concat_ = std::move(concat);
    return dag;
}

std::size_t cell_depth(const CellDag& dag) {
    const std::size_t m = dag.num_inputs();
    std::vector<std::size_t> longest(m + dag.num_intermediate(), 0);
    for (std::size_t i = 0; i < dag.num_intermediate(); ++i) {
        std::size_t best = 0;
        for (std::size_t s : dag.sources(i)) best = std::max(best, longest[s]);
        longest[m + i] = best + 1;
    }
    std::size_t depth = 0;
    for (std::size_t c : dag.concat()) depth = std::max(depth, longest[c] + 1);
    return depth;
}

std::vector<Rational> node_widths(const CellDag& dag) {
    std::vector<Rational> widths;
    widths.reserve(dag.num_intermediate());
    const auto m = static_cast<std::int64_t>(dag.num_inputs());
    for (std::size_t i = 0; i < dag.num_intermediate(); ++i) {
        const auto src = dag.sources(i);
        const auto from_inputs = std::count_if(src.begin(), src.end(), [&](std::size_t s) { return dag.is_input(s); });
        widths.emplace_back(static_cast<std::int64_t>(from_inputs), m);
    }
    return widths;
}

Rational cell_width(const CellDag& dag) {
    Rational total(0);
    for (const auto& w : node_widths(dag)) total += w;
    return total;
}

WidthDepthReport width_depth(const CellDag& dag) {
    WidthDepthReport report;
    report.per_node_width = node_widths(dag);
    for (const auto& w : report.per_node_width) report.width_in_c += w;
    report.depth = cell_depth(dag);
    return report;
}

ExtremalValues extremal_width_depth(std::size_t node_count, std::size_t num_inputs) {
    if (num_inputs < 1 || node_count < num_inputs + 2) {
        throw Error(ErrorKind::InvalidSearchSpace, "N=" + std::to_string(node_count) + ", M=" +
                                                       std::to_string(num_inputs) + " leaves no intermediate node");
    }
    return {Rational(static_cast<std::int64_t>(node_count - num_inputs - 1)), 2};
}

ParameterCount parameter_breakdown(const CellGenotype& g, const NetworkConfig& cfg) {
    const std::size_t d = cfg.dim;
    std::size_t per_cell_ops = 0;
    for (const auto& node : g.nodes) {
        for (const auto& edge : node.ops) {
            const auto kind = resolve_operation_kind(edge.kind);
            if (!kind) throw Error(ErrorKind::UnknownOperationKind, "'" + edge.kind + "'");
            if (*kind == OperationKind::Linear) per_cell_ops += d * d + d;
        }
    }
    ParameterCount count;
    count.stem = cfg.input_dim * d + d;
    count.cell_ops = cfg.layers * per_cell_ops;
    count.projection = cfg.layers * (g.concat.size() * d * d + d);
    count.head = d * cfg.num_classes + cfg.num_classes;
    return count;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

std::size_t read_index(const nlohmann::json& j, const std::string& field) {
    if (!j.is_number_integer() || j.get<std::int64_t>() < 0) {
        throw Error(ErrorKind::ParseError, field + ": expected a non-negative integer");
    }
    return j.get<std::size_t>();
}

const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) {
        throw Error(ErrorKind::ParseError, where + (where.empty() ? "" : ".") + key + ": missing field");
    }
    return j.at(key);
}

}  // namespace

CellGenotype genotype_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorKind::ParseError, "genotype: expected an object");
    CellGenotype g;
    const auto& name = require(j, "name", "");
    if (!name.is_string()) throw Error(ErrorKind::ParseError, "name: expected a string");
    g.name = name.get<std::string>();
    g.num_inputs = read_index(require(j, "num_inputs", ""), "num_inputs");

    const auto& nodes = require(j, "nodes", "");
    if (!nodes.is_array()) throw Error(ErrorKind::ParseError, "nodes: expected an array");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::string where = "nodes[" + std::to_string(i) + "]";
        const auto& ops = require(nodes[i], "ops", where);
        if (!ops.is_array()) throw Error(ErrorKind::ParseError, where + ".ops: expected an array");
        IntermediateNodeSpec spec;
        for (std::size_t k = 0; k < ops.size(); ++k) {
            const std::string op_where = where + ".ops[" + std::to_string(k) + "]";
            const auto& kind = require(ops[k], "kind", op_where);
            if (!kind.is_string()) throw Error(ErrorKind::ParseError, op_where + ".kind: expected a string");
            spec.ops.push_back({kind.get<std::string>(), read_index(require(ops[k], "source", op_where),
                                                                    op_where + ".source")});
        }
        g.nodes.push_back(std::move(spec));
    }

    if (j.contains("concat")) {
        const auto& concat = j.at("concat");
        if (!concat.is_array()) throw Error(ErrorKind::ParseError, "concat: expected an array");
        for (std::size_t k = 0; k < concat.size(); ++k) {
            g.concat.push_back(read_index(concat[k], "concat[" + std::to_string(k) + "]"));
        }
    } else {
        concat_all(g);
    }
    return g;
}

nlohmann::json genotype_to_json(const CellGenotype& g) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& node : g.nodes) {
        nlohmann::json ops = nlohmann::json::array();
        for (const auto& e : node.ops) ops.push_back({{"kind", e.kind}, {"source", e.source}});
        nodes.push_back({{"ops", std::move(ops)}});
    }
    return {{"name", g.name}, {"num_inputs", g.num_inputs}, {"nodes", std::move(nodes)}, {"concat", g.concat}};
}

CellGenotype parse_genotype(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
        throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": " + e.what());
    }
    return genotype_from_json(j);
}

CellGenotype load_genotype(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_genotype(buffer.str());
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + std::string(e.what()).substr(to_string(e.kind()).size() + 2));
    }
}

void save_genotype(const CellGenotype& g, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
    out << genotype_to_json(g).dump(2) << '\n';
}

std::string to_string(const Rational& r) {
    if (r.denominator() == 1) return std::to_string(r.numerator());
    return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

double to_double(const Rational& r) {
    return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

}  // namespace cellnas
