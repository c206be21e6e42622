#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "cellnas/cell_graph.hpp"

namespace cellnas {

/// A genotype JSON compiled into the library from fixtures/.
struct BuiltinFixture {
    std::string_view name;  // file stem, e.g. "darts"
    std::string_view json;
};

std::span<const BuiltinFixture> builtin_fixtures();

/// Throws Error{InvalidSpec} naming the available fixtures when `name` is unknown.
CellGenotype builtin_genotype(std::string_view name);

/// The five published cells, in the order nasnet, amoebanet, enas, darts, snas.
std::vector<CellGenotype> published_cells();

/// The four random DARTS connection variants, darts_conn1..4.
std::vector<CellGenotype> darts_connection_variants();

}  // namespace cellnas
