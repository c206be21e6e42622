#include "cellnas/fixtures.hpp"

#include <string>

#include "cellnas/error.hpp"

namespace cellnas {

namespace detail {
extern const BuiltinFixture kBuiltinFixtures[];
extern const std::size_t kBuiltinFixtureCount;
}  // namespace detail

std::span<const BuiltinFixture> builtin_fixtures() {
    return {detail::kBuiltinFixtures, detail::kBuiltinFixtureCount};
}

CellGenotype builtin_genotype(std::string_view name) {
    std::string known;
    for (const auto& f : builtin_fixtures()) {
        if (f.name == name) return parse_genotype(std::string(f.json));
        known += known.empty() ? "" : ", ";
        known += f.name;
    }
    throw Error(ErrorKind::InvalidSpec, "no built-in genotype '" + std::string(name) + "' (available: " + known + ")");
}

std::vector<CellGenotype> published_cells() {
    std::vector<CellGenotype> out;
    for (const char* name : {"nasnet", "amoebanet", "enas", "darts", "snas"}) out.push_back(builtin_genotype(name));
    return out;
}

std::vector<CellGenotype> darts_connection_variants() {
    std::vector<CellGenotype> out;
    for (const char* name : {"darts_conn1", "darts_conn2", "darts_conn3", "darts_conn4"}) out.push_back(builtin_genotype(name));
    return out;
}

}  // namespace cellnas
