#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "cellnas/cell_graph.hpp"
#include "cellnas/rng.hpp"

namespace cellnas {

using BigInt = boost::multiprecision::cpp_int;

enum class SampleMode { Connection, Operation };

struct SampleSpec {
    SampleMode mode = SampleMode::Connection;
    std::size_t count = 1;
    std::uint64_t seed = 0;
    std::vector<std::string> operation_set;  // operation mode only
};

/// (N-2)! / (M-1)!, the published count of connection variants of an N-node
/// cell with M inputs.
BigInt count_connection_variants(std::size_t node_count, std::size_t num_inputs);

/// Counts implied by the per-slot sampling procedure for n = N-M-1 intermediates:
/// every slot independently picks a predecessor, so prod_i (M+i)^M raw
/// assignments, or prod_i C(M+i, M) when each node takes M distinct sources
/// regardless of order.
BigInt count_slot_assignments(std::size_t node_count, std::size_t num_inputs);
BigInt count_unordered_distinct_sources(std::size_t node_count, std::size_t num_inputs);

struct EnumerationLimits {
    std::size_t max_nodes = 5;
    std::uint64_t max_assignments = 1'000'000;
};

/// Every slot assignment of g's sources, operations fixed, deduplicated up to
/// reordering of (operation, source) pairs within a node. Odometer order with
/// the first slot of the first node most significant.
/// Throws Error{TooLarge} past the limits.
std::vector<CellGenotype> enumerate_connection_variants(const CellGenotype& g, EnumerationLimits limits = {});

struct ConnectionSpaceReport {
    BigInt formula;                    // count_connection_variants
    BigInt slot_assignments;           // count_slot_assignments
    BigInt unordered_distinct_sources; // count_unordered_distinct_sources
    std::size_t enumerated = 0;        // enumerate_connection_variants(g).size()
};

ConnectionSpaceReport connection_space_report(const CellGenotype& g, EnumerationLimits limits = {});

/// Resamples every slot's source uniformly among the slot's preceding nodes.
CellGenotype sample_connection_variant(const CellGenotype& g, Rng& rng);

/// Resamples every slot's operation uniformly from `ops`, sources untouched.
/// Throws Error{UnknownOperationKind} if ops names an unregistered kind.
CellGenotype sample_operation_variant(const CellGenotype& g, std::span<const std::string> ops, Rng& rng);

/// count variants; draw i uses stream i of the "sampling" stream of spec.seed.
std::vector<CellGenotype> sample_variants(const CellGenotype& g, const SampleSpec& spec);

/// Width ascending, then depth descending, then name. Stable.
std::vector<CellGenotype> rank_variants(std::vector<CellGenotype> gs);

}  // namespace cellnas
