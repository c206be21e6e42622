#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <vector>

#include "cellnas/cell_graph.hpp"
#include "cellnas/rng.hpp"

namespace cellnas::oracle {

/// Random valid genotype with n intermediate nodes and M inputs. Kinds are
/// drawn from linear/identity/zero; concat is a random non-empty subset.
inline CellGenotype random_genotype(Rng& rng, std::size_t n, std::size_t m = 2) {
    static const char* kinds[] = {"linear", "identity", "zero", "sep_conv_3x3", "skip_connect"};
    CellGenotype g;
    g.name = "random";
    g.num_inputs = m;
    for (std::size_t i = 0; i < n; ++i) {
        IntermediateNodeSpec node;
        for (std::size_t j = 0; j < m; ++j) {
            node.ops.push_back({kinds[rng.uniform_index(5)], static_cast<std::size_t>(rng.uniform_index(m + i))});
        }
        g.nodes.push_back(node);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (rng.uniform01() < 0.5) g.concat.push_back(m + i);
    }
    if (g.concat.empty()) g.concat.push_back(m + n - 1);
    return g;
}

/// Longest input-to-output path by walking every path explicitly.
inline std::size_t brute_force_depth(const CellGenotype& g) {
    const std::size_t m = g.num_inputs;
    const std::size_t output = m + g.nodes.size();
    // successors[u] lists every edge u -> v, including concat -> output.
    std::vector<std::vector<std::size_t>> successors(output + 1);
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        for (const auto& e : g.nodes[i].ops) successors[e.source].push_back(m + i);
    }
    for (std::size_t c : g.concat) successors[c].push_back(output);

    std::size_t best = 0;
    std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t node, std::size_t length) {
        if (node == output) {
            best = std::max(best, length);
            return;
        }
        for (std::size_t next : successors[node]) walk(next, length + 1);
    };
    for (std::size_t s = 0; s < m; ++s) walk(s, 0);
    return best;
}

}  // namespace cellnas::oracle
