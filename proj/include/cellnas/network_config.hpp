#pragma once

#include <cstddef>

namespace cellnas {

/// Shape of a network built by stacking one cell genotype.
struct NetworkConfig {
    std::size_t layers = 6;       // cells stacked
    std::size_t dim = 16;         // feature dimension of every node
    std::size_t input_dim = 8;    // stem input features
    std::size_t num_classes = 4;  // head outputs
};

void validate(const NetworkConfig& cfg);

}  // namespace cellnas
