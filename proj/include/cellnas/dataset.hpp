#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "cellnas/tensor.hpp"

namespace cellnas {

enum class DatasetKind { GaussianMixture, Spirals };

/// Synthetic classification data.
///
/// gaussian-mixture: class means drawn uniformly on the sphere of `radius`,
///   samples are mean + noise * N(0, I).
/// spirals: interleaved arms in the first two coordinates (arm radius grows
///   to `radius`), all coordinates perturbed by noise * N(0, I).
struct DatasetSpec {
    DatasetKind kind = DatasetKind::GaussianMixture;
    std::size_t dim = 8;
    std::size_t classes = 4;
    std::size_t train_size = 2000;
    std::size_t test_size = 500;
    double noise = 0.1;
    double radius = 0.2;
    std::uint64_t seed = 0;
};

struct Split {
    Tensor x;  // [size, dim]
    std::vector<std::size_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
    /// Rows `indices` as a new split.
    Split subset(const std::vector<std::size_t>& indices) const;
};

struct Dataset {
    DatasetSpec spec;
    Split train;
    Split test;
};

/// Deterministic in spec.seed. Labels cycle through the classes, so every class
/// count is within one of size / classes. Train and test come from separate
/// streams. Throws Error{InvalidSpec}.
Dataset make_dataset(const DatasetSpec& spec);

nlohmann::json to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);
DatasetSpec load_dataset_spec(const std::filesystem::path& path);

}  // namespace cellnas
