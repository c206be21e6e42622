#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "cellnas/dataset.hpp"
#include "cellnas/network.hpp"
#include "cellnas/tensor.hpp"

namespace cellnas {

enum class Normalization { Blockwise, None };

struct DirectionPair {
    ParameterSet first;
    ParameterSet second;
    std::uint64_t seed = 0;
    Normalization normalization = Normalization::Blockwise;
    /// Blocks whose reference was all zero; their raw draw was kept unscaled.
    std::vector<std::string> zero_blocks;
};

/// Both directions are drawn block by block from independent standard normals
/// ("directions" stream of `seed`, children "first" and "second"). Blockwise
/// normalization rescales each block to the Frobenius norm of the matching
/// reference block.
DirectionPair sample_directions(const ParameterSet& reference, std::uint64_t seed, Normalization normalization);

/// (-first, -second).
DirectionPair negated(const DirectionPair& pair);

Normalization parse_normalization(const std::string& name);
std::string to_string(Normalization n);

enum class SurfaceKind { Loss, GradVar, GradStd };

SurfaceKind parse_surface_kind(const std::string& name);
std::string to_string(SurfaceKind kind);

/// values is row-major: values[a * betas.size() + b]. Non-finite points are
/// stored as +inf.
struct LandscapeGrid {
    std::vector<double> alphas;
    std::vector<double> betas;
    std::vector<double> values;
    SurfaceKind kind = SurfaceKind::Loss;
    nlohmann::json metadata = nlohmann::json::object();

    double at(std::size_t a, std::size_t b) const { return values.at(a * betas.size() + b); }
    std::size_t overflow_count() const;
};

/// `points` coordinates r*k/h for k = -h..h, h = (points-1)/2, so the axis is
/// symmetric and contains an exact 0. Throws Error{InvalidSpec} for an even
/// point count or a non-positive range.
std::vector<double> centered_axis(std::size_t points, double range);

/// Evaluation-only surface of the mean loss at w* + alpha*first + beta*second.
/// Rows of the grid are spread over `workers` threads; the result does not
/// depend on the worker count.
LandscapeGrid loss_surface(const Network& net, const ParameterSet& center, const Split& split,
                           const DirectionPair& pair, const std::vector<double>& alphas,
                           const std::vector<double>& betas, std::size_t workers = 1);

/// Trace of the covariance of per-instance gradients, (1/N) sum_i |G_i - mean G|^2,
/// or its square root for SurfaceKind::GradStd.
LandscapeGrid gradient_variance_surface(const Network& net, const ParameterSet& center, const Split& split,
                                        const DirectionPair& pair, const std::vector<double>& alphas,
                                        const std::vector<double>& betas, SurfaceKind kind,
                                        std::size_t workers = 1);

/// Covariance trace of per-instance gradients at fixed parameters.
double gradient_variance(const Network& net, const ParameterSet& params, const Split& split);

/// w + alpha*first + beta*second, evaluated as (w + alpha*d1) + beta*d2.
ParameterSet perturb(const ParameterSet& center, const DirectionPair& pair, double alpha, double beta);

/// `count` rows chosen without replacement from the "subset" stream of `seed`,
/// kept in their original order. The whole split when count >= size.
Split evaluation_subset(const Split& split, std::size_t count, std::uint64_t seed);

/// CSV with header `alpha,beta,value`, rows in row-major order, overflow as `inf`.
std::string grid_csv(const LandscapeGrid& grid);
LandscapeGrid parse_grid_csv(const std::string& text, SurfaceKind kind = SurfaceKind::Loss);
nlohmann::json to_json(const LandscapeGrid& grid);

void export_grid(const LandscapeGrid& grid, const std::filesystem::path& path);
LandscapeGrid import_grid_csv(const std::filesystem::path& path, SurfaceKind kind = SurfaceKind::Loss);

}  // namespace cellnas
