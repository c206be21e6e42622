#include "cellnas/dataset.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "cellnas/error.hpp"
#include "cellnas/rng.hpp"

namespace cellnas {

Split Split::subset(const std::vector<std::size_t>& indices) const {
    const std::size_t dim = x.cols();
    Split out;
    out.x = Tensor({indices.size(), dim});
    out.labels.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        for (std::size_t c = 0; c < dim; ++c) out.x.at(r, c) = x.at(indices[r], c);
        out.labels.push_back(labels.at(indices[r]));
    }
    return out;
}

namespace {

Split draw_split(const DatasetSpec& spec, const std::vector<std::vector<double>>& means, std::size_t size, Rng rng) {
    Split split;
    split.x = Tensor({size, spec.dim});
    split.labels.resize(size);
    for (std::size_t r = 0; r < size; ++r) {
        const std::size_t label = r % spec.classes;
        split.labels[r] = label;
        if (spec.kind == DatasetKind::GaussianMixture) {
            for (std::size_t c = 0; c < spec.dim; ++c) split.x.at(r, c) = means[label][c] + spec.noise * rng.normal();
        } else {
            const double t = rng.uniform01();
            const double angle = 2.0 * std::numbers::pi * (static_cast<double>(label) / static_cast<double>(spec.classes) + t);
            const double radial = spec.radius * t;
            for (std::size_t c = 0; c < spec.dim; ++c) split.x.at(r, c) = spec.noise * rng.normal();
            split.x.at(r, 0) += radial * std::cos(angle);
            split.x.at(r, 1) += radial * std::sin(angle);
        }
    }
    return split;
}

}  // namespace

Dataset make_dataset(const DatasetSpec& spec) {
    if (spec.train_size < 1 || spec.test_size < 1) throw Error(ErrorKind::InvalidSpec, "split sizes must be >= 1");
    if (spec.classes < 2) throw Error(ErrorKind::InvalidSpec, "need at least two classes");
    if (spec.dim < 1 || (spec.kind == DatasetKind::Spirals && spec.dim < 2)) {
        throw Error(ErrorKind::InvalidSpec, "dimension too small for the generator");
    }
    if (!(spec.noise >= 0.0) || !(spec.radius > 0.0)) throw Error(ErrorKind::InvalidSpec, "noise >= 0 and radius > 0 required");

    const Rng root = Rng(spec.seed).stream("data");
    std::vector<std::vector<double>> means(spec.classes, std::vector<double>(spec.dim, 0.0));
    if (spec.kind == DatasetKind::GaussianMixture) {
        Rng rng = root.stream("means");
        for (auto& mean : means) {
            double norm = 0.0;
            do {
                norm = 0.0;
                for (double& v : mean) {
                    v = rng.normal();
                    norm += v * v;
                }
            } while (norm == 0.0);
            norm = std::sqrt(norm);
            for (double& v : mean) v *= spec.radius / norm;
        }
    }
    Dataset ds;
    ds.spec = spec;
    ds.train = draw_split(spec, means, spec.train_size, root.stream("train"));
    ds.test = draw_split(spec, means, spec.test_size, root.stream("test"));
    return ds;
}

nlohmann::json to_json(const DatasetSpec& spec) {
    return {{"kind", spec.kind == DatasetKind::GaussianMixture ? "gaussian-mixture" : "spirals"},
            {"dim", spec.dim},
            {"classes", spec.classes},
            {"train_size", spec.train_size},
            {"test_size", spec.test_size},
            {"noise", spec.noise},
            {"radius", spec.radius},
            {"seed", spec.seed}};
}

DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
    DatasetSpec spec;
    try {
        if (j.contains("kind")) {
            const auto kind = j.at("kind").get<std::string>();
            if (kind == "gaussian-mixture") spec.kind = DatasetKind::GaussianMixture;
            else if (kind == "spirals") spec.kind = DatasetKind::Spirals;
            else throw Error(ErrorKind::InvalidSpec, "kind: unknown generator '" + kind + "'");
        }
        spec.dim = j.value("dim", spec.dim);
        spec.classes = j.value("classes", spec.classes);
        spec.train_size = j.value("train_size", spec.train_size);
        spec.test_size = j.value("test_size", spec.test_size);
        spec.noise = j.value("noise", spec.noise);
        spec.radius = j.value("radius", spec.radius);
        spec.seed = j.value("seed", spec.seed);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("dataset spec: ") + e.what());
    }
    return spec;
}

DatasetSpec load_dataset_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
    try {
        return dataset_spec_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
}

}  // namespace cellnas
