#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "cellnas/tensor.hpp"

namespace cellnas {

/// Parameter checkpoint.
///
/// Layout: a 4-byte little-endian header length H, H bytes of JSON header,
/// then the payload of little-endian IEEE-754 float64 values. The header is
///   {"blocks": [{"name": ..., "shape": [...], "offset": byte offset into the
///    payload}, ...], "meta": {...}}
/// Blocks are stored contiguously in ParameterSet order.
struct Checkpoint {
    ParameterSet parameters;
    nlohmann::json meta = nlohmann::json::object();
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cellnas
