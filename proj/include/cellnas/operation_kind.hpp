#pragma once

#include <optional>
#include <string_view>

namespace cellnas {

/// Desk-scale operation vocabulary. Genotypes may also name the operations of
/// published NAS search spaces; those resolve to the desk-scale kind with the
/// same parameter behaviour (convolutions to Linear, pooling and skip
/// connections to Identity, "none" to Zero).
enum class OperationKind { Linear, Identity, Zero };

std::string_view to_string(OperationKind kind) noexcept;

std::optional<OperationKind> resolve_operation_kind(std::string_view name) noexcept;

inline bool is_known_operation(std::string_view name) noexcept {
    return resolve_operation_kind(name).has_value();
}

}  // namespace cellnas
