#include "cellnas/operation_kind.hpp"

#include <array>
#include <utility>

namespace cellnas {

std::string_view to_string(OperationKind kind) noexcept {
    switch (kind) {
        case OperationKind::Linear: return "linear";
        case OperationKind::Identity: return "identity";
        case OperationKind::Zero: return "zero";
    }
    return "unknown";
}

std::optional<OperationKind> resolve_operation_kind(std::string_view name) noexcept {
    static constexpr std::array<std::pair<std::string_view, OperationKind>, 15> kTable{{
        {"linear", OperationKind::Linear},
        {"identity", OperationKind::Identity},
        {"zero", OperationKind::Zero},
        {"sep_conv_3x3", OperationKind::Linear},
        {"sep_conv_5x5", OperationKind::Linear},
        {"sep_conv_7x7", OperationKind::Linear},
        {"dil_conv_3x3", OperationKind::Linear},
        {"dil_conv_5x5", OperationKind::Linear},
        {"conv_7x1_1x7", OperationKind::Linear},
        {"conv_1x1", OperationKind::Linear},
        {"conv_3x3", OperationKind::Linear},
        {"avg_pool_3x3", OperationKind::Identity},
        {"max_pool_3x3", OperationKind::Identity},
        {"skip_connect", OperationKind::Identity},
        {"none", OperationKind::Zero},
    }};
    for (const auto& [key, kind] : kTable) {
        if (key == name) return kind;
    }
    return std::nullopt;
}

}  // namespace cellnas
