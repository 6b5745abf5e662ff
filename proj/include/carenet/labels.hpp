#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace carenet {

enum class CoreType : std::uint8_t { AT = 0, CA = 1 };

/// One-hot order is the enum order: LA, LB, HER2, TNBC.
enum class Subtype : std::uint8_t { LA = 0, LB = 1, HER2 = 2, TNBC = 3, None = 4 };

inline constexpr int kNumSubtypes = 4;

std::string_view to_string(CoreType t);
std::string_view to_string(Subtype s);
CoreType parse_core_type(std::string_view s);
Subtype parse_subtype(std::string_view s);

struct LabelEncoding {
  float binary;                                 // CA -> 1, AT -> 0
  std::optional<std::array<float, 4>> one_hot;  // CA cores only
};

/// Throws InvalidArgument for CA without a subtype or AT with one.
LabelEncoding encode_labels(CoreType type, Subtype subtype);

}  // namespace carenet
