#include "carenet/labels.hpp"

#include <string>

#include "carenet/error.hpp"
#include "carenet/hypercube.hpp"

namespace carenet {

std::string_view to_string(CoreType t) { return t == CoreType::CA ? "CA" : "AT"; }

std::string_view to_string(Subtype s) {
  switch (s) {
    case Subtype::LA: return "LA";
    case Subtype::LB: return "LB";
    case Subtype::HER2: return "HER2";
    case Subtype::TNBC: return "TNBC";
    case Subtype::None: return "none";
  }
  return "none";
}

CoreType parse_core_type(std::string_view s) {
  if (s == "CA") return CoreType::CA;
  if (s == "AT") return CoreType::AT;
  throw InvalidArgument("unknown core type '" + std::string(s) + "'");
}

Subtype parse_subtype(std::string_view s) {
  if (s == "LA") return Subtype::LA;
  if (s == "LB") return Subtype::LB;
  if (s == "HER2") return Subtype::HER2;
  if (s == "TNBC") return Subtype::TNBC;
  if (s == "none") return Subtype::None;
  throw InvalidArgument("unknown subtype '" + std::string(s) + "'");
}

LabelEncoding encode_labels(CoreType type, Subtype subtype) {
  if (static_cast<int>(subtype) > static_cast<int>(Subtype::None)) {
    throw InvalidArgument("subtype value out of range");
  }
  if (type == CoreType::CA) {
    if (subtype == Subtype::None) throw InvalidArgument("CA core requires a subtype");
    std::array<float, 4> oh{};
    oh[static_cast<std::size_t>(subtype)] = 1.0F;
    return {1.0F, oh};
  }
  if (type != CoreType::AT) throw InvalidArgument("core type value out of range");
  if (subtype != Subtype::None) throw InvalidArgument("AT core cannot carry a subtype");
  return {0.0F, std::nullopt};
}

void HyperCube::validate() const {
  if (rows == 0 || cols == 0) throw InvalidArgument("hypercube needs at least one pixel");
  if (intensities.size() != rows * cols * axis.size()) {
    throw InvalidArgument("hypercube intensity count does not match rows x cols x axis");
  }
  (void)encode_labels(core_type, subtype);
}

}  // namespace carenet
