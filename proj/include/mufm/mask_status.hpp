#ifndef MUFM_MASK_STATUS_HPP
#define MUFM_MASK_STATUS_HPP

#include <cstdint>
#include <string>
#include <string_view>

#include "mufm/error.hpp"

namespace mufm {

// Numeric values are the on-disk encoding in embedding files; do not reorder.
enum class MaskStatus : std::uint8_t { Unknown = 0, Masked = 1, Unmasked = 2 };

inline std::string_view to_string(MaskStatus s) {
  switch (s) {
    case MaskStatus::Masked: return "masked";
    case MaskStatus::Unmasked: return "unmasked";
    case MaskStatus::Unknown: break;
  }
  return "unknown";
}

inline MaskStatus parse_mask_status(std::string_view text) {
  if (text == "masked" || text == "with_mask") return MaskStatus::Masked;
  if (text == "unmasked" || text == "without_mask") return MaskStatus::Unmasked;
  if (text == "unknown" || text.empty()) return MaskStatus::Unknown;
  throw Error(ErrorCode::ParseError, "bad mask_status '" + std::string(text) + "'");
}

}  // namespace mufm

#endif  // MUFM_MASK_STATUS_HPP
