#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace htdn {

// Seven-level suspiciousness scale used by annotators.
enum class Label7 : std::uint8_t {
  kCertainlyNo = 0,
  kLikelyNo,
  kWeaklyNo,
  kUnsure,
  kWeaklyYes,
  kLikelyYes,
  kCertainlyYes,
};

inline constexpr std::array<std::string_view, 7> kLabel7Names{
    "Certainly no", "Likely no", "Weakly no", "Unsure", "Weakly yes", "Likely yes", "Certainly yes"};

std::string_view label7_name(Label7 label);
// Throws DataError for anything outside the seven names.
Label7 parse_label7(std::string_view name);

// Lowest level mapped to the positive class; "Weakly yes" by default, so
// "Unsure" counts as negative.
struct BinarizationRule {
  Label7 positive_from = Label7::kWeaklyYes;

  int apply(Label7 label) const {
    return static_cast<std::uint8_t>(label) >= static_cast<std::uint8_t>(positive_from) ? 1 : 0;
  }
  std::string describe() const;
};

inline int binarize_label(Label7 label, BinarizationRule rule = {}) { return rule.apply(label); }

}  // namespace htdn
