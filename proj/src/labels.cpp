#include "htdn/labels.hpp"

#include <fmt/format.h>

#include "htdn/errors.hpp"

namespace htdn {

std::string_view label7_name(Label7 label) {
  return kLabel7Names.at(static_cast<std::size_t>(label));
}

Label7 parse_label7(std::string_view name) {
  for (std::size_t i = 0; i < kLabel7Names.size(); ++i) {
    if (kLabel7Names[i] == name) return static_cast<Label7>(i);
  }
  throw DataError("unknown label level '" + std::string(name) + "'");
}

std::string BinarizationRule::describe() const {
  return fmt::format("positive iff level >= '{}'", label7_name(positive_from));
}

}  // namespace htdn
