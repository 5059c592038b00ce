#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "htdn/image.hpp"
#include "htdn/labels.hpp"

namespace htdn {

struct AdRecord {
  std::string id;
  std::string text;
  std::vector<std::string> images;  // relative to the dataset directory
  Label7 label7 = Label7::kUnsure;
  std::optional<std::string> region;

  bool operator==(const AdRecord&) const = default;
};

// Records plus the decoded pixels of every image they reference.
struct Dataset {
  std::vector<AdRecord> ads;
  std::map<std::string, RgbImage> images;

  const RgbImage& image(const std::string& ref) const;
  std::vector<int> binary_labels(const BinarizationRule& rule = {}) const;
  // Copy holding only the listed ads (and their images).
  Dataset subset(const std::vector<std::size_t>& indices) const;
};

// One JSON object per line: id, text, images, label7, region.
std::string records_to_jsonl(const std::vector<AdRecord>& ads);
std::vector<AdRecord> records_from_jsonl(std::string_view text);

// Reads `<dir>/ads.jsonl` and decodes every referenced image. An empty record
// file yields an empty dataset and a warning.
Dataset load_dataset(const std::filesystem::path& dir, std::vector<std::string>* warnings = nullptr);
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);

inline constexpr std::string_view kRecordFileName = "ads.jsonl";

}  // namespace htdn
