#include "htdn/dataset.hpp"

#include <json.hpp>

#include <set>

#include "htdn/binary_io.hpp"
#include "htdn/errors.hpp"

namespace htdn {

using Json = nlohmann::ordered_json;

const RgbImage& Dataset::image(const std::string& ref) const {
  auto it = images.find(ref);
  if (it == images.end()) throw DataError("image '" + ref + "' is not loaded");
  return it->second;
}

std::vector<int> Dataset::binary_labels(const BinarizationRule& rule) const {
  std::vector<int> out;
  out.reserve(ads.size());
  for (const auto& ad : ads) out.push_back(rule.apply(ad.label7));
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.ads.reserve(indices.size());
  for (std::size_t i : indices) {
    const AdRecord& ad = ads.at(i);
    out.ads.push_back(ad);
    for (const auto& ref : ad.images) {
      if (auto it = images.find(ref); it != images.end()) out.images.emplace(ref, it->second);
    }
  }
  return out;
}

std::string records_to_jsonl(const std::vector<AdRecord>& ads) {
  std::string out;
  for (const auto& ad : ads) {
    Json j;
    j["id"] = ad.id;
    j["text"] = ad.text;
    j["images"] = ad.images;
    j["label7"] = std::string(label7_name(ad.label7));
    j["region"] = ad.region ? Json(*ad.region) : Json(nullptr);
    out += j.dump();
    out += '\n';
  }
  return out;
}

namespace {

[[noreturn]] void record_error(std::size_t line, const std::string& field, const std::string& what) {
  throw DataError("record line " + std::to_string(line) + ", field '" + field + "': " + what);
}

std::string string_field(const Json& j, const char* name, std::size_t line) {
  if (!j.contains(name)) record_error(line, name, "missing");
  if (!j[name].is_string()) record_error(line, name, "expected a string");
  return j[name].get<std::string>();
}

AdRecord parse_record(std::string_view text, std::size_t line) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("record line " + std::to_string(line) + ": invalid JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw DataError("record line " + std::to_string(line) + ": expected an object");
  AdRecord ad;
  ad.id = string_field(j, "id", line);
  if (ad.id.empty()) record_error(line, "id", "empty");
  ad.text = string_field(j, "text", line);
  try {
    ad.label7 = parse_label7(string_field(j, "label7", line));
  } catch (const DataError& e) {
    if (std::string_view(e.what()).starts_with("record line")) throw;
    record_error(line, "label7", e.what());
  }
  if (j.contains("images")) {
    if (!j["images"].is_array()) record_error(line, "images", "expected an array");
    for (const auto& ref : j["images"]) {
      if (!ref.is_string() || ref.get<std::string>().empty()) {
        record_error(line, "images", "entries must be non-empty strings");
      }
      ad.images.push_back(ref.get<std::string>());
    }
  }
  if (j.contains("region") && !j["region"].is_null()) ad.region = string_field(j, "region", line);
  return ad;
}

}  // namespace

std::vector<AdRecord> records_from_jsonl(std::string_view text) {
  std::vector<AdRecord> ads;
  std::set<std::string> ids;
  std::size_t line = 0, pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line;
    auto row = text.substr(pos, end - pos);
    pos = end + 1;
    if (row.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    ads.push_back(parse_record(row, line));
    if (!ids.insert(ads.back().id).second) record_error(line, "id", "duplicate id '" + ads.back().id + "'");
  }
  return ads;
}

Dataset load_dataset(const std::filesystem::path& dir, std::vector<std::string>* warnings) {
  const auto record_path = dir / kRecordFileName;
  Dataset data;
  data.ads = records_from_jsonl(read_file_text(record_path));
  if (data.ads.empty() && warnings) warnings->push_back(record_path.string() + " holds no records");
  for (const auto& ad : data.ads) {
    for (const auto& ref : ad.images) {
      if (data.images.count(ref)) continue;
      const auto path = dir / ref;
      if (!std::filesystem::exists(path)) {
        throw DataError("ad '" + ad.id + "': image file " + path.string() + " does not exist");
      }
      data.images.emplace(ref, load_ppm(path));
    }
  }
  return data;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  for (const auto& [ref, image] : dataset.images) save_ppm(dir / ref, image);
  write_file_atomic(dir / kRecordFileName, records_to_jsonl(dataset.ads));
}

}  // namespace htdn
