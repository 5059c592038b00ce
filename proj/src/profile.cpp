#include "htdn/profile.hpp"

#include <fmt/format.h>

#include <charconv>
#include <map>

#include "htdn/errors.hpp"

namespace htdn {

Shape BackboneProfile::conv_output_shape() const {
  if (convs.empty()) throw ShapeError("backbone needs at least one conv layer");
  std::size_t c = 3, h = image_size, w = image_size;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const ConvSpec& s = convs[i];
    if (s.kernel == 0 || s.stride == 0 || s.channels == 0) {
      throw ShapeError(fmt::format("backbone conv {}: zero kernel, stride or channels", i));
    }
    if (h + 2 * s.padding < s.kernel) {
      throw ShapeError(fmt::format("backbone conv {}: kernel {} exceeds {}x{} input", i, s.kernel, h, w));
    }
    h = (h + 2 * s.padding - s.kernel) / s.stride + 1;
    w = (w + 2 * s.padding - s.kernel) / s.stride + 1;
    c = s.channels;
    if (s.pool_after) {
      if (h < pool_window) {
        throw ShapeError(fmt::format("backbone conv {}: {}x{} map too small to pool", i, h, w));
      }
      h = (h - pool_window) / pool_window + 1;
      w = (w - pool_window) / pool_window + 1;
    }
  }
  return {c, h, w};
}

std::size_t BackboneProfile::feature_dim() const {
  if (!fc_widths.empty()) return fc_widths.back();
  return shape_numel(conv_output_shape());
}

ModelProfile ModelProfile::full() {
  ModelProfile p;
  p.name = "full";
  p.embedding_dim = 100;
  p.lstm_hidden = 300;
  p.language_dim = 300;
  p.vision_dim = 200;
  p.backbone.image_size = 224;
  // VGG-16: five blocks of (layers, channels), each closed by a pool.
  const std::pair<std::size_t, std::size_t> blocks[] = {{2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}};
  for (auto [layers, width] : blocks) {
    for (std::size_t i = 0; i < layers; ++i) {
      p.backbone.convs.push_back(ConvSpec{width, 3, 1, 1, i + 1 == layers});
    }
  }
  p.backbone.fc_widths = {4096, 4096};
  return p;
}

ModelProfile ModelProfile::reduced() {
  ModelProfile p;
  p.name = "reduced";
  p.backbone.image_size = 64;
  for (std::size_t c : {8, 16, 32, 32}) p.backbone.convs.push_back(ConvSpec{c, 3, 1, 1, true});
  p.backbone.fc_widths = {256, 256};
  return p;
}

ModelProfile ModelProfile::small() {
  ModelProfile p;
  p.name = "small";
  p.lstm_hidden = 16;
  p.language_dim = 16;
  p.vision_dim = 16;
  p.backbone.image_size = 16;
  for (std::size_t c : {8, 16}) p.backbone.convs.push_back(ConvSpec{c, 3, 1, 1, true});
  p.backbone.fc_widths = {64};
  // Seven stacked p = 0.5 masks on layers this narrow drown the signal.
  p.dropout = 0.2;
  return p;
}

ModelProfile ModelProfile::by_name(std::string_view name) {
  if (name == "full") return full();
  if (name == "reduced") return reduced();
  if (name == "small") return small();
  throw ConfigError("unknown profile '" + std::string(name) + "' (expected full, reduced or small)");
}

std::size_t ModelProfile::decision_flat_dim() const {
  std::size_t h = vision_dim, w = language_dim;
  for (int stage = 0; stage < 2; ++stage) {
    if (h < 2 || w < 2) {
      throw ShapeError(fmt::format("decision plane {}x{} too small for two 2x2 pools", vision_dim,
                                   language_dim));
    }
    h /= 2;
    w /= 2;
  }
  return decision_channels2 * h * w;
}

void ModelProfile::validate() const {
  if (embedding_dim == 0 || lstm_hidden == 0 || language_dim == 0 || vision_dim == 0 ||
      slots == 0 || vision_fc_layers == 0 || decision_channels1 == 0 || decision_channels2 == 0 ||
      decision_fc == 0 || max_tokens == 0) {
    throw ConfigError("profile '" + name + "': every width must be positive");
  }
  if (decision_kernel % 2 == 0) throw ConfigError("profile '" + name + "': decision kernel must be odd");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("profile '" + name + "': dropout outside [0, 1)");
  try {
    backbone.conv_output_shape();
    decision_flat_dim();
  } catch (const ShapeError& e) {
    throw ConfigError("profile '" + name + "': " + e.what());
  }
}

namespace {

std::string join_sizes(const std::vector<std::size_t>& v) {
  return fmt::format("{}", fmt::join(v, ","));
}

std::size_t parse_size(std::string_view key, std::string_view value) {
  std::size_t out = 0;
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || end != value.data() + value.size()) {
    throw ConfigError(fmt::format("profile key '{}': '{}' is not a non-negative integer", key, value));
  }
  return out;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  if (s.empty()) return out;
  std::size_t pos = 0;
  for (;;) {
    const auto next = s.find(sep, pos);
    out.push_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string ModelProfile::to_text() const {
  std::string convs;
  for (std::size_t i = 0; i < backbone.convs.size(); ++i) {
    const ConvSpec& c = backbone.convs[i];
    if (i) convs += ',';
    convs += fmt::format("{}:{}:{}:{}:{}", c.channels, c.kernel, c.stride, c.padding, c.pool_after ? "pool" : "nopool");
  }
  std::string out;
  out += fmt::format("name = {}\n", name);
  out += fmt::format("max_tokens = {}\n", max_tokens);
  out += fmt::format("embedding_dim = {}\n", embedding_dim);
  out += fmt::format("lstm_hidden = {}\n", lstm_hidden);
  out += fmt::format("language_dim = {}\n", language_dim);
  out += fmt::format("backbone.image_size = {}\n", backbone.image_size);
  out += fmt::format("backbone.convs = {}\n", convs);
  out += fmt::format("backbone.pool_window = {}\n", backbone.pool_window);
  out += fmt::format("backbone.fc = {}\n", join_sizes(backbone.fc_widths));
  out += fmt::format("vision_dim = {}\n", vision_dim);
  out += fmt::format("vision_fc_layers = {}\n", vision_fc_layers);
  out += fmt::format("slots = {}\n", slots);
  out += fmt::format("decision.channels1 = {}\n", decision_channels1);
  out += fmt::format("decision.channels2 = {}\n", decision_channels2);
  out += fmt::format("decision.kernel = {}\n", decision_kernel);
  out += fmt::format("decision.fc = {}\n", decision_fc);
  out += fmt::format("dropout = {}\n", dropout);
  return out;
}

ModelProfile ModelProfile::from_text(std::string_view text) {
  std::map<std::string, std::string, std::less<>> kv;
  for (auto line : split(text, '\n')) {
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(fmt::format("profile line '{}' lacks '='", line));
    kv[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  auto take = [&](const char* key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError(fmt::format("profile key '{}' missing", key));
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  ModelProfile p;
  p.name = take("name");
  p.max_tokens = parse_size("max_tokens", take("max_tokens"));
  p.embedding_dim = parse_size("embedding_dim", take("embedding_dim"));
  p.lstm_hidden = parse_size("lstm_hidden", take("lstm_hidden"));
  p.language_dim = parse_size("language_dim", take("language_dim"));
  p.backbone.image_size = parse_size("backbone.image_size", take("backbone.image_size"));
  p.backbone.convs.clear();
  const std::string convs = take("backbone.convs");
  for (auto item : split(convs, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 5 || (parts[4] != "pool" && parts[4] != "nopool")) {
      throw ConfigError(fmt::format("backbone conv spec '{}' must be channels:kernel:stride:padding:pool|nopool", item));
    }
    p.backbone.convs.push_back(ConvSpec{parse_size("channels", parts[0]), parse_size("kernel", parts[1]),
                                        parse_size("stride", parts[2]), parse_size("padding", parts[3]),
                                        parts[4] == "pool"});
  }
  p.backbone.pool_window = parse_size("backbone.pool_window", take("backbone.pool_window"));
  p.backbone.fc_widths.clear();
  const std::string fcs = take("backbone.fc");
  for (auto item : split(fcs, ',')) p.backbone.fc_widths.push_back(parse_size("backbone.fc", item));
  p.vision_dim = parse_size("vision_dim", take("vision_dim"));
  p.vision_fc_layers = parse_size("vision_fc_layers", take("vision_fc_layers"));
  p.slots = parse_size("slots", take("slots"));
  p.decision_channels1 = parse_size("decision.channels1", take("decision.channels1"));
  p.decision_channels2 = parse_size("decision.channels2", take("decision.channels2"));
  p.decision_kernel = parse_size("decision.kernel", take("decision.kernel"));
  p.decision_fc = parse_size("decision.fc", take("decision.fc"));
  const std::string dropout = take("dropout");
  auto [end, ec] = std::from_chars(dropout.data(), dropout.data() + dropout.size(), p.dropout);
  if (ec != std::errc() || end != dropout.data() + dropout.size()) {
    throw ConfigError("profile key 'dropout': '" + dropout + "' is not a number");
  }
  if (!kv.empty()) throw ConfigError("unknown profile key '" + kv.begin()->first + "'");
  p.validate();
  return p;
}

}  // namespace htdn
