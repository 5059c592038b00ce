#include <algorithm>
#include <array>
#include <cmath>
#include <fmt/format.h>
#include <unordered_map>

#include "htdn/datagen.hpp"
#include "htdn/errors.hpp"

namespace htdn {
namespace {

void shuffle(std::vector<std::size_t>& v, Prng& prng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[prng.below(i)]);
}

// Largest-remainder apportionment of n items; ties go to the earlier part.
std::array<std::size_t, 3> part_sizes(std::size_t n, const SplitRatios& r) {
  const std::array<double, 3> ratio{r.train, r.val, r.test};
  std::array<std::size_t, 3> size{};
  std::array<double, 3> rest{};
  std::size_t used = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = ratio[k] * static_cast<double>(n);
    size[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rest[k] = exact - static_cast<double>(size[k]);
    used += size[k];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rest[a] > rest[b]; });
  for (std::size_t i = 0; used < n; ++i, ++used) ++size[order[i % 3]];
  return size;
}

}  // namespace

DatasetSplit split_dataset(const Dataset& data, const SplitRatios& ratios, std::uint64_t seed,
                           const BinarizationRule& rule) {
  if (data.ads.empty()) throw ContractError("split: dataset is empty");
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ContractError(fmt::format("split: ratios {}/{}/{} must be non-negative and sum to 1", ratios.train,
                                    ratios.val, ratios.test));
  }
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < data.ads.size(); ++i) by_class[rule.apply(data.ads[i].label7)].push_back(i);
  Prng prng(seed);
  for (auto& c : by_class) shuffle(c, prng);

  // Spread each class evenly along one sequence; any contiguous run of it then
  // carries each class in proportion, up to one item.
  struct Keyed {
    double key;
    int cls;
    std::size_t index;
  };
  std::vector<Keyed> merged;
  for (int c = 0; c < 2; ++c) {
    const double m = static_cast<double>(by_class[c].size());
    for (std::size_t r = 0; r < by_class[c].size(); ++r) {
      merged.push_back({(static_cast<double>(r) + 0.5) / m, c, by_class[c][r]});
    }
  }
  std::sort(merged.begin(), merged.end(),
            [](const Keyed& a, const Keyed& b) { return a.key != b.key ? a.key < b.key : a.cls < b.cls; });

  const auto sizes = part_sizes(merged.size(), ratios);
  DatasetSplit out;
  out.ratios = ratios;
  out.seed = seed;
  std::vector<std::string>* parts[3] = {&out.train, &out.val, &out.test};
  std::size_t pos = 0;
  std::array<int, 2> train_classes{0, 0};
  for (int k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < sizes[k]; ++i, ++pos) {
      parts[k]->push_back(data.ads[merged[pos].index].id);
      if (k == 0) train_classes[merged[pos].cls] = 1;
    }
  }
  if (!train_classes[0] || !train_classes[1]) {
    throw ContractError("split: the training part would hold a single class");
  }
  return out;
}

std::vector<std::size_t> indices_of(const Dataset& data, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < data.ads.size(); ++i) where.emplace(data.ads[i].id, i);
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = where.find(id);
    if (it == where.end()) throw DataError("split refers to unknown ad id '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace htdn
