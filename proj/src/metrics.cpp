#include "htdn/metrics.hpp"

#include <fmt/format.h>

#include <map>

#include "htdn/errors.hpp"

namespace htdn {

ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw ContractError("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw ContractError("confusion: no examples");
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] != 0, y = labels[i] != 0;
    if (p && y) ++c.tp;
    else if (p && !y) ++c.fp;
    else if (!p && !y) ++c.tn;
    else ++c.fn;
  }
  return c;
}

Metric weighted_accuracy(const ConfusionCounts& c) {
  const double p = static_cast<double>(c.positives());
  const double n = static_cast<double>(c.negatives());
  if (c.positives() == 0) return Metric::undefined("no positive examples (P = 0)");
  if (c.negatives() == 0) return Metric::undefined("no negative examples (N = 0)");
  return Metric::of((static_cast<double>(c.tp) * n / p + static_cast<double>(c.tn)) / (2.0 * n));
}

Metric accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) return Metric::undefined("no examples");
  return Metric::of(static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total()));
}

Metric f1_from(const Metric& precision, const Metric& recall) {
  if (!precision.defined() || !recall.defined()) {
    return Metric::undefined("precision or recall undefined");
  }
  const double p = *precision.value, r = *recall.value;
  if (p + r == 0.0) return Metric::undefined("precision and recall are both zero");
  return Metric::of(2.0 * p * r / (p + r));
}

PrecisionRecallF1 prf1(const ConfusionCounts& c) {
  PrecisionRecallF1 out;
  out.precision = c.tp + c.fp == 0
                      ? Metric::undefined("no positive predictions")
                      : Metric::of(static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp));
  out.recall = c.positives() == 0
                   ? Metric::undefined("no positive examples")
                   : Metric::of(static_cast<double>(c.tp) / static_cast<double>(c.positives()));
  out.f1 = f1_from(out.precision, out.recall);
  return out;
}

MetricsReport MetricsReport::from_counts(const ConfusionCounts& c) {
  MetricsReport r;
  r.counts = c;
  r.weighted_accuracy = htdn::weighted_accuracy(c);
  r.accuracy = htdn::accuracy(c);
  auto p = prf1(c);
  r.precision = p.precision;
  r.recall = p.recall;
  r.f1 = p.f1;
  return r;
}

std::string format_percent(const Metric& m) {
  if (!m.defined()) return "-";
  return fmt::format("{:.1f}", *m.value * 100.0);
}

// ---------------------------------------------------------------------------

AnnotationMatrix::AnnotationMatrix(std::size_t items, std::size_t annotators)
    : items_(items), annotators_(annotators), cells_(items * annotators) {}

const std::optional<Label7>& AnnotationMatrix::at(std::size_t item, std::size_t annotator) const {
  if (item >= items_ || annotator >= annotators_) throw ContractError("annotation index out of range");
  return cells_[item * annotators_ + annotator];
}

void AnnotationMatrix::set(std::size_t item, std::size_t annotator, std::optional<Label7> label) {
  if (item >= items_ || annotator >= annotators_) throw ContractError("annotation index out of range");
  cells_[item * annotators_ + annotator] = label;
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  for (;;) {
    const auto next = line.find(',', pos);
    out.push_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

AnnotationMatrix AnnotationMatrix::from_csv(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(pos, end - pos));
    if (!line.empty()) lines.push_back(line);
    pos = end + 1;
  }
  if (lines.size() < 2) throw DataError("annotation file: need a header and at least one item");
  const auto header = split_commas(lines[0]);
  if (header.size() < 3) throw DataError("annotation file: need at least two annotator columns");
  const std::size_t annotators = header.size() - 1;
  AnnotationMatrix m(lines.size() - 1, annotators);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = split_commas(lines[r]);
    if (cells.size() != header.size()) {
      throw DataError("annotation file line " + std::to_string(r + 1) + ": expected " +
                      std::to_string(header.size()) + " fields");
    }
    for (std::size_t a = 0; a < annotators; ++a) {
      const auto cell = trim(cells[a + 1]);
      if (cell.empty()) continue;
      try {
        m.set(r - 1, a, parse_label7(cell));
      } catch (const DataError& e) {
        throw DataError("annotation file line " + std::to_string(r + 1) + ": " + e.what());
      }
    }
  }
  return m;
}

double pairwise_agreement(const AnnotationMatrix& matrix) {
  std::uint64_t agree = 0, total = 0;
  for (std::size_t i = 0; i < matrix.items(); ++i) {
    for (std::size_t a = 0; a < matrix.annotators(); ++a) {
      const auto& la = matrix.at(i, a);
      if (!la) continue;
      for (std::size_t b = a + 1; b < matrix.annotators(); ++b) {
        const auto& lb = matrix.at(i, b);
        if (!lb) continue;
        ++total;
        if (*la == *lb) ++agree;
      }
    }
  }
  if (total == 0) throw ContractError("pairwise_agreement: no item has two annotations");
  return static_cast<double>(agree) / static_cast<double>(total);
}

AlphaResult krippendorff_alpha(const AnnotationMatrix& matrix) {
  constexpr std::size_t kLevels = kLabel7Names.size();
  double coincidence[kLevels][kLevels] = {};
  for (std::size_t i = 0; i < matrix.items(); ++i) {
    std::size_t present = 0;
    std::size_t per_level[kLevels] = {};
    for (std::size_t a = 0; a < matrix.annotators(); ++a) {
      if (const auto& l = matrix.at(i, a)) {
        ++present;
        ++per_level[static_cast<std::size_t>(*l)];
      }
    }
    if (present < 2) continue;
    const double weight = 1.0 / static_cast<double>(present - 1);
    for (std::size_t c = 0; c < kLevels; ++c) {
      for (std::size_t k = 0; k < kLevels; ++k) {
        // Ordered pairs of distinct raters: n_c * n_k, minus self-pairs on the diagonal.
        const double nc = static_cast<double>(per_level[c]);
        const double pairs = c == k ? nc * (nc - 1.0) : nc * static_cast<double>(per_level[k]);
        coincidence[c][k] += pairs * weight;
      }
    }
  }
  double marginal[kLevels] = {};
  double n = 0.0;
  for (std::size_t c = 0; c < kLevels; ++c) {
    for (std::size_t k = 0; k < kLevels; ++k) marginal[c] += coincidence[c][k];
    n += marginal[c];
  }
  if (n < 2.0) throw ContractError("krippendorff_alpha: fewer than two pairable labels");
  double observed = 0.0, expected = 0.0;
  for (std::size_t c = 0; c < kLevels; ++c) {
    for (std::size_t k = 0; k < kLevels; ++k) {
      if (c == k) continue;
      observed += coincidence[c][k];
      expected += marginal[c] * marginal[k];
    }
  }
  if (expected == 0.0) return AlphaResult{1.0, true};
  return AlphaResult{1.0 - (n - 1.0) * observed / expected, false};
}

}  // namespace htdn
