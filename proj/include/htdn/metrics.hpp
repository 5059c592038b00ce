#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "htdn/labels.hpp"

namespace htdn {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::uint64_t positives() const { return tp + fn; }
  std::uint64_t negatives() const { return tn + fp; }
  std::uint64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

// Binary predictions and labels in {0, 1}.
ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> labels);

// A metric value, or the reason it is undefined.
struct Metric {
  std::optional<double> value;
  std::string undefined_reason;

  bool defined() const { return value.has_value(); }
  static Metric of(double v) { return Metric{v, {}}; }
  static Metric undefined(std::string why) { return Metric{std::nullopt, std::move(why)}; }
};

// (TP * N / P + TN) / (2N); undefined when P or N is zero.
Metric weighted_accuracy(const ConfusionCounts& c);
Metric accuracy(const ConfusionCounts& c);

struct PrecisionRecallF1 {
  Metric precision, recall, f1;
};
PrecisionRecallF1 prf1(const ConfusionCounts& c);
// Harmonic mean of two fractions; undefined if either is undefined or both are 0.
Metric f1_from(const Metric& precision, const Metric& recall);

// One row of the results table.
struct MetricsReport {
  ConfusionCounts counts;
  Metric weighted_accuracy, f1, accuracy, precision, recall;

  static MetricsReport from_counts(const ConfusionCounts& c);
};

// Percent with one decimal ("75.3"), or "-" when undefined.
std::string format_percent(const Metric& m);

// ---------------------------------------------------------------------------
// Inter-annotator agreement

// items x annotators; missing cells are nullopt.
class AnnotationMatrix {
 public:
  AnnotationMatrix(std::size_t items, std::size_t annotators);

  std::size_t items() const { return items_; }
  std::size_t annotators() const { return annotators_; }
  const std::optional<Label7>& at(std::size_t item, std::size_t annotator) const;
  void set(std::size_t item, std::size_t annotator, std::optional<Label7> label);

  // CSV: header "item,<annotator>,...", one row per item, empty cell = missing.
  static AnnotationMatrix from_csv(std::string_view text);

 private:
  std::size_t items_, annotators_;
  std::vector<std::optional<Label7>> cells_;
};

// Fraction of (item, annotator pair) triples with identical labels, counting
// only triples where both labels are present.
double pairwise_agreement(const AnnotationMatrix& matrix);

struct AlphaResult {
  double alpha = 1.0;
  // Set when every pairable label is identical, so expected disagreement is
  // zero and alpha is 1 by convention.
  bool no_expected_disagreement = false;
};

// Nominal Krippendorff's alpha via the coincidence matrix; items with fewer
// than two labels are not pairable and are skipped.
AlphaResult krippendorff_alpha(const AnnotationMatrix& matrix);

}  // namespace htdn
