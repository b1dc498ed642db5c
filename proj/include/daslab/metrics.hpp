#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "daslab/data.hpp"

namespace daslab {

struct ExperimentLog;

struct ClassHistogram {
  std::vector<std::size_t> counts;

  std::size_t total() const;
};

struct PerClassAccuracy {
  std::vector<std::size_t> correct;
  std::vector<std::size_t> total;

  /// NaN for classes with no examples.
  double rate(std::size_t cls) const;
};

/// Fraction of positions where prediction equals label.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

PerClassAccuracy per_class_accuracy(std::span<const int> predictions, std::span<const int> labels,
                                    std::size_t num_classes);

ClassHistogram class_histogram(std::span<const std::size_t> selected, const Dataset& dataset);

/// Shortest text that parses back to exactly `v` ("nan" for NaN).
std::string format_number(double v);
double parse_number(const std::string& text);

/// CSV bodies; write_run_csv puts them in steps.csv, selections.csv,
/// histogram.csv plus config.txt and timing.csv. With include_timing false the
/// steps.csv timing columns are written as 0 so reruns compare byte-for-byte.
std::string steps_csv(const ExperimentLog& log, bool include_timing);
std::string selections_csv(const ExperimentLog& log, const Dataset& pool);
std::string histogram_csv(const ClassHistogram& histogram);
std::string timing_csv(const ExperimentLog& log);

void write_run_csv(const ExperimentLog& log, const Dataset& pool, const std::filesystem::path& dir);

/// One parsed steps.csv row.
struct StepRow {
  int step = 0;
  std::size_t labeled_count = 0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  std::vector<double> class_acc;
  double train_seconds = 0.0;
  double select_seconds = 0.0;
};

std::vector<StepRow> read_steps_csv(const std::filesystem::path& path);
ClassHistogram read_histogram_csv(const std::filesystem::path& path);

struct SelectionRow {
  int step = 0;
  std::size_t index = 0;
  int true_class = 0;
  std::string strategy;
  std::string score;
};

std::vector<SelectionRow> read_selections_csv(const std::filesystem::path& path);

}  // namespace daslab
