#include "daslab/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "daslab/engine.hpp"
#include "daslab/errors.hpp"

namespace daslab {

std::size_t ClassHistogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

double PerClassAccuracy::rate(std::size_t cls) const {
  if (cls >= total.size() || total[cls] == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(correct[cls]) / static_cast<double>(total[cls]);
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw StructuralError("predictions and labels differ in length");
  if (labels.empty()) throw StructuralError("accuracy of an empty set is undefined");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

PerClassAccuracy per_class_accuracy(std::span<const int> predictions, std::span<const int> labels,
                                    std::size_t num_classes) {
  if (predictions.size() != labels.size()) throw StructuralError("predictions and labels differ in length");
  PerClassAccuracy out{std::vector<std::size_t>(num_classes, 0), std::vector<std::size_t>(num_classes, 0)};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw StructuralError("label " + std::to_string(y) + " out of range for " + std::to_string(num_classes) + " classes");
    }
    ++out.total[static_cast<std::size_t>(y)];
    if (predictions[i] == y) ++out.correct[static_cast<std::size_t>(y)];
  }
  return out;
}

ClassHistogram class_histogram(std::span<const std::size_t> selected, const Dataset& dataset) {
  ClassHistogram hist{std::vector<std::size_t>(static_cast<std::size_t>(std::max(dataset.num_classes, 0)), 0)};
  for (std::size_t idx : selected) {
    if (idx >= dataset.size()) throw StructuralError("selected index " + std::to_string(idx) + " out of range");
    ++hist.counts.at(static_cast<std::size_t>(dataset.examples[idx].label));
  }
  return hist;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_number(const std::string& text) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw MalformedFileError("bad number '" + text + "'");
  return v;
}

std::string steps_csv(const ExperimentLog& log, bool include_timing) {
  const std::size_t classes = log.histogram.counts.size();
  std::ostringstream out;
  out << "step,labeled_count,val_acc,test_acc";
  for (std::size_t c = 0; c < classes; ++c) out << ",acc_class_" << c;
  out << ",train_seconds,select_seconds\n";
  for (const auto& s : log.steps) {
    out << s.step << ',' << s.labeled_count << ',' << format_number(s.val_acc) << ',' << format_number(s.test_acc);
    for (std::size_t c = 0; c < classes; ++c) out << ',' << format_number(s.per_class_test.rate(c));
    out << ',' << format_number(include_timing ? s.train_seconds : 0.0) << ','
        << format_number(include_timing ? s.select_seconds : 0.0) << '\n';
  }
  return out.str();
}

std::string selections_csv(const ExperimentLog& log, const Dataset& pool) {
  std::ostringstream out;
  out << "step,index,true_class,strategy,score\n";
  for (const auto& s : log.steps) {
    for (const auto& r : s.selections) {
      out << r.step << ',' << r.index << ',' << pool.examples.at(r.index).label << ',' << to_string(r.strategy) << ',';
      if (r.score) out << format_number(*r.score);
      out << '\n';
    }
  }
  return out.str();
}

std::string histogram_csv(const ClassHistogram& histogram) {
  std::ostringstream out;
  out << "class,count\n";
  for (std::size_t c = 0; c < histogram.counts.size(); ++c) out << c << ',' << histogram.counts[c] << '\n';
  return out.str();
}

std::string timing_csv(const ExperimentLog& log) {
  std::ostringstream out;
  out << "step,train_seconds,select_seconds\n";
  for (const auto& s : log.steps) {
    out << s.step << ',' << format_number(s.train_seconds) << ',' << format_number(s.select_seconds) << '\n';
  }
  return out.str();
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(fields));
  }
  if (rows.empty()) throw MalformedFileError(path.string() + " has no header");
  return rows;
}

long long parse_int(const std::string& text) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) throw MalformedFileError("bad integer '" + text + "'");
  return v;
}

}  // namespace

void write_run_csv(const ExperimentLog& log, const Dataset& pool, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  write_text(dir / "steps.csv", steps_csv(log, !log.config.serial));
  write_text(dir / "selections.csv", selections_csv(log, pool));
  write_text(dir / "histogram.csv", histogram_csv(log.histogram));
  write_text(dir / "timing.csv", timing_csv(log));
  write_text(dir / "config.txt", format_config(log.config));
}

std::vector<StepRow> read_steps_csv(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  const auto& header = rows.front();
  if (header.size() < 6 || header[0] != "step") throw MalformedFileError(path.string() + " is not a steps.csv file");
  const std::size_t classes = header.size() - 6;
  std::vector<StepRow> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() != header.size()) throw MalformedFileError("row " + std::to_string(r) + " of " + path.string() + " has wrong width");
    StepRow row;
    row.step = static_cast<int>(parse_int(f[0]));
    row.labeled_count = static_cast<std::size_t>(parse_int(f[1]));
    row.val_acc = parse_number(f[2]);
    row.test_acc = parse_number(f[3]);
    for (std::size_t c = 0; c < classes; ++c) row.class_acc.push_back(parse_number(f[4 + c]));
    row.train_seconds = parse_number(f[4 + classes]);
    row.select_seconds = parse_number(f[5 + classes]);
    out.push_back(std::move(row));
  }
  return out;
}

ClassHistogram read_histogram_csv(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  ClassHistogram hist;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 2) throw MalformedFileError("bad histogram row in " + path.string());
    hist.counts.push_back(static_cast<std::size_t>(parse_int(rows[r][1])));
  }
  return hist;
}

std::vector<SelectionRow> read_selections_csv(const std::filesystem::path& path) {
  const auto rows = read_csv(path);
  std::vector<SelectionRow> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() != 5) throw MalformedFileError("bad selections row in " + path.string());
    out.push_back({static_cast<int>(parse_int(f[0])), static_cast<std::size_t>(parse_int(f[1])),
                   static_cast<int>(parse_int(f[2])), f[3], f[4]});
  }
  return out;
}

}  // namespace daslab
