#include "daslab/commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "daslab/engine.hpp"
#include "daslab/errors.hpp"
#include "daslab/metrics.hpp"
#include "daslab/model_spec.hpp"
#include "daslab/network.hpp"

namespace daslab {

// ---- run ------------------------------------------------------------------

namespace {

void print_step(std::ostream& out, const StepResult& s) {
  out << "step " << s.step << " labeled " << s.labeled_count << " val_acc " << std::fixed << std::setprecision(4)
      << s.val_acc << " test_acc " << s.test_acc << std::setprecision(2) << " train " << s.train_seconds
      << "s select " << s.select_seconds << "s" << std::defaultfloat << std::setprecision(6) << '\n'
      << std::flush;
}

}  // namespace

int cmd_run(const std::optional<std::filesystem::path>& config_path, const Settings& flags, std::ostream& out,
            std::ostream& err) {
  try {
    const Settings file = config_path ? read_settings_file(*config_path) : Settings{};
    const ExperimentConfig cfg = resolve_config(file, flags);
    validate(cfg);
    auto on_step = [&out](const StepResult& s) { print_step(out, s); };

    if (cfg.seed_list.empty()) {
      const auto log = run_experiment(cfg, on_step);
      if (log.stopped_early) out << "stopped early: unlabeled pool smaller than batch\n";
      return 0;
    }
    for (std::uint64_t seed : cfg.seed_list) {
      ExperimentConfig run_cfg = with_run_seed(cfg, seed);
      if (!cfg.out_dir.empty()) {
        run_cfg.out_dir = (std::filesystem::path(cfg.out_dir) / ("seed_" + std::to_string(seed))).string();
      }
      out << "seed " << seed << '\n';
      const auto log = run_experiment(run_cfg, on_step);
      if (log.stopped_early) out << "stopped early: unlabeled pool smaller than batch\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

// ---- grad-check -------------------------------------------------------------

double grad_check_threshold(const std::string& spec_name, Precision precision) {
  if (precision == Precision::wide && spec_name == "linear-softmax") return 1e-6;
  return 1e-3;
}

namespace {

struct GradProblem {
  ModelSpec spec;
  std::vector<double> batch;
  std::vector<int> labels;
};

// Smallest |pre-activation| entering any relu layer.
double kink_margin(const ModelSpec& spec, const std::vector<double>& batch, std::size_t n, std::uint64_t seed) {
  const auto params = init_params<double>(spec, seed);
  Rng masks(0);  // dropout sits after the relus, so the masks do not matter here
  const auto pass = forward(params, spec, std::span<const double>(batch), n, Mode::train, masks);
  double margin = INFINITY;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (!std::holds_alternative<ReluLayer>(spec.layers[i])) continue;
    for (double z : pass.trace->activations[i]) margin = std::min(margin, std::abs(z));
  }
  return margin;
}

// Random small problem. Inputs are redrawn until every relu pre-activation is
// farther from zero than a step of eps can move it (inputs lie in [0, 1]).
GradProblem make_grad_problem(const std::string& spec_name, std::uint64_t seed, double eps) {
  Rng rng(seed);
  auto pick = [&rng](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  const std::size_t side = pick(3, 5);
  const ImageShape input{pick(1, 3), side, side};
  const std::size_t classes = pick(2, 5);
  const std::size_t batch = pick(2, 4);
  GradProblem p{named_model_spec(spec_name, input, classes), {}, {}};
  std::uniform_real_distribution<double> pixel(0.0, 1.0);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    p.batch.resize(batch * input.size());
    for (auto& v : p.batch) v = pixel(rng);
    if (kink_margin(p.spec, p.batch, batch, seed) > 10.0 * eps) break;
  }
  for (std::size_t i = 0; i < batch; ++i) p.labels.push_back(static_cast<int>(pick(0, classes - 1)));
  return p;
}

}  // namespace

std::vector<GradCheckCase> grad_check_suite(const std::vector<std::string>& spec_names, std::size_t instances,
                                            std::uint64_t base_seed, double eps) {
  std::vector<GradCheckCase> cases;
  for (const auto& name : spec_names) {
    for (std::size_t i = 0; i < instances; ++i) {
      const std::uint64_t seed = base_seed + i;
      const GradProblem p = make_grad_problem(name, seed, eps);
      const std::size_t params = parameter_count(p.spec);

      GradCheckCase wide{name, Precision::wide, seed, params, 0.0, grad_check_threshold(name, Precision::wide)};
      wide.error = grad_check<double>(p.spec, p.batch, p.labels, seed, eps);
      cases.push_back(wide);

      GradCheckCase single{name, Precision::single, seed, params, 0.0,
                           grad_check_threshold(name, Precision::single)};
      single.error = grad_check_single(p.spec, p.batch, p.labels, seed, eps);
      cases.push_back(single);
    }
  }
  return cases;
}

int cmd_grad_check(const GradCheckOptions& options, std::ostream& out, std::ostream& err) {
  try {
    if (!(options.eps > 0.0)) throw ConfigError("--eps must be positive");
    std::vector<std::string> names;
    if (options.spec == "default") {
      names = {"linear-softmax", "conv-relu-dense"};
    } else if (options.spec == "linear-softmax" || options.spec == "conv-relu-dense") {
      names = {options.spec};
    } else {
      throw ConfigError("unknown grad-check spec '" + options.spec + "' (linear-softmax, conv-relu-dense)");
    }
    const auto cases = grad_check_suite(names, options.instances, options.seed, options.eps);
    bool ok = true;
    for (const auto& c : cases) {
      out << c.spec_name << ' ' << (c.precision == Precision::wide ? "double" : "float") << " seed " << c.seed
          << " params " << c.parameters << " error " << std::scientific << std::setprecision(3) << c.error
          << " threshold " << c.threshold << std::defaultfloat << (c.passed() ? " ok" : " FAIL") << '\n';
      ok = ok && c.passed();
    }
    out << (ok ? "all gradient checks passed\n" : "gradient check failed\n");
    return ok ? 0 : 1;
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  }
}

// ---- kcenter-verify ---------------------------------------------------------

KCenterInstance make_kcenter_instance(std::uint64_t seed, const KCenterLimits& limits) {
  Rng rng(seed);
  auto pick = [&rng](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  KCenterInstance inst;
  inst.seed = seed;
  const std::size_t m = pick(1, limits.max_points);
  inst.k = pick(0, std::min(limits.max_k, m));
  inst.points.dim = pick(1, limits.max_dim);
  // Half the instances sit on a coarse integer grid so duplicates and ties occur.
  const bool grid = pick(0, 1) == 1;
  std::uniform_real_distribution<double> coord(0.0, 1.0);
  for (std::size_t i = 0; i < m * inst.points.dim; ++i) {
    inst.points.values.push_back(grid ? static_cast<double>(pick(0, 3)) : coord(rng));
  }
  return inst;
}

namespace {

double point_distance(const FeatureMatrix& pts, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (std::size_t d = 0; d < pts.dim; ++d) {
    const double diff = pts.values[a * pts.dim + d] - pts.values[b * pts.dim + d];
    s += diff * diff;
  }
  return std::sqrt(s);
}

}  // namespace

double brute_force_kcenter_radius(const FeatureMatrix& points, std::size_t k) {
  const std::size_t m = points.rows();
  if (k == 0 || m == 0) return std::numeric_limits<double>::infinity();
  if (k >= m) return 0.0;
  std::vector<bool> chosen(m, false);
  std::fill(chosen.begin(), chosen.begin() + static_cast<std::ptrdiff_t>(k), true);
  double best = std::numeric_limits<double>::infinity();
  do {
    double radius = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
      double nearest = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < m; ++c) {
        if (chosen[c]) nearest = std::min(nearest, point_distance(points, p, c));
      }
      radius = std::max(radius, nearest);
    }
    best = std::min(best, radius);
  } while (std::prev_permutation(chosen.begin(), chosen.end()));
  return best;
}

double kcenter_ratio(const KCenterInstance& instance) {
  if (instance.k == 0) return 1.0;
  const auto picks = kcenter_greedy(instance.points, FeatureMatrix{instance.points.dim, {}}, instance.k);
  FeatureMatrix centers{instance.points.dim, {}};
  for (const auto& p : picks) {
    const auto row = instance.points.row(p.index);
    centers.values.insert(centers.values.end(), row.begin(), row.end());
  }
  const double greedy = kcenter_radius(instance.points, centers);
  const double optimal = brute_force_kcenter_radius(instance.points, instance.k);
  if (optimal == 0.0) return greedy == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return greedy / optimal;
}

int cmd_kcenter_verify(const KCenterVerifyOptions& options, std::ostream& out, std::ostream& err) {
  double worst = 1.0;
  std::uint64_t worst_seed = options.seed;
  std::vector<std::uint64_t> failing;
  for (std::size_t i = 0; i < options.instances; ++i) {
    const std::uint64_t seed = options.seed + i;
    const double ratio = kcenter_ratio(make_kcenter_instance(seed, options.limits));
    if (ratio > worst) {
      worst = ratio;
      worst_seed = seed;
    }
    if (ratio > 2.0 + 1e-9) failing.push_back(seed);
  }
  out << "instances " << options.instances << " worst ratio " << std::setprecision(6) << worst << " (seed "
      << worst_seed << ")\n";
  if (!failing.empty()) {
    err << "2-approximation violated for seed";
    for (auto s : failing) err << ' ' << s;
    err << '\n';
    return 1;
  }
  return 0;
}

// ---- report -----------------------------------------------------------------

namespace {

struct RunData {
  std::filesystem::path dir;
  ExperimentConfig config;
  std::vector<StepRow> steps;
  ClassHistogram histogram;
};

std::string protocol_signature(const ExperimentConfig& c) {
  std::ostringstream s;
  s << "steps=" << c.total_steps << " warmup=" << c.warmup_steps << " batch=" << c.batch_per_step
    << " epochs=" << c.epochs_per_step << " pool_sample=" << c.pool_sample_size
    << " lr=" << format_number(c.learning_rate) << " minibatch=" << c.minibatch_size
    << " split=" << c.split.train << '/' << c.split.validation << '/' << c.split.test
    << " model_spec=" << c.model_spec << " dataset=" << (c.dataset == DatasetSource::synthetic ? "synthetic" : "cifar10")
    << " dry_run=" << c.dry_run;
  return s.str();
}

struct Summary {
  double mean = 0.0, min = 0.0, max = 0.0;
};

Summary summarize(const std::vector<double>& v) {
  Summary s{0.0, v.front(), v.front()};
  for (double x : v) {
    s.mean += x;
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
  }
  s.mean /= static_cast<double>(v.size());
  return s;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

}  // namespace

void build_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir,
                  std::ostream& out) {
  if (run_dirs.empty()) throw ConfigError("report needs at least one run directory");
  std::vector<RunData> runs;
  for (const auto& dir : run_dirs) {
    RunData r{dir, resolve_config(read_settings_file(dir / "config.txt"), {}), read_steps_csv(dir / "steps.csv"),
              read_histogram_csv(dir / "histogram.csv")};
    runs.push_back(std::move(r));
  }
  const std::string reference = protocol_signature(runs.front().config);
  for (const auto& r : runs) {
    const std::string sig = protocol_signature(r.config);
    if (sig != reference) {
      throw ConfigError("runs disagree on protocol: " + run_dirs.front().string() + " has [" + reference + "] but " +
                        r.dir.string() + " has [" + sig + "]");
    }
  }

  std::map<Strategy, std::vector<const RunData*>> groups;
  for (const auto& r : runs) groups[r.config.strategy].push_back(&r);

  std::ostringstream curves;
  curves << "strategy,step,labeled_count,runs,test_acc_mean,test_acc_min,test_acc_max,val_acc_mean,val_acc_min,"
            "val_acc_max\n";
  out << "strategy  runs  final_test_acc mean [min, max]\n";
  for (const auto& [strategy, members] : groups) {
    const std::size_t rows = members.front()->steps.size();
    for (const auto* m : members) {
      if (m->steps.size() != rows) {
        throw ConfigError("runs for strategy " + std::string(to_string(strategy)) + " have different step counts (" +
                          members.front()->dir.string() + ": " + std::to_string(rows) + ", " + m->dir.string() +
                          ": " + std::to_string(m->steps.size()) + ")");
      }
    }
    for (std::size_t i = 0; i < rows; ++i) {
      std::vector<double> test, val;
      for (const auto* m : members) {
        test.push_back(m->steps[i].test_acc);
        val.push_back(m->steps[i].val_acc);
      }
      const auto t = summarize(test);
      const auto v = summarize(val);
      curves << to_string(strategy) << ',' << members.front()->steps[i].step << ','
             << members.front()->steps[i].labeled_count << ',' << members.size() << ',' << format_number(t.mean)
             << ',' << format_number(t.min) << ',' << format_number(t.max) << ',' << format_number(v.mean) << ','
             << format_number(v.min) << ',' << format_number(v.max) << '\n';
      if (i + 1 == rows) {
        out << std::left << std::setw(10) << to_string(strategy) << std::setw(6) << members.size() << std::fixed
            << std::setprecision(4) << t.mean << " [" << t.min << ", " << t.max << "]" << std::defaultfloat << '\n';
      }
    }
  }

  std::size_t classes = 0;
  for (const auto& r : runs) classes = std::max(classes, r.histogram.counts.size());
  std::ostringstream hist;
  hist << "class";
  for (const auto& [strategy, members] : groups) hist << ',' << to_string(strategy) << "_mean";
  hist << '\n';
  for (std::size_t c = 0; c < classes; ++c) {
    hist << c;
    for (const auto& [strategy, members] : groups) {
      double sum = 0.0;
      for (const auto* m : members) sum += c < m->histogram.counts.size() ? static_cast<double>(m->histogram.counts[c]) : 0.0;
      hist << ',' << format_number(sum / static_cast<double>(members.size()));
    }
    hist << '\n';
  }

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  write_file(out_dir / "curves.csv", curves.str());
  write_file(out_dir / "histogram_comparison.csv", hist.str());
  out << "wrote " << (out_dir / "curves.csv").string() << " and " << (out_dir / "histogram_comparison.csv").string()
      << '\n';
}

int cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir,
               std::ostream& out, std::ostream& err) {
  try {
    build_report(run_dirs, out_dir, out);
    return 0;
  } catch (const ConfigError& e) {
    err << "report error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace daslab
