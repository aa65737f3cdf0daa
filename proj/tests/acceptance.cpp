// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. Artifacts go to argv[1] (default
// ./acceptance_out).

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lpf/checks.hpp"
#include "lpf/experiment.hpp"

namespace fs = std::filesystem;
using namespace lpf;

namespace {

constexpr std::uint64_t kSeed = 1;
constexpr double kMaxSecondsPerSeed = 300.0;

struct Outcome {
  bool passed = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::cout << (o.passed ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail
            << std::endl;
  if (!o.passed) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct TimedRun {
  ExperimentResult result;
  std::vector<double> seconds;  // per repetition
};

TimedRun run_timed(const ExperimentConfig& config) {
  config.validate();
  TimedRun run;
  run.result.config = config;
  const PairedDataset ds = prepare_dataset(config);
  for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
    const auto start = std::chrono::steady_clock::now();
    run.result.repetitions.push_back(run_repetition(config, ds, rep));
    run.seconds.push_back(seconds_since(start));
  }
  return run;
}

// Median over repetitions of the direction-averaged MAP.
double median_map(const ExperimentResult& r, Mode mode) {
  std::vector<double> v;
  for (const auto& rep : r.repetitions) {
    const auto* m = rep.map_for(mode);
    v.push_back(0.5 * (m->map_i2t + m->map_t2i));
  }
  return median(v);
}

double median_direction(const ExperimentResult& r, Mode mode, bool i2t) {
  std::vector<double> v;
  for (const auto& rep : r.repetitions) {
    const auto* m = rep.map_for(mode);
    v.push_back(i2t ? m->map_i2t : m->map_t2i);
  }
  return median(v);
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig benchmark() {
  ExperimentConfig c;
  c.seed = kSeed;
  c.repetitions = 5;
  c.modes = {Mode::kFull, Mode::kLabeled, Mode::kSemiSupervised};
  c.r = 50;
  return c;
}

Outcome selection_pattern(const TimedRun& run) {
  std::map<std::size_t, std::vector<double>> accuracy;
  bool grows = true;
  std::ostringstream pools;
  for (const auto& rep : run.result.repetitions) {
    const auto& h = rep.history;
    if (h.empty()) return {false, "no LPF iterations recorded"};
    for (const auto& rec : h) {
      accuracy[rec.iteration].push_back(rec.pool_accuracy.value_or(0.0));
    }
    grows = grows && h.back().pool_size >= h.front().pool_size;
    pools << ' ' << h.front().pool_size << "->" << h.back().pool_size;
  }
  double worst = 1.0;
  for (const auto& [it, acc] : accuracy) worst = std::min(worst, median(acc));
  const double slowest = *std::max_element(run.seconds.begin(), run.seconds.end());
  Outcome o;
  o.passed = worst >= 0.9 && grows && slowest < kMaxSecondsPerSeed;
  o.detail = "min per-iteration median accuracy " + fmt(worst) + " (>= 0.9); pool first->final" +
             pools.str() + "; slowest seed " + fmt(slowest, 1) + " s (< 300)";
  return o;
}

Outcome map_pattern(const TimedRun& run) {
  const auto& r = run.result;
  const double f = median_map(r, Mode::kFull);
  const double l = median_map(r, Mode::kLabeled);
  const double ss = median_map(r, Mode::kSemiSupervised);
  Outcome o;
  o.passed = ss > l && f >= ss && ss - l >= 0.02;
  std::ostringstream d;
  d << "median MAP@50 f=" << fmt(f) << " l=" << fmt(l) << " ss=" << fmt(ss)
    << " ss-l=" << fmt(ss - l) << " (>= 0.02); i2t f/l/ss "
    << fmt(median_direction(r, Mode::kFull, true)) << '/'
    << fmt(median_direction(r, Mode::kLabeled, true)) << '/'
    << fmt(median_direction(r, Mode::kSemiSupervised, true)) << ", t2i f/l/ss "
    << fmt(median_direction(r, Mode::kFull, false)) << '/'
    << fmt(median_direction(r, Mode::kLabeled, false)) << '/'
    << fmt(median_direction(r, Mode::kSemiSupervised, false));
  o.detail = d.str();
  return o;
}

Outcome switching() {
  ExperimentConfig c = benchmark();
  c.repetitions = 3;
  c.modes = {Mode::kSemiSupervised};
  c.synth.separation_1 = 1.0;
  c.synth.separation_2 = 1.0 / 3.0;
  c.lpf.max_iterations = 1;
  const auto run = run_timed(c);
  Outcome o{true, ""};
  std::ostringstream d;
  for (const auto& rep : run.result.repetitions) {
    const auto& first = rep.history.front();
    const bool ok = first.active == Modality::kFirst && first.cf_1 > first.cf_2;
    o.passed = o.passed && ok;
    if (rep.repetition > 0) d << "; ";
    d << "seed " << rep.repetition << ": cf_1=" << fmt(first.cf_1) << " cf_2=" << fmt(first.cf_2)
      << " active=" << (first.active == Modality::kFirst ? 1 : 2);
  }
  o.detail = d.str();
  return o;
}

Outcome open_set(const fs::path& out) {
  ExperimentConfig c = benchmark();
  c.modes = {Mode::kSemiSupervised};
  c.unseen_classes = 3;
  c.kappa = 1.5;
  const auto open = run_timed(c);
  write_report(open.result, out / "open_set_kappa_1.5");
  c.kappa = 0.0;
  const auto closed = run_timed(c);
  write_report(closed.result, out / "open_set_kappa_0");

  std::vector<double> contamination;
  double effective = 0.0;
  for (const auto& rep : open.result.repetitions) {
    contamination.push_back(static_cast<double>(rep.out_of_class));
    effective = rep.effective_kappa;
  }
  const double with = median_map(open.result, Mode::kSemiSupervised);
  const double without = median_map(closed.result, Mode::kSemiSupervised);
  const double min_contamination = *std::min_element(contamination.begin(), contamination.end());
  Outcome o;
  o.passed = min_contamination > 0.0 && with < without;
  o.detail = "median out-of-class in pool " + fmt(median(contamination), 0) + " (min " +
             fmt(min_contamination, 0) + ", > 0); median MAP(ss) kappa=1.5 " + fmt(with) +
             " < kappa=0 " + fmt(without) + "; effective kappa " + fmt(effective);
  return o;
}

Outcome determinism(const ExperimentResult& first, const fs::path& out) {
  const auto second = run_experiment(first.config);
  write_report(first, out / "determinism_a");
  write_report(second, out / "determinism_b");
  std::vector<std::string> differing;
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(out / "determinism_a")) {
    const auto name = entry.path().filename();
    ++compared;
    if (slurp(entry.path()) != slurp(out / "determinism_b" / name)) {
      differing.push_back(name.string());
    }
  }
  Outcome o;
  o.passed = compared > 0 && differing.empty();
  o.detail = std::to_string(compared) + " report files compared";
  for (const auto& d : differing) o.detail += ", differs: " + d;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
  fs::remove_all(out);
  fs::create_directories(out);

  {
    const auto start = std::chrono::steady_clock::now();
    const auto c = checks::gradient_oracle(kSeed);
    const double secs = seconds_since(start);
    report(1, "gradient oracle", {c.passed && secs < 10.0, c.detail + "; " + fmt(secs, 3) + " s"});
  }
  {
    const auto c = checks::loss_fixed_points();
    report(2, "loss fixed points", {c.passed, c.detail});
  }
  {
    const auto c = checks::map_oracle(kSeed);
    report(3, "MAP oracle", {c.passed, c.detail});
  }
  {
    const auto c = checks::selection_properties(kSeed, 1200);
    report(4, "selection properties", {c.passed, c.detail});
  }

  const auto main_run = run_timed(benchmark());
  write_report(main_run.result, out / "benchmark");
  report(5, "selection pattern", selection_pattern(main_run));
  report(6, "retrieval pattern", map_pattern(main_run));
  report(7, "modality switching", switching());
  report(8, "open-set degradation", open_set(out));
  report(9, "determinism", determinism(main_run.result, out));

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
