#include "lpf/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace lpf {

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

std::string fixed_or_dash(const std::optional<double>& v, int digits = 4) {
  return v ? fixed(*v, digits) : "-";
}

double parse_real(std::string_view key, std::string_view text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw std::invalid_argument(std::string(key) + ": expected a number, got '" +
                                std::string(text) + "'");
  }
  return v;
}

std::uint64_t parse_uint(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw std::invalid_argument(std::string(key) + ": expected a non-negative integer, got '" +
                                std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw std::invalid_argument(std::string(key) + ": expected true/false");
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<Mode> parse_modes(std::string_view key, std::string_view text) {
  std::vector<Mode> modes;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto item = trim(text.substr(pos, end - pos));
    if (!item.empty()) {
      const auto m = parse_mode(item);
      if (!m) {
        throw std::invalid_argument(std::string(key) + ": unknown mode '" + std::string(item) +
                                    "' (expected f, l or ss)");
      }
      if (std::find(modes.begin(), modes.end(), *m) == modes.end()) modes.push_back(*m);
    }
    pos = end + 1;
  }
  return modes;
}

struct Setting {
  const char* key;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define LPF_REAL(KEY, FIELD)                                                       \
  Setting {                                                                        \
    KEY, [](ExperimentConfig& c, std::string_view v) { c.FIELD = parse_real(KEY, v); }, \
        [](const ExperimentConfig& c) { return format_double(c.FIELD); }           \
  }
#define LPF_UINT(KEY, FIELD, TYPE)                                                 \
  Setting {                                                                        \
    KEY,                                                                           \
        [](ExperimentConfig& c, std::string_view v) {                              \
          c.FIELD = static_cast<TYPE>(parse_uint(KEY, v));                         \
        },                                                                         \
        [](const ExperimentConfig& c) { return std::to_string(c.FIELD); }          \
  }
#define LPF_PATH(KEY, FIELD)                                                       \
  Setting {                                                                        \
    KEY, [](ExperimentConfig& c, std::string_view v) { c.FIELD = std::string(v); }, \
        [](const ExperimentConfig& c) { return c.FIELD.string(); }                 \
  }

const std::vector<Setting>& settings() {
  static const std::vector<Setting> table = {
      LPF_UINT("experiment.seed", seed, std::uint64_t),
      LPF_UINT("experiment.repetitions", repetitions, std::size_t),
      Setting{"experiment.modes",
              [](ExperimentConfig& c, std::string_view v) {
                c.modes = parse_modes("experiment.modes", v);
              },
              [](const ExperimentConfig& c) {
                std::string s;
                for (const auto m : c.modes) {
                  if (!s.empty()) s += ",";
                  s += name_of(m);
                }
                return s;
              }},
      LPF_UINT("experiment.R", r, std::size_t),
      LPF_PATH("experiment.output_dir", output_dir),
      Setting{"data.source",
              [](ExperimentConfig& c, std::string_view v) {
                if (v == "synthetic") {
                  c.source = DataSource::kSynthetic;
                } else if (v == "files") {
                  c.source = DataSource::kFiles;
                } else {
                  throw std::invalid_argument("data.source: expected synthetic or files");
                }
              },
              [](const ExperimentConfig& c) {
                return std::string(c.source == DataSource::kSynthetic ? "synthetic" : "files");
              }},
      LPF_PATH("data.features_1", features_1),
      LPF_PATH("data.features_2", features_2),
      LPF_PATH("data.labels", labels),
      Setting{"data.normalize",
              [](ExperimentConfig& c, std::string_view v) {
                c.normalize = parse_bool("data.normalize", v);
              },
              [](const ExperimentConfig& c) { return std::string(c.normalize ? "true" : "false"); }},
      Setting{"synthetic.classes",
              [](ExperimentConfig& c, std::string_view v) {
                c.synth.classes = static_cast<int>(parse_uint("synthetic.classes", v));
              },
              [](const ExperimentConfig& c) { return std::to_string(c.synth.classes); }},
      LPF_UINT("synthetic.dim_1", synth.dim_1, Eigen::Index),
      LPF_UINT("synthetic.dim_2", synth.dim_2, Eigen::Index),
      LPF_UINT("synthetic.per_class", synth.per_class, std::size_t),
      LPF_REAL("synthetic.separation_1", synth.separation_1),
      LPF_REAL("synthetic.separation_2", synth.separation_2),
      LPF_REAL("synthetic.noise", synth.noise),
      LPF_REAL("split.rho", split.rho),
      LPF_REAL("split.validation_fraction", split.validation_fraction),
      LPF_REAL("split.test_fraction", split.test_fraction),
      LPF_UINT("split.unseen_classes", unseen_classes, std::size_t),
      LPF_REAL("split.kappa", kappa),
      LPF_UINT("network.hidden", lpf.hidden, Eigen::Index),
      LPF_REAL("network.dropout", lpf.dropout),
      LPF_REAL("loss.alpha_ce", lpf.weights.alpha_ce),
      LPF_REAL("loss.alpha_c", lpf.weights.alpha_c),
      LPF_REAL("loss.alpha_ent", lpf.weights.alpha_ent),
      LPF_REAL("loss.alpha_r", lpf.weights.alpha_r),
      LPF_REAL("optimizer.lr", lpf.learning_rate),
      LPF_UINT("optimizer.lr_decay_epoch", lpf.lr_decay_epoch, std::size_t),
      LPF_REAL("optimizer.lr_decay", lpf.lr_decay),
      LPF_UINT("optimizer.epochs", lpf.epochs, std::size_t),
      LPF_UINT("optimizer.patience", lpf.patience, std::size_t),
      LPF_UINT("optimizer.batch_size", lpf.batch_size, std::size_t),
      LPF_REAL("optimizer.center_lr_multiplier", lpf.center_lr_multiplier),
      LPF_REAL("optimizer.finetune_lr", lpf.finetune_learning_rate),
      LPF_UINT("optimizer.finetune_epochs", lpf.finetune_epochs, std::size_t),
      LPF_REAL("lpf.tau", lpf.tau),
      LPF_UINT("lpf.max_iterations", lpf.max_iterations, std::size_t),
      LPF_REAL("retriever.ridge", ridge),
  };
  return table;
}

#undef LPF_REAL
#undef LPF_UINT
#undef LPF_PATH

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<std::vector<std::string>> read_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  // 250 per class with a 20% test carve leaves 200 training samples per class.
  synth.per_class = 250;
  synth.separation_1 = 1.0;
  synth.separation_2 = 1.0;
  synth.noise = 1.0;
  split.test_fraction = 0.2;
}

void ExperimentConfig::validate() const {
  if (repetitions < 1) throw std::invalid_argument("experiment.repetitions must be >= 1");
  if (modes.empty()) throw std::invalid_argument("experiment.modes must not be empty");
  if (r < 1) throw std::invalid_argument("experiment.R must be >= 1");
  if (!(split.test_fraction > 0.0)) {
    throw std::invalid_argument("split.test_fraction must be > 0 to evaluate retrieval");
  }
  if (source == DataSource::kFiles &&
      (features_1.empty() || features_2.empty() || labels.empty())) {
    throw std::invalid_argument("data.source = files needs features_1, features_2 and labels");
  }
  if (source == DataSource::kSynthetic) synth.validate();
  if (kappa < 0.0) throw std::invalid_argument("split.kappa must be >= 0");
  split.validate();
  lpf.validate();
  if (!(ridge > 0.0)) throw std::invalid_argument("retriever.ridge must be > 0");
}

void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value) {
  value = trim(value);
  for (const auto& s : settings()) {
    if (key == s.key) {
      s.set(config, value);
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

ExperimentConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  ExperimentConfig config;
  for (const auto& [section, node] : tree) {
    if (node.empty()) {
      apply_setting(config, section, node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) {
      apply_setting(config, section + "." + key, leaf.data());
    }
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  return parse_config(in);
}

std::string to_ini(const ExperimentConfig& config) {
  std::ostringstream out;
  std::string current;
  for (const auto& s : settings()) {
    const std::string_view key = s.key;
    const auto dot = key.find('.');
    const std::string section(key.substr(0, dot));
    if (section != current) {
      if (!current.empty()) out << '\n';
      out << '[' << section << "]\n";
      current = section;
    }
    out << key.substr(dot + 1) << " = " << s.get(config) << '\n';
  }
  return out.str();
}

const MapReport* RepetitionResult::map_for(Mode m) const {
  for (const auto& rep : maps) {
    if (rep.mode == m) return &rep;
  }
  return nullptr;
}

PairedDataset prepare_dataset(const ExperimentConfig& config) {
  if (config.source == DataSource::kFiles) {
    return load_dataset(config.features_1, config.features_2, config.labels);
  }
  SynthSpec spec = config.synth;
  spec.seed = derive_seed(config.seed, "synth");
  return synth_generate(spec);
}

RepetitionResult run_repetition(const ExperimentConfig& config, const PairedDataset& raw,
                                std::size_t repetition) {
  RepetitionResult out;
  out.repetition = repetition;
  out.seed = derive_seed(config.seed, "repetition", repetition);

  SplitSpec spec = config.split;
  spec.seed = derive_seed(out.seed, "splits");
  Splits splits;
  if (config.unseen_classes > 0) {
    spec.open_set = OpenSetSpec{config.unseen_classes, {}, config.kappa};
    splits = make_open_set_splits(raw, spec);
  } else {
    splits = make_splits(raw, spec);
  }
  out.effective_kappa = splits.effective_kappa;
  out.warnings = splits.warnings;

  const PairedDataset ds = config.normalize ? zscore_normalize(raw, splits).dataset : raw;
  const LpfInput input = make_lpf_input(ds, splits);
  const int num_classes = input.num_classes;
  out.labeled_count = input.train_labels.size() + input.validation_labels.size();
  out.unlabeled_count = input.unlabeled_truth.size();

  const auto test_idx = splits.indices(Partition::kTest);
  ModalityPair test;
  std::vector<ClassIndex> test_labels;
  for (const auto j : test_idx) {
    const auto& seen = splits.seen_classes;
    test_labels.push_back(static_cast<ClassIndex>(
        std::lower_bound(seen.begin(), seen.end(), ds.labels[j]) - seen.begin()));
  }
  for (std::size_t t = 0; t < 2; ++t) {
    test[t] = gather_columns(ds.features(static_cast<Modality>(t)), test_idx);
  }

  auto concat = [](const Matrix& a, const Matrix& b) {
    Matrix m(a.rows(), a.cols() + b.cols());
    m << a, b;
    return m;
  };
  auto labeled_features = [&](std::size_t t) {
    return concat(input.train[t], input.validation[t]);
  };
  std::vector<ClassIndex> labeled_labels = input.train_labels;
  labeled_labels.insert(labeled_labels.end(), input.validation_labels.begin(),
                        input.validation_labels.end());

  for (const auto mode : config.modes) {
    ModalityPair features;
    std::vector<ClassIndex> labels;
    switch (mode) {
      case Mode::kFull: {
        // Every in-class training sample with its true label.
        std::vector<std::size_t> in_class;
        labels = labeled_labels;
        for (std::size_t j = 0; j < input.unlabeled_truth.size(); ++j) {
          if (input.unlabeled_truth[j] >= 0) {
            in_class.push_back(j);
            labels.push_back(input.unlabeled_truth[j]);
          }
        }
        for (std::size_t t = 0; t < 2; ++t) {
          features[t] = concat(labeled_features(t), gather_columns(input.unlabeled[t], in_class));
        }
        break;
      }
      case Mode::kLabeled: {
        labels = labeled_labels;
        for (std::size_t t = 0; t < 2; ++t) features[t] = labeled_features(t);
        break;
      }
      case Mode::kSemiSupervised: {
        LpfConfig lpf_config = config.lpf;
        lpf_config.seed = derive_seed(out.seed, "lpf");
        const LpfResult lpf = run_lpf(input, lpf_config);
        out.history = lpf.pool.history;
        out.pool_size = lpf.pool.selected_indices.size();
        if (!out.history.empty()) {
          out.pool_accuracy = out.history.back().pool_accuracy;
          out.out_of_class = out.history.back().out_of_class;
        }
        // Expanded set [X^tr, X^ul selected] plus the validation pairs, so ss
        // sees every label l does.
        labels = lpf.expanded_labels;
        labels.insert(labels.end(), input.validation_labels.begin(),
                      input.validation_labels.end());
        for (std::size_t t = 0; t < 2; ++t) {
          features[t] = concat(lpf.expanded_features[t], input.validation[t]);
        }
        break;
      }
    }
    const auto retriever = fit_linear_label_retriever(features, labels, num_classes, config.ridge);
    out.maps.push_back(evaluate_retrieval(retriever, test, test_labels, config.r, mode));
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentResult result;
  result.config = config;
  const PairedDataset ds = prepare_dataset(config);
  for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
    try {
      result.repetitions.push_back(run_repetition(config, ds, rep));
    } catch (const std::exception& e) {
      throw std::runtime_error("repetition " + std::to_string(rep) + ": " + e.what());
    }
  }
  return result;
}

std::vector<SelectionRow> selection_rows(const std::vector<IterationRecord>& history) {
  std::vector<SelectionRow> rows;
  rows.reserve(history.size());
  for (const auto& rec : history) {
    rows.push_back({rec.iteration, rec.pool_size, rec.pool_accuracy});
  }
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

void write_report(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "config.ini", to_ini(result.config));

  std::ostringstream map;
  map << "mode\tdirection\tR\tmap\tseed\n";
  std::ostringstream hist;
  hist << "seed\titeration\tcf_1\tcf_2\tactive\tselected\taccuracy\tout_of_class"
          "\tunlabeled_acc_1\tunlabeled_acc_2\n";
  std::ostringstream per_class;
  per_class << "seed\titeration\tmodality\tclass\taccuracy\n";
  std::ostringstream sel;
  sel << "seed\tlabeled\tunlabeled\teffective_kappa\tpool_size\tpool_accuracy\tout_of_class\n";

  for (const auto& rep : result.repetitions) {
    for (const auto& m : rep.maps) {
      map << name_of(m.mode) << "\ti2t\t" << m.r << '\t' << fixed(m.map_i2t, 6) << '\t'
          << rep.seed << '\n';
      map << name_of(m.mode) << "\tt2i\t" << m.r << '\t' << fixed(m.map_t2i, 6) << '\t'
          << rep.seed << '\n';
    }
    for (const auto& h : rep.history) {
      hist << rep.seed << '\t' << h.iteration << '\t' << fixed(h.cf_1) << '\t' << fixed(h.cf_2)
           << '\t' << (h.active == Modality::kFirst ? 1 : 2) << '\t' << h.pool_size << '\t'
           << fixed_or_dash(h.pool_accuracy) << '\t' << h.out_of_class << '\t'
           << fixed_or_dash(h.unlabeled_accuracy[0]) << '\t'
           << fixed_or_dash(h.unlabeled_accuracy[1]) << '\n';
      for (std::size_t t = 0; t < 2; ++t) {
        for (std::size_t k = 0; k < h.per_class_accuracy[t].size(); ++k) {
          per_class << rep.seed << '\t' << h.iteration << '\t' << t + 1 << '\t' << k << '\t'
                    << fixed_or_dash(h.per_class_accuracy[t][k]) << '\n';
        }
      }
    }
    sel << rep.seed << '\t' << rep.labeled_count << '\t' << rep.unlabeled_count << '\t'
        << fixed(rep.effective_kappa) << '\t' << rep.pool_size << '\t'
        << fixed_or_dash(rep.pool_accuracy) << '\t' << rep.out_of_class << '\n';
  }
  write_file(dir / "map.tsv", map.str());
  write_file(dir / "history.tsv", hist.str());
  write_file(dir / "per_class.tsv", per_class.str());
  write_file(dir / "selection.tsv", sel.str());

  std::string summary = render_report(dir);
  for (const auto& rep : result.repetitions) {
    for (const auto& w : rep.warnings) summary += "warning (seed " + std::to_string(rep.seed) + "): " + w + "\n";
  }
  write_file(dir / "summary.txt", summary);
}

std::string render_report(const std::filesystem::path& dir) {
  std::ostringstream out;

  // (mode, direction) -> MAP values across repetitions, in first-seen order.
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<double>> maps;
  std::string r_value = "?";
  for (const auto& row : read_tsv(dir / "map.tsv")) {
    if (row.size() < 5) throw std::runtime_error("map.tsv: malformed row");
    const auto key = std::make_pair(row[0], row[1]);
    if (!maps.count(key)) order.push_back(key);
    maps[key].push_back(std::stod(row[3]));
    r_value = row[2];
  }
  out << "Retrieval MAP@" << r_value << "\n";
  out << std::left << std::setw(6) << "mode" << std::setw(11) << "direction" << std::setw(6)
      << "runs" << std::setw(10) << "mean" << "median\n";
  for (const auto& key : order) {
    const auto& v = maps[key];
    double mean = 0.0;
    for (const double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    out << std::setw(6) << key.first << std::setw(11) << key.second << std::setw(6) << v.size()
        << std::setw(10) << fixed(mean) << fixed(median(v)) << '\n';
  }

  const auto hist = read_tsv(dir / "history.tsv");
  if (!hist.empty()) {
    std::map<std::size_t, std::vector<double>> counts, accs;
    for (const auto& row : hist) {
      if (row.size() < 8) throw std::runtime_error("history.tsv: malformed row");
      const auto it = static_cast<std::size_t>(std::stoul(row[1]));
      counts[it].push_back(std::stod(row[5]));
      if (row[6] != "-") accs[it].push_back(std::stod(row[6]));
      else accs[it];
    }
    out << "\nPseudo-label selection per iteration (median over runs)\n";
    out << std::setw(11) << "iteration" << std::setw(6) << "runs" << std::setw(10)
        << "selected" << "accuracy\n";
    for (const auto& [it, c] : counts) {
      const auto& a = accs[it];
      out << std::setw(11) << it << std::setw(6) << c.size() << std::setw(10)
          << fixed(median(c), 1) << (a.empty() ? std::string("-") : fixed(median(a))) << '\n';
    }
  }

  const auto sel = read_tsv(dir / "selection.tsv");
  bool open_set = false;
  for (const auto& row : sel) open_set = open_set || (row.size() >= 7 && row[6] != "0") ||
                                         (row.size() >= 4 && std::stod(row[3]) > 0.0);
  if (open_set) {
    out << "\nOpen-set contamination\n";
    out << std::setw(22) << "seed" << std::setw(10) << "kappa" << std::setw(8) << "pool"
        << std::setw(10) << "accuracy" << "out_of_class\n";
    for (const auto& row : sel) {
      out << std::setw(22) << row[0] << std::setw(10) << row[3] << std::setw(8) << row[4]
          << std::setw(10) << row[5] << row[6] << '\n';
    }
  }
  return out.str();
}

}  // namespace lpf
