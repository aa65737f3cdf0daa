#include "lpf/data.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace lpf {

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(DataError::Kind::kMissingFile, "cannot open " + path.string());
  }
  return in;
}

std::string_view strip_comment(std::string_view line) {
  if (const auto hash = line.find('#'); hash != std::string_view::npos) {
    line = line.substr(0, hash);
  }
  return line;
}

// Splits on commas, tabs and spaces; empty cells are skipped.
std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  while (pos < line.size()) {
    const auto start = line.find_first_not_of(" \t,\r", pos);
    if (start == std::string_view::npos) break;
    auto end = line.find_first_of(" \t,\r", start);
    if (end == std::string_view::npos) end = line.size();
    cells.push_back(line.substr(start, end - start));
    pos = end;
  }
  return cells;
}

double parse_double(std::string_view cell, const std::filesystem::path& path,
                    std::size_t line_no) {
  // strtod handles the full textual range of doubles; from_chars for double
  // is not universally available.
  const std::string text(cell);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || text.empty() || errno == ERANGE) {
    throw DataError(DataError::Kind::kNonNumeric,
                    path.string() + ":" + std::to_string(line_no) + ": non-numeric cell '" +
                        text + "'",
                    line_no);
  }
  return v;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::kMissingFile, "cannot write " + path.string());
  out.precision(std::numeric_limits<double>::max_digits10);
  return out;
}

// Largest-remainder apportionment of round(fraction * total) across groups;
// ties in the remainder go to the lower group index.
std::vector<std::size_t> apportion(const std::vector<std::size_t>& counts, double fraction) {
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  const auto target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
  std::vector<std::size_t> take(counts.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    const double exact = fraction * static_cast<double>(counts[c]);
    take[c] = std::min(counts[c], static_cast<std::size_t>(std::floor(exact)));
    assigned += take[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (const auto& [rem, c] : remainders) {
    if (assigned >= target) break;
    if (take[c] < counts[c]) {
      ++take[c];
      ++assigned;
    }
  }
  return take;
}

// Stratified split over `classes` (ascending). Samples of other classes are
// left as kUnused.
Splits split_classes(const PairedDataset& ds, const SplitSpec& spec,
                     const std::vector<ClassIndex>& classes) {
  Splits splits;
  splits.assignment.assign(ds.size(), Partition::kUnused);
  splits.seen_classes = classes;

  std::map<ClassIndex, std::vector<std::size_t>> members;
  for (const auto c : classes) members[c];
  for (std::size_t j = 0; j < ds.size(); ++j) {
    if (auto it = members.find(ds.labels[j]); it != members.end()) it->second.push_back(j);
  }

  Rng rng(derive_seed(spec.seed, "split"));
  std::vector<std::size_t> counts;
  for (auto& [c, idx] : members) {
    std::shuffle(idx.begin(), idx.end(), rng);
    counts.push_back(idx.size());
  }

  const auto test = apportion(counts, spec.test_fraction);
  std::vector<std::size_t> remaining(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) remaining[i] = counts[i] - test[i];
  const auto labeled = apportion(remaining, spec.rho);
  const auto validation = apportion(labeled, spec.validation_fraction);

  std::size_t i = 0;
  for (const auto& [c, idx] : members) {
    if (labeled[i] < 2) {
      throw DataError(DataError::Kind::kInvalidSplit,
                      "class " + std::to_string(c) + " has " + std::to_string(labeled[i]) +
                          " labeled samples after the split; need at least 2");
    }
    std::size_t pos = 0;
    for (std::size_t k = 0; k < test[i]; ++k) splits.assignment[idx[pos++]] = Partition::kTest;
    for (std::size_t k = 0; k < validation[i]; ++k)
      splits.assignment[idx[pos++]] = Partition::kValidation;
    for (std::size_t k = validation[i]; k < labeled[i]; ++k)
      splits.assignment[idx[pos++]] = Partition::kTrain;
    while (pos < idx.size()) splits.assignment[idx[pos++]] = Partition::kUnlabeled;
    ++i;
  }
  return splits;
}

std::vector<ClassIndex> present_classes(const PairedDataset& ds) {
  std::vector<ClassIndex> classes(ds.labels.begin(), ds.labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  return classes;
}

}  // namespace

int PairedDataset::num_classes() const {
  if (labels.empty()) return 0;
  return *std::max_element(labels.begin(), labels.end()) + 1;
}

void PairedDataset::validate() const {
  const auto n = static_cast<Eigen::Index>(labels.size());
  if (features_1.cols() != n || features_2.cols() != n) {
    throw DataError(DataError::Kind::kCountMismatch,
                    "unaligned dataset: " + std::to_string(features_1.cols()) + " and " +
                        std::to_string(features_2.cols()) + " feature columns, " +
                        std::to_string(n) + " labels");
  }
  for (const auto l : labels) {
    if (l < 0) throw DataError(DataError::Kind::kCountMismatch, "negative label");
  }
}

std::string_view name_of(Partition p) {
  switch (p) {
    case Partition::kTrain: return "train";
    case Partition::kValidation: return "validation";
    case Partition::kUnlabeled: return "unlabeled";
    case Partition::kTest: return "test";
    case Partition::kUnused: return "unused";
  }
  return "unknown";
}

void SplitSpec::validate() const {
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must lie in (0, 1]");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation_fraction must lie in (0, 1)");
  }
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("test_fraction must lie in [0, 1)");
  }
  if (open_set && !(open_set->kappa >= 0.0)) {
    throw std::invalid_argument("kappa must be >= 0");
  }
}

std::vector<std::size_t> Splits::indices(Partition p) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < assignment.size(); ++j) {
    if (assignment[j] == p) out.push_back(j);
  }
  return out;
}

std::size_t Splits::count(Partition p) const {
  return static_cast<std::size_t>(std::count(assignment.begin(), assignment.end(), p));
}

Matrix load_matrix(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto cells = split_cells(strip_comment(line));
    if (cells.empty()) continue;
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto cell : cells) row.push_back(parse_double(cell, path, line_no));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DataError(DataError::Kind::kCountMismatch,
                      path.string() + ":" + std::to_string(line_no) + ": " +
                          std::to_string(row.size()) + " columns, expected " +
                          std::to_string(rows.front().size()),
                      line_no);
    }
    rows.push_back(std::move(row));
  }
  const auto cols = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
  Matrix m(static_cast<Eigen::Index>(rows.size()), cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
  }
  return m;
}

void save_matrix(const Matrix& m, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out << '\t';
      out << m(r, c);
    }
    out << '\n';
  }
}

std::vector<ClassIndex> load_labels(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<long long> raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto cells = split_cells(strip_comment(line));
    if (cells.empty()) continue;
    if (cells.size() != 1) {
      throw DataError(DataError::Kind::kCountMismatch,
                      path.string() + ":" + std::to_string(line_no) +
                          ": expected one label per line",
                      line_no);
    }
    long long v = 0;
    const auto cell = cells.front();
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
      throw DataError(DataError::Kind::kNonNumeric,
                      path.string() + ":" + std::to_string(line_no) + ": bad label '" +
                          std::string(cell) + "'",
                      line_no);
    }
    raw.push_back(v);
  }
  std::vector<long long> distinct = raw;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  std::vector<ClassIndex> labels;
  labels.reserve(raw.size());
  for (const auto v : raw) {
    labels.push_back(static_cast<ClassIndex>(
        std::lower_bound(distinct.begin(), distinct.end(), v) - distinct.begin()));
  }
  return labels;
}

void save_labels(const std::vector<ClassIndex>& labels, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const auto l : labels) out << l << '\n';
}

PairedDataset load_dataset(const std::filesystem::path& features_1,
                           const std::filesystem::path& features_2,
                           const std::filesystem::path& labels) {
  PairedDataset ds;
  ds.features_1 = load_matrix(features_1);
  ds.features_2 = load_matrix(features_2);
  ds.labels = load_labels(labels);
  ds.validate();
  return ds;
}

void save_dataset(const PairedDataset& ds, const std::filesystem::path& features_1,
                  const std::filesystem::path& features_2,
                  const std::filesystem::path& labels) {
  save_matrix(ds.features_1, features_1);
  save_matrix(ds.features_2, features_2);
  save_labels(ds.labels, labels);
}

NormalizedDataset zscore_normalize(const PairedDataset& ds, const Splits& splits) {
  const auto train = splits.indices(Partition::kTrain);
  if (train.empty()) throw std::invalid_argument("zscore_normalize: empty train partition");
  NormalizedDataset out{ds, {}};
  auto normalize = [&](Matrix& x, Vector& mean, Vector& stddev) {
    const Matrix t = gather_columns(x, train);
    mean = t.rowwise().mean();
    const Matrix centered = t.colwise() - mean;
    stddev = (centered.array().square().rowwise().sum() / static_cast<double>(t.cols()))
                 .sqrt()
                 .max(kStdFloor)
                 .matrix();
    x = ((x.colwise() - mean).array().colwise() / stddev.array()).matrix();
  };
  normalize(out.dataset.features_1, out.stats.mean_1, out.stats.std_1);
  normalize(out.dataset.features_2, out.stats.mean_2, out.stats.std_2);
  return out;
}

Splits make_splits(const PairedDataset& ds, const SplitSpec& spec) {
  spec.validate();
  ds.validate();
  return split_classes(ds, spec, present_classes(ds));
}

Splits make_open_set_splits(const PairedDataset& ds, const SplitSpec& spec) {
  spec.validate();
  ds.validate();
  if (!spec.open_set) throw std::invalid_argument("make_open_set_splits: no open-set spec");
  const auto& os = *spec.open_set;
  const auto all = present_classes(ds);

  std::vector<ClassIndex> unseen = os.unseen_classes;
  if (unseen.empty()) {
    if (os.unseen_class_count == 0 || os.unseen_class_count >= all.size()) {
      throw std::invalid_argument("open set needs between 1 and C-1 unseen classes");
    }
    std::vector<ClassIndex> pool = all;
    Rng rng(derive_seed(spec.seed, "open-set-classes"));
    std::shuffle(pool.begin(), pool.end(), rng);
    unseen.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(os.unseen_class_count));
  }
  std::sort(unseen.begin(), unseen.end());
  unseen.erase(std::unique(unseen.begin(), unseen.end()), unseen.end());
  std::vector<ClassIndex> seen;
  std::set_difference(all.begin(), all.end(), unseen.begin(), unseen.end(),
                      std::back_inserter(seen));
  if (seen.size() < 2 || seen.size() + unseen.size() != all.size()) {
    throw std::invalid_argument("open set: unseen classes must be a proper subset of the labels");
  }

  Splits splits = split_classes(ds, spec, seen);
  splits.unseen_classes = unseen;
  splits.requested_kappa = os.kappa;

  std::vector<std::size_t> outsiders;
  for (std::size_t j = 0; j < ds.size(); ++j) {
    if (std::binary_search(unseen.begin(), unseen.end(), ds.labels[j])) outsiders.push_back(j);
  }
  Rng rng(derive_seed(spec.seed, "open-set-pool"));
  std::shuffle(outsiders.begin(), outsiders.end(), rng);

  const std::size_t in_class = splits.count(Partition::kUnlabeled);
  const auto wanted =
      static_cast<std::size_t>(std::llround(os.kappa * static_cast<double>(in_class)));
  const std::size_t taken = std::min(wanted, outsiders.size());
  for (std::size_t k = 0; k < taken; ++k) splits.assignment[outsiders[k]] = Partition::kUnlabeled;
  splits.effective_kappa =
      in_class == 0 ? 0.0 : static_cast<double>(taken) / static_cast<double>(in_class);
  if (taken < wanted) {
    std::ostringstream msg;
    msg << "kappa capped: requested " << os.kappa << " (" << wanted
        << " out-of-class samples) but only " << outsiders.size()
        << " are available; effective kappa " << splits.effective_kappa;
    splits.warnings.push_back(msg.str());
  }
  return splits;
}

void save_splits(const Splits& splits, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "# index\tpartition\n";
  for (std::size_t j = 0; j < splits.assignment.size(); ++j) {
    out << j << '\t' << name_of(splits.assignment[j]) << '\n';
  }
}

void SynthSpec::validate() const {
  if (classes < 2) throw std::invalid_argument("synthetic data needs at least 2 classes");
  if (!(separation_1 > 0.0) || !(separation_2 > 0.0)) {
    throw std::invalid_argument("separation must be > 0");
  }
  if (noise < 0.0) throw std::invalid_argument("noise must be >= 0");
  if (dim_1 < 1 || dim_2 < 1 || per_class < 1) {
    throw std::invalid_argument("synthetic dimensions and counts must be >= 1");
  }
}

PairedDataset synth_generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "synth"));
  std::normal_distribution<double> unit(0.0, 1.0);
  auto draw = [&](Eigen::Index rows, Eigen::Index cols, double scale) {
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = scale * unit(rng);
    return m;
  };
  const Matrix anchors_1 = draw(spec.dim_1, spec.classes, spec.separation_1);
  const Matrix anchors_2 = draw(spec.dim_2, spec.classes, spec.separation_2);

  const auto n = static_cast<Eigen::Index>(spec.per_class) * spec.classes;
  PairedDataset ds;
  ds.features_1 = draw(spec.dim_1, n, spec.noise);
  ds.features_2 = draw(spec.dim_2, n, spec.noise);
  ds.labels.resize(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto c = static_cast<ClassIndex>(j / static_cast<Eigen::Index>(spec.per_class));
    ds.labels[static_cast<std::size_t>(j)] = c;
    ds.features_1.col(j) += anchors_1.col(c);
    ds.features_2.col(j) += anchors_2.col(c);
  }
  return ds;
}

}  // namespace lpf
