#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace lpf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Class indices are 0-based. kUnlabeled marks a column that carries no label.
using ClassIndex = int;
inline constexpr ClassIndex kUnlabeled = -1;

using Rng = std::mt19937_64;

// One matrix per modality, indexed by index_of(Modality).
using ModalityPair = std::array<Matrix, 2>;

enum class Modality : int { kFirst = 0, kSecond = 1 };

inline constexpr int index_of(Modality m) { return static_cast<int>(m); }
inline constexpr std::string_view name_of(Modality m) {
  return m == Modality::kFirst ? "modality1" : "modality2";
}

/// Raised when matrix dimensions disagree with what an operation expects.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical precondition (finiteness, label range) fails.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Mixes a root seed with a stream name so independent components draw from
/// independent, reproducible sub-streams.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (const char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (h | 1ULL);  // splitmix64
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                                 std::uint64_t index) {
  return derive_seed(derive_seed(root, stream), std::to_string(index));
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// Gathers the listed columns of `source` into a new matrix.
inline Matrix gather_columns(const Matrix& source,
                             const std::vector<std::size_t>& columns) {
  Matrix out(source.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) =
        source.col(static_cast<Eigen::Index>(columns[j]));
  }
  return out;
}

}  // namespace lpf
