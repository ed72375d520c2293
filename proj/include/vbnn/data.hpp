#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vbnn/metrics.hpp"
#include "vbnn/model.hpp"

namespace vbnn {

enum class ColumnKind { numeric, categorical_binary, label };
enum class Normalization { none, zscore, minmax01 };

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  Normalization normalization = Normalization::none;
  bool fitted = false;
  // zscore: (center, scale) = (mean, sd); minmax01: (min, max - min).
  double center = 0.0;
  double scale = 1.0;
};

/// Ordered column list; exactly one label column.
struct Schema {
  std::vector<ColumnSchema> columns;

  void validate() const;
  std::size_t feature_count() const;
  std::size_t label_index() const;
  bool fitted() const;
  /// True when every normalized feature column maps into [0,1] (or is left as is).
  bool unit_cube_compatible() const;

  /// All-numeric features x1..xp with the given normalization, then a label "y".
  static Schema numeric(std::size_t p, Normalization normalization, std::string label = "y");
};

struct CsvOptions {
  /// Allow the label column to be absent (prediction inputs); labels then read as 0.
  bool label_optional = false;
};

struct CsvData {
  LabeledBatch batch;  // features in file order, still in raw units
  bool has_labels = true;
};

/// Reads a comma-separated file with a header row. Feature columns are
/// matched by name. Empty/NA/NaN cells are rejected with the list of
/// offending line numbers.
CsvData read_csv(const std::filesystem::path& path, const Schema& schema, CsvOptions options = {});

/// Fits normalization stats on the given rows (all rows when empty).
Schema fit_schema(const LabeledBatch& raw, Schema schema, std::span<const std::size_t> rows = {});

struct NormalizeResult {
  LabeledBatch batch;
  /// minmax01 entries that fell outside [0, 1] (test rows beyond the fit range).
  std::size_t out_of_range = 0;
};

NormalizeResult normalize(const LabeledBatch& raw, const Schema& schema);
LabeledBatch denormalize(const LabeledBatch& normalized, const Schema& schema);

struct LoadedData {
  LabeledBatch batch;  // raw units
  Schema schema;       // fitted on the loaded rows unless already fitted
  bool has_labels = true;
};

LoadedData load_csv(const std::filesystem::path& path, const Schema& schema, CsvOptions options = {});

void write_csv(const std::filesystem::path& path, const LabeledBatch& batch, const Schema& schema);
std::string to_csv(const LabeledBatch& batch, const Schema& schema);

// ---------------------------------------------------------------------------

enum class SplitKind { holdout, kfold };

struct SplitSpec {
  SplitKind kind = SplitKind::kfold;
  double train_fraction = 0.7;
  std::size_t k = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

/// Holdout gives one fold with round(train_fraction * n) training rows; kfold
/// gives k disjoint test folds whose sizes differ by at most one.
std::vector<Fold> split(std::size_t n, const SplitSpec& spec);

LabeledBatch subset(const LabeledBatch& batch, std::span<const std::size_t> rows);

/// x ~ U[0,1]^p, y ~ Bernoulli(sigma(eta0(x))).
LabeledBatch generate_synthetic(const TrueFunction& truth, std::size_t n, std::uint64_t seed);

/// FNV-1a over the IEEE-754 bit patterns of the features and the labels.
std::uint64_t dataset_checksum(const LabeledBatch& batch);

}  // namespace vbnn
