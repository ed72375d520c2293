#include "vbnn/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "vbnn/numeric.hpp"
#include "vbnn/rng.hpp"

namespace vbnn {
namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string_view rest(line);
  while (true) {
    const auto comma = rest.find(',');
    fields.push_back(trim(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return fields;
}

bool is_missing(const std::string& cell) {
  std::string lower(cell);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return lower.empty() || lower == "na" || lower == "nan" || lower == "null";
}

std::optional<double> parse_double(const std::string& cell) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string join_lines(const std::vector<std::size_t>& lines) {
  std::ostringstream os;
  const std::size_t shown = std::min<std::size_t>(lines.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) os << (i ? ", " : "") << lines[i];
  if (lines.size() > shown) os << ", ... (" << lines.size() << " rows)";
  return os.str();
}

std::vector<std::size_t> feature_columns(const Schema& schema) {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    if (schema.columns[c].kind != ColumnKind::label) out.push_back(c);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void Schema::validate() const {
  std::size_t labels = 0;
  for (const auto& col : columns) {
    if (col.name.empty()) throw DataError("schema column without a name");
    if (col.kind == ColumnKind::label) ++labels;
    if (col.kind != ColumnKind::numeric && col.normalization != Normalization::none) {
      throw DataError("column '" + col.name + "': only numeric columns can be normalized");
    }
    if (col.fitted && (!std::isfinite(col.center) || !std::isfinite(col.scale) || !(col.scale > 0.0))) {
      throw DataError("column '" + col.name + "': fitted statistics must be finite with positive spread");
    }
  }
  if (labels != 1) throw DataError("schema must contain exactly one label column");
  if (feature_count() == 0) throw DataError("schema must contain at least one feature column");
}

std::size_t Schema::feature_count() const { return columns.size() - (columns.empty() ? 0 : 1); }

std::size_t Schema::label_index() const {
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c].kind == ColumnKind::label) return c;
  }
  throw DataError("schema has no label column");
}

bool Schema::fitted() const {
  return std::all_of(columns.begin(), columns.end(), [](const ColumnSchema& c) {
    return c.normalization == Normalization::none || c.fitted;
  });
}

bool Schema::unit_cube_compatible() const {
  return std::none_of(columns.begin(), columns.end(), [](const ColumnSchema& c) {
    return c.normalization == Normalization::zscore;
  });
}

Schema Schema::numeric(std::size_t p, Normalization normalization, std::string label) {
  Schema schema;
  for (std::size_t i = 0; i < p; ++i) {
    schema.columns.push_back({"x" + std::to_string(i + 1), ColumnKind::numeric, normalization});
  }
  schema.columns.push_back({std::move(label), ColumnKind::label, Normalization::none});
  return schema;
}

CsvData read_csv(const std::filesystem::path& path, const Schema& schema, CsvOptions options) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("data file has no header row: " + path.string());
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const std::vector<std::string> header = split_line(line);

  // schema column -> csv field index
  std::vector<std::optional<std::size_t>> where(schema.columns.size());
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto it = std::find(header.begin(), header.end(), schema.columns[c].name);
    if (it != header.end()) where[c] = static_cast<std::size_t>(it - header.begin());
    const bool is_label = schema.columns[c].kind == ColumnKind::label;
    if (!where[c] && !(is_label && options.label_optional)) {
      throw DataError("column '" + schema.columns[c].name + "' not found in header of " + path.string());
    }
  }
  const std::size_t label_col = schema.label_index();
  const bool has_labels = where[label_col].has_value();
  const std::vector<std::size_t> features = feature_columns(schema);

  std::vector<double> x;
  std::vector<std::uint8_t> y;
  std::vector<std::size_t> missing;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != header.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, found " + std::to_string(fields.size()));
    }
    bool row_missing = false;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      if (where[c] && is_missing(fields[*where[c]])) row_missing = true;
    }
    if (row_missing) {
      missing.push_back(line_no);
      continue;
    }
    for (std::size_t c : features) {
      const auto& cell = fields[*where[c]];
      const auto value = parse_double(cell);
      if (!value) {
        throw DataError("line " + std::to_string(line_no) + ": column '" + schema.columns[c].name +
                        "' is not a number: '" + cell + "'");
      }
      if (schema.columns[c].kind == ColumnKind::categorical_binary && *value != 0.0 && *value != 1.0) {
        throw DataError("line " + std::to_string(line_no) + ": column '" + schema.columns[c].name +
                        "' must be 0 or 1");
      }
      x.push_back(*value);
    }
    if (has_labels) {
      const auto& cell = fields[*where[label_col]];
      const auto value = parse_double(cell);
      if (!value || (*value != 0.0 && *value != 1.0)) {
        throw DataError("line " + std::to_string(line_no) + ": label '" + cell + "' is not 0 or 1");
      }
      y.push_back(static_cast<std::uint8_t>(*value));
    } else {
      y.push_back(0);
    }
  }
  if (!missing.empty()) {
    throw DataError("missing values in " + path.string() + " at lines " + join_lines(missing));
  }
  return {LabeledBatch(features.size(), std::move(x), std::move(y)), has_labels};
}

Schema fit_schema(const LabeledBatch& raw, Schema schema, std::span<const std::size_t> rows) {
  schema.validate();
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(raw.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    rows = all;
  }
  const std::vector<std::size_t> features = feature_columns(schema);
  for (std::size_t f = 0; f < features.size(); ++f) {
    ColumnSchema& col = schema.columns[features[f]];
    if (col.normalization == Normalization::none) continue;
    if (rows.empty()) throw DataError("cannot fit normalization on zero rows");
    std::vector<double> values(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) values[i] = raw.x[rows[i] * raw.p + f];
    if (col.normalization == Normalization::zscore) {
      const double sd = std::sqrt(sample_variance(values));
      if (!(sd > 0.0)) throw DataError("zero variance column '" + col.name + "'");
      col.center = pairwise_mean(values);
      col.scale = sd;
    } else {
      const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
      if (!(*hi > *lo)) throw DataError("zero variance column '" + col.name + "'");
      col.center = *lo;
      col.scale = *hi - *lo;
    }
    col.fitted = true;
  }
  return schema;
}

NormalizeResult normalize(const LabeledBatch& raw, const Schema& schema) {
  if (!schema.fitted()) throw DataError("schema must be fitted before normalizing");
  const std::vector<std::size_t> features = feature_columns(schema);
  if (features.size() != raw.p) throw ShapeError("schema feature count does not match data width");
  NormalizeResult out{raw, 0};
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    for (std::size_t f = 0; f < features.size(); ++f) {
      const ColumnSchema& col = schema.columns[features[f]];
      if (col.normalization == Normalization::none) continue;
      double& v = out.batch.x[i * raw.p + f];
      v = (v - col.center) / col.scale;
      if (col.normalization == Normalization::minmax01 && (v < 0.0 || v > 1.0)) ++out.out_of_range;
    }
  }
  return out;
}

LabeledBatch denormalize(const LabeledBatch& normalized, const Schema& schema) {
  const std::vector<std::size_t> features = feature_columns(schema);
  if (features.size() != normalized.p) throw ShapeError("schema feature count does not match data width");
  LabeledBatch out = normalized;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t f = 0; f < features.size(); ++f) {
      const ColumnSchema& col = schema.columns[features[f]];
      if (col.normalization == Normalization::none) continue;
      double& v = out.x[i * out.p + f];
      v = v * col.scale + col.center;
    }
  }
  return out;
}

LoadedData load_csv(const std::filesystem::path& path, const Schema& schema, CsvOptions options) {
  CsvData data = read_csv(path, schema, options);
  Schema fitted = schema.fitted() ? schema : fit_schema(data.batch, schema);
  return {std::move(data.batch), std::move(fitted), data.has_labels};
}

std::string to_csv(const LabeledBatch& batch, const Schema& schema) {
  const std::vector<std::size_t> features = feature_columns(schema);
  if (features.size() != batch.p) throw ShapeError("schema feature count does not match data width");
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t c = 0; c < schema.columns.size(); ++c) os << (c ? "," : "") << schema.columns[c].name;
  os << '\n';
  const std::size_t label_col = schema.label_index();
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    std::size_t f = 0;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      if (c) os << ',';
      if (c == label_col) {
        os << static_cast<int>(batch.y[i]);
      } else {
        os << batch.x[i * batch.p + f++];
      }
    }
    os << '\n';
  }
  return os.str();
}

void write_csv(const std::filesystem::path& path, const LabeledBatch& batch, const Schema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_csv(batch, schema);
}

// ---------------------------------------------------------------------------

void SplitSpec::validate() const {
  if (kind == SplitKind::holdout && !(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  if (kind == SplitKind::kfold && k < 2) throw ConfigError("k-fold split needs k >= 2");
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed, streams::kSplit, 0);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.below(i)]);
  }
  return perm;
}

std::vector<Fold> split(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  const std::vector<std::size_t> perm = permutation(n, spec.seed);
  if (spec.kind == SplitKind::holdout) {
    const auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
    Fold fold;
    fold.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    fold.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    return {fold};
  }
  if (spec.k > n) throw ConfigError("k-fold split needs at least k rows");
  std::vector<Fold> folds(spec.k);
  // The first n % k folds get one extra row.
  std::size_t offset = 0;
  for (std::size_t f = 0; f < spec.k; ++f) {
    const std::size_t size = n / spec.k + (f < n % spec.k ? 1 : 0);
    folds[f].test.assign(perm.begin() + static_cast<std::ptrdiff_t>(offset),
                         perm.begin() + static_cast<std::ptrdiff_t>(offset + size));
    offset += size;
  }
  for (std::size_t f = 0; f < spec.k; ++f) {
    for (std::size_t g = 0; g < spec.k; ++g) {
      if (g != f) folds[f].train.insert(folds[f].train.end(), folds[g].test.begin(), folds[g].test.end());
    }
  }
  return folds;
}

LabeledBatch subset(const LabeledBatch& batch, std::span<const std::size_t> rows) {
  LabeledBatch out;
  out.p = batch.p;
  out.x.reserve(rows.size() * batch.p);
  out.y.reserve(rows.size());
  for (std::size_t i : rows) {
    if (i >= batch.rows()) throw ShapeError("row index out of range");
    const auto r = batch.row(i);
    out.x.insert(out.x.end(), r.begin(), r.end());
    out.y.push_back(batch.y[i]);
  }
  return out;
}

LabeledBatch generate_synthetic(const TrueFunction& truth, std::size_t n, std::uint64_t seed) {
  const std::size_t p = truth.dim();
  std::vector<double> x(n * p);
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(seed, streams::kSynthetic, i);
    const std::span<double> row(x.data() + i * p, p);
    for (double& v : row) v = rng.uniform();
    y[i] = rng.uniform() < sigmoid(truth.eta(row)) ? 1 : 0;
  }
  return LabeledBatch(p, std::move(x), std::move(y));
}

std::uint64_t dataset_checksum(const LabeledBatch& batch) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  auto mix = [&hash](std::uint64_t word) {
    for (int b = 0; b < 8; ++b) {
      hash ^= (word >> (8 * b)) & 0xffU;
      hash *= 0x100000001b3ULL;
    }
  };
  mix(batch.p);
  mix(batch.rows());
  for (double v : batch.x) mix(std::bit_cast<std::uint64_t>(v));
  for (auto label : batch.y) mix(label);
  return hash;
}

}  // namespace vbnn
