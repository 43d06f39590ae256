#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "exprof/factor_space.hpp"

namespace exprof {

enum class ColumnType { Numeric, Text };

/// One named column. Numeric columns use `numbers`; text columns store a code
/// per row into `levels` (kept in order of first appearance).
struct Column {
  std::string name;
  ColumnType type = ColumnType::Numeric;
  std::vector<double> numbers;
  std::vector<std::string> levels;
  std::vector<int> codes;
  std::vector<bool> missing;

  std::size_t size() const { return missing.size(); }
  bool is_missing(std::size_t row) const { return missing[row]; }
  std::size_t missing_count() const;

  static Column numeric(std::string name, std::vector<double> values,
                        std::vector<bool> missing = {});
  /// Text column from raw cells; empty optionals are missing.
  static Column text(std::string name, const std::vector<std::optional<std::string>>& cells);
};

class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Column> columns);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return columns_.size(); }
  const std::vector<Column>& columns() const { return columns_; }
  const Column& column(std::size_t i) const { return columns_[i]; }
  const Column& column(std::string_view name) const;
  std::optional<std::size_t> find(std::string_view name) const;

  /// Rows in the given order.
  Dataset subset(std::span<const std::size_t> rows) const;
  Dataset with_column(Column c) const;
  std::vector<std::string> names() const;

 private:
  std::vector<Column> columns_;
  std::size_t rows_ = 0;
};

/// Reads a header-first CSV. Empty cells and "NA" are missing. A schema can
/// force a column to be continuous or categorical/ordinal.
Dataset load_csv(const std::filesystem::path& path,
                 const std::optional<FactorSpace>& schema = std::nullopt);
Dataset parse_csv(std::string_view text, const std::optional<FactorSpace>& schema = std::nullopt);

struct InferOptions {
  /// Columns to leave out of the space, typically responses.
  std::vector<std::string> exclude;
  /// Text columns to treat as ordinal (default scores 1..L).
  std::vector<std::string> ordinal;
};

FactorSpace infer_factor_space(const Dataset& data, const InferOptions& options = {});

/// Traces an encoded column back to its factor; `level` is set for indicator
/// columns of categorical factors.
struct EncodedColumn {
  std::size_t factor = 0;
  std::optional<std::size_t> level;
  std::string label;
};

struct EncodedMatrix {
  Eigen::MatrixXd values;
  /// true = missing; the matching value is 0 and carries no information.
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> missing;
  std::vector<EncodedColumn> columns;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }
  bool complete() const { return !missing.any(); }

  static EncodedMatrix from_complete(Eigen::MatrixXd values);
};

EncodedMatrix encode(const Dataset& data, const FactorSpace& space);

/// Encodes one point. Missing settings become NaN in every derived column.
Eigen::VectorXd encode_point(const FactorSpace& space, const Settings& s);
/// Inverse of encode_point for non-missing rows.
Settings decode_point(const FactorSpace& space, const Eigen::Ref<const Eigen::VectorXd>& row);

/// Factor settings for every row of `data` (NaN where missing).
std::vector<Settings> dataset_settings(const Dataset& data, const FactorSpace& space);

/// Continuous factors at their observed mean, discrete ones at the most
/// frequent level (first in level order on ties).
Settings factor_centers(const Dataset& data, const FactorSpace& space);

std::pair<Dataset, Dataset> holdout_split(const Dataset& data, std::size_t n_holdout,
                                          std::uint64_t seed);

/// Response column as a vector; throws for text columns.
std::vector<double> numeric_values(const Column& c);

}  // namespace exprof
