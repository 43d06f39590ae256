#include "exprof/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace exprof {

namespace {

bool is_missing_cell(std::string_view cell) { return cell.empty() || cell == "NA"; }

std::optional<double> parse_number(std::string_view cell) {
  while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
  while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// RFC-4180 style: quoted fields may contain commas, doubled quotes and newlines.
std::vector<std::vector<std::string>> split_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(ch);
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
      any = true;
    } else if (ch == ',') {
      row.push_back(std::move(cell));
      cell.clear();
      any = true;
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !cell.empty()) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
      }
      row.clear();
      cell.clear();
      any = false;
    } else {
      cell.push_back(ch);
      any = true;
    }
  }
  if (quoted) throw std::runtime_error("CSV: unterminated quoted field");
  if (any || !cell.empty()) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::size_t Column::missing_count() const {
  return static_cast<std::size_t>(std::count(missing.begin(), missing.end(), true));
}

Column Column::numeric(std::string name, std::vector<double> values, std::vector<bool> missing) {
  Column c;
  c.name = std::move(name);
  c.type = ColumnType::Numeric;
  if (missing.empty()) {
    missing.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) missing[i] = std::isnan(values[i]);
  }
  if (missing.size() != values.size()) throw std::invalid_argument("column mask length mismatch");
  for (std::size_t i = 0; i < values.size(); ++i)
    if (missing[i]) values[i] = 0.0;
  c.numbers = std::move(values);
  c.missing = std::move(missing);
  return c;
}

Column Column::text(std::string name, const std::vector<std::optional<std::string>>& cells) {
  Column c;
  c.name = std::move(name);
  c.type = ColumnType::Text;
  c.codes.reserve(cells.size());
  for (const auto& cell : cells) {
    if (!cell) {
      c.codes.push_back(-1);
      c.missing.push_back(true);
      continue;
    }
    auto it = std::find(c.levels.begin(), c.levels.end(), *cell);
    if (it == c.levels.end()) {
      c.levels.push_back(*cell);
      it = c.levels.end() - 1;
    }
    c.codes.push_back(static_cast<int>(it - c.levels.begin()));
    c.missing.push_back(false);
  }
  return c;
}

Dataset::Dataset(std::vector<Column> columns) : columns_(std::move(columns)) {
  rows_ = columns_.empty() ? 0 : columns_.front().size();
  for (const auto& c : columns_) {
    if (c.size() != rows_) throw std::invalid_argument("column '" + c.name + "' has a different length");
    if (c.type == ColumnType::Numeric && c.numbers.size() != rows_)
      throw std::invalid_argument("column '" + c.name + "' value/mask mismatch");
    if (c.type == ColumnType::Text && c.codes.size() != rows_)
      throw std::invalid_argument("column '" + c.name + "' code/mask mismatch");
  }
}

std::optional<std::size_t> Dataset::find(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i)
    if (columns_[i].name == name) return i;
  return std::nullopt;
}

const Column& Dataset::column(std::string_view name) const {
  if (auto i = find(name)) return columns_[*i];
  throw std::out_of_range("no column named '" + std::string(name) + "'");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  std::vector<Column> out;
  out.reserve(columns_.size());
  for (const auto& c : columns_) {
    Column s;
    s.name = c.name;
    s.type = c.type;
    s.levels = c.levels;
    for (std::size_t r : rows) {
      if (r >= rows_) throw std::out_of_range("row index out of range");
      s.missing.push_back(c.missing[r]);
      if (c.type == ColumnType::Numeric)
        s.numbers.push_back(c.numbers[r]);
      else
        s.codes.push_back(c.codes[r]);
    }
    out.push_back(std::move(s));
  }
  Dataset d(std::move(out));
  d.rows_ = rows.size();
  return d;
}

Dataset Dataset::with_column(Column c) const {
  auto cols = columns_;
  cols.push_back(std::move(c));
  return Dataset(std::move(cols));
}

std::vector<std::string> Dataset::names() const {
  std::vector<std::string> out;
  for (const auto& c : columns_) out.push_back(c.name);
  return out;
}

Dataset parse_csv(std::string_view text, const std::optional<FactorSpace>& schema) {
  auto rows = split_csv(text);
  if (rows.empty()) throw std::runtime_error("CSV: missing header row");
  const auto header = rows.front();
  const std::size_t width = header.size();
  for (std::size_t r = 1; r < rows.size(); ++r)
    if (rows[r].size() != width)
      throw std::runtime_error("CSV: row " + std::to_string(r + 1) + " has " +
                               std::to_string(rows[r].size()) + " fields, expected " +
                               std::to_string(width));
  if (schema) {
    for (const auto& f : *schema)
      if (std::find(header.begin(), header.end(), f.name) == header.end())
        throw std::runtime_error("CSV: schema column '" + f.name + "' absent from file");
  }

  std::vector<Column> columns;
  for (std::size_t j = 0; j < width; ++j) {
    std::vector<std::optional<std::string>> cells;
    cells.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (is_missing_cell(rows[r][j]))
        cells.emplace_back(std::nullopt);
      else
        cells.emplace_back(rows[r][j]);
    }
    const FactorDef* declared = nullptr;
    if (schema) {
      if (auto idx = schema->find(header[j])) declared = &(*schema)[*idx];
    }
    bool numeric = true;
    std::vector<double> values(cells.size(), 0.0);
    std::vector<bool> missing(cells.size(), false);
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (!cells[i]) {
        missing[i] = true;
        continue;
      }
      auto v = parse_number(*cells[i]);
      if (!v) {
        numeric = false;
        break;
      }
      values[i] = *v;
    }
    if (declared && declared->is_discrete()) numeric = false;
    if (declared && declared->is_continuous() && !numeric)
      throw std::runtime_error("CSV: column '" + header[j] + "' is declared continuous but is not numeric");
    if (numeric)
      columns.push_back(Column::numeric(header[j], std::move(values), std::move(missing)));
    else
      columns.push_back(Column::text(header[j], cells));
  }
  return Dataset(std::move(columns));
}

Dataset load_csv(const std::filesystem::path& path, const std::optional<FactorSpace>& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), schema);
}

FactorSpace infer_factor_space(const Dataset& data, const InferOptions& options) {
  auto listed = [](const std::vector<std::string>& v, const std::string& name) {
    return std::find(v.begin(), v.end(), name) != v.end();
  };
  if (data.rows() < 2) throw std::invalid_argument("need at least 2 rows to infer a factor space");
  std::vector<FactorDef> defs;
  for (const auto& c : data.columns()) {
    if (listed(options.exclude, c.name)) continue;
    if (c.missing_count() == c.size())
      throw std::invalid_argument("column '" + c.name + "' has no observed values");
    FactorDef d{c.name, Continuous{}};
    if (c.type == ColumnType::Numeric) {
      double lo = INFINITY, hi = -INFINITY;
      for (std::size_t i = 0; i < c.size(); ++i) {
        if (c.missing[i]) continue;
        lo = std::min(lo, c.numbers[i]);
        hi = std::max(hi, c.numbers[i]);
      }
      if (!(lo < hi)) throw std::invalid_argument("column '" + c.name + "' is constant (zero range)");
      d.kind = Continuous{lo, hi};
    } else {
      std::vector<bool> seen(c.levels.size(), false);
      for (std::size_t i = 0; i < c.size(); ++i)
        if (!c.missing[i]) seen[static_cast<std::size_t>(c.codes[i])] = true;
      std::vector<std::string> levels;
      for (std::size_t l = 0; l < c.levels.size(); ++l)
        if (seen[l]) levels.push_back(c.levels[l]);
      if (levels.size() < 2) throw std::invalid_argument("column '" + c.name + "' has a single level");
      if (listed(options.ordinal, c.name)) {
        std::vector<double> scores(levels.size());
        std::iota(scores.begin(), scores.end(), 1.0);
        d.kind = Ordinal{std::move(levels), std::move(scores)};
      } else {
        d.kind = Categorical{std::move(levels)};
      }
    }
    defs.push_back(std::move(d));
  }
  return FactorSpace(std::move(defs));
}

EncodedMatrix EncodedMatrix::from_complete(Eigen::MatrixXd values) {
  EncodedMatrix m;
  m.missing = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(values.rows(), values.cols(), false);
  for (Eigen::Index j = 0; j < values.cols(); ++j)
    m.columns.push_back({static_cast<std::size_t>(j), std::nullopt, "x" + std::to_string(j + 1)});
  m.values = std::move(values);
  return m;
}

namespace {

std::vector<EncodedColumn> encoded_columns(const FactorSpace& space) {
  std::vector<EncodedColumn> cols;
  for (std::size_t f = 0; f < space.size(); ++f) {
    const auto& def = space[f];
    if (def.is_categorical()) {
      for (std::size_t l = 1; l < def.level_count(); ++l)
        cols.push_back({f, l, def.name + "[" + def.levels()[l] + "]"});
    } else {
      cols.push_back({f, std::nullopt, def.name});
    }
  }
  return cols;
}

// Level index in `def` for each row of a text column, -1 when missing.
std::vector<int> level_map(const Column& c, const FactorDef& def) {
  std::vector<int> remap(c.levels.size(), -1);
  for (std::size_t l = 0; l < c.levels.size(); ++l) {
    if (auto idx = def.level_index(c.levels[l])) remap[l] = static_cast<int>(*idx);
  }
  std::vector<int> out(c.size(), -1);
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.missing[i]) continue;
    const int code = remap[static_cast<std::size_t>(c.codes[i])];
    if (code < 0)
      throw std::invalid_argument("column '" + c.name + "': level '" + c.levels[c.codes[i]] +
                                  "' is not in the factor space");
    out[i] = code;
  }
  return out;
}

}  // namespace

std::vector<Settings> dataset_settings(const Dataset& data, const FactorSpace& space) {
  std::vector<Settings> rows(data.rows(), Settings{std::vector<double>(space.size(), std::nan(""))});
  for (std::size_t f = 0; f < space.size(); ++f) {
    const auto& def = space[f];
    const Column& c = data.column(def.name);
    if (def.is_continuous()) {
      if (c.type != ColumnType::Numeric)
        throw std::invalid_argument("column '" + c.name + "' is text but factor is continuous");
      for (std::size_t i = 0; i < c.size(); ++i)
        if (!c.missing[i]) rows[i][f] = c.numbers[i];
    } else {
      if (c.type != ColumnType::Text)
        throw std::invalid_argument("column '" + c.name + "' is numeric but factor is discrete");
      auto codes = level_map(c, def);
      for (std::size_t i = 0; i < c.size(); ++i)
        if (codes[i] >= 0) rows[i][f] = codes[i];
    }
  }
  return rows;
}

Eigen::VectorXd encode_point(const FactorSpace& space, const Settings& s) {
  if (s.size() != space.size()) throw std::invalid_argument("settings size does not match factor space");
  Eigen::VectorXd x(static_cast<Eigen::Index>(space.encoded_dim()));
  Eigen::Index k = 0;
  for (std::size_t f = 0; f < space.size(); ++f) {
    const auto& def = space[f];
    const bool miss = std::isnan(s[f]);
    if (def.is_continuous()) {
      x[k++] = s[f];
    } else if (auto* o = std::get_if<Ordinal>(&def.kind)) {
      x[k++] = miss ? std::nan("") : o->scores.at(s.level(f));
    } else {
      const std::size_t lv = miss ? 0 : s.level(f);
      if (!miss && lv >= def.level_count())
        throw std::invalid_argument("factor '" + def.name + "': level index out of range");
      for (std::size_t l = 1; l < def.level_count(); ++l)
        x[k++] = miss ? std::nan("") : (lv == l ? 1.0 : 0.0);
    }
  }
  return x;
}

Settings decode_point(const FactorSpace& space, const Eigen::Ref<const Eigen::VectorXd>& row) {
  if (row.size() != static_cast<Eigen::Index>(space.encoded_dim()))
    throw std::invalid_argument("encoded row has the wrong width");
  Settings s{std::vector<double>(space.size(), 0.0)};
  Eigen::Index k = 0;
  for (std::size_t f = 0; f < space.size(); ++f) {
    const auto& def = space[f];
    if (def.is_continuous()) {
      s[f] = row[k++];
    } else if (auto* o = std::get_if<Ordinal>(&def.kind)) {
      const double score = row[k++];
      auto it = std::find(o->scores.begin(), o->scores.end(), score);
      if (it == o->scores.end()) throw std::invalid_argument("not an ordinal score of '" + def.name + "'");
      s[f] = static_cast<double>(it - o->scores.begin());
    } else {
      std::size_t level = 0;
      for (std::size_t l = 1; l < def.level_count(); ++l)
        if (row[k++] == 1.0) level = l;
      s[f] = static_cast<double>(level);
    }
  }
  return s;
}

EncodedMatrix encode(const Dataset& data, const FactorSpace& space) {
  const auto rows = dataset_settings(data, space);
  const auto p = static_cast<Eigen::Index>(space.encoded_dim());
  const auto n = static_cast<Eigen::Index>(data.rows());
  EncodedMatrix m;
  m.values = Eigen::MatrixXd::Zero(n, p);
  m.missing = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, p, false);
  m.columns = encoded_columns(space);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd x = encode_point(space, rows[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < p; ++j) {
      if (std::isnan(x[j]))
        m.missing(i, j) = true;
      else
        m.values(i, j) = x[j];
    }
  }
  return m;
}

Settings factor_centers(const Dataset& data, const FactorSpace& space) {
  const auto rows = dataset_settings(data, space);
  Settings center{std::vector<double>(space.size(), 0.0)};
  for (std::size_t f = 0; f < space.size(); ++f) {
    if (space[f].is_continuous()) {
      double sum = 0;
      std::size_t count = 0;
      for (const auto& r : rows)
        if (!std::isnan(r[f])) {
          sum += r[f];
          ++count;
        }
      if (count == 0) throw std::invalid_argument("factor '" + space[f].name + "' has no observed values");
      center[f] = sum / static_cast<double>(count);
    } else {
      std::vector<std::size_t> freq(space[f].level_count(), 0);
      for (const auto& r : rows)
        if (!std::isnan(r[f])) ++freq[r.level(f)];
      center[f] = static_cast<double>(std::max_element(freq.begin(), freq.end()) - freq.begin());
    }
  }
  return center;
}

std::pair<Dataset, Dataset> holdout_split(const Dataset& data, std::size_t n_holdout, std::uint64_t seed) {
  if (n_holdout == 0 || n_holdout >= data.rows())
    throw std::invalid_argument("holdout size must be between 1 and n-1");
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the partition does not depend on
  // the standard library's shuffle implementation.
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  std::vector<std::size_t> holdout(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_holdout));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_holdout), order.end());
  std::sort(holdout.begin(), holdout.end());
  std::sort(train.begin(), train.end());
  return {data.subset(train), data.subset(holdout)};
}

std::vector<double> numeric_values(const Column& c) {
  if (c.type != ColumnType::Numeric) throw std::invalid_argument("column '" + c.name + "' is not numeric");
  std::vector<double> out(c.numbers);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (c.missing[i]) out[i] = std::nan("");
  return out;
}

}  // namespace exprof
