#pragma once

#include "mlchain/error.hpp"
#include "mlchain/matrix.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mlchain {

/// Storage encoding of a missing feature value.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
/// Label-feature cells that have not been predicted yet. Shares the NaN
/// encoding with kMissing; the column kind tells the two apart.
inline constexpr double kUnknown = kMissing;

inline bool is_missing(double v) noexcept { return std::isnan(v); }

enum class AttributeKind : std::uint8_t { numeric, categorical, label_feature };

struct Attribute {
  std::string name;
  AttributeKind kind = AttributeKind::numeric;
  std::vector<std::string> categories;  // categorical: declared vocabulary, dense 0..V-1
  std::size_t label = 0;                // label_feature: which label the column mirrors

  friend bool operator==(const Attribute&, const Attribute&) = default;
};

/// Typed view of one cell of the feature matrix.
class FeatureValue {
 public:
  enum class Kind : std::uint8_t { numeric, categorical, missing };

  static FeatureValue numeric(double v) { return {Kind::numeric, v}; }
  static FeatureValue categorical(std::uint32_t index) { return {Kind::categorical, double(index)}; }
  static FeatureValue missing() { return {Kind::missing, kMissing}; }

  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  [[nodiscard]] bool is_missing() const noexcept { return kind_ == Kind::missing; }

  [[nodiscard]] double as_numeric() const {
    if (kind_ != Kind::numeric) throw std::logic_error("feature value is not numeric");
    return value_;
  }
  [[nodiscard]] std::uint32_t as_category() const {
    if (kind_ != Kind::categorical) throw std::logic_error("feature value is not categorical");
    return static_cast<std::uint32_t>(value_);
  }
  /// The value as stored in a feature matrix.
  [[nodiscard]] double encoded() const noexcept { return value_; }

  friend bool operator==(const FeatureValue& a, const FeatureValue& b) {
    return a.kind_ == b.kind_ && (a.kind_ == Kind::missing || a.value_ == b.value_);
  }

 private:
  FeatureValue(Kind k, double v) : kind_(k), value_(v) {}
  Kind kind_;
  double value_;
};

/// Feature matrix X (M x Q, NaN = missing) plus binary label matrix Y (M x N).
/// After augment() the feature matrix carries N trailing label-feature columns.
class MultiLabelDataset {
 public:
  MultiLabelDataset(std::vector<Attribute> attributes, std::vector<std::string> label_names,
                    Matrix<double> features, Matrix<std::uint8_t> labels)
      : attributes_(std::move(attributes)),
        label_names_(std::move(label_names)),
        features_(std::move(features)),
        labels_(std::move(labels)) {
    validate();
  }

  [[nodiscard]] std::size_t size() const noexcept { return features_.rows(); }
  /// Width of the feature matrix, including label-feature columns when augmented.
  [[nodiscard]] std::size_t num_features() const noexcept { return features_.cols(); }
  /// Number of original (non label-feature) columns.
  [[nodiscard]] std::size_t base_feature_count() const noexcept { return base_features_; }
  [[nodiscard]] std::size_t num_labels() const noexcept { return labels_.cols(); }
  [[nodiscard]] bool augmented() const noexcept { return base_features_ != features_.cols(); }
  [[nodiscard]] bool is_label_feature(std::size_t column) const noexcept {
    return column >= base_features_ && column < features_.cols();
  }
  [[nodiscard]] std::size_t label_feature_column(std::size_t label) const noexcept {
    return base_features_ + label;
  }

  [[nodiscard]] const Matrix<double>& features() const noexcept { return features_; }
  [[nodiscard]] const Matrix<std::uint8_t>& labels() const noexcept { return labels_; }
  [[nodiscard]] const std::vector<Attribute>& attributes() const noexcept { return attributes_; }
  [[nodiscard]] const Attribute& attribute(std::size_t column) const { return attributes_.at(column); }
  [[nodiscard]] const std::vector<std::string>& label_names() const noexcept { return label_names_; }

  [[nodiscard]] FeatureValue value(std::size_t row, std::size_t column) const {
    const double v = features_(row, column);
    if (is_missing(v)) return FeatureValue::missing();
    if (attributes_[column].kind == AttributeKind::categorical) {
      return FeatureValue::categorical(static_cast<std::uint32_t>(v));
    }
    return FeatureValue::numeric(v);
  }

  /// New dataset holding the given rows, in the given order.
  [[nodiscard]] MultiLabelDataset select_rows(const std::vector<std::size_t>& rows) const {
    Matrix<double> x(rows.size(), num_features());
    Matrix<std::uint8_t> y(rows.size(), num_labels());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto src_x = features_.row(rows.at(r));
      std::copy(src_x.begin(), src_x.end(), x.row(r).begin());
      const auto src_y = labels_.row(rows[r]);
      std::copy(src_y.begin(), src_y.end(), y.row(r).begin());
    }
    return {attributes_, label_names_, std::move(x), std::move(y)};
  }

  friend bool operator==(const MultiLabelDataset& a, const MultiLabelDataset& b) {
    if (a.attributes_ != b.attributes_ || a.label_names_ != b.label_names_ || !(a.labels_ == b.labels_) ||
        a.features_.rows() != b.features_.rows() || a.features_.cols() != b.features_.cols()) {
      return false;
    }
    const auto xa = a.features_.data();
    const auto xb = b.features_.data();
    for (std::size_t i = 0; i < xa.size(); ++i) {
      if (is_missing(xa[i]) != is_missing(xb[i])) return false;
      if (!is_missing(xa[i]) && xa[i] != xb[i]) return false;
    }
    return true;
  }

 private:
  void validate() {
    if (features_.rows() == 0) throw empty_dataset();
    if (labels_.cols() == 0) throw dataset_error("dataset has no labels");
    if (attributes_.size() != features_.cols()) {
      throw dataset_error("attribute count " + std::to_string(attributes_.size()) +
                          " does not match feature width " + std::to_string(features_.cols()));
    }
    if (label_names_.size() != labels_.cols()) throw dataset_error("label name count does not match label width");
    if (labels_.rows() != features_.rows()) throw dataset_error("feature and label row counts differ");
    for (auto v : labels_.data()) {
      if (v > 1) throw dataset_error("non-binary label value");
    }
    base_features_ = attributes_.size();
    for (std::size_t q = 0; q < attributes_.size(); ++q) {
      if (attributes_[q].kind == AttributeKind::label_feature) {
        base_features_ = q;
        break;
      }
    }
    if (augmented()) {
      if (attributes_.size() - base_features_ != labels_.cols()) {
        throw dataset_error("label-feature block must have one column per label");
      }
      for (std::size_t j = 0; j < labels_.cols(); ++j) {
        const auto& a = attributes_[base_features_ + j];
        if (a.kind != AttributeKind::label_feature || a.label != j) {
          throw dataset_error("label-feature columns must trail the features in label order");
        }
      }
    }
    for (std::size_t q = 0; q < attributes_.size(); ++q) {
      if (attributes_[q].kind != AttributeKind::categorical) continue;
      const double bound = static_cast<double>(attributes_[q].categories.size());
      for (std::size_t i = 0; i < features_.rows(); ++i) {
        const double v = features_(i, q);
        if (!is_missing(v) && (v < 0 || v >= bound || v != std::floor(v))) {
          throw dataset_error("category index out of range in column '" + attributes_[q].name + "'");
        }
      }
    }
  }

  std::vector<Attribute> attributes_;
  std::vector<std::string> label_names_;
  Matrix<double> features_;
  Matrix<std::uint8_t> labels_;
  std::size_t base_features_ = 0;
};

struct DatasetStats {
  std::size_t instances = 0;
  std::size_t labels = 0;
  double cardinality = 0.0;  // mean number of positive labels per instance
  std::size_t distinct = 0;  // distinct label combinations
};

inline DatasetStats stats(const MultiLabelDataset& d) {
  DatasetStats s;
  s.instances = d.size();
  s.labels = d.num_labels();
  std::set<std::vector<std::uint8_t>> combos;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto row = d.labels().row(i);
    for (auto v : row) positives += v;
    combos.emplace(row.begin(), row.end());
  }
  s.cardinality = static_cast<double>(positives) / static_cast<double>(d.size());
  s.distinct = combos.size();
  return s;
}

/// Appends one label-feature column per label, every cell unknown.
inline MultiLabelDataset augment(const MultiLabelDataset& d) {
  if (d.augmented()) throw dataset_error("already augmented");
  const std::size_t q = d.num_features();
  const std::size_t n = d.num_labels();
  auto attributes = d.attributes();
  for (std::size_t j = 0; j < n; ++j) {
    attributes.push_back({"label:" + d.label_names()[j], AttributeKind::label_feature, {}, j});
  }
  Matrix<double> x(d.size(), q + n, kUnknown);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto src = d.features().row(i);
    std::copy(src.begin(), src.end(), x.row(i).begin());
  }
  return {std::move(attributes), d.label_names(), std::move(x), d.labels()};
}

/// Base features widened by N unknown label-feature columns; works on plain or augmented datasets.
inline Matrix<double> augmented_features(const MultiLabelDataset& d) {
  const std::size_t q = d.base_feature_count();
  const std::size_t n = d.num_labels();
  Matrix<double> x(d.size(), q + n, kUnknown);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto src = d.features().row(i);
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(q), x.row(i).begin());
  }
  return x;
}

/// The original feature columns only.
inline Matrix<double> base_features(const MultiLabelDataset& d) {
  const std::size_t q = d.base_feature_count();
  Matrix<double> x(d.size(), q);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto src = d.features().row(i);
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(q), x.row(i).begin());
  }
  return x;
}

/// Which attributes of a file are labels: names from a MULAN XML header, or the last `trailing` attributes.
struct LabelSpec {
  std::optional<std::filesystem::path> xml;
  std::size_t trailing = 0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

inline bool starts_with_ci(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && lower(s.substr(0, prefix.size())) == prefix;
}

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

struct Field {
  std::string text;
  bool quoted = false;
};

/// Splits an ARFF value list on commas, honouring '...' and "..." quoting and backslash escapes.
inline std::vector<Field> split_arff_fields(std::string_view line) {
  std::vector<Field> out;
  std::size_t i = 0;
  while (i <= line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    Field f;
    if (i < line.size() && (line[i] == '\'' || line[i] == '"')) {
      const char q = line[i++];
      f.quoted = true;
      while (i < line.size() && line[i] != q) {
        if (line[i] == '\\' && i + 1 < line.size()) ++i;
        f.text += line[i++];
      }
      ++i;  // closing quote
      while (i < line.size() && line[i] != ',') ++i;
    } else {
      const auto end = line.find(',', i);
      const auto stop = end == std::string_view::npos ? line.size() : end;
      f.text = std::string(trim(line.substr(i, stop - i)));
      i = stop;
    }
    out.push_back(std::move(f));
    if (i >= line.size()) break;
    ++i;  // comma
  }
  return out;
}

/// Splits a CSV line (RFC 4180 double-quote rules).
inline std::vector<Field> split_csv_fields(std::string_view line) {
  std::vector<Field> out;
  Field f;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        f.text += '"';
        ++i;
      } else if (c == '"') {
        in_quotes = false;
      } else {
        f.text += c;
      }
    } else if (c == '"') {
      in_quotes = true;
      f.quoted = true;
    } else if (c == ',') {
      if (!f.quoted) f.text = std::string(trim(f.text));
      out.push_back(std::move(f));
      f = {};
    } else if (c != '\r') {
      f.text += c;
    }
  }
  if (!f.quoted) f.text = std::string(trim(f.text));
  out.push_back(std::move(f));
  return out;
}

inline std::string xml_unescape(std::string s) {
  static const std::pair<std::string_view, std::string_view> entities[] = {
      {"&lt;", "<"}, {"&gt;", ">"}, {"&quot;", "\""}, {"&apos;", "'"}, {"&amp;", "&"}};
  for (const auto& [from, to] : entities) {
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
      s.replace(pos, from.size(), to);
    }
  }
  return s;
}

inline std::string read_file(const std::filesystem::path& path, const std::string& what = "dataset") {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw file_not_found(path.string(), what);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));
  return lines;
}

inline std::string quote_arff(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'' || c == '\\') out += '\\';
    out += c;
  }
  return out + "'";
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Label names declared in a MULAN XML label header, in document order (hierarchies are flattened).
inline std::vector<std::string> read_mulan_labels(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path, "label header");
  static const std::regex label_re(R"re(<label\s+name\s*=\s*(?:"([^"]*)"|'([^']*)'))re");
  std::vector<std::string> names;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), label_re); it != std::sregex_iterator(); ++it) {
    names.push_back(detail::xml_unescape((*it)[1].matched ? (*it)[1].str() : (*it)[2].str()));
  }
  if (names.empty()) throw parse_error(path.string(), 0, "no <label name=...> entries");
  return names;
}

/// Parses ARFF text (dense and sparse rows). `source` only labels error messages.
inline MultiLabelDataset parse_arff(const std::string& text, const std::vector<std::string>& xml_labels,
                                    std::size_t trailing_labels, const std::string& source = "<arff>") {
  using detail::trim;
  struct RawAttribute {
    Attribute attr;
    std::unordered_map<std::string, std::uint32_t> index;
  };
  std::vector<RawAttribute> raw;
  std::vector<std::vector<double>> rows;
  bool in_data = false;
  const auto lines = detail::split_lines(text);
  std::vector<std::size_t> label_of;  // attribute -> label slot or npos
  constexpr std::size_t npos = std::size_t(-1);
  std::vector<std::size_t> row_lines;

  auto resolve_labels = [&](std::size_t line_no) {
    label_of.assign(raw.size(), npos);
    if (!xml_labels.empty()) {
      for (std::size_t j = 0; j < xml_labels.size(); ++j) {
        auto it = std::find_if(raw.begin(), raw.end(), [&](const RawAttribute& r) { return r.attr.name == xml_labels[j]; });
        if (it == raw.end()) throw parse_error(source, line_no, "unknown label name: " + xml_labels[j]);
        label_of[static_cast<std::size_t>(it - raw.begin())] = j;
      }
    } else {
      if (trailing_labels == 0) throw dataset_error("dataset has no labels");
      if (trailing_labels > raw.size()) throw parse_error(source, line_no, "more labels than attributes");
      for (std::size_t j = 0; j < trailing_labels; ++j) label_of[raw.size() - trailing_labels + j] = j;
    }
  };

  auto convert = [&](std::size_t a, const detail::Field& f, std::size_t line_no) -> double {
    if (!f.quoted && f.text == "?") return kMissing;
    const auto& r = raw[a];
    if (r.attr.kind == AttributeKind::categorical) {
      auto it = r.index.find(f.text);
      if (it == r.index.end()) {
        throw parse_error(source, line_no, "value '" + f.text + "' not declared for attribute '" + r.attr.name + "'");
      }
      return it->second;
    }
    auto v = detail::parse_number(f.text);
    if (!v) throw parse_error(source, line_no, "bad numeric value '" + f.text + "' for attribute '" + r.attr.name + "'");
    return *v;
  };

  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::size_t line_no = ln + 1;
    const std::string_view line = trim(lines[ln]);
    if (line.empty() || line.front() == '%') continue;
    if (!in_data) {
      if (detail::starts_with_ci(line, "@relation")) continue;
      if (detail::starts_with_ci(line, "@attribute")) {
        std::string_view rest = trim(line.substr(10));
        RawAttribute r;
        if (!rest.empty() && (rest.front() == '\'' || rest.front() == '"')) {
          const char q = rest.front();
          std::size_t i = 1;
          for (; i < rest.size() && rest[i] != q; ++i) {
            if (rest[i] == '\\' && i + 1 < rest.size()) ++i;
            r.attr.name += rest[i];
          }
          if (i >= rest.size()) throw parse_error(source, line_no, "unterminated attribute name");
          rest = trim(rest.substr(i + 1));
        } else {
          const auto sp = rest.find_first_of(" \t{");
          if (sp == std::string_view::npos) throw parse_error(source, line_no, "attribute without type");
          r.attr.name = std::string(rest.substr(0, sp));
          rest = trim(rest.substr(sp));
        }
        if (!rest.empty() && rest.front() == '{') {
          const auto close = rest.rfind('}');
          if (close == std::string_view::npos) throw parse_error(source, line_no, "unterminated nominal list");
          r.attr.kind = AttributeKind::categorical;
          for (auto& f : detail::split_arff_fields(rest.substr(1, close - 1))) {
            r.index.emplace(f.text, static_cast<std::uint32_t>(r.attr.categories.size()));
            r.attr.categories.push_back(std::move(f.text));
          }
        } else {
          const std::string type = detail::lower(rest.substr(0, rest.find_first_of(" \t")));
          if (type != "numeric" && type != "real" && type != "integer") {
            throw parse_error(source, line_no, "unsupported attribute type '" + std::string(rest) + "'");
          }
        }
        raw.push_back(std::move(r));
        continue;
      }
      if (detail::starts_with_ci(line, "@data")) {
        if (raw.empty()) throw parse_error(source, line_no, "@data before any @attribute");
        resolve_labels(line_no);
        in_data = true;
        continue;
      }
      throw parse_error(source, line_no, "unexpected header line");
    }

    std::vector<double> row(raw.size());
    if (line.front() == '{') {
      const auto close = line.rfind('}');
      if (close == std::string_view::npos) throw parse_error(source, line_no, "unterminated sparse row");
      for (std::size_t a = 0; a < raw.size(); ++a) row[a] = 0.0;  // numeric 0 / first category
      const auto body = trim(line.substr(1, close - 1));
      if (!body.empty()) {
        for (const auto& entry : detail::split_arff_fields(body)) {
          const std::string_view e = trim(entry.text);
          const auto sp = e.find_first_of(" \t");
          if (sp == std::string_view::npos) throw parse_error(source, line_no, "sparse entry without value");
          const auto idx = detail::parse_number(e.substr(0, sp));
          if (!idx || *idx < 0 || *idx >= double(raw.size()) || *idx != std::floor(*idx)) {
            throw parse_error(source, line_no, "bad sparse index '" + std::string(e.substr(0, sp)) + "'");
          }
          auto value_fields = detail::split_arff_fields(trim(e.substr(sp)));
          const auto a = static_cast<std::size_t>(*idx);
          row[a] = convert(a, value_fields.front(), line_no);
        }
      }
    } else {
      const auto fields = detail::split_arff_fields(line);
      if (fields.size() != raw.size()) {
        throw parse_error(source, line_no, "expected " + std::to_string(raw.size()) + " values, got " +
                                               std::to_string(fields.size()));
      }
      for (std::size_t a = 0; a < raw.size(); ++a) row[a] = convert(a, fields[a], line_no);
    }
    rows.push_back(std::move(row));
    row_lines.push_back(line_no);
  }
  if (!in_data) throw parse_error(source, 0, "missing @data section");
  if (rows.empty()) throw empty_dataset();

  const std::size_t n = xml_labels.empty() ? trailing_labels : xml_labels.size();
  std::vector<Attribute> attributes;
  std::vector<std::size_t> feature_cols;
  std::vector<std::string> label_names(n);
  for (std::size_t a = 0; a < raw.size(); ++a) {
    if (label_of[a] == npos) {
      feature_cols.push_back(a);
      attributes.push_back(raw[a].attr);
    } else {
      label_names[label_of[a]] = raw[a].attr.name;
    }
  }
  Matrix<double> x(rows.size(), feature_cols.size());
  Matrix<std::uint8_t> y(rows.size(), n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < feature_cols.size(); ++c) x(i, c) = rows[i][feature_cols[c]];
    for (std::size_t a = 0; a < raw.size(); ++a) {
      if (label_of[a] == npos) continue;
      const double v = rows[i][a];
      double bit = v;
      if (raw[a].attr.kind == AttributeKind::categorical && !is_missing(v)) {
        bit = detail::parse_number(raw[a].attr.categories[static_cast<std::size_t>(v)]).value_or(-1.0);
      }
      if (bit != 0.0 && bit != 1.0) {
        throw parse_error(source, row_lines[i], "non-binary label value for '" + raw[a].attr.name + "'");
      }
      y(i, label_of[a]) = static_cast<std::uint8_t>(bit);
    }
  }
  return {std::move(attributes), std::move(label_names), std::move(x), std::move(y)};
}

inline MultiLabelDataset load_arff(const std::filesystem::path& path, const LabelSpec& spec) {
  const std::string text = detail::read_file(path);
  std::vector<std::string> names;
  if (spec.xml) names = read_mulan_labels(*spec.xml);
  return parse_arff(text, names, spec.trailing, path.string());
}

/// CSV with a header row; the last `label_count` columns are 0/1 labels. Empty
/// feature cells are missing. A feature column that is not entirely numeric
/// becomes categorical with its vocabulary in first-appearance order.
inline MultiLabelDataset parse_csv(const std::string& text, std::size_t label_count,
                                   const std::string& source = "<csv>") {
  const auto lines = detail::split_lines(text);
  std::size_t ln = 0;
  while (ln < lines.size() && detail::trim(lines[ln]).empty()) ++ln;
  if (ln == lines.size()) throw parse_error(source, 0, "missing header row");
  const auto header = detail::split_csv_fields(lines[ln]);
  const std::size_t width = header.size();
  if (label_count == 0) throw dataset_error("dataset has no labels");
  if (label_count > width) throw parse_error(source, ln + 1, "more labels than columns");
  const std::size_t q = width - label_count;

  std::vector<std::vector<detail::Field>> cells;
  std::vector<std::size_t> row_lines;
  for (++ln; ln < lines.size(); ++ln) {
    if (detail::trim(lines[ln]).empty()) continue;
    auto fields = detail::split_csv_fields(lines[ln]);
    if (fields.size() != width) {
      throw parse_error(source, ln + 1, "ragged row: expected " + std::to_string(width) + " cells, got " +
                                            std::to_string(fields.size()));
    }
    cells.push_back(std::move(fields));
    row_lines.push_back(ln + 1);
  }
  if (cells.empty()) throw empty_dataset();

  std::vector<Attribute> attributes(q);
  Matrix<double> x(cells.size(), q);
  for (std::size_t c = 0; c < q; ++c) {
    attributes[c].name = header[c].text;
    bool numeric = true;
    for (const auto& row : cells) {
      if (!row[c].text.empty() && !detail::parse_number(row[c].text)) {
        numeric = false;
        break;
      }
    }
    std::map<std::string, std::uint32_t> vocab;
    if (!numeric) attributes[c].kind = AttributeKind::categorical;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& t = cells[i][c].text;
      if (t.empty()) {
        x(i, c) = kMissing;
      } else if (numeric) {
        x(i, c) = *detail::parse_number(t);
      } else {
        auto [it, inserted] = vocab.emplace(t, static_cast<std::uint32_t>(attributes[c].categories.size()));
        if (inserted) attributes[c].categories.push_back(t);
        x(i, c) = it->second;
      }
    }
  }
  std::vector<std::string> label_names;
  for (std::size_t j = 0; j < label_count; ++j) label_names.push_back(header[q + j].text);
  Matrix<std::uint8_t> y(cells.size(), label_count);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t j = 0; j < label_count; ++j) {
      const auto v = detail::parse_number(cells[i][q + j].text);
      if (!v || (*v != 0.0 && *v != 1.0)) {
        throw parse_error(source, row_lines[i], "label cell '" + cells[i][q + j].text + "' not in {0,1}");
      }
      y(i, j) = static_cast<std::uint8_t>(*v);
    }
  }
  return {std::move(attributes), std::move(label_names), std::move(x), std::move(y)};
}

inline MultiLabelDataset load_csv(const std::filesystem::path& path, std::size_t label_count) {
  return parse_csv(detail::read_file(path), label_count, path.string());
}

/// Dispatches on the extension: .csv needs spec.trailing, anything else is read as ARFF.
inline MultiLabelDataset load_dataset(const std::filesystem::path& path, const LabelSpec& spec) {
  if (detail::lower(path.extension().string()) == ".csv") return load_csv(path, spec.trailing);
  return load_arff(path, spec);
}

/// Dense ARFF with labels as trailing {0,1} attributes (reload with LabelSpec{.trailing = N}).
/// Label-feature columns are not written.
inline void write_arff(std::ostream& out, const MultiLabelDataset& d, std::string_view relation = "mlchain") {
  const std::size_t q = d.base_feature_count();
  out << "@relation " << detail::quote_arff(relation) << "\n\n";
  for (std::size_t c = 0; c < q; ++c) {
    const auto& a = d.attribute(c);
    out << "@attribute " << detail::quote_arff(a.name) << ' ';
    if (a.kind == AttributeKind::categorical) {
      out << '{';
      for (std::size_t k = 0; k < a.categories.size(); ++k) out << (k ? "," : "") << detail::quote_arff(a.categories[k]);
      out << "}\n";
    } else {
      out << "numeric\n";
    }
  }
  for (const auto& name : d.label_names()) out << "@attribute " << detail::quote_arff(name) << " {0,1}\n";
  out << "\n@data\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t c = 0; c < q; ++c) {
      const double v = d.features()(i, c);
      if (is_missing(v)) {
        out << '?';
      } else if (d.attribute(c).kind == AttributeKind::categorical) {
        out << detail::quote_arff(d.attribute(c).categories[static_cast<std::size_t>(v)]);
      } else {
        out << detail::format_double(v);
      }
      out << ',';
    }
    for (std::size_t j = 0; j < d.num_labels(); ++j) out << (j ? "," : "") << int(d.labels()(i, j));
    out << '\n';
  }
}

inline void write_mulan_xml(std::ostream& out, const std::vector<std::string>& label_names) {
  out << "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<labels xmlns=\"http://mulan.sourceforge.net/labels\">\n";
  for (const auto& name : label_names) {
    std::string esc;
    for (char c : name) {
      switch (c) {
        case '&': esc += "&amp;"; break;
        case '<': esc += "&lt;"; break;
        case '>': esc += "&gt;"; break;
        case '"': esc += "&quot;"; break;
        default: esc += c;
      }
    }
    out << "  <label name=\"" << esc << "\"></label>\n";
  }
  out << "</labels>\n";
}

/// Canonical columnar dump used by golden tests. Tab-separated, one line per column:
///
///   mlchain-dump<TAB>1
///   instances<TAB>M / features<TAB>Q / labels<TAB>N
///   numeric<TAB>name<TAB>v1 v2 ...
///   categorical<TAB>name<TAB>cat0|cat1|...<TAB>i1 i2 ...
///   label-feature<TAB>name<TAB>v1 v2 ...
///   label<TAB>name<TAB>y1 y2 ...
///
/// Missing/unknown cells print as '?', reals as %.17g.
inline void write_canonical(std::ostream& out, const MultiLabelDataset& d) {
  out << "mlchain-dump\t1\n";
  out << "instances\t" << d.size() << "\nfeatures\t" << d.num_features() << "\nlabels\t" << d.num_labels() << '\n';
  for (std::size_t c = 0; c < d.num_features(); ++c) {
    const auto& a = d.attribute(c);
    switch (a.kind) {
      case AttributeKind::numeric: out << "numeric\t" << a.name << '\t'; break;
      case AttributeKind::label_feature: out << "label-feature\t" << a.name << '\t'; break;
      case AttributeKind::categorical:
        out << "categorical\t" << a.name << '\t';
        for (std::size_t k = 0; k < a.categories.size(); ++k) out << (k ? "|" : "") << a.categories[k];
        out << '\t';
        break;
    }
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double v = d.features()(i, c);
      out << (i ? " " : "") << (is_missing(v) ? std::string("?") : detail::format_double(v));
    }
    out << '\n';
  }
  for (std::size_t j = 0; j < d.num_labels(); ++j) {
    out << "label\t" << d.label_names()[j] << '\t';
    for (std::size_t i = 0; i < d.size(); ++i) out << (i ? " " : "") << int(d.labels()(i, j));
    out << '\n';
  }
}

}  // namespace mlchain
