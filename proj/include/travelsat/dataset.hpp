#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

namespace travelsat {

enum class Dimension { socioeconomics, built_environment, travel_characteristics, reference_points };
enum class VariableKind { numeric, categorical };

std::string_view to_string(Dimension d);
std::string_view to_string(VariableKind k);
/// Human-readable heading used when serializing records for a prompt.
std::string_view dimension_heading(Dimension d);

struct Category {
  int code = 0;
  std::string label;
};

struct Variable {
  std::string name;   ///< snake_case column name
  std::string label;  ///< display name used in prompts; unique within a schema
  Dimension dimension = Dimension::socioeconomics;
  VariableKind kind = VariableKind::numeric;
  std::string unit;
  std::vector<Category> categories;
  /// Numeric lower bound; values must be >= min (or > min when min_exclusive).
  std::optional<double> min;
  bool min_exclusive = false;

  bool is_categorical() const noexcept { return kind == VariableKind::categorical; }
  /// Position of `code` in the category list, if declared.
  std::optional<std::size_t> category_index(int code) const;
  const Category* find_category_label(std::string_view label) const;
};

/// Ordered predictor variables plus the name of the satisfaction label.
class VariableSchema {
 public:
  VariableSchema() = default;
  /// Throws SchemaError if names or labels repeat or a categorical has < 2 categories.
  explicit VariableSchema(std::vector<Variable> variables, std::string label_name = "satisfaction");

  /// The 17 predictors of the Shanghai travel survey, grouped in four dimensions.
  static VariableSchema default_schema();
  static VariableSchema from_json(const nlohmann::json& j);
  static VariableSchema load(const std::string& path);
  nlohmann::json to_json() const;

  std::span<const Variable> variables() const noexcept { return variables_; }
  std::size_t size() const noexcept { return variables_.size(); }
  const Variable& operator[](std::size_t i) const { return variables_[i]; }
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::optional<std::size_t> index_of_label(std::string_view label) const;
  const std::string& label_name() const noexcept { return label_name_; }
  std::vector<std::string> names() const;

  friend bool operator==(const VariableSchema& a, const VariableSchema& b) {
    return a.to_json() == b.to_json();
  }

 private:
  std::vector<Variable> variables_;
  std::string label_name_ = "satisfaction";
};

/// One survey respondent. `values` is aligned with the schema's variable order;
/// categorical values hold the category code.
struct RespondentRecord {
  std::string id;
  std::vector<double> values;
  double satisfaction = 0.0;

  friend bool operator==(const RespondentRecord&, const RespondentRecord&) = default;
};

struct Dataset {
  VariableSchema schema;
  std::vector<RespondentRecord> records;
  /// Incomplete rows skipped by load_survey.
  std::size_t dropped = 0;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
  std::vector<double> labels() const;
  /// Values of one variable across all records.
  std::vector<double> column(std::size_t variable) const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

/// Checks codes, bounds and the label range. Throws ValidationError.
void validate_record(const RespondentRecord& record, const VariableSchema& schema);

inline constexpr std::size_t kSatisfactionItemCount = 9;

/// Mean of the nine 1-7 satisfaction-with-travel items.
double compute_satisfaction(std::span<const int> items);

/// Parses a comma-separated table with a header row.
///
/// Columns are matched by name. `record_id` is optional (row numbers are used
/// when absent). The label comes from a `satisfaction` column or, failing that,
/// from `sts_1` .. `sts_9`. Rows with an empty or `NA` cell are dropped and
/// counted; any other bad cell raises RowError.
Dataset parse_survey(std::string_view csv, const VariableSchema& schema);
Dataset load_survey(const std::string& path, const VariableSchema& schema);

/// Serializes in the format parse_survey reads (record_id, variables..., satisfaction).
std::string format_survey(const Dataset& dataset);
void save_survey(const std::string& path, const Dataset& dataset);

// ---------------------------------------------------------------------------
// Encoding

using FeatureVector = std::vector<double>;
using FeatureMatrix = std::vector<FeatureVector>;

struct ColumnEncoding {
  std::size_t variable = 0;
  VariableKind kind = VariableKind::numeric;
  double mean = 0.0;
  double sd = 1.0;
  /// Numeric column with zero spread; encoded as 0 everywhere.
  bool constant = false;
  std::size_t offset = 0;
  std::size_t width = 1;
};

/// z-score for numeric variables, full one-hot groups for categoricals.
struct EncodingSpec {
  VariableSchema schema;
  std::vector<ColumnEncoding> columns;  ///< one per schema variable
  std::size_t width = 0;

  /// Names of encoded components, e.g. "age" or "commute_mode=3".
  std::vector<std::string> component_names() const;
  /// Schema variable index owning each encoded component.
  std::vector<std::size_t> component_variables() const;
  bool has_constant_columns() const;
};

EncodingSpec fit_encoding(const Dataset& dataset);
FeatureVector encode(const RespondentRecord& record, const EncodingSpec& spec);
FeatureMatrix encode_all(const Dataset& dataset, const EncodingSpec& spec);

// ---------------------------------------------------------------------------
// Splitting

struct Split {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

/// Random partition with |train| = round(fraction * n).
Split split(const Dataset& dataset, double train_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthesis

struct NumericMarginal {
  enum class Family { normal, lognormal, poisson };
  Family family = Family::normal;
  double mean = 0.0;
  double sd = 1.0;  ///< ignored for poisson
  std::optional<double> min;
  std::optional<double> max;
  int decimals = 0;
};

struct CategoricalMarginal {
  std::vector<std::pair<int, double>> weights;  ///< code -> relative weight
};

using Marginal = std::variant<NumericMarginal, CategoricalMarginal>;

struct Marginals {
  std::map<std::string, Marginal> by_variable;

  /// Means and shares matching the published survey summary.
  static Marginals table2();
  static Marginals from_json(const nlohmann::json& j);
  static Marginals load(const std::string& path);
  nlohmann::json to_json() const;
};

struct SynthesisOptions {
  std::size_t n = 874;
  std::uint64_t seed = 1;
  std::string label_rule = "linear";
  double noise_sd = 0.5;
};

/// Draws every variable independently from its marginal; the label is the
/// named rule (see label_rules.hpp) plus N(0, noise_sd), clamped to [1, 7].
Dataset synthesize(const VariableSchema& schema, const Marginals& marginals,
                   const SynthesisOptions& options);

}  // namespace travelsat
