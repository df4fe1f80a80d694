#include "travelsat/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "travelsat/error.hpp"
#include "travelsat/label_rules.hpp"
#include "travelsat/rng.hpp"
#include "travelsat/text.hpp"

namespace travelsat {

using nlohmann::json;

std::string_view to_string(Dimension d) {
  switch (d) {
    case Dimension::socioeconomics: return "socioeconomics";
    case Dimension::built_environment: return "built_environment";
    case Dimension::travel_characteristics: return "travel_characteristics";
    case Dimension::reference_points: return "reference_points";
  }
  return "?";
}

std::string_view to_string(VariableKind k) {
  return k == VariableKind::numeric ? "numeric" : "categorical";
}

std::string_view dimension_heading(Dimension d) {
  switch (d) {
    case Dimension::socioeconomics: return "Socioeconomics";
    case Dimension::built_environment: return "Built environment";
    case Dimension::travel_characteristics: return "Travel characteristics";
    case Dimension::reference_points: return "Reference points";
  }
  return "?";
}

namespace {

Dimension parse_dimension(std::string_view s) {
  for (auto d : {Dimension::socioeconomics, Dimension::built_environment,
                 Dimension::travel_characteristics, Dimension::reference_points}) {
    if (to_string(d) == s) return d;
  }
  throw SchemaError("unknown dimension: " + std::string(s));
}

Variable categorical(std::string name, std::string label, Dimension dim,
                     std::vector<Category> categories) {
  Variable v;
  v.name = std::move(name);
  v.label = std::move(label);
  v.dimension = dim;
  v.kind = VariableKind::categorical;
  v.categories = std::move(categories);
  return v;
}

Variable numeric(std::string name, std::string label, Dimension dim, std::string unit,
                 double min, bool min_exclusive = false) {
  Variable v;
  v.name = std::move(name);
  v.label = std::move(label);
  v.dimension = dim;
  v.kind = VariableKind::numeric;
  v.unit = std::move(unit);
  v.min = min;
  v.min_exclusive = min_exclusive;
  return v;
}

std::vector<Category> mode_categories() {
  return {{1, "walk"}, {2, "bike"}, {3, "subway"}, {4, "taxi"}, {5, "bus"},
          {6, "private car"}, {7, "shuttle bus"}, {8, "car-sharing"}, {9, "others"}};
}

bool is_missing(std::string_view cell) {
  cell = text::trim(cell);
  return cell.empty() || cell == "NA" || cell == "na" || cell == "N/A";
}

}  // namespace

std::optional<std::size_t> Variable::category_index(int code) const {
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i].code == code) return i;
  }
  return std::nullopt;
}

const Category* Variable::find_category_label(std::string_view l) const {
  for (const auto& c : categories) {
    if (c.label == l) return &c;
  }
  return nullptr;
}

VariableSchema::VariableSchema(std::vector<Variable> variables, std::string label_name)
    : variables_(std::move(variables)), label_name_(std::move(label_name)) {
  std::set<std::string, std::less<>> names;
  std::set<std::string, std::less<>> labels;
  for (const auto& v : variables_) {
    if (v.name.empty()) throw SchemaError("variable with empty name");
    if (v.name == label_name_ || v.name == "record_id") {
      throw SchemaError("variable name collides with a reserved column: " + v.name);
    }
    if (!names.insert(v.name).second) throw SchemaError("duplicate variable name: " + v.name);
    if (!labels.insert(v.label).second) throw SchemaError("duplicate variable label: " + v.label);
    if (v.is_categorical()) {
      if (v.categories.size() < 2) {
        throw SchemaError("categorical variable needs >= 2 categories: " + v.name);
      }
      std::set<int> codes;
      std::set<std::string> cat_labels;
      for (const auto& c : v.categories) {
        if (!codes.insert(c.code).second || !cat_labels.insert(c.label).second) {
          throw SchemaError("duplicate category in " + v.name);
        }
      }
    }
  }
}

VariableSchema VariableSchema::default_schema() {
  using D = Dimension;
  std::vector<Variable> v;
  v.push_back(categorical("gender", "Gender", D::socioeconomics, {{0, "male"}, {1, "female"}}));
  v.push_back(numeric("age", "Age", D::socioeconomics, "years", 0.0, true));
  v.push_back(numeric("income", "Income", D::socioeconomics, "yuan per month", 0.0));
  v.push_back(categorical("education", "Education level", D::socioeconomics,
                          {{1, "primary school"}, {2, "middle school"}, {3, "high school"},
                           {4, "junior college"}, {5, "bachelor"}, {6, "master or above"}}));
  v.push_back(categorical("car_access", "Car access", D::socioeconomics,
                          {{0, "no car"}, {1, "one car"}, {2, "two cars"}, {3, "three cars"},
                           {4, "four cars"}}));
  v.push_back(numeric("walk_transit", "Walking time to nearest public transit station",
                      D::built_environment, "minutes", 0.0));
  v.push_back(numeric("walk_parking", "Walking time to nearest parking lot",
                      D::built_environment, "minutes", 0.0));
  v.push_back(numeric("walk_hospital", "Walking time to nearest hospital",
                      D::built_environment, "minutes", 0.0));
  v.push_back(numeric("walk_mall", "Walking time to nearest shopping mall",
                      D::built_environment, "minutes", 0.0));
  v.push_back(numeric("walk_restaurant", "Walking time to nearest restaurant",
                      D::built_environment, "minutes", 0.0));
  v.push_back(numeric("commute_time", "Commuting time", D::travel_characteristics,
                      "minutes", 0.0));
  v.push_back(categorical("commute_mode", "Commuting mode", D::travel_characteristics,
                          mode_categories()));
  v.push_back(numeric("weekday_trips", "Number of trips on weekday",
                      D::travel_characteristics, "trips", 0.0));
  v.push_back(numeric("past_commute_time", "Past commuting time (before last relocation)",
                      D::reference_points, "minutes", 0.0));
  v.push_back(categorical("past_commute_mode", "Past commuting mode (before last relocation)",
                          D::reference_points, mode_categories()));
  v.push_back(numeric("peer_commute_time", "Family members' commuting time",
                      D::reference_points, "minutes", 0.0));
  v.push_back(categorical("peer_commute_mode", "Family members' commuting mode",
                          D::reference_points, mode_categories()));
  return VariableSchema(std::move(v));
}

VariableSchema VariableSchema::from_json(const json& j) {
  try {
    std::vector<Variable> vars;
    for (const auto& jv : j.at("variables")) {
      Variable v;
      v.name = jv.at("name").get<std::string>();
      v.label = jv.value("label", v.name);
      v.dimension = parse_dimension(jv.at("dimension").get<std::string>());
      const auto kind = jv.at("kind").get<std::string>();
      if (kind == "numeric") {
        v.kind = VariableKind::numeric;
      } else if (kind == "categorical") {
        v.kind = VariableKind::categorical;
      } else {
        throw SchemaError("unknown kind for " + v.name + ": " + kind);
      }
      v.unit = jv.value("unit", "");
      if (jv.contains("min")) v.min = jv.at("min").get<double>();
      v.min_exclusive = jv.value("min_exclusive", false);
      if (jv.contains("categories")) {
        for (const auto& jc : jv.at("categories")) {
          v.categories.push_back({jc.at("code").get<int>(), jc.at("label").get<std::string>()});
        }
      }
      vars.push_back(std::move(v));
    }
    return VariableSchema(std::move(vars), j.value("label", std::string("satisfaction")));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed schema: ") + e.what());
  }
}

VariableSchema VariableSchema::load(const std::string& path) {
  json j;
  try {
    j = json::parse(text::read_file(path));
  } catch (const json::exception& e) {
    throw SchemaError("cannot parse schema " + path + ": " + e.what());
  }
  return from_json(j);
}

json VariableSchema::to_json() const {
  json vars = json::array();
  for (const auto& v : variables_) {
    json jv{{"name", v.name},
            {"label", v.label},
            {"dimension", std::string(to_string(v.dimension))},
            {"kind", std::string(to_string(v.kind))}};
    if (!v.unit.empty()) jv["unit"] = v.unit;
    if (v.min) jv["min"] = *v.min;
    if (v.min_exclusive) jv["min_exclusive"] = true;
    if (v.is_categorical()) {
      json cats = json::array();
      for (const auto& c : v.categories) cats.push_back({{"code", c.code}, {"label", c.label}});
      jv["categories"] = std::move(cats);
    }
    vars.push_back(std::move(jv));
  }
  return json{{"version", 1}, {"label", label_name_}, {"variables", std::move(vars)}};
}

std::optional<std::size_t> VariableSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    if (variables_[i].name == name) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> VariableSchema::index_of_label(std::string_view label) const {
  for (std::size_t i = 0; i < variables_.size(); ++i) {
    if (variables_[i].label == label) return i;
  }
  return std::nullopt;
}

std::vector<std::string> VariableSchema::names() const {
  std::vector<std::string> out;
  out.reserve(variables_.size());
  for (const auto& v : variables_) out.push_back(v.name);
  return out;
}

std::vector<double> Dataset::labels() const {
  std::vector<double> y;
  y.reserve(records.size());
  for (const auto& r : records) y.push_back(r.satisfaction);
  return y;
}

std::vector<double> Dataset::column(std::size_t variable) const {
  std::vector<double> col;
  col.reserve(records.size());
  for (const auto& r : records) col.push_back(r.values.at(variable));
  return col;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.schema = schema;
  out.records.reserve(indices.size());
  for (const auto i : indices) out.records.push_back(records.at(i));
  return out;
}

void validate_record(const RespondentRecord& record, const VariableSchema& schema) {
  if (record.values.size() != schema.size()) {
    throw ValidationError(fmt::format("record {} has {} values, schema has {}", record.id,
                                      record.values.size(), schema.size()));
  }
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& var = schema[i];
    const double x = record.values[i];
    if (!std::isfinite(x)) throw ValidationError(fmt::format("{}: non-finite value", var.name));
    if (var.is_categorical()) {
      if (x != std::round(x) || !var.category_index(static_cast<int>(x))) {
        throw ValidationError(fmt::format("{}: code {} is not a declared category", var.name,
                                          text::format_double(x)));
      }
    } else if (var.min) {
      const bool ok = var.min_exclusive ? x > *var.min : x >= *var.min;
      if (!ok) {
        throw ValidationError(fmt::format("{}: value {} below allowed minimum {}", var.name,
                                          text::format_double(x), text::format_double(*var.min)));
      }
    }
  }
  if (!(record.satisfaction >= 1.0 && record.satisfaction <= 7.0)) {
    throw ValidationError(fmt::format("satisfaction {} outside [1, 7]",
                                      text::format_double(record.satisfaction)));
  }
}

double compute_satisfaction(std::span<const int> items) {
  if (items.size() != kSatisfactionItemCount) {
    throw ValidationError(fmt::format("expected {} satisfaction items, got {}",
                                      kSatisfactionItemCount, items.size()));
  }
  int sum = 0;
  for (const int item : items) {
    if (item < 1 || item > 7) throw ValidationError(fmt::format("item {} outside [1, 7]", item));
    sum += item;
  }
  return static_cast<double>(sum) / static_cast<double>(kSatisfactionItemCount);
}

Dataset parse_survey(std::string_view csv, const VariableSchema& schema) {
  const auto rows = text::lines(csv);
  if (rows.empty()) throw SchemaError("table has no header row");
  auto header = text::split_delimited(rows.front());
  for (auto& h : header) h = std::string(text::trim(h));
  if (!header.empty() && header.front().starts_with("\xEF\xBB\xBF")) header.front().erase(0, 3);

  auto find_column = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };

  std::vector<std::size_t> var_cols;
  for (const auto& v : schema.variables()) {
    const auto col = find_column(v.name);
    if (!col) throw SchemaError("missing required column: " + v.name);
    var_cols.push_back(*col);
  }
  const auto id_col = find_column("record_id");
  const auto label_col = find_column(schema.label_name());
  std::vector<std::size_t> item_cols;
  if (!label_col) {
    for (std::size_t i = 1; i <= kSatisfactionItemCount; ++i) {
      const auto col = find_column(fmt::format("sts_{}", i));
      if (!col) {
        throw SchemaError("missing required column: " + schema.label_name() +
                          " (or sts_1..sts_9)");
      }
      item_cols.push_back(*col);
    }
  }

  Dataset out;
  out.schema = schema;
  std::set<std::string> seen_ids;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (text::trim(rows[r]).empty()) continue;
    const auto cells = text::split_delimited(rows[r]);
    auto cell = [&](std::size_t col) -> std::string_view {
      return col < cells.size() ? std::string_view(cells[col]) : std::string_view{};
    };
    auto number = [&](std::size_t col, std::string_view what) {
      const auto v = text::parse_double(cell(col));
      if (!v) {
        throw RowError(r, fmt::format("unparseable value '{}' in column {}", cell(col), what));
      }
      return *v;
    };

    bool incomplete = false;
    for (const auto col : var_cols) incomplete = incomplete || is_missing(cell(col));
    if (label_col) {
      incomplete = incomplete || is_missing(cell(*label_col));
    } else {
      for (const auto col : item_cols) incomplete = incomplete || is_missing(cell(col));
    }
    if (incomplete) {
      ++out.dropped;
      continue;
    }

    RespondentRecord rec;
    rec.id = id_col ? std::string(text::trim(cell(*id_col))) : fmt::format("R{:04d}", r);
    if (rec.id.empty()) rec.id = fmt::format("R{:04d}", r);
    if (!seen_ids.insert(rec.id).second) throw RowError(r, "duplicate record_id " + rec.id);
    for (std::size_t i = 0; i < var_cols.size(); ++i) {
      rec.values.push_back(number(var_cols[i], schema[i].name));
    }
    if (label_col) {
      rec.satisfaction = number(*label_col, schema.label_name());
    } else {
      std::vector<int> items;
      for (std::size_t i = 0; i < item_cols.size(); ++i) {
        const double x = number(item_cols[i], fmt::format("sts_{}", i + 1));
        if (x != std::round(x)) throw RowError(r, fmt::format("sts_{} is not an integer", i + 1));
        items.push_back(static_cast<int>(x));
      }
      try {
        rec.satisfaction = compute_satisfaction(items);
      } catch (const ValidationError& e) {
        throw RowError(r, e.what());
      }
    }
    try {
      validate_record(rec, schema);
    } catch (const ValidationError& e) {
      throw RowError(r, e.what());
    }
    out.records.push_back(std::move(rec));
  }
  if (out.records.empty()) {
    throw DatasetEmptyError(fmt::format("no complete rows ({} dropped)", out.dropped));
  }
  return out;
}

Dataset load_survey(const std::string& path, const VariableSchema& schema) {
  return parse_survey(text::read_file(path), schema);
}

std::string format_survey(const Dataset& dataset) {
  std::string out = "record_id";
  for (const auto& v : dataset.schema.variables()) out += "," + v.name;
  out += "," + dataset.schema.label_name() + "\n";
  for (const auto& r : dataset.records) {
    out += r.id;
    for (const double x : r.values) out += "," + text::format_double(x);
    out += "," + text::format_double(r.satisfaction) + "\n";
  }
  return out;
}

void save_survey(const std::string& path, const Dataset& dataset) {
  text::write_file_atomic(path, format_survey(dataset));
}

// ---------------------------------------------------------------------------

std::vector<std::string> EncodingSpec::component_names() const {
  std::vector<std::string> names;
  names.reserve(width);
  for (const auto& c : columns) {
    const auto& var = schema[c.variable];
    if (c.kind == VariableKind::numeric) {
      names.push_back(var.name);
    } else {
      for (const auto& cat : var.categories) names.push_back(fmt::format("{}={}", var.name, cat.code));
    }
  }
  return names;
}

std::vector<std::size_t> EncodingSpec::component_variables() const {
  std::vector<std::size_t> owners;
  owners.reserve(width);
  for (const auto& c : columns) owners.insert(owners.end(), c.width, c.variable);
  return owners;
}

bool EncodingSpec::has_constant_columns() const {
  return std::any_of(columns.begin(), columns.end(), [](const auto& c) { return c.constant; });
}

EncodingSpec fit_encoding(const Dataset& dataset) {
  if (dataset.empty()) throw DatasetEmptyError("cannot fit an encoding on an empty dataset");
  EncodingSpec spec;
  spec.schema = dataset.schema;
  const auto n = static_cast<double>(dataset.size());
  std::size_t offset = 0;
  for (std::size_t i = 0; i < dataset.schema.size(); ++i) {
    const auto& var = dataset.schema[i];
    ColumnEncoding col;
    col.variable = i;
    col.kind = var.kind;
    col.offset = offset;
    if (var.is_categorical()) {
      col.width = var.categories.size();
    } else {
      double sum = 0.0;
      for (const auto& r : dataset.records) sum += r.values[i];
      col.mean = sum / n;
      double ss = 0.0;
      for (const auto& r : dataset.records) ss += (r.values[i] - col.mean) * (r.values[i] - col.mean);
      col.sd = dataset.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
      if (!(col.sd > 0.0)) {
        col.constant = true;
        col.sd = 1.0;
        std::clog << "warning: numeric column '" << var.name
                  << "' is constant; encoded as 0 for every record\n";
      }
    }
    offset += col.width;
    spec.columns.push_back(col);
  }
  spec.width = offset;
  return spec;
}

FeatureVector encode(const RespondentRecord& record, const EncodingSpec& spec) {
  if (record.values.size() != spec.schema.size()) {
    throw ValidationError("record " + record.id + " does not match the encoding's schema");
  }
  FeatureVector out(spec.width, 0.0);
  for (const auto& col : spec.columns) {
    const double x = record.values[col.variable];
    if (col.kind == VariableKind::numeric) {
      out[col.offset] = col.constant ? 0.0 : (x - col.mean) / col.sd;
    } else {
      const auto& var = spec.schema[col.variable];
      const auto idx = x == std::round(x) ? var.category_index(static_cast<int>(x)) : std::nullopt;
      if (!idx) {
        throw ValidationError(fmt::format("record {}: unknown category {} for {}", record.id,
                                          text::format_double(x), var.name));
      }
      out[col.offset + *idx] = 1.0;
    }
  }
  return out;
}

FeatureMatrix encode_all(const Dataset& dataset, const EncodingSpec& spec) {
  FeatureMatrix m;
  m.reserve(dataset.size());
  for (const auto& r : dataset.records) m.push_back(encode(r, spec));
  return m;
}

// ---------------------------------------------------------------------------

Split split(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
  const auto n = dataset.size();
  if (n < 2) throw ValidationError("split needs at least 2 records");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train fraction must lie in (0, 1)");
  }
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train == n) {
    throw ValidationError(fmt::format("train fraction {} leaves an empty side for n = {}",
                                      train_fraction, n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span(order));
  Split s;
  s.train_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(s.train_indices.begin(), s.train_indices.end());
  std::sort(s.test_indices.begin(), s.test_indices.end());
  s.train = dataset.subset(s.train_indices);
  s.test = dataset.subset(s.test_indices);
  return s;
}

// ---------------------------------------------------------------------------

namespace {

NumericMarginal num(NumericMarginal::Family f, double mean, double sd,
                    std::optional<double> min = std::nullopt, int decimals = 0) {
  NumericMarginal m;
  m.family = f;
  m.mean = mean;
  m.sd = sd;
  m.min = min;
  m.decimals = decimals;
  return m;
}

std::string_view family_name(NumericMarginal::Family f) {
  switch (f) {
    case NumericMarginal::Family::normal: return "normal";
    case NumericMarginal::Family::lognormal: return "lognormal";
    case NumericMarginal::Family::poisson: return "poisson";
  }
  return "?";
}

double draw_numeric(const NumericMarginal& m, Rng& rng) {
  auto draw_once = [&] {
    switch (m.family) {
      case NumericMarginal::Family::normal:
        return m.mean + m.sd * rng.normal();
      case NumericMarginal::Family::lognormal: {
        const double s2 = std::log1p((m.sd * m.sd) / (m.mean * m.mean));
        const double mu = std::log(m.mean) - 0.5 * s2;
        return std::exp(mu + std::sqrt(s2) * rng.normal());
      }
      case NumericMarginal::Family::poisson:
        return static_cast<double>(rng.poisson(m.mean));
    }
    return 0.0;
  };
  const double scale = std::pow(10.0, m.decimals);
  auto in_range = [&](double x) {
    return (!m.min || x >= *m.min) && (!m.max || x <= *m.max);
  };
  double x = 0.0;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    x = std::round(draw_once() * scale) / scale;
    if (in_range(x)) return x;
  }
  if (m.min) x = std::max(x, *m.min);
  if (m.max) x = std::min(x, *m.max);
  return x;
}

int draw_categorical(const CategoricalMarginal& m, Rng& rng) {
  double total = 0.0;
  for (const auto& [code, w] : m.weights) total += w;
  double u = rng.uniform01() * total;
  for (const auto& [code, w] : m.weights) {
    if (u < w) return code;
    u -= w;
  }
  return m.weights.back().first;
}

}  // namespace

Marginals Marginals::table2() {
  using F = NumericMarginal::Family;
  Marginals m;
  auto& b = m.by_variable;
  b["gender"] = CategoricalMarginal{{{0, 54.71}, {1, 45.29}}};
  b["age"] = num(F::lognormal, 34.71, 12.0, 13.0);
  b["income"] = num(F::lognormal, 21650.0, 15000.0, 0.0);
  b["education"] = CategoricalMarginal{
      {{1, 2.23}, {2, 5.03}, {3, 7.56}, {4, 7.42}, {5, 63.71}, {6, 14.04}}};
  b["car_access"] = CategoricalMarginal{{{0, 80.89}, {1, 1.33}, {2, 14.20}, {3, 2.47}, {4, 0.31}}};
  b["walk_transit"] = num(F::lognormal, 9.23, 6.0, 0.0);
  b["walk_parking"] = num(F::lognormal, 10.69, 7.0, 0.0);
  b["walk_hospital"] = num(F::lognormal, 20.50, 12.0, 0.0);
  b["walk_mall"] = num(F::lognormal, 15.20, 9.0, 0.0);
  b["walk_restaurant"] = num(F::lognormal, 12.26, 8.0, 0.0);
  b["commute_time"] = num(F::lognormal, 26.97, 18.0, 0.0);
  b["commute_mode"] = CategoricalMarginal{{{1, 3.18}, {2, 2.00}, {3, 24.00}, {4, 0.94}, {5, 15.80},
                                           {6, 48.75}, {7, 1.53}, {8, 0.41}, {9, 3.39}}};
  b["weekday_trips"] = num(F::poisson, 5.27, 0.0, 0.0);
  b["past_commute_time"] = num(F::lognormal, 27.19, 18.0, 0.0);
  b["past_commute_mode"] = CategoricalMarginal{{{1, 5.54}, {2, 4.98}, {3, 19.77}, {4, 2.72},
                                                {5, 27.01}, {6, 23.02}, {7, 7.98}, {8, 0.23},
                                                {9, 8.75}}};
  b["peer_commute_time"] = num(F::lognormal, 27.30, 18.0, 0.0);
  b["peer_commute_mode"] = CategoricalMarginal{{{1, 1.45}, {2, 0.83}, {3, 26.92}, {4, 1.24},
                                                {5, 12.01}, {6, 52.58}, {7, 2.28}, {8, 0.62},
                                                {9, 0.60}}};
  return m;
}

Marginals Marginals::from_json(const json& j) {
  Marginals m;
  try {
    for (const auto& [name, jm] : j.at("variables").items()) {
      const auto dist = jm.at("distribution").get<std::string>();
      if (dist == "categorical") {
        CategoricalMarginal c;
        for (const auto& jw : jm.at("weights")) {
          c.weights.emplace_back(jw.at("code").get<int>(), jw.at("weight").get<double>());
        }
        if (c.weights.empty()) throw ConfigError("categorical marginal without weights: " + name);
        m.by_variable[name] = std::move(c);
        continue;
      }
      NumericMarginal n;
      if (dist == "normal") {
        n.family = NumericMarginal::Family::normal;
      } else if (dist == "lognormal") {
        n.family = NumericMarginal::Family::lognormal;
      } else if (dist == "poisson") {
        n.family = NumericMarginal::Family::poisson;
      } else {
        throw ConfigError("unknown distribution for " + name + ": " + dist);
      }
      n.mean = jm.at("mean").get<double>();
      n.sd = jm.value("sd", 0.0);
      if (jm.contains("min")) n.min = jm.at("min").get<double>();
      if (jm.contains("max")) n.max = jm.at("max").get<double>();
      n.decimals = jm.value("decimals", 0);
      if (n.family == NumericMarginal::Family::lognormal && !(n.mean > 0.0)) {
        throw ConfigError("lognormal marginal needs a positive mean: " + name);
      }
      m.by_variable[name] = n;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed marginals: ") + e.what());
  }
  return m;
}

Marginals Marginals::load(const std::string& path) {
  try {
    return from_json(json::parse(text::read_file(path)));
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse marginals " + path + ": " + e.what());
  }
}

json Marginals::to_json() const {
  json vars = json::object();
  for (const auto& [name, marginal] : by_variable) {
    if (const auto* c = std::get_if<CategoricalMarginal>(&marginal)) {
      json weights = json::array();
      for (const auto& [code, w] : c->weights) weights.push_back({{"code", code}, {"weight", w}});
      vars[name] = {{"distribution", "categorical"}, {"weights", std::move(weights)}};
    } else {
      const auto& n = std::get<NumericMarginal>(marginal);
      json jn{{"distribution", std::string(family_name(n.family))}, {"mean", n.mean}};
      if (n.family != NumericMarginal::Family::poisson) jn["sd"] = n.sd;
      if (n.min) jn["min"] = *n.min;
      if (n.max) jn["max"] = *n.max;
      jn["decimals"] = n.decimals;
      vars[name] = std::move(jn);
    }
  }
  return json{{"version", 1}, {"variables", std::move(vars)}};
}

Dataset synthesize(const VariableSchema& schema, const Marginals& marginals,
                   const SynthesisOptions& options) {
  if (options.n == 0) throw ValidationError("synthesize needs n >= 1");
  const LinearRule& rule = label_rule(options.label_rule);
  std::vector<const Marginal*> per_var;
  for (const auto& v : schema.variables()) {
    const auto it = marginals.by_variable.find(v.name);
    if (it == marginals.by_variable.end()) throw ConfigError("no marginal for variable " + v.name);
    const bool cat_marginal = std::holds_alternative<CategoricalMarginal>(it->second);
    if (cat_marginal != v.is_categorical()) {
      throw ConfigError("marginal kind does not match schema for " + v.name);
    }
    if (const auto* c = std::get_if<CategoricalMarginal>(&it->second)) {
      for (const auto& [code, w] : c->weights) {
        if (!v.category_index(code)) {
          throw ConfigError(fmt::format("marginal for {} uses undeclared code {}", v.name, code));
        }
      }
    }
    per_var.push_back(&it->second);
  }

  Dataset out;
  out.schema = schema;
  out.records.reserve(options.n);
  // One stream per variable, one for noise: adding a variable does not shift the others.
  std::vector<Rng> streams;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    streams.emplace_back(mix_seed(options.seed, fnv1a(schema[i].name)));
  }
  Rng noise(mix_seed(options.seed, fnv1a("__label_noise__")));
  const int width = static_cast<int>(std::to_string(options.n).size());
  for (std::size_t r = 0; r < options.n; ++r) {
    RespondentRecord rec;
    rec.id = fmt::format("S{:0{}d}", r + 1, std::max(width, 4));
    rec.values.reserve(schema.size());
    for (std::size_t i = 0; i < schema.size(); ++i) {
      if (const auto* c = std::get_if<CategoricalMarginal>(per_var[i])) {
        rec.values.push_back(draw_categorical(*c, streams[i]));
      } else {
        double x = draw_numeric(std::get<NumericMarginal>(*per_var[i]), streams[i]);
        const auto& var = schema[i];
        if (var.min && var.min_exclusive && x <= *var.min) x = std::nextafter(*var.min, 1e300);
        if (var.min && !var.min_exclusive && x < *var.min) x = *var.min;
        rec.values.push_back(x);
      }
    }
    const double eps = options.noise_sd > 0.0 ? options.noise_sd * noise.normal() : 0.0;
    rec.satisfaction = std::clamp(rule.evaluate(schema, rec.values) + eps, 1.0, 7.0);
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace travelsat
