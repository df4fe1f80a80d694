#include "travelsat/mock_backend.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "travelsat/error.hpp"
#include "travelsat/label_rules.hpp"
#include "travelsat/rng.hpp"
#include "travelsat/text.hpp"

namespace travelsat {
namespace {

constexpr std::string_view kExampleHeader = "### Example ";
constexpr std::string_view kTravelerHeader = "### Traveler ";
constexpr std::string_view kLabelPrefix = "Travel satisfaction: ";

bool is_dimension_heading(std::string_view line) {
  for (auto d : {Dimension::socioeconomics, Dimension::built_environment,
                 Dimension::travel_characteristics, Dimension::reference_points}) {
    if (line == fmt::format("{}:", dimension_heading(d))) return true;
  }
  return false;
}

double parse_value(const Variable& var, std::string_view text_value, std::string_view id) {
  if (var.is_categorical()) {
    const auto* cat = var.find_category_label(text_value);
    if (!cat) throw MockGrammarError(fmt::format("{}: unknown category '{}' for {}", id, text_value, var.name));
    return cat->code;
  }
  std::string_view number = text_value;
  if (!var.unit.empty()) {
    const std::string suffix = " " + var.unit;
    if (!text_value.ends_with(suffix)) {
      throw MockGrammarError(fmt::format("{}: value for {} lacks unit '{}'", id, var.name, var.unit));
    }
    number = text_value.substr(0, text_value.size() - suffix.size());
  }
  const auto x = text::parse_double(number);
  if (!x) throw MockGrammarError(fmt::format("{}: non-numeric value for {}", id, var.name));
  return *x;
}

double gaussian(std::uint64_t seed) { return Rng(seed).normal(); }

}  // namespace

MockOptions parse_mock_spec(std::string_view spec, std::uint64_t noise_seed) {
  MockOptions o;
  o.noise_seed = noise_seed;
  auto name = spec;
  if (const auto colon = spec.find(':'); colon != std::string_view::npos) {
    name = spec.substr(0, colon);
    const auto sd = text::parse_double(spec.substr(colon + 1));
    if (!sd || *sd < 0.0) throw ConfigError("bad mock noise in '" + std::string(spec) + "'");
    o.noise_sd = *sd;
  }
  if (name == "knn") {
    o.mode = MockOptions::Mode::knn;
  } else {
    try {
      label_rule(name);
    } catch (const ValidationError&) {
      throw ConfigError("unknown mock '" + std::string(name) + "'; expected knn or one of the label rules");
    }
    o.mode = MockOptions::Mode::rule;
    o.rule = std::string(name);
  }
  return o;
}

ParsedPrompt parse_prompt(const ChatRequest& request, const VariableSchema& schema) {
  ParsedPrompt out;
  out.wants_predictions = request.system.find("```predictions") != std::string::npos;
  out.wants_importance = request.system.find("```importance") != std::string::npos;
  if (!out.wants_predictions && !out.wants_importance) {
    throw MockGrammarError("system text carries no output contract");
  }
  if (out.wants_predictions && request.system.find("id,score") == std::string::npos) {
    throw MockGrammarError("predictions contract lacks the id,score header");
  }

  ParsedRecord* current = nullptr;
  std::vector<bool> seen;
  auto finish = [&] {
    if (!current) return;
    for (std::size_t i = 0; i < schema.size(); ++i) {
      if (!seen[i]) {
        throw MockGrammarError(fmt::format("{}: missing variable '{}'", current->id, schema[i].label));
      }
    }
    current = nullptr;
  };
  auto start = [&](std::vector<ParsedRecord>& list, std::string_view id) {
    finish();
    if (id.empty()) throw MockGrammarError("record header without id");
    list.push_back({std::string(id), std::vector<double>(schema.size(), 0.0), std::nullopt});
    current = &list.back();
    seen.assign(schema.size(), false);
  };

  for (const auto raw_line : text::lines(request.user)) {
    const auto line = text::trim(raw_line);
    if (line.starts_with(kExampleHeader)) {
      start(out.examples, text::trim(line.substr(kExampleHeader.size())));
    } else if (line.starts_with(kTravelerHeader)) {
      start(out.queries, text::trim(line.substr(kTravelerHeader.size())));
    } else if (current && line.starts_with(kLabelPrefix)) {
      const auto y = text::parse_double(line.substr(kLabelPrefix.size()));
      if (!y) throw MockGrammarError(current->id + ": unparseable label");
      current->label = *y;
    } else if (current && line.starts_with("- ")) {
      const auto sep = line.find(": ");
      if (sep == std::string_view::npos) throw MockGrammarError("variable line without ': '");
      const auto label = line.substr(2, sep - 2);
      const auto idx = schema.index_of_label(label);
      if (!idx) throw MockGrammarError(fmt::format("{}: unknown variable '{}'", current->id, label));
      if (seen[*idx]) throw MockGrammarError(fmt::format("{}: repeated variable '{}'", current->id, label));
      seen[*idx] = true;
      current->values[*idx] = parse_value(schema[*idx], line.substr(sep + 2), current->id);
    } else if (current && (line.empty() || is_dimension_heading(line))) {
      if (line.empty()) finish();
    } else {
      finish();
    }
  }
  finish();
  for (const auto& e : out.examples) {
    if (!e.label) throw MockGrammarError("example " + e.id + " has no label");
  }
  for (const auto& q : out.queries) {
    if (q.label) throw MockGrammarError("query " + q.id + " carries a label");
  }
  if (out.wants_predictions && out.queries.empty()) {
    throw MockGrammarError("prediction prompt has no travelers");
  }
  return out;
}

ScriptedMock::ScriptedMock(VariableSchema schema, MockOptions options)
    : schema_(std::move(schema)), options_(std::move(options)) {
  label_rule(options_.rule);
  label_rule(options_.fallback_rule);
}

double ScriptedMock::score(const ParsedRecord& query, const ParsedPrompt& prompt,
                           std::uint64_t trial) const {
  double y = 0.0;
  if (options_.mode == MockOptions::Mode::knn && !prompt.examples.empty()) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& ex : prompt.examples) {
      double d = 0.0;
      for (std::size_t i = 0; i < schema_.size(); ++i) {
        if (schema_[i].is_categorical()) {
          d += ex.values[i] == query.values[i] ? 0.0 : 1.0;
        } else {
          const double z = (ex.values[i] - query.values[i]) / reference_scale(schema_[i].name).sd;
          d += z * z;
        }
      }
      if (d < best) {
        best = d;
        y = *ex.label;
      }
    }
  } else {
    const auto& rule = label_rule(options_.mode == MockOptions::Mode::knn ? options_.fallback_rule
                                                                          : options_.rule);
    y = rule.evaluate(schema_, query.values);
  }
  if (options_.noise_sd > 0.0) {
    y += options_.noise_sd * gaussian(mix_seed(mix_seed(options_.noise_seed, trial), fnv1a(query.id)));
  }
  return std::clamp(y, 1.0, 7.0);
}

std::vector<double> ScriptedMock::importance(const ParsedPrompt& prompt, std::uint64_t trial) const {
  std::vector<double> w(schema_.size(), 0.0);
  if (options_.mode == MockOptions::Mode::knn && prompt.examples.size() >= 2) {
    // Association between each variable and the exemplar labels.
    const double n = static_cast<double>(prompt.examples.size());
    double ly = 0.0;
    for (const auto& ex : prompt.examples) ly += *ex.label;
    ly /= n;
    for (std::size_t i = 0; i < schema_.size(); ++i) {
      double mx = 0.0;
      for (const auto& ex : prompt.examples) mx += ex.values[i];
      mx /= n;
      double sxy = 0.0, sxx = 0.0, syy = 0.0;
      for (const auto& ex : prompt.examples) {
        sxy += (ex.values[i] - mx) * (*ex.label - ly);
        sxx += (ex.values[i] - mx) * (ex.values[i] - mx);
        syy += (*ex.label - ly) * (*ex.label - ly);
      }
      w[i] = 0.01 + (sxx > 0.0 && syy > 0.0 ? std::abs(sxy) / std::sqrt(sxx * syy) : 0.0);
    }
  } else {
    const auto& rule = label_rule(options_.mode == MockOptions::Mode::knn ? options_.fallback_rule
                                                                          : options_.rule);
    const auto base = rule.importance(schema_);
    for (std::size_t i = 0; i < schema_.size(); ++i) w[i] = base.at(schema_[i].name) + 0.005;
  }
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double z = gaussian(mix_seed(mix_seed(options_.noise_seed ^ 0x1a2b3c4dULL, trial),
                                       fnv1a(schema_[i].name)));
    w[i] *= std::exp(options_.importance_jitter * z);
  }
  double total = 0.0;
  for (const double x : w) total += x;
  for (auto& x : w) x /= total;
  return w;
}

Completion ScriptedMock::send(const ChatRequest& request) {
  ++calls_;
  const auto prompt = parse_prompt(request, schema_);
  const bool knn = options_.mode == MockOptions::Mode::knn;
  std::string out = fmt::format(
      "Scripted mock ({}, {} labeled examples). Scores follow {}.\n",
      knn ? "knn" : "rule " + options_.rule, prompt.examples.size(),
      knn && !prompt.examples.empty() ? "the nearest labeled example"
                                      : "rule " + (knn ? options_.fallback_rule : options_.rule));
  if (prompt.wants_predictions) {
    out += "\n```predictions\nid,score\n";
    for (const auto& q : prompt.queries) {
      out += fmt::format("{},{}\n", q.id, text::format_double(score(q, prompt, request.trial_index)));
    }
    out += "```\n";
  }
  if (prompt.wants_importance) {
    const auto w = importance(prompt, request.trial_index);
    out += "\n```importance\n";
    for (std::size_t i = 0; i < w.size(); ++i) {
      out += fmt::format("{}={}\n", schema_[i].name, text::format_double(w[i]));
    }
    out += "```\n";
  }
  return Completion{out, "mock reasoning channel: no model was queried"};
}

std::shared_ptr<ScriptedMock> scripted_mock(std::string_view spec, std::uint64_t noise_seed,
                                            const VariableSchema& schema) {
  return std::make_shared<ScriptedMock>(schema, parse_mock_spec(spec, noise_seed));
}

}  // namespace travelsat
