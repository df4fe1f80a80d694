#include "travelsat/prompting.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "travelsat/templates_embed.hpp"
#include "travelsat/error.hpp"
#include "travelsat/text.hpp"

namespace travelsat {
namespace {

constexpr Dimension kDimensionOrder[] = {Dimension::socioeconomics, Dimension::built_environment,
                                         Dimension::travel_characteristics,
                                         Dimension::reference_points};

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

void check_id(const std::string& id) {
  const bool bad = id.empty() || std::any_of(id.begin(), id.end(), [](char c) {
                     return c == ',' || c == '`' || c == '=' || std::isspace(static_cast<unsigned char>(c));
                   });
  if (bad) throw ValidationError("record id '" + id + "' cannot be used in a prompt");
}

std::size_t estimate_tokens(const std::string& a, const std::string& b) {
  return (a.size() + b.size() + 3) / 4;
}

std::string variable_listing(const VariableSchema& schema) {
  std::string out = "Variables (name: description):\n";
  for (const auto& v : schema.variables()) {
    out += fmt::format("- {}: {}", v.name, v.label);
    if (!v.unit.empty()) out += fmt::format(" ({})", v.unit);
    out += fmt::format(" [{}]\n", dimension_heading(v.dimension));
  }
  return out;
}

std::string render_examples(const SupportSet& support, const VariableSchema& schema) {
  std::string out = fmt::format("Labeled examples ({}):\n", support.size());
  for (const auto& m : support.members) {
    check_id(m.id);
    out += fmt::format("\n### Example {}\n", m.id);
    out += render_record(m, schema);
    out += fmt::format("Travel satisfaction: {}\n", text::format_fixed(m.satisfaction, 3));
  }
  return out;
}

std::string render_queries(std::span<const RespondentRecord> queries, const VariableSchema& schema) {
  std::string out = fmt::format("Travelers to predict ({}):\n", queries.size());
  std::set<std::string> seen;
  for (const auto& q : queries) {
    check_id(q.id);
    if (!seen.insert(q.id).second) throw ValidationError("duplicate query id " + q.id);
    validate_record(q, schema);
    out += fmt::format("\n### Traveler {}\n", q.id);
    out += render_record(q, schema);
  }
  out += "\nAnswer for exactly these traveler ids: ";
  for (std::size_t i = 0; i < queries.size(); ++i) {
    out += (i ? ", " : "") + queries[i].id;
  }
  out += "\n";
  return out;
}

Prompt render_predict(const SupportSet* support, std::span<const RespondentRecord> queries,
                      const VariableSchema& schema, bool want_importance) {
  if (queries.empty()) throw ValidationError("prompt needs at least one query record");
  Prompt p;
  p.kind = support ? PromptKind::few_shot : PromptKind::zero_shot;
  p.wants_importance = want_importance;
  std::string system = templates::kSystemPredict;
  system = replace_all(system, "{{EXAMPLES_NOTE}}", support ? templates::kNoteExamples : "");
  system = replace_all(system, "{{IMPORTANCE_NOTE}}", want_importance ? templates::kNoteImportance : "");
  system = replace_all(system, "{{COUNT}}", std::to_string(queries.size()));
  p.system_text = std::move(system);

  std::string user;
  if (support) {
    for (const auto& m : support->members) validate_record(m, schema);
    user += render_examples(*support, schema) + "\n";
  }
  user += render_queries(queries, schema);
  if (want_importance) user += "\n" + variable_listing(schema);
  p.user_text = std::move(user);
  for (const auto& q : queries) p.query_ids.push_back(q.id);
  p.token_estimate = estimate_tokens(p.system_text, p.user_text);
  return p;
}

struct Block {
  std::string body;
  bool found = false;
};

/// Body of the last ```<tag> fenced block.
Block find_block(std::string_view raw, std::string_view tag) {
  Block block;
  const auto all = text::lines(raw);
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto line = text::trim(all[i]);
    if (!line.starts_with("```") || text::trim(line.substr(3)) != tag) continue;
    std::string body;
    std::size_t j = i + 1;
    for (; j < all.size() && text::trim(all[j]) != "```"; ++j) {
      body += std::string(all[j]) + "\n";
    }
    if (j == all.size()) continue;  // unterminated fence
    block.body = std::move(body);
    block.found = true;
    i = j;
  }
  return block;
}

ImportanceVector parse_importance_block(std::string_view raw, const std::string& body,
                                        const VariableSchema& schema) {
  std::vector<double> weights(schema.size(), 0.0);
  std::vector<bool> seen(schema.size(), false);
  for (const auto line_view : text::lines(body)) {
    const auto line = text::trim(line_view);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(fmt::format("importance line without '=': {}", line), std::string(raw));
    }
    const auto name = text::trim(line.substr(0, eq));
    const auto idx = schema.index_of(name);
    if (!idx) throw ParseError(fmt::format("unknown variable in importances: {}", name), std::string(raw));
    if (seen[*idx]) throw ParseError(fmt::format("duplicate importance for {}", name), std::string(raw));
    const auto value = text::parse_double(line.substr(eq + 1));
    if (!value || *value < 0.0) {
      throw ParseError(fmt::format("invalid importance for {}", name), std::string(raw));
    }
    seen[*idx] = true;
    weights[*idx] = *value;
  }
  double total = 0.0;
  for (const double w : weights) total += w;
  if (total < 0.98 || total > 1.02) {
    throw ParseError(fmt::format("importances sum to {}, outside [0.98, 1.02]", total), std::string(raw));
  }
  return normalize_importance(schema.names(), std::move(weights));
}

}  // namespace

std::string_view template_version() { return templates::kVersion; }

std::string render_record(const RespondentRecord& record, const VariableSchema& schema) {
  if (record.values.size() != schema.size()) {
    throw ValidationError("record " + record.id + " does not conform to the schema");
  }
  std::string out;
  for (const auto dim : kDimensionOrder) {
    bool heading = false;
    for (std::size_t i = 0; i < schema.size(); ++i) {
      const auto& var = schema[i];
      if (var.dimension != dim) continue;
      if (!heading) {
        out += fmt::format("{}:\n", dimension_heading(dim));
        heading = true;
      }
      const double x = record.values[i];
      if (var.is_categorical()) {
        const auto idx = x == std::round(x) ? var.category_index(static_cast<int>(x)) : std::nullopt;
        if (!idx) {
          throw ValidationError(fmt::format("record {}: invalid code for {}", record.id, var.name));
        }
        out += fmt::format("- {}: {}\n", var.label, var.categories[*idx].label);
      } else if (var.unit.empty()) {
        out += fmt::format("- {}: {}\n", var.label, text::format_double(x));
      } else {
        out += fmt::format("- {}: {} {}\n", var.label, text::format_double(x), var.unit);
      }
    }
  }
  return out;
}

Prompt render_zero_shot(std::span<const RespondentRecord> queries, const VariableSchema& schema,
                        bool want_importance) {
  return render_predict(nullptr, queries, schema, want_importance);
}

Prompt render_few_shot(const SupportSet& support, std::span<const RespondentRecord> queries,
                       const VariableSchema& schema, bool want_importance) {
  if (support.empty()) throw ValidationError("few-shot prompt needs at least one exemplar");
  std::set<std::string> query_ids;
  for (const auto& q : queries) query_ids.insert(q.id);
  for (const auto& m : support.members) {
    if (query_ids.contains(m.id)) {
      throw ValidationError("support record " + m.id + " is also a query (contamination)");
    }
  }
  return render_predict(&support, queries, schema, want_importance);
}

Prompt render_importance(const VariableSchema& schema, const SupportSet* support) {
  Prompt p;
  p.kind = PromptKind::importance;
  p.wants_importance = true;
  const bool with_examples = support && !support->empty();
  std::string system = templates::kSystemImportance;
  system = replace_all(system, "{{EXAMPLES_NOTE}}", with_examples ? templates::kNoteExamples : "");
  system = replace_all(system, "{{COUNT}}", std::to_string(schema.size()));
  p.system_text = std::move(system);
  std::string user = variable_listing(schema);
  if (with_examples) {
    for (const auto& m : support->members) validate_record(m, schema);
    user += "\n" + render_examples(*support, schema);
  }
  p.user_text = std::move(user);
  p.token_estimate = estimate_tokens(p.system_text, p.user_text);
  return p;
}

PredictionBatch parse_response(std::string_view raw, std::span<const std::string> expected_ids,
                               bool want_importance, const VariableSchema& schema) {
  const auto block = find_block(raw, "predictions");
  if (!block.found) throw ParseError("response has no ```predictions block", std::string(raw));
  const std::set<std::string, std::less<>> expected(expected_ids.begin(), expected_ids.end());
  PredictionBatch batch;
  for (const auto line_view : text::lines(block.body)) {
    const auto line = text::trim(line_view);
    if (line.empty() || line == "id,score") continue;
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) {
      throw ParseError(fmt::format("prediction line without ',': {}", line), std::string(raw));
    }
    const std::string id(text::trim(line.substr(0, comma)));
    if (!expected.contains(id)) throw ParseError("unexpected id " + id, std::string(raw));
    if (batch.scores.contains(id)) throw ParseError("duplicate id " + id, std::string(raw));
    const auto score = text::parse_double(line.substr(comma + 1));
    if (!score) throw ParseError("non-numeric score for " + id, std::string(raw));
    if (*score < 1.0 || *score > 7.0) {
      throw ParseError(fmt::format("score {} for {} outside [1, 7]", *score, id), std::string(raw));
    }
    batch.scores.emplace(id, *score);
  }
  for (const auto& id : expected_ids) {
    if (!batch.scores.contains(id)) throw ParseError("missing id " + id, std::string(raw));
  }
  if (want_importance) {
    const auto imp = find_block(raw, "importance");
    if (!imp.found) throw ParseError("response has no ```importance block", std::string(raw));
    batch.importances = parse_importance_block(raw, imp.body, schema);
  }
  batch.reasoning = extract_reasoning(raw);
  return batch;
}

ImportanceVector parse_importance(std::string_view raw, const VariableSchema& schema) {
  const auto block = find_block(raw, "importance");
  if (!block.found) throw ParseError("response has no ```importance block", std::string(raw));
  return parse_importance_block(raw, block.body, schema);
}

std::string extract_reasoning(std::string_view raw) {
  std::string out;
  bool inside = false;
  for (const auto line : text::lines(raw)) {
    const auto t = text::trim(line);
    if (!inside && t.starts_with("```")) {
      const auto tag = text::trim(t.substr(3));
      if (tag == "predictions" || tag == "importance") {
        inside = true;
        continue;
      }
    } else if (inside && t == "```") {
      inside = false;
      continue;
    }
    if (!inside) out += std::string(line) + "\n";
  }
  return std::string(text::trim(out));
}

}  // namespace travelsat
