#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "travelsat/dataset.hpp"
#include "travelsat/importance.hpp"
#include "travelsat/selection.hpp"

namespace travelsat {

enum class PromptKind { zero_shot, few_shot, importance };

struct Prompt {
  PromptKind kind = PromptKind::zero_shot;
  std::string system_text;
  std::string user_text;
  /// Ids the response must score, in prompt order.
  std::vector<std::string> query_ids;
  bool wants_importance = false;
  std::size_t token_estimate = 0;
};

/// Version tag of the template files compiled into the library.
std::string_view template_version();

/// Serializes one record as it appears in prompts (dimension headings, one
/// "- <label>: <value> <unit>" line per variable, categorical codes as labels).
std::string render_record(const RespondentRecord& record, const VariableSchema& schema);

Prompt render_zero_shot(std::span<const RespondentRecord> queries, const VariableSchema& schema,
                        bool want_importance);

/// Throws ValidationError when a support id also appears among the queries.
Prompt render_few_shot(const SupportSet& support, std::span<const RespondentRecord> queries,
                       const VariableSchema& schema, bool want_importance);

/// Importance-only prompt over the schema; exemplars are included when given.
Prompt render_importance(const VariableSchema& schema, const SupportSet* support = nullptr);

struct PredictionBatch {
  std::map<std::string, double> scores;
  std::optional<ImportanceVector> importances;
  /// Response text outside the fenced answer blocks, trimmed.
  std::string reasoning;
};

/// Extracts the ```predictions block (and the ```importance block when
/// requested). Throws ParseError on missing, duplicate or unexpected ids,
/// non-numeric or out-of-range scores, or importances whose sum lies outside
/// [0.98, 1.02]; sums inside that band are renormalized to exactly 1.
PredictionBatch parse_response(std::string_view raw, std::span<const std::string> expected_ids,
                               bool want_importance, const VariableSchema& schema);

/// Importance block only, as answered to render_importance.
ImportanceVector parse_importance(std::string_view raw, const VariableSchema& schema);

/// Text outside fenced blocks, trimmed.
std::string extract_reasoning(std::string_view raw);

}  // namespace travelsat
