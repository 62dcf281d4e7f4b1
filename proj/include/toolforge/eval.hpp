#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "toolforge/model.hpp"
#include "toolforge/scene.hpp"

namespace toolforge {

struct Dataset;

// Mean Relative Accuracy: the fraction of thresholds theta in {0.50, 0.55,
// ..., 0.95} with |predicted - truth| / |truth| < 1 - theta (strict).
// Undefined for truth == 0 (throws Error); such rows are recorded and
// excluded from aggregates by score().
double mra(double predicted, double truth);

// |predicted - truth| / |truth| <= 0.10 (inclusive).
bool within_10pct(double predicted, double truth);

struct QuestionScore {
  std::string id;
  scene::AnswerType answer_type = scene::AnswerType::Float;
  std::optional<Value> predicted;  // absent => unanswered, scores 0 everywhere
  Value truth;
  bool exact = false;
  std::optional<double> mra_value;  // floats only; absent when undefined or unanswered
  bool within_10 = false;
  bool mra_undefined = false;  // truth == 0

  // Primary per-question metric: exact for discrete types, MRA for floats.
  double primary() const;
};

struct TypeAggregate {
  int count = 0;
  double exact_rate = 0;
  double mean_mra = 0;      // floats only (undefined rows excluded)
  double within_10_rate = 0;  // floats only
};

struct ScoreCard {
  std::vector<QuestionScore> per_question;  // truth order
  std::map<std::string, TypeAggregate> per_type;
  double overall = 0;  // unweighted mean of primary() over all questions
  int unanswered = 0;

  nlohmann::json to_json() const;
};

// Aligns predictions to ground truths by question id. Truths are the
// universe: a prediction without a truth is an alignment error (all orphans
// listed); a truth without a prediction scores 0 on every metric.
ScoreCard score(const std::map<std::string, Value>& predictions,
                const std::vector<scene::GroundTruth>& truths);

// Exact-match comparison per answer type: normalized case-insensitive text
// for yes/no and multiple choice, integer equality for counting; floats are
// never "exact" (they score via MRA / ±10%).
bool exact_match(const Value& predicted, const scene::GroundTruth& truth);

struct CcnStats {
  int iteration = 0;
  int count = 0;
  double median = 0;
  double q1 = 0;
  double q3 = 0;
};

struct EvolutionRow {
  std::int64_t step = 0;
  int iteration = 0;
  std::int64_t examples = 0;
  int tools_created = 0;
  int tools_active = 0;
  bool abstraction_ran = false;
  bool dedup_ran = false;
  int merges = 0;
};

struct UsageHistogram {
  int basic_only = 0;
  int mixed = 0;
  int abstracted_only = 0;
};

struct BucketAccuracy {
  std::string bucket;  // easy | medium | hard
  int count = 0;
  double mean_primary = 0;
};

struct RunReportTables {
  UsageHistogram usage;
  std::vector<CcnStats> ccn_per_iteration;
  std::vector<EvolutionRow> evolution;
  std::vector<BucketAccuracy> buckets;  // present when complexity ratings exist
  std::optional<ScoreCard> scores;      // present when a dataset is given
  std::vector<std::string> gaps;        // inputs that were missing

  nlohmann::json summary_json() const;
};

// Classifies one example's tools_used against the library's learned tools.
std::string usage_bucket(const Example& example, const Libraries& libs);

// Builds every table from a finished run directory. Missing artifacts are
// reported in `gaps` rather than failing the report.
RunReportTables usage_and_complexity_report(const Libraries& libs, const std::string& run_dir,
                                            const Dataset* dataset);

// Writes summary.json plus CSV tables under <run_dir>/reports.
void write_reports(const RunReportTables& tables, const std::string& run_dir);

}  // namespace toolforge
