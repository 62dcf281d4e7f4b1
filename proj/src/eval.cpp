#include "toolforge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "toolforge/pipeline.hpp"
#include "toolforge/util.hpp"
#include "toolforge/vpl.hpp"

namespace fs = std::filesystem;

namespace toolforge {

double mra(double predicted, double truth) {
  if (!std::isfinite(predicted) || !std::isfinite(truth)) {
    throw Error("mra: non-finite input");
  }
  if (truth == 0) throw Error("mra: undefined for truth == 0");
  const double rel = std::fabs(predicted - truth) / std::fabs(truth);
  int satisfied = 0;
  for (int i = 0; i < 10; ++i) {
    const double theta = 0.50 + 0.05 * i;
    if (rel < 1.0 - theta) ++satisfied;
  }
  return satisfied / 10.0;
}

bool within_10pct(double predicted, double truth) {
  if (truth == 0) return false;
  return std::fabs(predicted - truth) / std::fabs(truth) <= 0.10;
}

bool exact_match(const Value& predicted, const scene::GroundTruth& truth) {
  switch (truth.answer_type) {
    case scene::AnswerType::YesNo:
    case scene::AnswerType::MultipleChoice: {
      if (predicted.kind() != Value::Kind::Text) return false;
      return normalize_question(predicted.as_text()) ==
             normalize_question(truth.answer.as_text());
    }
    case scene::AnswerType::Counting: {
      if (predicted.kind() == Value::Kind::Int) {
        return predicted.as_int() == truth.answer.as_int();
      }
      if (predicted.kind() == Value::Kind::Real) {
        // A real-valued count still matches when it is exactly integral.
        return predicted.as_real() == static_cast<double>(truth.answer.as_int());
      }
      return false;
    }
    case scene::AnswerType::Float:
      return false;
  }
  return false;
}

double QuestionScore::primary() const {
  if (answer_type == scene::AnswerType::Float) return mra_value.value_or(0.0);
  return exact ? 1.0 : 0.0;
}

nlohmann::json ScoreCard::to_json() const {
  nlohmann::json j;
  auto rows = nlohmann::json::array();
  for (const auto& q : per_question) {
    nlohmann::json r;
    r["id"] = q.id;
    r["answer_type"] = scene::answer_type_name(q.answer_type);
    r["predicted"] = q.predicted ? q.predicted->to_json() : nlohmann::json(nullptr);
    r["truth"] = q.truth.to_json();
    r["exact"] = q.exact;
    r["mra"] = q.mra_value ? nlohmann::json(*q.mra_value) : nlohmann::json(nullptr);
    r["within_10pct"] = q.within_10;
    r["mra_undefined"] = q.mra_undefined;
    rows.push_back(std::move(r));
  }
  j["per_question"] = std::move(rows);
  nlohmann::json types = nlohmann::json::object();
  for (const auto& [name, agg] : per_type) {
    types[name] = {{"count", agg.count},
                   {"exact_rate", agg.exact_rate},
                   {"mean_mra", agg.mean_mra},
                   {"within_10_rate", agg.within_10_rate}};
  }
  j["per_type"] = std::move(types);
  j["overall"] = overall;
  j["unanswered"] = unanswered;
  return j;
}

ScoreCard score(const std::map<std::string, Value>& predictions,
                const std::vector<scene::GroundTruth>& truths) {
  std::set<std::string> truth_ids;
  for (const auto& t : truths) truth_ids.insert(t.question_id);
  std::vector<std::string> orphans;
  for (const auto& [id, _] : predictions) {
    if (!truth_ids.count(id)) orphans.push_back(id);
  }
  if (!orphans.empty()) {
    throw Error("score: predictions without ground truth: " + join(orphans, ", "));
  }

  ScoreCard card;
  for (const auto& truth : truths) {
    QuestionScore q;
    q.id = truth.question_id;
    q.answer_type = truth.answer_type;
    q.truth = truth.answer;
    auto it = predictions.find(truth.question_id);
    if (it == predictions.end()) {
      ++card.unanswered;
      card.per_question.push_back(std::move(q));
      continue;
    }
    q.predicted = it->second;
    if (truth.answer_type == scene::AnswerType::Float) {
      if (q.predicted->is_number()) {
        const double y = truth.answer.number();
        const double yhat = q.predicted->number();
        if (y == 0) {
          q.mra_undefined = true;
        } else {
          q.mra_value = mra(yhat, y);
          q.within_10 = within_10pct(yhat, y);
        }
      }
    } else {
      q.exact = exact_match(*q.predicted, truth);
    }
    card.per_question.push_back(std::move(q));
  }

  std::map<std::string, std::vector<const QuestionScore*>> by_type;
  for (const auto& q : card.per_question) {
    by_type[scene::answer_type_name(q.answer_type)].push_back(&q);
  }
  double total_primary = 0;
  int counted = 0;
  for (const auto& [name, rows] : by_type) {
    TypeAggregate agg;
    agg.count = static_cast<int>(rows.size());
    int exact_hits = 0, within_hits = 0, mra_rows = 0;
    double mra_sum = 0;
    for (const QuestionScore* q : rows) {
      if (q->exact) ++exact_hits;
      if (q->within_10) ++within_hits;
      if (q->answer_type == scene::AnswerType::Float && !q->mra_undefined) {
        mra_sum += q->mra_value.value_or(0.0);
        ++mra_rows;
      }
      if (!(q->answer_type == scene::AnswerType::Float && q->mra_undefined)) {
        total_primary += q->primary();
        ++counted;
      }
    }
    agg.exact_rate = rows.empty() ? 0 : static_cast<double>(exact_hits) / agg.count;
    agg.mean_mra = mra_rows ? mra_sum / mra_rows : 0;
    agg.within_10_rate = rows.empty() ? 0 : static_cast<double>(within_hits) / agg.count;
    card.per_type[name] = agg;
  }
  card.overall = counted ? total_primary / counted : 0;
  return card;
}

std::string usage_bucket(const Example& example, const Libraries& libs) {
  bool has_basic = false, has_learned = false;
  for (const auto& name : example.tools_used) {
    auto it = libs.tools.find(name);
    if (it != libs.tools.end() && it->second.level >= 1) {
      has_learned = true;
    } else {
      has_basic = true;
    }
  }
  if (has_learned && has_basic) return "mixed";
  if (has_learned) return "abstracted_only";
  return "basic_only";
}

namespace {

CcnStats stats_from_values(int iteration, std::vector<int> values) {
  CcnStats s;
  s.iteration = iteration;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  auto median_of = [&](std::size_t lo, std::size_t hi) {  // half-open [lo, hi)
    const std::size_t n = hi - lo;
    const std::size_t mid = lo + n / 2;
    if (n % 2 == 1) return static_cast<double>(values[mid]);
    return (values[mid - 1] + values[mid]) / 2.0;
  };
  const std::size_t n = values.size();
  s.median = median_of(0, n);
  s.q1 = median_of(0, n / 2);
  s.q3 = median_of(n % 2 ? n / 2 + 1 : n / 2, n);
  return s;
}

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::vector<nlohmann::json> rows;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open", path);
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(nlohmann::json::parse(line));
  }
  return rows;
}

}  // namespace

RunReportTables usage_and_complexity_report(const Libraries& libs, const std::string& run_dir,
                                            const Dataset* dataset) {
  RunReportTables tables;
  for (const auto& [_, example] : libs.examples) {
    const std::string bucket = usage_bucket(example, libs);
    if (bucket == "mixed") {
      ++tables.usage.mixed;
    } else if (bucket == "abstracted_only") {
      ++tables.usage.abstracted_only;
    } else {
      ++tables.usage.basic_only;
    }
  }

  const RunPaths paths = RunPaths::for_dir(run_dir);
  try {
    for (const auto& row : read_jsonl(paths.iteration_summaries)) {
      tables.ccn_per_iteration.push_back(stats_from_values(
          row.at("iteration").get<int>(), row.at("ccn_values").get<std::vector<int>>()));
    }
  } catch (const Error&) {
    tables.gaps.push_back("iteration summaries missing: " + paths.iteration_summaries);
  }
  try {
    for (const auto& row : read_jsonl(paths.evolution_trace)) {
      EvolutionRow e;
      e.step = row.at("step").get<std::int64_t>();
      e.iteration = row.at("iteration").get<int>();
      e.examples = row.at("examples").get<std::int64_t>();
      e.tools_created = row.at("tools_created").get<int>();
      e.tools_active = row.at("tools_active").get<int>();
      e.abstraction_ran = row.at("abstraction_ran").get<bool>();
      e.dedup_ran = row.at("dedup_ran").get<bool>();
      e.merges = row.at("merges").get<int>();
      tables.evolution.push_back(e);
    }
  } catch (const Error&) {
    tables.gaps.push_back("evolution trace missing: " + paths.evolution_trace);
  }

  if (dataset) {
    std::map<std::string, Value> predictions;
    for (const auto& [id, example] : libs.examples) predictions[id] = example.result;
    std::vector<scene::GroundTruth> truths;
    for (const auto& q : dataset->questions) {
      truths.push_back(
          scene::oracle_answer(fixture_for(dataset->fixtures, q.scene_id), q.id, q.oracle));
    }
    tables.scores = score(predictions, truths);

    // Complexity buckets only exist when a ratings file was produced.
    std::ifstream ratings_in(paths.ratings);
    if (ratings_in) {
      nlohmann::json ratings_json;
      ratings_in >> ratings_json;
      auto ratings = ratings_json.get<std::map<std::string, double>>();
      std::map<std::string, std::pair<int, double>> buckets;  // name -> (count, primary sum)
      for (const auto& q : tables.scores->per_question) {
        auto it = ratings.find(q.id);
        if (it == ratings.end()) continue;
        const double s = it->second;
        const std::string bucket = s < 4.0 ? "easy" : (s < 7.0 ? "medium" : "hard");
        buckets[bucket].first += 1;
        buckets[bucket].second += q.primary();
      }
      for (const std::string name : {"easy", "medium", "hard"}) {
        auto it = buckets.find(name);
        if (it == buckets.end()) continue;
        tables.buckets.push_back(
            BucketAccuracy{name, it->second.first, it->second.second / it->second.first});
      }
    } else {
      tables.gaps.push_back("no complexity ratings: " + paths.ratings);
    }
  } else {
    tables.gaps.push_back("no dataset provided: scores omitted");
  }
  return tables;
}

nlohmann::json RunReportTables::summary_json() const {
  nlohmann::json j;
  j["usage_histogram"] = {{"basic_only", usage.basic_only},
                          {"mixed", usage.mixed},
                          {"abstracted_only", usage.abstracted_only}};
  auto ccn = nlohmann::json::array();
  for (const auto& s : ccn_per_iteration) {
    ccn.push_back({{"iteration", s.iteration},
                   {"count", s.count},
                   {"median", s.median},
                   {"q1", s.q1},
                   {"q3", s.q3}});
  }
  j["ccn_per_iteration"] = std::move(ccn);
  if (!evolution.empty()) {
    const auto& last = evolution.back();
    j["final"] = {{"examples", last.examples},
                  {"tools_created", last.tools_created},
                  {"tools_active", last.tools_active}};
  }
  auto bs = nlohmann::json::array();
  for (const auto& b : buckets) {
    bs.push_back({{"bucket", b.bucket}, {"count", b.count}, {"mean_primary", b.mean_primary}});
  }
  j["complexity_buckets"] = std::move(bs);
  if (scores) j["scores"] = scores->to_json();
  j["gaps"] = gaps;
  return j;
}

void write_reports(const RunReportTables& tables, const std::string& run_dir) {
  const fs::path dir = fs::path(run_dir) / "reports";
  fs::create_directories(dir);

  auto open = [&](const std::string& name) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write report", (dir / name).string());
    return out;
  };

  {
    auto out = open("summary.json");
    out << tables.summary_json().dump(2) << "\n";
  }
  {
    auto out = open("usage_histogram.csv");
    out << "bucket,count\n";
    out << "basic_only," << tables.usage.basic_only << "\n";
    out << "mixed," << tables.usage.mixed << "\n";
    out << "abstracted_only," << tables.usage.abstracted_only << "\n";
  }
  {
    auto out = open("ccn_per_iteration.csv");
    out << "iteration,count,median,q1,q3\n";
    for (const auto& s : tables.ccn_per_iteration) {
      out << s.iteration << "," << s.count << "," << format_real(s.median) << ","
          << format_real(s.q1) << "," << format_real(s.q3) << "\n";
    }
  }
  {
    auto out = open("evolution.csv");
    out << "step,iteration,examples,tools_created,tools_active,abstraction_ran,dedup_ran,merges\n";
    for (const auto& e : tables.evolution) {
      out << e.step << "," << e.iteration << "," << e.examples << "," << e.tools_created << ","
          << e.tools_active << "," << (e.abstraction_ran ? 1 : 0) << ","
          << (e.dedup_ran ? 1 : 0) << "," << e.merges << "\n";
    }
  }
  if (tables.scores) {
    auto out = open("per_question.csv");
    out << "id,answer_type,exact,mra,within_10pct,unanswered\n";
    for (const auto& q : tables.scores->per_question) {
      out << q.id << "," << scene::answer_type_name(q.answer_type) << "," << (q.exact ? 1 : 0)
          << "," << (q.mra_value ? format_real(*q.mra_value) : "") << ","
          << (q.within_10 ? 1 : 0) << "," << (q.predicted ? 0 : 1) << "\n";
    }
    auto out2 = open("per_type.csv");
    out2 << "answer_type,count,exact_rate,mean_mra,within_10_rate\n";
    for (const auto& [name, agg] : tables.scores->per_type) {
      out2 << name << "," << agg.count << "," << format_real(agg.exact_rate) << ","
           << format_real(agg.mean_mra) << "," << format_real(agg.within_10_rate) << "\n";
    }
  }
}

}  // namespace toolforge
