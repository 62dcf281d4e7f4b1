// Command-line front door: run / resume / solve / inspect / report.
// Exit codes: 0 success, 1 domain error, 2 usage error. Diagnostics go to
// stderr; data goes to files or stdout (--json for machine-readable output).

#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "toolforge/eval.hpp"
#include "toolforge/pipeline.hpp"
#include "toolforge/util.hpp"

namespace tf = toolforge;

namespace {

struct CommonFlags {
  bool json = false;
};

tf::Config load_config_or_default(const std::string& path) {
  if (path.empty()) {
    tf::Config config;
    config.validate();
    return config;
  }
  return tf::Config::load(path);
}

int cmd_run(const std::string& dataset_path, const std::string& config_path,
            const std::string& out_dir, const std::string& ordering, std::optional<long> seed,
            const std::string& scripted, int max_steps, const CommonFlags& flags) {
  tf::Config config = load_config_or_default(config_path);
  if (!ordering.empty()) config.ordering = tf::ordering_from_name(ordering);
  if (seed) config.seed = *seed;
  tf::Dataset dataset = tf::load_dataset(dataset_path);
  tf::ProviderBundle providers = tf::make_providers(config, &dataset, scripted);
  tf::RunOptions options;
  options.out_dir = out_dir;
  options.dataset_path = dataset_path;
  options.scripts_path = scripted;
  options.max_questions = max_steps;
  tf::RunReport report = tf::run(dataset, config, providers, options);
  if (flags.json) {
    nlohmann::json j;
    j["finished"] = report.finished;
    j["questions_processed"] = report.questions_processed;
    j["examples"] = report.libraries.examples.size();
    j["tools_created"] = report.libraries.created_learned_count();
    j["tools_active"] = report.libraries.active_learned_count();
    j["out_dir"] = out_dir;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << (report.finished ? "run finished" : "run paused") << ": "
              << report.questions_processed << " questions processed, "
              << report.libraries.examples.size() << " examples, "
              << report.libraries.active_learned_count() << " active learned tools (of "
              << report.libraries.created_learned_count() << " created)\n";
    if (!report.finished) {
      std::cout << "resume with: toolforge resume --checkpoint " << report.paths.checkpoint
                << "\n";
    }
  }
  return 0;
}

int cmd_resume(const std::string& checkpoint, const CommonFlags& flags) {
  tf::RunReport report = tf::resume(checkpoint);
  if (flags.json) {
    nlohmann::json j;
    j["finished"] = report.finished;
    j["questions_processed"] = report.questions_processed;
    j["examples"] = report.libraries.examples.size();
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << "resumed run " << (report.finished ? "finished" : "paused") << " after "
              << report.questions_processed << " more questions\n";
  }
  return 0;
}

int cmd_solve(const std::string& question, const std::string& scene_path,
              const std::string& libraries_path, const std::string& config_path,
              const std::string& scripted, const CommonFlags& flags) {
  tf::Config config = load_config_or_default(config_path);
  tf::Libraries libs = tf::load_libraries(libraries_path, config.quality_threshold);
  tf::scene::SceneFixture fixture = tf::scene::load_fixture(scene_path);
  tf::ProviderBundle providers = tf::make_providers(config, nullptr, scripted);
  tf::EmbeddingBank bank(providers.embedder);
  tf::TransferAnswer answer =
      tf::transfer_solve(libs, question, fixture, *providers.chat, bank, config);
  if (flags.json) {
    nlohmann::json j;
    j["answer"] = answer.answer ? answer.answer->to_json() : nlohmann::json(nullptr);
    j["answer_text"] = answer.answer ? answer.answer->render() : "";
    j["program"] = answer.program;
    j["tools_used"] = answer.tools_used;
    j["candidates_tried"] = answer.candidates_tried;
    std::cout << j.dump(2) << "\n";
  } else if (answer.answer) {
    std::cout << answer.answer->render() << "\n";
  } else {
    std::cout << "no answer (all " << answer.candidates_tried << " candidates failed)\n";
  }
  return 0;
}

int cmd_inspect(const std::string& libraries_path, const std::string& tool_name,
                const std::string& example_id, const std::string& config_path,
                const CommonFlags& flags) {
  tf::Config config = load_config_or_default(config_path);
  tf::Libraries libs = tf::load_libraries(libraries_path, config.quality_threshold);
  if (!tool_name.empty()) {
    auto it = libs.tools.find(tool_name);
    if (it == libs.tools.end()) throw tf::Error("no tool named '" + tool_name + "'");
    if (flags.json) {
      std::cout << it->second.to_json().dump(2) << "\n";
    } else {
      const tf::Tool& t = it->second;
      std::cout << t.signature() << "  [level " << t.level
                << (t.deprecated ? ", deprecated" : "") << "]\n"
                << t.docstring << "\n";
      if (t.deprecation_reason) std::cout << "deprecation: " << *t.deprecation_reason << "\n";
      if (!t.body.empty()) std::cout << "\n" << t.body << "\n";
    }
    return 0;
  }
  if (!example_id.empty()) {
    auto it = libs.examples.find(example_id);
    if (it == libs.examples.end()) throw tf::Error("no example with id '" + example_id + "'");
    if (flags.json) {
      std::cout << it->second.to_json().dump(2) << "\n";
    } else {
      const tf::Example& e = it->second;
      std::cout << e.id << " (" << (e.status == tf::ExampleStatus::Fresh ? "fresh" : "abstracted")
                << ", quality " << tf::format_real(e.quality) << ")\n"
                << "question: " << e.question << "\n"
                << "result: " << e.result.render() << "\n\n"
                << e.program << "\n";
    }
    return 0;
  }
  if (flags.json) {
    nlohmann::json j;
    j["examples"] = libs.examples.size();
    int abstracted = 0;
    for (const auto& [_, e] : libs.examples) {
      if (e.status == tf::ExampleStatus::Abstracted) ++abstracted;
    }
    j["abstracted_examples"] = abstracted;
    j["tools_created"] = libs.created_learned_count();
    j["tools_active"] = libs.active_learned_count();
    auto tools = nlohmann::json::array();
    for (const auto& [name, t] : libs.tools) {
      tools.push_back({{"name", name},
                       {"level", t.level},
                       {"deprecated", t.deprecated},
                       {"signature", t.signature()}});
    }
    j["tools"] = std::move(tools);
    j["step_counter"] = libs.step_counter;
    std::cout << j.dump(2) << "\n";
  } else {
    std::cout << libs.examples.size() << " examples, " << libs.tools.size() << " tools ("
              << libs.active_learned_count() << " active learned of "
              << libs.created_learned_count() << " created), step " << libs.step_counter
              << "\n\ntools:\n";
    for (const auto& [name, t] : libs.tools) {
      std::cout << "  " << t.signature() << "  level " << t.level
                << (t.deprecated ? "  [deprecated]" : "") << "\n";
    }
  }
  return 0;
}

int cmd_report(const std::string& out_dir, const std::string& dataset_override,
               const CommonFlags& flags) {
  tf::RunPaths paths = tf::RunPaths::for_dir(out_dir);
  std::string dataset_path = dataset_override;
  double min_quality = tf::Config().quality_threshold;
  {
    std::ifstream meta(paths.run_meta);
    if (meta) {
      nlohmann::json j;
      meta >> j;
      if (dataset_path.empty() && j.contains("dataset_path")) {
        dataset_path = j["dataset_path"].get<std::string>();
      }
      if (j.contains("config")) {
        min_quality = tf::Config::from_json(j["config"]).quality_threshold;
      }
    }
  }
  tf::Libraries libs = tf::load_libraries(paths.libraries, min_quality);
  std::optional<tf::Dataset> dataset;
  if (!dataset_path.empty()) dataset = tf::load_dataset(dataset_path);
  tf::RunReportTables tables =
      tf::usage_and_complexity_report(libs, out_dir, dataset ? &*dataset : nullptr);
  tf::write_reports(tables, out_dir);
  if (flags.json) {
    std::cout << tables.summary_json().dump(2) << "\n";
  } else {
    std::cout << "reports written under " << out_dir << "/reports\n";
    if (tables.scores) {
      std::cout << "overall score: " << tf::format_real(tables.scores->overall) << "\n";
    }
    for (const auto& gap : tables.gaps) std::cout << "gap: " << gap << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"toolforge: closed-loop program synthesis over scene questions"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  CommonFlags flags;
  app.add_flag("--json", flags.json, "machine-readable output");

  // run
  auto* run_cmd = app.add_subcommand("run", "build libraries over a dataset");
  std::string dataset_path, config_path, out_dir, ordering, scripted;
  std::optional<long> seed;
  int max_steps = -1;
  run_cmd->add_option("--dataset", dataset_path, "dataset manifest JSON")->required();
  run_cmd->add_option("--config", config_path, "config JSON (defaults when omitted)");
  run_cmd->add_option("--out", out_dir, "output directory")->required();
  run_cmd->add_option("--ordering", ordering,
                      "question ordering: random (default) | curriculum | dataset");
  run_cmd->add_option("--seed", seed, "RNG seed (default 42)");
  run_cmd->add_option("--scripted", scripted, "replay chat replies from a script file");
  run_cmd->add_option("--max-steps", max_steps,
                      "pause (checkpointed) after this many questions");

  // resume
  auto* resume_cmd = app.add_subcommand("resume", "continue an interrupted run");
  std::string checkpoint;
  resume_cmd->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required();

  // solve
  auto* solve_cmd = app.add_subcommand("solve", "answer one question with built libraries");
  std::string question, scene_path, libraries_path, solve_config, solve_scripted;
  solve_cmd->add_option("--question", question, "question text")->required();
  solve_cmd->add_option("--scene", scene_path, "scene fixture JSON")->required();
  solve_cmd->add_option("--libraries", libraries_path, "libraries JSON")->required();
  solve_cmd->add_option("--config", solve_config, "config JSON");
  solve_cmd->add_option("--scripted", solve_scripted, "replay chat replies from a script file");

  // inspect
  auto* inspect_cmd = app.add_subcommand("inspect", "inspect a libraries file");
  std::string ins_libraries, ins_tool, ins_example, ins_config;
  inspect_cmd->add_option("--libraries", ins_libraries, "libraries JSON")->required();
  inspect_cmd->add_option("--tool", ins_tool, "show one tool");
  inspect_cmd->add_option("--example", ins_example, "show one example");
  inspect_cmd->add_option("--config", ins_config, "config JSON (for the quality threshold)");

  // report
  auto* report_cmd = app.add_subcommand("report", "emit metrics and trace tables for a run");
  std::string report_out, report_dataset;
  report_cmd->add_option("--out", report_out, "run output directory")->required();
  report_cmd->add_option("--dataset", report_dataset,
                         "dataset manifest (defaults to the one recorded in run_meta.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help exits 0; every usage problem exits 2
  }

  try {
    if (run_cmd->parsed()) {
      return cmd_run(dataset_path, config_path, out_dir, ordering, seed, scripted, max_steps,
                     flags);
    }
    if (resume_cmd->parsed()) return cmd_resume(checkpoint, flags);
    if (solve_cmd->parsed()) {
      return cmd_solve(question, scene_path, libraries_path, solve_config, solve_scripted,
                       flags);
    }
    if (inspect_cmd->parsed()) {
      return cmd_inspect(ins_libraries, ins_tool, ins_example, ins_config, flags);
    }
    if (report_cmd->parsed()) return cmd_report(report_out, report_dataset, flags);
  } catch (const tf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
