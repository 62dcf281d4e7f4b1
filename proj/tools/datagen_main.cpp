// Generates the shipped synthetic dataset, scene fixtures, and provider
// scripts. The scripts are recorded from the deterministic synthetic backend
// by actually running the pipeline, then verified by replaying them and
// byte-comparing the resulting library files.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "toolforge/eval.hpp"
#include "toolforge/pipeline.hpp"
#include "toolforge/synth.hpp"
#include "toolforge/util.hpp"

namespace fs = std::filesystem;
namespace tf = toolforge;

namespace {

const std::vector<std::string> kLabelPool = {
    "sofa",  "table", "chair",  "lamp",   "rug",   "tv",     "cabinet", "stool",
    "shelf", "plant", "desk",   "mirror", "bench", "vase",   "couch",   "dresser",
    "poster", "clock", "ladder", "curtain"};
const std::vector<std::string> kCountablePool = {"cup",   "book", "bottle", "pillow", "plate",
                                                 "mug",   "bowl", "candle", "basket", "frame"};
const std::vector<std::string> kColors = {"red", "blue", "green", "beige", "gray", "brown"};

struct Gen {
  tf::SplitMix64 rng{7};
  // Label sets already used, by template. A new question may not share more
  // than one label with any earlier question of a different family, which
  // keeps cross-family questions well separated in embedding space.
  std::vector<std::pair<tf::scene::Template, std::set<std::string>>> used_sets;

  double round2(double v) { return std::round(v * 100.0) / 100.0; }

  int fixtures_made = 0;

  tf::scene::SceneFixture make_fixture(const std::string& id, int n_unique) {
    tf::scene::SceneFixture fixture;
    fixture.id = id;
    fixture.width = 640;
    fixture.height = 480;
    std::vector<std::string> pool = kLabelPool;
    tf::deterministic_shuffle(pool, rng);
    for (int i = 0; i < n_unique; ++i) {
      fixture.objects.push_back(make_object(pool[static_cast<std::size_t>(i)], fixture));
    }
    // One countable label with several instances; cycled so that counting
    // questions on different scenes get distinct labels.
    const std::string countable =
        kCountablePool[static_cast<std::size_t>(fixtures_made++) % kCountablePool.size()];
    const int copies = 2 + static_cast<int>(rng.below(4));  // 2..5
    for (int i = 0; i < copies; ++i) {
      fixture.objects.push_back(make_object(countable, fixture));
    }
    // A couple of scripted VQA entries per scene keeps that tool exercised.
    const auto& first = fixture.objects.front();
    fixture.vqa_script[tf::normalize_question("What color is the " + first.label + "?")] =
        first.attributes.at("color");
    fixture.vqa_script[tf::normalize_question("Is there a " + countable + " in the scene?")] =
        "yes";
    fixture.validate();
    return fixture;
  }

  tf::scene::SceneObject make_object(const std::string& label,
                                     const tf::scene::SceneFixture& fixture) {
    tf::scene::SceneObject obj;
    obj.label = label;
    const double w = round2(rng.uniform(40, 180));
    const double h = round2(rng.uniform(40, 180));
    const double x0 = round2(rng.uniform(0, fixture.width - w));
    const double y0 = round2(rng.uniform(0, fixture.height - h));
    obj.box = tf::BoxVal{x0, y0, x0 + w, y0 + h};
    obj.depth = round2(rng.uniform(0.8, 6.0));
    obj.attributes["color"] = kColors[static_cast<std::size_t>(rng.below(kColors.size()))];
    return obj;
  }

  // Unique-label objects of a fixture (the countable label is excluded).
  std::vector<std::string> unique_labels(const tf::scene::SceneFixture& fixture) {
    std::map<std::string, int> counts;
    for (const auto& o : fixture.objects) counts[o.label] += 1;
    std::vector<std::string> out;
    for (const auto& o : fixture.objects) {
      if (counts[o.label] == 1) out.push_back(o.label);
    }
    return out;
  }

  std::string countable_label(const tf::scene::SceneFixture& fixture) {
    std::map<std::string, int> counts;
    for (const auto& o : fixture.objects) counts[o.label] += 1;
    for (const auto& [label, n] : counts) {
      if (n > 1) return label;
    }
    throw tf::Error("fixture has no countable label");
  }

  // Draws k distinct labels such that the oracle answer is well-separated
  // (no near-ties), retrying across shuffled label combinations.
  std::vector<std::string> pick_labels(const tf::scene::SceneFixture& fixture,
                                       tf::scene::Template tmpl, std::size_t k,
                                       const std::function<bool(const std::vector<std::string>&)>&
                                           acceptable) {
    std::vector<std::string> labels = unique_labels(fixture);
    if (labels.size() < k) throw tf::Error("fixture too small for template");
    for (int attempt = 0; attempt < 256; ++attempt) {
      std::vector<std::string> pool = labels;
      tf::deterministic_shuffle(pool, rng);
      std::vector<std::string> chosen(pool.begin(), pool.begin() + static_cast<long>(k));
      std::set<std::string> chosen_set(chosen.begin(), chosen.end());
      bool too_close = false;
      for (const auto& [prior_tmpl, prior] : used_sets) {
        if (prior_tmpl == tmpl) continue;
        std::size_t shared = 0;
        for (const auto& l : chosen_set) shared += prior.count(l);
        if (shared > 1) too_close = true;
      }
      if (too_close || !acceptable(chosen)) continue;
      used_sets.emplace_back(tmpl, std::move(chosen_set));
      return chosen;
    }
    throw tf::Error("could not draw well-separated labels in fixture " + fixture.id);
  }
};

const tf::scene::SceneObject& object_of(const tf::scene::SceneFixture& fixture,
                                        const std::string& label) {
  for (const auto& o : fixture.objects) {
    if (o.label == label) return o;
  }
  throw tf::Error("label not in fixture");
}

// Question phrasings. Main-set wording is fixed per template so that
// questions of one family embed close together; holdout wording differs.
std::string phrase_main(const tf::QuestionSpec& q) {
  const auto& L = q.oracle.labels;
  switch (q.oracle.tmpl) {
    case tf::scene::Template::Ratio3d:
      return "In real 3d size, how many times " +
             std::string(q.oracle.dimension == "width" ? "wider" : "taller") + " is the " +
             L[0] + " than the " + L[1] + "?";
    case tf::scene::Template::GroupStackCount:
      return "How many " + L.back() + "s stacked on top of each other would match the combined "
             "height of the " + L[0] + " and the " + L[1] + "?";
    case tf::scene::Template::ClosestToCamera:
      return "Which of these objects sits closest to the camera: the " + L[0] + ", the " + L[1] +
             ", or the " + L[2] + "?";
    case tf::scene::Template::DistanceCompare:
      return "In 3d space, is the " + L[0] + " closer to the " + L[1] + " than to the " + L[2] +
             "?";
    case tf::scene::Template::CountLabel:
      return "How many " + L[0] + "s are visible in the scene?";
    case tf::scene::Template::LargestBy3d:
      return "Comparing true heights, which object is biggest: the " + L[0] + ", the " + L[1] +
             " or the " + L[2] + "?";
  }
  throw tf::Error("unknown template");
}

std::string phrase_holdout(const tf::QuestionSpec& q) {
  const auto& L = q.oracle.labels;
  switch (q.oracle.tmpl) {
    case tf::scene::Template::Ratio3d:
      return "Roughly how many times " +
             std::string(q.oracle.dimension == "width" ? "wider" : "taller") + " would the " +
             L[0] + " be compared to the " + L[1] + " in true 3d size?";
    case tf::scene::Template::GroupStackCount:
      return "Stacking " + L.back() + "s on top of each other, how many would it take to match "
             "the combined height of the " + L[0] + " and the " + L[1] + "?";
    case tf::scene::Template::ClosestToCamera:
      return "Among the " + L[0] + ", the " + L[1] + " and the " + L[2] +
             ", which one is nearest to the camera?";
    case tf::scene::Template::DistanceCompare:
      return "Would you say the " + L[0] + " is closer to the " + L[1] + " than it is to the " +
             L[2] + "?";
    case tf::scene::Template::CountLabel:
      return "Count the " + L[0] + "s present in this scene.";
    case tf::scene::Template::LargestBy3d:
      return "Of the " + L[0] + ", the " + L[1] + " and the " + L[2] +
             ", which one has the greatest height in real terms?";
  }
  throw tf::Error("unknown template");
}

tf::QuestionSpec make_question(Gen& gen, const tf::scene::SceneFixture& fixture,
                               tf::scene::Template tmpl, const std::string& id,
                               const std::string& dimension) {
  tf::QuestionSpec q;
  q.id = id;
  q.scene_id = fixture.id;
  q.oracle.tmpl = tmpl;
  q.oracle.dimension = dimension;

  auto dim3d = [&](const std::string& label) {
    return tf::scene::object_dim_3d(object_of(fixture, label), dimension);
  };
  switch (tmpl) {
    case tf::scene::Template::Ratio3d:
      q.answer_type = tf::scene::AnswerType::Float;
      q.oracle.labels = gen.pick_labels(fixture, tmpl, 2, [&](const std::vector<std::string>& L) {
        double r = dim3d(L[0]) / dim3d(L[1]);
        return r > 1.15 || r < 0.85;  // keep ratios away from 1 for realism
      });
      break;
    case tf::scene::Template::GroupStackCount:
      q.answer_type = tf::scene::AnswerType::Float;
      q.oracle.labels = gen.pick_labels(fixture, tmpl, 3, [](const std::vector<std::string>&) {
        return true;
      });
      break;
    case tf::scene::Template::ClosestToCamera: {
      q.answer_type = tf::scene::AnswerType::MultipleChoice;
      q.oracle.labels = gen.pick_labels(fixture, tmpl, 3, [&](const std::vector<std::string>& L) {
        std::vector<double> depths;
        for (const auto& l : L) depths.push_back(object_of(fixture, l).depth);
        std::sort(depths.begin(), depths.end());
        return depths[1] - depths[0] >= 0.05 && depths[2] - depths[1] >= 0.05;
      });
      break;
    }
    case tf::scene::Template::DistanceCompare: {
      q.answer_type = tf::scene::AnswerType::YesNo;
      q.oracle.labels = gen.pick_labels(fixture, tmpl, 3, [&](const std::vector<std::string>& L) {
        double ab = tf::scene::distance_3d(object_of(fixture, L[0]), object_of(fixture, L[1]));
        double ac = tf::scene::distance_3d(object_of(fixture, L[0]), object_of(fixture, L[2]));
        return std::fabs(ab - ac) >= 2.0;
      });
      break;
    }
    case tf::scene::Template::CountLabel:
      q.answer_type = tf::scene::AnswerType::Counting;
      q.oracle.labels = {gen.countable_label(fixture)};
      break;
    case tf::scene::Template::LargestBy3d: {
      q.answer_type = tf::scene::AnswerType::MultipleChoice;
      q.oracle.labels = gen.pick_labels(fixture, tmpl, 3, [&](const std::vector<std::string>& L) {
        std::vector<double> dims;
        for (const auto& l : L) dims.push_back(dim3d(l));
        std::sort(dims.begin(), dims.end());
        return dims[2] >= 1.05 * dims[1];  // clear winner
      });
      break;
    }
  }
  return q;
}

void check_embedding_separation(const std::vector<tf::QuestionSpec>& questions) {
  tf::DeterministicEmbedder embedder;
  std::vector<std::vector<double>> vecs;
  std::vector<std::string> texts;
  for (const auto& q : questions) texts.push_back(q.question);
  vecs = embedder.embed(texts);
  double worst_intra = 1.0, worst_cross = 0.0;
  std::size_t cross_i = 0, cross_j = 0;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    for (std::size_t j = i + 1; j < questions.size(); ++j) {
      double c = tf::cosine(vecs[i], vecs[j]);
      if (questions[i].oracle.tmpl == questions[j].oracle.tmpl) {
        worst_intra = std::min(worst_intra, c);
      } else if (c > worst_cross) {
        worst_cross = c;
        cross_i = i;
        cross_j = j;
      }
    }
  }
  if (worst_cross > 0.7) {
    std::cout << "closest cross pair:\n  " << questions[cross_i].question << "\n  "
              << questions[cross_j].question << "\n";
  }
  std::cout << "embedding separation: min intra-family " << tf::format_real(worst_intra)
            << ", max cross-family " << tf::format_real(worst_cross) << "\n";
  if (worst_intra < 0.8) throw tf::Error("intra-family similarity fell below tau_sim");
  if (worst_cross >= 0.79) throw tf::Error("cross-family similarity too close to tau_sim");
}

void write_script(const nlohmann::json& script, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw tf::IoError("cannot write script", path);
  out << script.dump(2) << "\n";
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw tf::IoError("cannot read", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"generate the synthetic dataset, fixtures, and provider scripts"};
  std::string out_root = "data";
  app.add_option("--out", out_root, "data directory to (re)generate");
  CLI11_PARSE(app, argc, argv);

  try {
    Gen gen;

    // ---- fixtures -----------------------------------------------------------
    tf::Dataset main_set, holdout_set;
    for (int i = 1; i <= 16; ++i) {
      char id[16];
      std::snprintf(id, sizeof id, "s%02d", i);
      auto fixture = gen.make_fixture(id, 9);
      main_set.fixtures.emplace(fixture.id, fixture);
    }
    for (int i = 1; i <= 3; ++i) {
      char id[16];
      std::snprintf(id, sizeof id, "h%02d", i);
      auto fixture = gen.make_fixture(id, 9);
      holdout_set.fixtures.emplace(fixture.id, fixture);
    }

    // ---- main questions: 12 ratio, 10 stack, 10 closest, 10 compare,
    //      9 count, 9 largest = 60 ------------------------------------------
    struct FamilyPlan {
      tf::scene::Template tmpl;
      int count;
    };
    const std::vector<FamilyPlan> plan = {
        {tf::scene::Template::Ratio3d, 12},        {tf::scene::Template::GroupStackCount, 10},
        {tf::scene::Template::ClosestToCamera, 10}, {tf::scene::Template::DistanceCompare, 10},
        {tf::scene::Template::CountLabel, 9},       {tf::scene::Template::LargestBy3d, 9}};
    std::vector<std::string> scene_ids;
    for (const auto& [id, _] : main_set.fixtures) scene_ids.push_back(id);

    std::set<std::string> used_texts;
    int question_number = 0;
    std::size_t scene_cursor = 0;
    for (const auto& family : plan) {
      int made = 0;
      int ratio_widths = 0;
      int stuck_guard = 0;
      while (made < family.count) {
        if (++stuck_guard > 1000) {
          throw tf::Error("cannot place " + tf::scene::template_name(family.tmpl) +
                          " questions; dataset constraints too tight");
        }
        const std::string scene_id = scene_ids[scene_cursor % scene_ids.size()];
        ++scene_cursor;
        // Ratio questions are mostly heights with a few widths.
        std::string dimension = "height";
        if (family.tmpl == tf::scene::Template::Ratio3d && ratio_widths < 3 &&
            made % 4 == 3) {
          dimension = "width";
        }
        char id[16];
        std::snprintf(id, sizeof id, "q%03d", ++question_number);
        tf::QuestionSpec q;
        try {
          q = make_question(gen, main_set.fixtures.at(scene_id), family.tmpl, id, dimension);
        } catch (const tf::Error&) {
          --question_number;
          continue;  // fixture could not host this template; try the next scene
        }
        q.question = phrase_main(q);
        if (!used_texts.insert(tf::normalize_question(q.question)).second) {
          --question_number;
          continue;  // duplicate wording; redraw
        }
        if (dimension == "width") ++ratio_widths;
        // Confirm the oracle accepts the instance.
        tf::scene::oracle_answer(main_set.fixtures.at(scene_id), q.id, q.oracle);
        main_set.questions.push_back(std::move(q));
        ++made;
      }
    }

    // ---- holdout: 2 per family over the holdout fixtures -------------------
    std::vector<std::string> holdout_scenes;
    for (const auto& [id, _] : holdout_set.fixtures) holdout_scenes.push_back(id);
    int holdout_number = 0;
    for (const auto& family : plan) {
      for (int k = 0; k < 2; ++k) {
        for (std::size_t attempt = 0;; ++attempt) {
          if (attempt >= holdout_scenes.size() * 4u) {
            throw tf::Error("could not place holdout question");
          }
          const std::string scene_id =
              holdout_scenes[(static_cast<std::size_t>(holdout_number) + attempt) %
                             holdout_scenes.size()];
          char id[16];
          std::snprintf(id, sizeof id, "h%03d", holdout_number + 1);
          tf::QuestionSpec q;
          try {
            q = make_question(gen, holdout_set.fixtures.at(scene_id), family.tmpl, id, "height");
          } catch (const tf::Error&) {
            continue;
          }
          q.question = phrase_holdout(q);
          if (!used_texts.insert(tf::normalize_question(q.question)).second) continue;
          tf::scene::oracle_answer(holdout_set.fixtures.at(scene_id), q.id, q.oracle);
          holdout_set.questions.push_back(std::move(q));
          ++holdout_number;
          break;
        }
      }
    }

    check_embedding_separation(main_set.questions);

    // ---- write dataset files ------------------------------------------------
    fs::create_directories(out_root);
    fs::create_directories(fs::path(out_root) / "scripts");
    // Holdout fixtures live in the same fixtures directory.
    tf::Dataset all_fixtures = main_set;
    for (const auto& [id, fixture] : holdout_set.fixtures) {
      all_fixtures.fixtures.emplace(id, fixture);
    }
    tf::save_dataset(all_fixtures, (fs::path(out_root) / "dataset.json").string(), "fixtures");
    {
      // Rewrite the manifest without holdout fixtures in `questions` (save_dataset
      // wrote the main questions plus all fixtures, which is what we want), and
      // write the holdout manifest referencing the same fixtures directory.
      tf::Dataset holdout_manifest = holdout_set;
      nlohmann::json j;
      j["schema_version"] = 1;
      j["fixtures_dir"] = "fixtures";
      auto arr = nlohmann::json::array();
      for (const auto& q : holdout_manifest.questions) {
        nlohmann::json qj;
        qj["id"] = q.id;
        qj["question"] = q.question;
        qj["scene"] = q.scene_id;
        qj["answer_type"] = tf::scene::answer_type_name(q.answer_type);
        qj["oracle"] = q.oracle.to_json();
        arr.push_back(std::move(qj));
      }
      j["questions"] = std::move(arr);
      std::ofstream out(fs::path(out_root) / "holdout.json", std::ios::binary | std::ios::trunc);
      out << j.dump(2) << "\n";
    }

    // ---- record the desk run -------------------------------------------------
    tf::Dataset merged = all_fixtures;  // main questions + every fixture
    for (const auto& q : holdout_set.questions) merged.questions.push_back(q);

    auto engine = std::make_shared<tf::SyntheticChatProvider>(merged);
    auto recorder = std::make_shared<tf::RecordingChatProvider>(engine);
    tf::ProviderBundle bundle;
    bundle.chat = recorder;
    bundle.embedder = std::make_shared<tf::DeterministicEmbedder>();

    tf::Config config;
    config.validate();
    const fs::path work = fs::temp_directory_path() / "toolforge_datagen";
    fs::remove_all(work);
    tf::Dataset main_loaded = tf::load_dataset((fs::path(out_root) / "dataset.json").string());
    tf::RunOptions options;
    options.out_dir = (work / "run").string();
    options.dataset_path = (fs::path(out_root) / "dataset.json").string();
    tf::RunReport report = tf::run(main_loaded, config, bundle, options);
    if (!report.finished) throw tf::Error("datagen run did not finish");

    int abstracted = 0;
    for (const auto& [_, e] : report.libraries.examples) {
      if (e.status == tf::ExampleStatus::Abstracted) ++abstracted;
    }
    const int created = report.libraries.created_learned_count();
    const int active = report.libraries.active_learned_count();
    int deprecated = 0;
    for (const auto& [_, t] : report.libraries.tools) {
      if (t.deprecated) ++deprecated;
    }
    std::cout << "desk run: " << report.libraries.examples.size() << " examples, " << abstracted
              << " abstracted, " << created << " tools created, " << active << " active, "
              << deprecated << " deprecated\n";
    if (created < 2) throw tf::Error("desk run created fewer than 2 learned tools");
    if (deprecated < 1) throw tf::Error("desk run performed no merge");
    if (abstracted * 10 < static_cast<int>(report.libraries.examples.size()) * 3) {
      throw tf::Error("fewer than 30% of examples ended abstracted");
    }

    // ---- replay self-check ----------------------------------------------------
    nlohmann::json run_script = recorder->script();
    {
      auto replay = std::make_shared<tf::ScriptedChatProvider>(run_script);
      tf::ProviderBundle replay_bundle;
      replay_bundle.chat = replay;
      replay_bundle.embedder = std::make_shared<tf::DeterministicEmbedder>();
      tf::RunOptions replay_options = options;
      replay_options.out_dir = (work / "replay").string();
      tf::RunReport replay_report = tf::run(main_loaded, config, replay_bundle, replay_options);
      if (!replay_report.finished) throw tf::Error("replay run did not finish");
      if (slurp(report.paths.libraries) != slurp(replay_report.paths.libraries)) {
        throw tf::Error("replayed library file differs from the recorded run");
      }
    }
    std::cout << "replay check: library files byte-identical\n";

    // ---- holdout transfer script ----------------------------------------------
    auto holdout_recorder = std::make_shared<tf::RecordingChatProvider>(engine);
    tf::EmbeddingBank bank(bundle.embedder);
    int exact = 0;
    for (const auto& q : holdout_set.questions) {
      tf::TransferAnswer answer = tf::transfer_solve(
          report.libraries, q.question, holdout_set.fixtures.at(q.scene_id), *holdout_recorder,
          bank, config);
      tf::scene::GroundTruth gt =
          tf::scene::oracle_answer(holdout_set.fixtures.at(q.scene_id), q.id, q.oracle);
      bool ok = answer.answer && tf::value_equivalent(*answer.answer, gt.answer, 1e-9);
      if (ok) ++exact;
      bool used_learned = false;
      for (const auto& name : answer.tools_used) {
        auto it = report.libraries.tools.find(name);
        if (it != report.libraries.tools.end() && it->second.level >= 1) used_learned = true;
      }
      std::cout << "holdout " << q.id << ": " << (ok ? "exact" : "MISS")
                << (used_learned ? " (learned tool)" : "") << "\n";
    }
    if (exact < 10) throw tf::Error("holdout transfer fell below 10/12 oracle-exact");

    write_script(run_script, (fs::path(out_root) / "scripts" / "run_scripts.json").string());
    write_script(holdout_recorder->script(),
                 (fs::path(out_root) / "scripts" / "holdout_scripts.json").string());
    std::cout << "wrote " << out_root << "/dataset.json, holdout.json, fixtures/, scripts/\n";
    fs::remove_all(work);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "datagen failed: " << e.what() << "\n";
    return 1;
  }
}
