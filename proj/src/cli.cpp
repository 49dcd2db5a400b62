#include "fcnet/cli.hpp"

#include "fcnet/activation.hpp"
#include "fcnet/calibration.hpp"
#include "fcnet/detector.hpp"
#include "fcnet/eval.hpp"
#include "fcnet/experiment.hpp"
#include "fcnet/synthdata.hpp"
#include "fcnet/tensor_io.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace fcnet {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Bad flags, missing inputs or malformed input files: exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

spdlog::level::level_enum log_level_from_env() {
  const char* env = std::getenv("FCNET_LOG");
  if (env == nullptr) return spdlog::level::info;
  const std::string v = env;
  if (v == "error") return spdlog::level::err;
  if (v == "debug") return spdlog::level::debug;
  if (v == "warn") return spdlog::level::warn;
  return spdlog::level::info;
}

// Routes the default logger to `err` for the duration of one command.
class LoggerScope {
 public:
  explicit LoggerScope(std::ostream& err) : previous_(spdlog::default_logger()) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
    auto logger = std::make_shared<spdlog::logger>("fcnet", std::move(sink));
    logger->set_pattern("[%l] %v");
    logger->set_level(log_level_from_env());
    spdlog::set_default_logger(std::move(logger));
  }
  ~LoggerScope() { spdlog::set_default_logger(previous_); }
  LoggerScope(const LoggerScope&) = delete;
  LoggerScope& operator=(const LoggerScope&) = delete;

 private:
  std::shared_ptr<spdlog::logger> previous_;
};

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw UsageError(what + " not found: " + path.string());
}

json read_json_file(const fs::path& path, const std::string& what) {
  require_file(path, what);
  std::ifstream is(path, std::ios::binary);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw UsageError(what + " " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

void write_config(const fs::path& path, const json& config) { write_text(path, config.dump(2) + "\n"); }

// `<file>.config.json` for commands whose output is a single file.
fs::path sidecar_config(const fs::path& out) { return fs::path(out.string() + ".config.json"); }

std::vector<Scene> load_dataset(const fs::path& path) {
  require_file(path, "dataset");
  try {
    return read_dataset(path);
  } catch (const std::invalid_argument& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

Checkpoint load_model(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("model directory not found: " + dir.string());
  try {
    return load_checkpoint(dir);
  } catch (const FormatError& e) {
    throw UsageError(e.what());
  }
}

SceneRange parse_range(const std::string& text) {
  try {
    return SceneRange::parse(text);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::span<const Scene> require_scenes(std::span<const Scene> scenes, const std::string& what) {
  if (scenes.empty()) throw UsageError(what + " selects no scenes");
  return scenes;
}

// Training flags shared by train, sweep and ablate. Only flags actually given
// override the config file, which in turn overrides the defaults.
struct TrainFlags {
  std::string config;
  int iterations = 0;
  std::uint64_t seed = 0;
  std::string pixel, region, grad_through_a;
  double r_h = 0.0, r_w = 0.0, learning_rate = 0.0;

  CLI::Option* iterations_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* r_h_opt = nullptr;
  CLI::Option* r_w_opt = nullptr;
  CLI::Option* lr_opt = nullptr;

  void add_to(CLI::App* cmd, bool with_seed, bool with_switches, bool with_ratios) {
    cmd->add_option("--config", config, "JSON file with training settings")->check(CLI::ExistingFile);
    iterations_opt = cmd->add_option("--iters", iterations, "SGD iterations")->check(CLI::PositiveNumber);
    if (with_seed) seed_opt = cmd->add_option("--seed", seed, "training seed");
    if (with_switches) {
      cmd->add_option("--pixel", pixel, "pixel-wise calibration")->check(CLI::IsMember({"on", "off"}));
      cmd->add_option("--region", region, "region calibration")->check(CLI::IsMember({"on", "off"}));
    }
    if (with_ratios) {
      r_h_opt = cmd->add_option("--rh", r_h, "height ratio, >= 1");
      r_w_opt = cmd->add_option("--rw", r_w, "width ratio, >= 1");
    }
    lr_opt = cmd->add_option("--lr", learning_rate, "learning rate");
    cmd->add_option("--grad-through-a", grad_through_a, "backpropagate through the activation map")
        ->check(CLI::IsMember({"on", "off"}));
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config.empty()) {
      try {
        from_json(read_json_file(config, "config"), cfg);
      } catch (const std::invalid_argument& e) {
        throw UsageError(config + ": " + e.what());
      } catch (const json::exception& e) {
        throw UsageError(config + ": " + e.what());
      }
    }
    if (iterations_opt && iterations_opt->count()) cfg.iterations = iterations;
    if (seed_opt && seed_opt->count()) cfg.seed = seed;
    if (!pixel.empty()) cfg.pixel = pixel == "on";
    if (!region.empty()) cfg.region = region == "on";
    if (r_h_opt && r_h_opt->count()) cfg.r_h = r_h;
    if (r_w_opt && r_w_opt->count()) cfg.r_w = r_w;
    if (lr_opt && lr_opt->count()) cfg.learning_rate = learning_rate;
    if (!grad_through_a.empty()) cfg.grad_through_A = grad_through_a == "on";
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return cfg;
  }
};

// Train/test split for sweep and ablate: explicit ranges, else the first two
// thirds train and the rest test.
struct Split {
  std::string train_text, test_text;

  std::pair<SceneRange, SceneRange> resolve(std::size_t n) const {
    const int cut = static_cast<int>(2 * n / 3);
    SceneRange train = train_text.empty() ? SceneRange{0, cut} : parse_range(train_text);
    SceneRange test = test_text.empty() ? SceneRange{cut, -1} : parse_range(test_text);
    return {train, test};
  }
};

// Runs `task(i)` for i in [0, n) on up to `jobs` threads. Exceptions are
// rethrown after all workers stop.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& task) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < n; i = next++) task(i);
        } catch (...) {
          errors[w] = std::current_exception();
          next = n;
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

json box_json(const Box& b) { return json::array({b.x0, b.y0, b.x1, b.y1}); }

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string spec, out, dump_images;
  std::uint64_t seed = 0;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  const json spec_json = read_json_file(a.spec, "spec");
  DatasetSpec spec;
  try {
    from_json(spec_json, spec);
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(a.spec + ": " + e.what());
  } catch (const json::exception& e) {
    throw UsageError(a.spec + ": " + e.what());
  }

  const auto result = generate(spec, a.seed);
  for (const auto& issue : result.issues) spdlog::warn("{}", issue);
  write_dataset(fs::path(a.out), result.scenes);

  if (!a.dump_images.empty()) {
    fs::create_directories(a.dump_images);
    for (const auto& scene : result.scenes) {
      char name[32];
      std::snprintf(name, sizeof name, "scene_%05d.pgm", scene.index);
      write_pgm(fs::path(a.dump_images) / name, scene.image);
    }
  }

  std::map<std::string, int> counts;
  int objects = 0;
  for (const auto& scene : result.scenes) {
    for (const auto& o : scene.objects) {
      ++objects;
      ++counts[std::string(to_string(o.subset))];
    }
  }
  write_config(sidecar_config(a.out), {{"command", "gen"}, {"seed", a.seed}, {"spec", spec}});
  spdlog::info("wrote {} scenes to {}", result.scenes.size(), a.out);
  out << json{{"scenes", result.scenes.size()}, {"objects", objects}, {"subsets", counts}}.dump() << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string data, out, scenes = "0:";
  TrainFlags flags;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const TrainConfig cfg = a.flags.resolve();
  const SceneRange range = parse_range(a.scenes);
  const auto dataset = load_dataset(a.data);
  const auto scenes = require_scenes(range.slice(dataset), "--scenes " + a.scenes);

  const int every = std::max(1, cfg.iterations / 10);
  const auto result = train(scenes, cfg, std::nullopt, [&](int it, double loss) {
    if ((it + 1) % every == 0) spdlog::info("iteration {}/{} loss {:.4f}", it + 1, cfg.iterations, loss);
  });

  const fs::path dir(a.out);
  save_checkpoint(dir, result.params, cfg, cfg.iterations);
  std::ostringstream loss;
  loss << "iteration,loss\n";
  for (std::size_t i = 0; i < result.history.size(); ++i) loss << i + 1 << ',' << number(result.history[i]) << '\n';
  write_text(dir / "loss.csv", loss.str());
  write_config(dir / "config.json", {{"command", "train"}, {"data", a.data}, {"scenes", range.str()}, {"train", cfg}});

  const std::size_t tail = std::min<std::size_t>(50, result.history.size());
  double final_loss = 0.0;
  for (std::size_t i = result.history.size() - tail; i < result.history.size(); ++i) final_loss += result.history[i];
  out << json{{"iterations", cfg.iterations}, {"scenes", scenes.size()}, {"final_loss", final_loss / double(tail)}}
             .dump()
      << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string data, model, out, scenes = "0:";
  std::vector<std::string> subsets{"all", "reasonable", "partial", "heavy"};
  int jobs = 1;
  bool dump_detections = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  std::vector<EvalSubset> subsets;
  for (const auto& name : a.subsets) {
    try {
      subsets.push_back(eval_subset_from_string(name));
    } catch (const EvalError& e) {
      throw UsageError(e.what());
    }
  }
  if (subsets.empty()) throw UsageError("--subset needs at least one subset");
  const SceneRange range = parse_range(a.scenes);
  const Checkpoint model = load_model(a.model);
  const auto dataset = load_dataset(a.data);
  const auto scenes = require_scenes(range.slice(dataset), "--scenes " + a.scenes);

  const auto detections = infer_all(model.params, scenes, model.cfg, a.jobs);
  const auto reports = evaluate_by_subset(detections, scenes, subsets);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  for (const auto& r : reports) {
    std::ostringstream curve;
    write_curve_csv(curve, r.curve);
    write_text(dir / ("curve_" + std::string(to_string(r.subset)) + ".csv"), curve.str());
  }
  std::ostringstream summary;
  write_summary_csv(summary, reports);
  write_text(dir / "summary.csv", summary.str());

  const EvalSubset all[] = {EvalSubset::All};
  const auto everything = evaluate_by_subset(detections, scenes, all);
  std::ostringstream background;
  const auto refs = mr2_reference_fppi();
  if (everything.empty()) {
    write_background_csv(background, {});
  } else {
    write_background_csv(background,
                         background_error_rate(everything.front().matches, static_cast<int>(scenes.size()), refs));
  }
  write_text(dir / "bg_error.csv", background.str());

  if (a.dump_detections) {
    std::ostringstream dump;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      json dets = json::array();
      for (const auto& d : detections[i]) dets.push_back({{"box", box_json(d.box)}, {"score", d.score}});
      dump << json{{"index", scenes[i].index}, {"detections", std::move(dets)}}.dump() << '\n';
    }
    write_text(dir / "detections.jsonl", dump.str());
  }

  json names = json::array();
  for (auto s : subsets) names.push_back(std::string(to_string(s)));
  write_config(dir / "config.json", {{"command", "eval"},
                                     {"data", a.data},
                                     {"model", a.model},
                                     {"scenes", range.str()},
                                     {"subsets", names},
                                     {"train", model.cfg}});
  out << summary.str();
  return kExitOk;
}

struct ActivateArgs {
  std::string model, data, out;
  int scene = 0;
  bool regions = false;
};

int cmd_activate(const ActivateArgs& a, std::ostream& out) {
  const Checkpoint model = load_model(a.model);
  const auto dataset = load_dataset(a.data);
  if (a.scene < 0 || static_cast<std::size_t>(a.scene) >= dataset.size()) {
    throw UsageError("--scene " + std::to_string(a.scene) + " out of range, dataset has " +
                     std::to_string(dataset.size()) + " scenes");
  }
  const Scene& scene = dataset[static_cast<std::size_t>(a.scene)];
  const auto fwd = forward_image(model.params, scene.image, {}, model.cfg);
  const ActivationMap& map = fwd.activation;

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_activation_pgm(dir / "activation.pgm", map);
  write_activation_csv(dir / "activation.csv", map);

  if (a.regions) {
    json entries = json::array();
    auto add = [&](const std::string& kind, const Box& box, std::optional<double> score) {
      json e{{"kind", kind}, {"box", box_json(box)}};
      if (score) e["score"] = *score;
      const Box grid = to_feature_grid(box, map.rows(), map.cols());
      if (!grid.empty()) {
        const auto r = find_calibration_regions(map, grid, model.cfg.r_h, model.cfg.r_w);
        e["grid_box"] = box_json(grid);
        e["inner"] = box_json(r.inner);
        e["outer"] = box_json(r.outer);
      }
      entries.push_back(std::move(e));
    };
    for (const auto& o : scene.objects) add("ground_truth", o.box, std::nullopt);
    for (const auto& d : infer(model.params, scene.image, model.cfg)) add("detection", d.box, d.score);
    write_text(dir / "regions.json",
               json{{"scene", scene.index}, {"r_h", model.cfg.r_h}, {"r_w", model.cfg.r_w}, {"regions", entries}}
                       .dump(2) +
                   "\n");
  }

  write_config(dir / "config.json",
               {{"command", "activate"}, {"model", a.model}, {"data", a.data}, {"scene", a.scene}, {"regions", a.regions}});
  out << json{{"rows", map.rows()}, {"cols", map.cols()}, {"raw_max", map.raw.array().maxCoeff()}}.dump() << '\n';
  return kExitOk;
}

struct SweepArgs {
  std::string data, param, out;
  std::vector<std::string> values;
  std::vector<std::uint64_t> seeds;
  int jobs = 1;
  Split split;
  TrainFlags flags;
};

std::vector<double> parse_values(const std::vector<std::string>& items) {
  std::vector<double> values;
  for (const auto& item : items) {
    if (item.empty()) continue;
    double v = 0.0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc{} || res.ptr != item.data() + item.size()) {
      throw UsageError("--values: not a number: '" + item + "'");
    }
    if (!(v >= 1.0)) throw UsageError("--values: ratios must be >= 1, got " + item);
    values.push_back(v);
  }
  if (values.empty()) throw UsageError("--values needs at least one value");
  return values;
}

std::string mr2_cell(const RunOutcome& r, EvalSubset s) {
  const auto it = r.mr2.find(s);
  return it == r.mr2.end() ? "na" : number(it->second);
}

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
  const auto values = parse_values(a.values);
  if (a.seeds.empty()) throw UsageError("--seeds needs at least one seed");
  const TrainConfig base = a.flags.resolve();
  const auto dataset = load_dataset(a.data);
  const auto [train_range, test_range] = a.split.resolve(dataset.size());
  const auto train_scenes = require_scenes(train_range.slice(dataset), "training range " + train_range.str());
  const auto test_scenes = require_scenes(test_range.slice(dataset), "test range " + test_range.str());

  struct Run {
    double value;
    std::uint64_t seed;
    RunOutcome outcome;
  };
  std::vector<Run> runs;
  for (double v : values) {
    for (auto s : a.seeds) runs.push_back({v, s, {}});
  }
  parallel_for(runs.size(), a.jobs, [&](std::size_t i) {
    TrainConfig cfg = base;
    (a.param == "rh" ? cfg.r_h : cfg.r_w) = runs[i].value;
    cfg.seed = runs[i].seed;
    spdlog::info("sweep run {}/{}: {}={} seed {}", i + 1, runs.size(), a.param, runs[i].value, runs[i].seed);
    runs[i].outcome = train_and_evaluate(train_scenes, test_scenes, cfg);
  });

  std::ostringstream csv;
  csv << "value,seed,subset,mr2\n";
  for (const auto& r : runs) {
    for (auto s : kReportedSubsets) {
      csv << number(r.value) << ',' << r.seed << ',' << to_string(s) << ',' << mr2_cell(r.outcome, s) << '\n';
    }
  }
  write_text(a.out, csv.str());
  write_config(sidecar_config(a.out), {{"command", "sweep"},
                                       {"data", a.data},
                                       {"param", a.param},
                                       {"values", values},
                                       {"seeds", a.seeds},
                                       {"train_scenes", train_range.str()},
                                       {"test_scenes", test_range.str()},
                                       {"train", base}});
  out << csv.str();
  return kExitOk;
}

struct AblateArgs {
  std::string data, out;
  std::vector<std::uint64_t> seeds;
  int jobs = 1;
  Split split;
  TrainFlags flags;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  if (a.seeds.empty()) throw UsageError("--seeds needs at least one seed");
  const TrainConfig base = a.flags.resolve();
  const auto dataset = load_dataset(a.data);
  const auto [train_range, test_range] = a.split.resolve(dataset.size());
  const auto train_scenes = require_scenes(train_range.slice(dataset), "training range " + train_range.str());
  const auto test_scenes = require_scenes(test_range.slice(dataset), "test range " + test_range.str());

  struct Run {
    Variant variant;
    std::uint64_t seed;
    RunOutcome outcome;
  };
  std::vector<Run> runs;
  for (auto s : a.seeds) {
    for (const auto& v : ablation_variants()) runs.push_back({v, s, {}});
  }
  parallel_for(runs.size(), a.jobs, [&](std::size_t i) {
    TrainConfig cfg = base;
    cfg.pixel = runs[i].variant.pixel;
    cfg.region = runs[i].variant.region;
    cfg.seed = runs[i].seed;
    spdlog::info("ablation run {}/{}: {} seed {}", i + 1, runs.size(), runs[i].variant.name, runs[i].seed);
    runs[i].outcome = train_and_evaluate(train_scenes, test_scenes, cfg);
  });

  std::ostringstream csv;
  csv << "variant,seed,reasonable,partial,heavy,bg_fraction_fppi1\n";
  for (const auto& r : runs) {
    csv << r.variant.name << ',' << r.seed;
    for (auto s : kReportedSubsets) csv << ',' << mr2_cell(r.outcome, s);
    csv << ',' << (r.outcome.background_error_at_1 ? number(*r.outcome.background_error_at_1) : "na") << '\n';
  }
  write_text(a.out, csv.str());
  write_config(sidecar_config(a.out), {{"command", "ablate"},
                                       {"data", a.data},
                                       {"seeds", a.seeds},
                                       {"train_scenes", train_range.str()},
                                       {"test_scenes", test_range.str()},
                                       {"train", base}});
  out << csv.str();
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  LoggerScope logging(err);

  CLI::App app{"Feature-calibrated toy pedestrian detector", "fcnet"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic dataset");
  gen_cmd->add_option("--spec", gen.spec, "dataset spec JSON")->required();
  gen_cmd->add_option("--seed", gen.seed, "generation seed")->required();
  gen_cmd->add_option("--out", gen.out, "output JSON Lines file")->required();
  gen_cmd->add_option("--dump-images", gen.dump_images, "also write one PGM per scene here");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a detector");
  train_cmd->add_option("--data", tr.data, "dataset JSON Lines file")->required();
  train_cmd->add_option("--out", tr.out, "checkpoint directory")->required();
  train_cmd->add_option("--scenes", tr.scenes, "scene range a:b");
  tr.flags.add_to(train_cmd, true, true, true);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--data", ev.data, "dataset JSON Lines file")->required();
  eval_cmd->add_option("--model", ev.model, "checkpoint directory")->required();
  eval_cmd->add_option("--out", ev.out, "output directory")->required();
  eval_cmd->add_option("--subset", ev.subsets, "all|reasonable|partial|heavy|reasonable+heavy")->delimiter(',');
  eval_cmd->add_option("--scenes", ev.scenes, "scene range a:b");
  eval_cmd->add_option("--jobs", ev.jobs, "inference threads")->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--dump-detections", ev.dump_detections, "write detections.jsonl");

  ActivateArgs act;
  auto* act_cmd = app.add_subcommand("activate", "export the activation map of one scene");
  act_cmd->add_option("--model", act.model, "checkpoint directory")->required();
  act_cmd->add_option("--data", act.data, "dataset JSON Lines file")->required();
  act_cmd->add_option("--scene", act.scene, "scene position in the dataset")->required();
  act_cmd->add_option("--out", act.out, "output directory")->required();
  act_cmd->add_flag("--regions", act.regions, "write calibration regions per box");

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "train and evaluate over a grid of ratios and seeds");
  sweep_cmd->add_option("--data", sw.data, "dataset JSON Lines file")->required();
  sweep_cmd->add_option("--param", sw.param, "rh or rw")->required()->check(CLI::IsMember({"rh", "rw"}));
  sweep_cmd->add_option("--values", sw.values, "comma-separated ratios")->required()->delimiter(',');
  sweep_cmd->add_option("--seeds", sw.seeds, "comma-separated seeds")->required()->delimiter(',');
  sweep_cmd->add_option("--out", sw.out, "output CSV")->required();
  sweep_cmd->add_option("--jobs", sw.jobs, "concurrent runs")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--train-scenes", sw.split.train_text, "training range a:b");
  sweep_cmd->add_option("--test-scenes", sw.split.test_text, "test range a:b");
  sw.flags.add_to(sweep_cmd, false, true, false);

  AblateArgs ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "baseline, +pixel, +region and +both over several seeds");
  ablate_cmd->add_option("--data", ab.data, "dataset JSON Lines file")->required();
  ablate_cmd->add_option("--seeds", ab.seeds, "comma-separated seeds")->required()->delimiter(',');
  ablate_cmd->add_option("--out", ab.out, "output CSV")->required();
  ablate_cmd->add_option("--jobs", ab.jobs, "concurrent runs")->check(CLI::PositiveNumber);
  ablate_cmd->add_option("--train-scenes", ab.split.train_text, "training range a:b");
  ablate_cmd->add_option("--test-scenes", ab.split.test_text, "test range a:b");
  ab.flags.add_to(ablate_cmd, false, false, true);

  std::vector<std::string> argv_store{"fcnet"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen, out);
    if (*train_cmd) return cmd_train(tr, out);
    if (*eval_cmd) return cmd_eval(ev, out);
    if (*act_cmd) return cmd_activate(act, out);
    if (*sweep_cmd) return cmd_sweep(sw, out);
    if (*ablate_cmd) return cmd_ablate(ab, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace fcnet
