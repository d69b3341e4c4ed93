#include "pillarmamba/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "pillarmamba/grad_check.hpp"
#include "pillarmamba/pipeline.hpp"
#include "pillarmamba/train.hpp"

namespace pillarmamba {

using json = nlohmann::json;

namespace {

enum class LogLevel { error = 0, info = 1, debug = 2 };

LogLevel log_level_from_env() {
  const char* raw = std::getenv("PILLARMAMBA_LOG");
  if (!raw || !*raw) return LogLevel::info;
  const std::string v = raw;
  if (v == "error") return LogLevel::error;
  if (v == "info") return LogLevel::info;
  if (v == "debug") return LogLevel::debug;
  throw ConfigError("PILLARMAMBA_LOG: expected one of {error, info, debug}, got '" + v + "'");
}

class Logger {
 public:
  Logger(std::ostream& sink, LogLevel level) : sink_(sink), level_(level) {}
  void info(const std::string& msg) const { write(LogLevel::info, "info", msg); }
  void debug(const std::string& msg) const { write(LogLevel::debug, "debug", msg); }

 private:
  void write(LogLevel at, const char* tag, const std::string& msg) const {
    if (level_ >= at) sink_ << "[" << tag << "] " << msg << "\n";
  }
  std::ostream& sink_;
  LogLevel level_;
};

struct Options {
  std::uint64_t seed = 0;
  int workers = 1;
  std::string config;
  std::string out;
  std::string manifest;
  std::string weights;
  std::string dets;
  std::string scene = "0";
  std::optional<int> steps;
  std::size_t scenes = 4;
  int seeds = 20;
  int repeat = 5;
  std::vector<std::string> forms;
  std::string grid;
  std::string occupancy;
};

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return parse_config(json{{"grid", json::object()}});
  return load_config(path);
}

std::pair<std::int64_t, std::int64_t> parse_grid(const std::string& text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string::npos) throw ConfigError("expected GxG, got '" + text + "'");
  try {
    std::size_t used_a = 0, used_b = 0;
    const auto a = std::stoll(text.substr(0, x), &used_a);
    const auto b = std::stoll(text.substr(x + 1), &used_b);
    if (used_a != x || used_b != text.size() - x - 1 || a <= 0 || b <= 0) throw std::invalid_argument(text);
    return {a, b};
  } catch (const std::logic_error&) {
    throw ConfigError("expected GxG with positive integers, got '" + text + "'");
  }
}

std::string error_type(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const FormatError*>(&e)) return "FormatError";
  if (dynamic_cast<const ContractViolation*>(&e)) return "ContractViolation";
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return "FilesystemError";
  return "RuntimeError";
}

json timing_json(const TimingStats& t) {
  return {{"repeats", t.seconds.size()}, {"min_s", t.min}, {"median_s", t.median}, {"mean_s", t.mean}};
}

struct Report {
  json outputs = json::array();
  json summary = json::object();
  bool ok = true;
};

Report cmd_gen(const RunConfig& cfg, const Options& o, const Logger& log) {
  Report r;
  const auto manifest = generate_dataset(cfg, o.seed, o.scenes, o.out, o.workers);
  const auto m = load_manifest(manifest);
  std::size_t boxes = 0;
  for (const auto& s : m.scenes) {
    r.outputs.push_back(s.cloud.string());
    r.outputs.push_back(s.labels.string());
    boxes += load_labels(s.labels).size();
  }
  r.outputs.push_back(manifest.string());
  r.summary = {{"scenes", m.scenes.size()}, {"boxes", boxes}, {"manifest", manifest.string()}};
  log.info("wrote " + std::to_string(m.scenes.size()) + " scenes to " + o.out);
  return r;
}

Report cmd_forward(const RunConfig& cfg, const Options& o, const Logger& log) {
  Report r;
  const auto model = build_model(cfg, o.weights, o.seed);
  const auto manifest = load_manifest(o.manifest);
  const auto paths = run_forward(model, manifest, o.out, o.workers);
  std::size_t total = 0;
  for (const auto& p : paths) {
    r.outputs.push_back(p.string());
    total += load_detections(p).size();
  }
  r.summary = {{"scenes", paths.size()}, {"detections", total}, {"weights", o.weights.empty() ? json(nullptr) : json(o.weights)}};
  log.info("wrote detections for " + std::to_string(paths.size()) + " scenes to " + o.out);
  return r;
}

Report cmd_gradcheck(const Options& o, const Logger& log) {
  Report r;
  json ops = json::array();
  for (const auto& e : run_gradcheck_suite(o.seeds, o.seed)) {
    log.info(e.op + ": max rel error " + std::to_string(e.max_rel_error) + (e.passed ? " ok" : " FAILED"));
    ops.push_back({{"op", e.op},
                   {"seeds", e.seeds},
                   {"max_rel_error", e.max_rel_error},
                   {"passed", e.passed},
                   {"seconds", e.seconds},
                   {"worst", e.worst}});
    r.ok = r.ok && e.passed;
  }
  r.summary = {{"tolerance", GradCheckOptions{}.tolerance}, {"passed", r.ok}, {"ops", ops}};
  return r;
}

Scene load_scene_arg(const RunConfig& cfg, const Options& o) {
  const fs::path p = o.scene;
  if (p.extension() == ".bin") {
    auto labels = p;
    labels.replace_extension(".json");
    return {load_cloud(p), load_labels(labels)};
  }
  std::size_t used = 0;
  unsigned long long index = 0;
  try {
    index = std::stoull(o.scene, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != o.scene.size())
    throw ConfigError("--scene: expected a scene index or a .bin cloud path, got '" + o.scene + "'");
  return generate_scene(cfg.scene_spec(o.seed, index));
}

Report cmd_train(RunConfig cfg, const Options& o, const Logger& log) {
  Report r;
  if (o.steps) cfg.train.steps = *o.steps;
  const auto scene = load_scene_arg(cfg, o);
  auto model = build_model(cfg, o.weights, o.seed);
  const auto result = train_on_scene(model, scene, cfg.train, [&](const TrainStep& s) {
    std::ostringstream line;
    line << "step " << s.step << " loss " << s.total << " heatmap " << s.heatmap << " regression " << s.regression;
    log.info(line.str());
  });
  save_weights(o.out, model.store());
  r.outputs.push_back(o.out);

  const auto dets = model.detect(scene.cloud);
  json top = nullptr;
  if (!dets.empty()) {
    double best = 0;
    for (const auto& gt : scene.boxes) best = std::max(best, rotated_iou_bev(dets.front().box, gt));
    top = {{"class", class_name(dets.front().box.cls)}, {"score", dets.front().score}, {"best_bev_iou", best}};
  }
  const double first = result.history.empty() ? result.final.total : result.history.front().total;
  r.summary = {{"steps", cfg.train.steps},
               {"optimizer", to_string(cfg.train.optimizer)},
               {"initial_loss", first},
               {"final_loss", result.final.total},
               {"final_to_initial", first > 0 ? result.final.total / first : 0.0},
               {"gt_boxes", scene.boxes.size()},
               {"detections", dets.size()},
               {"top_detection", top}};
  return r;
}

Report cmd_eval(const RunConfig& cfg, const Options& o, const Logger& log) {
  Report r;
  const auto manifest = load_manifest(o.manifest);
  const auto metrics = evaluate_dataset(cfg, o.dets, manifest);
  const fs::path out = o.out.empty() ? fs::path(o.dets) / "metrics.json" : fs::path(o.out);
  write_text(out, metrics.dump(2) + "\n");
  r.outputs.push_back(out.string());
  json per_class = json::object();
  for (const auto& [name, c] : metrics["classes"].items()) per_class[name] = c["ap"];
  r.summary = {{"metric", metrics["metric"]}, {"mean_ap", metrics["mean_ap"]}, {"ap", per_class}};
  log.info("metrics written to " + out.string());
  return r;
}

Report cmd_bench(const RunConfig& cfg, const Options& o, const Logger& log) {
  Report r;
  std::vector<ScanForm> forms;
  if (o.forms.empty())
    forms = {ScanForm::recurrent, ScanForm::parallel, ScanForm::conv};
  else
    for (const auto& f : o.forms) forms.push_back(parse_scan_form(f));

  json scans = json::array(), blocks = json::array();
  std::ostringstream csv;
  csv << "kind,name,tokens,channels,state_dim,macs,repeats,min_s,median_s,mean_s,digest\n";
  for (auto form : forms) {
    const auto b = bench_scan(cfg, form, o.repeat, o.seed);
    log.info("scan " + to_string(form) + ": median " + std::to_string(b.timing.median) + " s");
    scans.push_back({{"form", to_string(form)},
                     {"tokens", b.tokens},
                     {"channels", b.channels},
                     {"state_dim", b.state_dim},
                     {"timing", timing_json(b.timing)},
                     {"output_digest", b.output_digest}});
    csv << "scan," << to_string(form) << ',' << b.tokens << ',' << b.channels << ',' << b.state_dim << ",,"
        << b.timing.seconds.size() << ',' << b.timing.min << ',' << b.timing.median << ',' << b.timing.mean << ','
        << b.output_digest << "\n";
  }
  bool stable = true;
  for (const auto& b : bench_backbone(cfg, o.repeat, o.seed)) {
    log.info("block " + b.name + ": median " + std::to_string(b.timing.median) + " s, " + std::to_string(b.macs) +
             " MACs");
    blocks.push_back({{"name", b.name},
                      {"macs", b.macs},
                      {"timing", timing_json(b.timing)},
                      {"output_digest", b.output_digest},
                      {"digest_stable", b.digest_stable}});
    csv << "block," << b.name << ",,," << ',' << b.macs << ',' << b.timing.seconds.size() << ',' << b.timing.min
        << ',' << b.timing.median << ',' << b.timing.mean << ',' << b.output_digest << "\n";
    stable = stable && b.digest_stable;
  }
  if (!stable) throw std::runtime_error("bench: timed runs changed the backbone output digest");

  const json result = {{"scans", scans}, {"blocks", blocks}};
  if (!o.out.empty()) {
    const fs::path dir = o.out;
    write_text(dir / "bench.json", result.dump(2) + "\n");
    write_text(dir / "bench.csv", csv.str());
    r.outputs = {(dir / "bench.json").string(), (dir / "bench.csv").string()};
  }
  r.summary = result;
  return r;
}

Report cmd_diagnose(const Options& o, const Logger& log) {
  Report r;
  const auto [x, y] = parse_grid(o.grid);
  std::vector<bool> occ;
  if (!o.occupancy.empty()) occ = load_occupancy(o.occupancy, x, y);
  const auto result = diagnose_scan(x, y, occ);
  if (!o.out.empty()) {
    write_text(o.out, result.dump(2) + "\n");
    r.outputs.push_back(o.out);
    json brief = json::object();
    for (const auto& [dir, d] : result["directions"].items())
      brief[dir] = {{"neighbor_pairs", d["neighbor_pairs"]},
                    {"pairs_farther_than_1", d["pairs_farther_than_1"]},
                    {"max_neighbor_distance", d["max_neighbor_distance"]}};
    r.summary = {{"grid", result["grid"]}, {"occupied_cells", result["occupied_cells"]}, {"directions", brief}};
  } else {
    r.summary = result;
  }
  log.debug("diagnosed " + std::to_string(x) + "x" + std::to_string(y) + " grid");
  return r;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pillar state-space detector toolkit: data generation, inference, checks, training, evaluation."};
  app.name("pillarmamba");
  app.require_subcommand(1);
  Options o;
  app.add_option("--seed", o.seed, "Seed for data generation, initialization and benchmarks")->capture_default_str();
  app.add_option("--workers", o.workers, "Per-scene worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  auto config_opt = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config (omitted: documented defaults)")->check(CLI::ExistingFile);
  };

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  config_opt(gen);
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->add_option("--scenes", o.scenes, "Number of scenes")->check(CLI::PositiveNumber)->capture_default_str();

  auto* fwd = app.add_subcommand("forward", "Write detections for every manifest scene");
  config_opt(fwd);
  fwd->add_option("--manifest", o.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  fwd->add_option("--weights", o.weights, "Weights file (omitted: seeded initialization)")->check(CLI::ExistingFile);
  fwd->add_option("--out", o.out, "Detections directory")->required();

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  config_opt(grad);
  grad->add_option("--seeds", o.seeds, "Random shapes per op")->check(CLI::PositiveNumber)->capture_default_str();

  auto* train = app.add_subcommand("train-toy", "Fit one scene and write weights");
  config_opt(train);
  train->add_option("--scene", o.scene, "Scene index (generated from --seed) or a .bin cloud with sibling .json labels")
      ->capture_default_str();
  train->add_option("--steps", o.steps, "Steps (default: train.steps)")->check(CLI::PositiveNumber);
  train->add_option("--weights", o.weights, "Starting weights")->check(CLI::ExistingFile);
  train->add_option("--out", o.out, "Weights output path")->required();

  auto* eval = app.add_subcommand("eval", "AP_R40 per class");
  config_opt(eval);
  eval->add_option("--dets", o.dets, "Detections directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--manifest", o.manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", o.out, "Metrics JSON (default: <dets>/metrics.json)");

  auto* bench = app.add_subcommand("bench", "Scan-form and CSG on/off timings");
  config_opt(bench);
  bench->add_option("--form", o.forms, "Scan forms to time (default: all)")
      ->check(CLI::IsMember({"recurrent", "parallel", "conv"}));
  bench->add_option("--repeat", o.repeat, "Timed repetitions")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--out", o.out, "Directory for bench.json and bench.csv");

  auto* diag = app.add_subcommand("diagnose-scan", "Neighbor-distance and empty-run statistics per scan direction");
  diag->add_option("--grid", o.grid, "Grid extents, e.g. 64x64")
      ->required()
      ->check([](const std::string& text) {
        try {
          parse_grid(text);
        } catch (const ConfigError& e) {
          return std::string(e.what());
        }
        return std::string();
      });
  diag->add_option("--occupancy", o.occupancy, "Text mask of 0/1 or ./# with one row per x index")
      ->check(CLI::ExistingFile);
  diag->add_option("--out", o.out, "Write the full statistics here");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto used = app.get_subcommands();
    err << (used.empty() ? app.help() : used.front()->help());
    return 2;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  const auto start = std::chrono::steady_clock::now();
  try {
    const Logger log(err, log_level_from_env());
    const bool uses_config = command != "diagnose-scan";
    const RunConfig cfg = uses_config ? load_run_config(o.config) : RunConfig{};
    Report r;
    if (command == "gen") r = cmd_gen(cfg, o, log);
    else if (command == "forward") r = cmd_forward(cfg, o, log);
    else if (command == "gradcheck") r = cmd_gradcheck(o, log);
    else if (command == "train-toy") r = cmd_train(cfg, o, log);
    else if (command == "eval") r = cmd_eval(cfg, o, log);
    else if (command == "bench") r = cmd_bench(cfg, o, log);
    else r = cmd_diagnose(o, log);

    json report;
    report["command"] = command;
    report["config_digest"] = uses_config ? json(digest_hex(config_to_json(cfg).dump())) : json(nullptr);
    report["seed"] = o.seed;
    report["workers"] = o.workers;
    report["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report["outputs"] = r.outputs;
    report["summary"] = r.summary;
    report["ok"] = r.ok;
    if (!r.ok) {
      err << json{{"error", {{"command", command}, {"type", "CheckFailed"}, {"message", "gradient check failed"}}}}.dump()
          << "\n";
    }
    out << report.dump(2) << "\n";
    return r.ok ? 0 : 1;
  } catch (const std::exception& e) {
    err << json{{"error", {{"command", command}, {"type", error_type(e)}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace pillarmamba
