#include "pillarmamba/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numbers>
#include <thread>

#include "pillarmamba/backbone.hpp"
#include "pillarmamba/grad_check.hpp"
#include "pillarmamba/io.hpp"
#include "pillarmamba/model.hpp"

namespace pillarmamba {

using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point since) { return std::chrono::duration<double>(Clock::now() - since).count(); }

template <typename Scalar>
std::string tensor_digest(const Tensor<Scalar>& t) {
  std::string bytes(reinterpret_cast<const char*>(t.values().data()),
                    static_cast<std::size_t>(t.size()) * sizeof(Scalar));
  return digest_hex(bytes);
}

std::int64_t pick(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

Tensor<double> normal_tensor(Rng& rng, Shape shape, double sigma = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.span()) v = rng.normal(0.0, sigma);
  return t;
}

void perturb(ParamStore<double>& store, Rng& rng, double sigma) {
  for (std::size_t i = 0; i < store.size(); ++i)
    for (auto& v : store[i].value.span()) v += rng.normal(0.0, sigma);
}

std::vector<Param<double>*> with_store(ParamStore<double>& store, Param<double>* x) {
  std::vector<Param<double>*> ps;
  if (x) ps.push_back(x);
  for (std::size_t i = 0; i < store.size(); ++i) ps.push_back(&store[i]);
  return ps;
}

struct SuiteCase {
  std::string op;
  std::function<GradCheckReport(Rng&, std::uint64_t)> run;
};

std::vector<SuiteCase> suite_cases() {
  std::vector<SuiteCase> cases;
  cases.push_back({"conv2d", [](Rng& rng, std::uint64_t) {
                     const int groups = static_cast<int>(pick(rng, 1, 2));
                     const auto cin = groups * pick(rng, 1, 2), cout = groups * pick(rng, 1, 3);
                     const int k = static_cast<int>(pick(rng, 1, 3)), stride = static_cast<int>(pick(rng, 1, 2));
                     const auto h = pick(rng, 3, 6), w = pick(rng, 3, 6);
                     return grad_check_inputs(
                         [&](Tape<double>&, const std::vector<Var<double>>& in) {
                           return conv2d(in[0], in[1], in[2], {stride, k / 2, groups});
                         },
                         {normal_tensor(rng, Shape{cin, h, w}), normal_tensor(rng, Shape{cout, cin / groups, k, k}),
                          normal_tensor(rng, Shape{cout})});
                   }});
  cases.push_back({"layer_norm", [](Rng& rng, std::uint64_t) {
                     const auto c = pick(rng, 2, 8), h = pick(rng, 1, 4), w = pick(rng, 1, 4);
                     return grad_check_inputs(
                         [](Tape<double>&, const std::vector<Var<double>>& in) {
                           return layer_norm(in[0], in[1], in[2], 1e-5);
                         },
                         {normal_tensor(rng, Shape{c, h, w}), normal_tensor(rng, Shape{c}),
                          normal_tensor(rng, Shape{c})});
                   }});
  cases.push_back({"se_attention", [](Rng& rng, std::uint64_t) {
                     ParamStore<double> store;
                     auto se = SeParams<double>::create(store, "se", pick(rng, 1, 6));
                     se.initialize(rng);
                     perturb(store, rng, 0.5);
                     Param<double> x(normal_tensor(rng, Shape{se.w1->value.dim(1), pick(rng, 1, 3), pick(rng, 1, 3)}));
                     return grad_check([&](Tape<double>& t) { return se_attention(t, t.param(x), se); },
                                       with_store(store, &x));
                   }});
  cases.push_back({"selective_scan", [](Rng& rng, std::uint64_t seed) {
                     const auto t = pick(rng, 1, 12), d = pick(rng, 1, 3), m = pick(rng, 1, 4);
                     Tensor<double> dl(Shape{t, d});
                     for (auto& v : dl.span()) v = rng.uniform(0.05, 1.0);
                     Tensor<double> av(Shape{d, m});
                     for (auto& v : av.span()) v = -rng.uniform(0.1, 2.0);
                     SelectiveScanOptions opts;
                     opts.form = seed % 2 ? ScanForm::parallel : ScanForm::recurrent;
                     opts.parallel.partition = 3;
                     return grad_check_inputs(
                         [&](Tape<double>&, const std::vector<Var<double>>& in) {
                           return selective_scan(in[0], in[1], in[2], in[3], in[4], opts);
                         },
                         {normal_tensor(rng, Shape{t, d}), dl, av, normal_tensor(rng, Shape{t, m}),
                          normal_tensor(rng, Shape{t, m})});
                   }});
  cases.push_back({"ss2d_block", [](Rng& rng, std::uint64_t seed) {
                     Ss2dConfig cfg;
                     cfg.channels = pick(rng, 1, 3);
                     cfg.state_dim = pick(rng, 1, 3);
                     cfg.scan.form = seed % 2 ? ScanForm::parallel : ScanForm::recurrent;
                     cfg.scan.parallel.partition = 3;
                     ParamStore<double> store;
                     auto params = Ss2dParams<double>::create(store, "s", cfg);
                     params.initialize(rng);
                     perturb(store, rng, 0.2);
                     Param<double> x(normal_tensor(rng, Shape{cfg.channels, pick(rng, 1, 3), pick(rng, 1, 3)}));
                     return grad_check([&](Tape<double>& t) { return ss2d_block(t, t.param(x), params); },
                                       with_store(store, &x));
                   }});
  cases.push_back({"hsb_forward", [](Rng& rng, std::uint64_t seed) {
                     const int mask = static_cast<int>(seed % 16);
                     HsbConfig cfg;
                     cfg.channels = 2 * pick(rng, 1, 2);
                     cfg.local_conv = mask & 1;
                     cfg.residual = mask & 2;
                     cfg.attention = mask & 4;
                     cfg.attention_additive = mask & 8;
                     cfg.ss2d.state_dim = pick(rng, 1, 2);
                     ParamStore<double> store;
                     auto hsb = HsbParams<double>::create(store, "h", cfg);
                     hsb.initialize(rng);
                     perturb(store, rng, 0.2);
                     Param<double> x(normal_tensor(rng, Shape{cfg.channels, pick(rng, 1, 3), pick(rng, 1, 3)}));
                     return grad_check([&](Tape<double>& t) { return hsb_forward(t, t.param(x), hsb); },
                                       with_store(store, &x));
                   }});
  cases.push_back({"csg_forward", [](Rng& rng, std::uint64_t seed) {
                     CsgConfig cfg;
                     cfg.channels = 4;
                     cfg.hsb_layers = 1;
                     cfg.enabled = seed % 4 != 0;
                     cfg.hsb.ss2d.state_dim = 1;
                     cfg.hsb.ss2d.directions = seed % 2 ? 4 : 1;
                     ParamStore<double> store;
                     auto csg = CsgParams<double>::create(store, "c", cfg);
                     csg.initialize(rng);
                     perturb(store, rng, 0.2);
                     Param<double> x(normal_tensor(rng, Shape{4, pick(rng, 1, 3), pick(rng, 1, 3)}));
                     return grad_check([&](Tape<double>& t) { return csg_forward(t, t.param(x), csg); },
                                       with_store(store, &x));
                   }});
  cases.push_back({"pillar_encoder", [](Rng& rng, std::uint64_t seed) {
                     const GridSpec g{0.0, 0.8, -0.4, 0.4, -3.0, 1.0, 0.2};
                     PointCloud cloud;
                     for (std::int64_t i = 0, n = pick(rng, 1, 12); i < n; ++i)
                       cloud.push_back({rng.uniform(g.x_min, g.x_max), rng.uniform(g.y_min, g.y_max),
                                        rng.uniform(-2.0, 0.0), rng.uniform()});
                     const auto pillars = voxelize(cloud, g);
                     const auto feats = augment_features<double>(cloud, pillars, g);
                     ParamStore<double> store;
                     auto enc = PillarEncoderParams<double>::create(
                         store, "enc", pick(rng, 1, 4), seed % 2 ? EncoderActivation::relu : EncoderActivation::identity);
                     enc.initialize(rng);
                     for (auto& v : enc.bias->value.span()) v = rng.normal(0.0, 0.3);
                     return grad_check([&](Tape<double>& t) { return encode_scatter(t, feats, pillars, enc); },
                                       {enc.weight, enc.bias});
                   }});
  cases.push_back({"detection_loss", [](Rng& rng, std::uint64_t) {
                     const GridSpec g{0.0, 1.6, -0.8, 0.8, -3.0, 1.0, 0.2};
                     std::vector<Box3D> boxes;
                     for (std::int64_t i = 0, n = pick(rng, 0, 2); i < n; ++i)
                       boxes.push_back({rng.uniform(0.0, 1.59), rng.uniform(-0.79, 0.79), rng.uniform(-2.0, 0.0),
                                        rng.uniform(0.5, 5.0), rng.uniform(0.5, 2.5), rng.uniform(1.0, 2.0),
                                        rng.uniform(-std::numbers::pi, std::numbers::pi),
                                        static_cast<int>(rng.below(3))});
                     const auto targets = build_targets(boxes, g);
                     LossOptions opts;
                     opts.regression_weight = rng.uniform(0.5, 2.0);
                     return grad_check_inputs(
                         [&](Tape<double>&, const std::vector<Var<double>>& in) {
                           return detection_loss(in[0], targets, opts).total;
                         },
                         {normal_tensor(rng, Shape{11, 8, 8}, 2.0)});
                   }});
  return cases;
}

}  // namespace

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  std::vector<std::exception_ptr> errors(n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

fs::path generate_dataset(const RunConfig& config, std::uint64_t seed, std::size_t scenes, const fs::path& out_dir,
                          int workers) {
  fs::create_directories(out_dir);
  DatasetManifest manifest;
  manifest.split = "synthetic";
  manifest.scenes.resize(scenes);
  parallel_for(scenes, workers, [&](std::size_t i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "scene_%04zu", i);
    const auto scene = generate_scene(config.scene_spec(seed, i));
    const auto cloud = out_dir / (std::string(stem) + ".bin");
    const auto labels = out_dir / (std::string(stem) + ".json");
    save_cloud(cloud, scene.cloud);
    save_labels(labels, scene.boxes);
    manifest.scenes[i] = {cloud, labels};
  });
  const auto path = out_dir / "manifest.json";
  save_manifest(path, manifest);
  return path;
}

fs::path detections_path(const fs::path& dets_dir, const fs::path& cloud) {
  return dets_dir / (cloud.stem().string() + ".dets.json");
}

std::vector<fs::path> run_forward(const Model<float>& model, const DatasetManifest& manifest, const fs::path& out_dir,
                                  int workers) {
  fs::create_directories(out_dir);
  std::vector<fs::path> outputs(manifest.scenes.size());
  parallel_for(manifest.scenes.size(), workers, [&](std::size_t i) {
    const auto& entry = manifest.scenes[i];
    outputs[i] = detections_path(out_dir, entry.cloud);
    save_detections(outputs[i], model.detect(load_cloud(entry.cloud)));
  });
  return outputs;
}

json metrics_json(const std::vector<ClassAp>& results, const ApOptions& opts, std::size_t scenes) {
  json classes = json::object();
  double ap_sum = 0;
  int defined = 0;
  for (const auto& r : results) {
    json c;
    c["ap"] = r.ap ? json(*r.ap) : json(nullptr);
    c["iou_threshold"] = opts.iou_threshold[static_cast<std::size_t>(r.cls)];
    c["num_gt"] = r.num_gt;
    c["num_detections"] = r.num_detections;
    c["true_positives"] = r.true_positives;
    c["false_positives"] = r.num_detections - r.true_positives;
    c["precision_at_recall"] = r.precision_at_recall;
    classes[class_name(r.cls)] = c;
    if (r.ap) {
      ap_sum += *r.ap;
      ++defined;
    }
  }
  return {{"metric", "AP_R" + std::to_string(opts.recall_points)},
          {"iou", opts.iou == IouKind::box3d ? "3d" : "bev"},
          {"scenes", scenes},
          {"classes", classes},
          {"mean_ap", defined ? json(ap_sum / defined) : json(nullptr)}};
}

json evaluate_dataset(const RunConfig& config, const fs::path& dets_dir, const DatasetManifest& manifest) {
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<Box3D>> gts;
  for (const auto& entry : manifest.scenes) {
    gts.push_back(load_labels(entry.labels));
    dets.push_back(load_detections(detections_path(dets_dir, entry.cloud)));
  }
  return metrics_json(evaluate(dets, gts, config.eval), config.eval, manifest.scenes.size());
}

Model<float> build_model(const RunConfig& config, const fs::path& weights, std::uint64_t seed) {
  Model<float> model(config.model, config.grid, config.head);
  if (!weights.empty()) {
    load_weights(weights, model.store());
  } else {
    Rng rng(config.train.init_seed ^ seed);
    model.initialize(rng);
  }
  return model;
}

TimingStats summarize(std::vector<double> seconds) {
  TimingStats t;
  t.seconds = seconds;
  if (seconds.empty()) return t;
  std::sort(seconds.begin(), seconds.end());
  t.min = seconds.front();
  const auto n = seconds.size();
  t.median = n % 2 ? seconds[n / 2] : (seconds[n / 2 - 1] + seconds[n / 2]) / 2;
  double s = 0;
  for (double v : seconds) s += v;
  t.mean = s / static_cast<double>(n);
  return t;
}

std::vector<BlockBench> bench_backbone(const RunConfig& config, int repeat, std::uint64_t seed) {
  require(repeat > 0, "bench: repeat must be positive");
  std::vector<BlockBench> out;
  for (bool csg : {true, false}) {
    BackboneConfig bc = config.model.backbone(config.grid);
    bc.csg.enabled = csg;
    ParamStore<float> store;
    auto params = BackboneParams<float>::create(store, "backbone", bc);
    Rng rng(seed);
    params.initialize(rng);
    Tensor<float> f0(Shape{bc.channels, bc.x_extent, bc.y_extent});
    for (auto& v : f0.span()) v = static_cast<float>(rng.normal());

    BlockBench b;
    b.name = csg ? "backbone_csg" : "backbone_plain";
    b.macs = backbone_macs(bc);
    {
      Tape<float> tape(false);
      b.output_digest = tensor_digest(backbone_forward(tape, tape.constant(f0), params).out.value());
    }
    std::vector<double> secs;
    for (int r = 0; r < repeat; ++r) {
      const auto t0 = Clock::now();
      Tape<float> tape(false);
      auto y = backbone_forward(tape, tape.constant(f0), params).out;
      secs.push_back(elapsed(t0));
      b.digest_stable = b.digest_stable && tensor_digest(y.value()) == b.output_digest;
    }
    b.timing = summarize(std::move(secs));
    out.push_back(std::move(b));
  }
  return out;
}

ScanBench bench_scan(const RunConfig& config, ScanForm form, int repeat, std::uint64_t seed) {
  require(repeat > 0, "bench: repeat must be positive");
  ScanBench b;
  b.form = form;
  b.tokens = config.grid.x_extent() * config.grid.y_extent();
  const auto hsb = config.model.csg.hsb;
  b.channels = std::max<std::int64_t>(config.model.channels / hsb.reduction, 1);
  b.state_dim = hsb.ss2d.state_dim;
  Rng rng(seed);
  ContinuousSsm<double> cont;
  cont.a.resize(b.channels, b.state_dim);
  cont.b.resize(b.channels, b.state_dim);
  cont.c.resize(b.channels, b.state_dim);
  cont.delta.resize(b.channels);
  for (std::int64_t i = 0; i < b.channels; ++i) {
    cont.delta[i] = rng.uniform(0.001, 0.1);
    for (std::int64_t s = 0; s < b.state_dim; ++s) {
      cont.a(i, s) = -static_cast<double>(s + 1);
      cont.b(i, s) = rng.normal();
      cont.c(i, s) = rng.normal();
    }
  }
  const auto disc = discretize_zoh(cont, hsb.ss2d.scan.zoh);
  RowMatrix<double> x(b.tokens, b.channels);
  for (std::int64_t i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  std::vector<double> secs;
  for (int r = 0; r < repeat; ++r) {
    const auto t0 = Clock::now();
    const auto y = run_scan(form, disc, x, hsb.ss2d.scan.parallel);
    secs.push_back(elapsed(t0));
    if (r == 0)
      b.output_digest = digest_hex(std::string(reinterpret_cast<const char*>(y.data()),
                                               static_cast<std::size_t>(y.size()) * sizeof(double)));
  }
  b.timing = summarize(std::move(secs));
  return b;
}

std::vector<GradSuiteEntry> run_gradcheck_suite(int seeds, std::uint64_t base_seed) {
  std::vector<GradSuiteEntry> out;
  std::uint64_t stream = 0;
  for (const auto& c : suite_cases()) {
    GradSuiteEntry e;
    e.op = c.op;
    e.seeds = seeds;
    const auto t0 = Clock::now();
    for (int s = 0; s < seeds; ++s) {
      Rng rng(base_seed * 1000003 + stream * 1009 + static_cast<std::uint64_t>(s));
      const auto r = c.run(rng, static_cast<std::uint64_t>(s));
      if (r.max_rel_error >= e.max_rel_error) {
        e.max_rel_error = r.max_rel_error;
        e.worst = "seed " + std::to_string(s) + " " + r.worst;
      }
      e.passed = e.passed && r.passed;
    }
    e.seconds = elapsed(t0);
    out.push_back(e);
    ++stream;
  }
  return out;
}

std::vector<bool> load_occupancy(const fs::path& path, std::int64_t x_extent, std::int64_t y_extent) {
  const std::string text = read_text(path);
  std::vector<bool> occ;
  std::int64_t rows = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    if (!line.empty()) {
      if (static_cast<std::int64_t>(line.size()) != y_extent)
        throw FormatError(path.string() + ": row " + std::to_string(rows + 1) + " has " +
                          std::to_string(line.size()) + " cells, expected " + std::to_string(y_extent));
      for (char ch : line) {
        if (ch != '0' && ch != '1' && ch != '.' && ch != '#')
          throw FormatError(path.string() + ": unexpected character '" + std::string(1, ch) + "' in row " +
                            std::to_string(rows + 1));
        occ.push_back(ch == '1' || ch == '#');
      }
      ++rows;
    }
    start = end + 1;
  }
  if (rows != x_extent)
    throw FormatError(path.string() + ": " + std::to_string(rows) + " rows, expected " + std::to_string(x_extent));
  return occ;
}

json diagnose_scan(std::int64_t x_extent, std::int64_t y_extent, const std::vector<bool>& occupancy) {
  require(x_extent > 0 && y_extent > 0, "diagnose_scan: grid extents must be positive");
  auto hist_json = [](const std::map<std::int64_t, std::int64_t>& h) {
    json j = json::object();
    for (const auto& [k, v] : h) j[std::to_string(k)] = v;
    return j;
  };
  json dirs = json::object();
  for (auto dir : kAllDirections) {
    const auto hist = neighbor_distance_histogram(dir, x_extent, y_extent, occupancy);
    std::int64_t pairs = 0, far = 0, max_d = 0;
    for (const auto& [d, n] : hist) {
      pairs += n;
      if (d > 1) far += n;
      max_d = std::max(max_d, d);
    }
    json d;
    d["neighbor_distance_histogram"] = hist_json(hist);
    d["neighbor_pairs"] = pairs;
    d["pairs_farther_than_1"] = far;
    d["max_neighbor_distance"] = max_d;
    if (!occupancy.empty()) {
      const auto runs = empty_run_stats(dir, x_extent, y_extent, occupancy);
      d["empty_runs"] = {{"histogram", hist_json(runs.run_histogram)},
                         {"longest", runs.longest_run},
                         {"mean", runs.mean_run}};
    }
    dirs[to_string(dir)] = d;
  }
  std::int64_t occupied = 0;
  for (bool b : occupancy) occupied += b;
  return {{"grid", {x_extent, y_extent}},
          {"occupied_cells", occupancy.empty() ? json(nullptr) : json(occupied)},
          {"directions", dirs}};
}

}  // namespace pillarmamba
