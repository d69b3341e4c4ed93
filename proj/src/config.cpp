#include "pillarmamba/config.hpp"

#include <functional>
#include <limits>
#include <set>
#include <utility>

namespace pillarmamba {

using json = nlohmann::json;

namespace {

template <typename E>
using Choices = std::vector<std::pair<std::string, E>>;

const Choices<EncoderActivation> kActivations = {{"relu", EncoderActivation::relu},
                                                 {"identity", EncoderActivation::identity}};
const Choices<ZohMode> kZoh = {{"exact", ZohMode::exact}, {"simplified", ZohMode::simplified}};
const Choices<ScanForm> kForms = {
    {"recurrent", ScanForm::recurrent}, {"parallel", ScanForm::parallel}, {"conv", ScanForm::conv}};
const Choices<IouKind> kIou = {{"3d", IouKind::box3d}, {"bev", IouKind::bev}};
const Choices<OptimizerKind> kOptimizers = {
    {"sgd", OptimizerKind::sgd}, {"momentum", OptimizerKind::momentum}, {"adam", OptimizerKind::adam}};

std::string join_path(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

std::string describe(const json& j) {
  std::string s = j.dump();
  if (s.size() > 40) s = s.substr(0, 37) + "...";
  return std::string(j.type_name()) + " " + s;
}

// Strict reader over one JSON object; every accessed key is marked known and the rest are rejected.
class Reader {
 public:
  Reader(const json* obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (obj_ && !obj_->is_object()) fail(path_, "expected object, got " + describe(*obj_));
  }

  template <typename T>
  void operator()(const std::string& key, T& out) {
    const json* v = take(key);
    if (!v) return;
    const auto where = join_path(path_, key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v->is_boolean()) fail(where, "expected boolean, got " + describe(*v));
      out = v->get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v->is_number_integer()) fail(where, "expected integer, got " + describe(*v));
      if constexpr (std::is_unsigned_v<T>) {
        if (!v->is_number_unsigned() && v->get<std::int64_t>() < 0)
          fail(where, "expected nonnegative integer, got " + describe(*v));
        out = static_cast<T>(v->get<std::uint64_t>());
      } else {
        const auto raw = v->get<std::int64_t>();
        if (raw < std::numeric_limits<T>::min() || raw > std::numeric_limits<T>::max())
          fail(where, "integer " + std::to_string(raw) + " out of range");
        out = static_cast<T>(raw);
      }
    } else {
      if (!v->is_number()) fail(where, "expected number, got " + describe(*v));
      out = v->get<double>();
    }
  }

  template <typename E>
  void choice(const std::string& key, E& out, const Choices<E>& table) {
    const json* v = take(key);
    if (!v) return;
    const auto where = join_path(path_, key);
    std::string options;
    for (const auto& [name, value] : table) {
      options += (options.empty() ? "" : ", ") + name;
      if (v->is_string() && v->get<std::string>() == name) {
        out = value;
        return;
      }
    }
    fail(where, "expected one of {" + options + "}, got " + describe(*v));
  }

  void section(const std::string& key, bool required, const std::function<void(Reader&)>& fn) {
    const json* v = take(key);
    if (!v && required) fail(join_path(path_, key), "required section is missing");
    Reader sub(v, join_path(path_, key));
    fn(sub);
    sub.finish();
  }

  void finish() const {
    if (!obj_) return;
    for (const auto& [key, _] : obj_->items())
      if (!known_.contains(key)) fail(join_path(path_, key), "unknown key");
  }

 private:
  const json* take(const std::string& key) {
    known_.insert(key);
    if (!obj_) return nullptr;
    auto it = obj_->find(key);
    return it == obj_->end() ? nullptr : &*it;
  }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw ConfigError("config: " + (where.empty() ? std::string("<root>") : where) + ": " + what);
  }

  const json* obj_;
  std::string path_;
  std::set<std::string> known_;
};

class Writer {
 public:
  explicit Writer(json& out) : out_(out) { out_ = json::object(); }

  template <typename T>
  void operator()(const std::string& key, T& value) {
    out_[key] = value;
  }

  template <typename E>
  void choice(const std::string& key, E& value, const Choices<E>& table) {
    for (const auto& [name, v] : table)
      if (v == value) out_[key] = name;
  }

  void section(const std::string& key, bool, const std::function<void(Writer&)>& fn) {
    Writer sub(out_[key]);
    fn(sub);
  }

 private:
  json& out_;
};

template <typename V>
void visit(V& root, RunConfig& c) {
  root.section("grid", true, [&](V& g) {
    g("x_min", c.grid.x_min);
    g("x_max", c.grid.x_max);
    g("y_min", c.grid.y_min);
    g("y_max", c.grid.y_max);
    g("z_min", c.grid.z_min);
    g("z_max", c.grid.z_max);
    g("pillar_size", c.grid.pillar_size);
  });
  root.section("model", false, [&](V& m) {
    auto& mc = c.model;
    m("channels", mc.channels);
    m("stages", mc.stages);
    m.section("encoder", false, [&](V& e) {
      e.choice("activation", mc.encoder_activation, kActivations);
      e("max_points_per_pillar", mc.voxelize.max_points_per_pillar);
      e("max_pillars", mc.voxelize.max_pillars);
    });
    m.section("csg", false, [&](V& s) {
      s("enabled", mc.csg.enabled);
      s("split_fraction", mc.csg.split_fraction);
      s("hsb_layers", mc.csg.hsb_layers);
    });
    m.section("hsb", false, [&](V& h) {
      auto& hc = mc.csg.hsb;
      h("reduction", hc.reduction);
      h("dw_kernel", hc.dw_kernel);
      h("local_conv", hc.local_conv);
      h("residual", hc.residual);
      h("attention", hc.attention);
      h("attention_additive", hc.attention_additive);
    });
    m.section("ssm", false, [&](V& s) {
      auto& sc = mc.csg.hsb.ss2d;
      s("state_dim", sc.state_dim);
      s("directions", sc.directions);
      s.choice("zoh", sc.scan.zoh, kZoh);
      s.choice("form", sc.scan.form, kForms);
      s("partition", sc.scan.parallel.partition);
      s("workers", sc.scan.parallel.workers);
    });
  });
  root.section("head", false, [&](V& h) {
    auto& hs = c.head;
    h("heatmap_prior", hs.heatmap_prior);
    h("min_overlap", hs.targets.min_overlap);
    h("min_radius", hs.targets.min_radius);
    h("top_k", hs.decode.top_k);
    h("score_threshold", hs.decode.score_threshold);
    h("regression_weight", hs.loss.regression_weight);
  });
  root.section("eval", false, [&](V& e) {
    e.choice("iou", c.eval.iou, kIou);
    e("recall_points", c.eval.recall_points);
    e.section("thresholds", false, [&](V& t) {
      for (int k = 0; k < kNumClasses; ++k) t(class_name(k), c.eval.iou_threshold[static_cast<std::size_t>(k)]);
    });
  });
  root.section("train", false, [&](V& t) {
    t("steps", c.train.steps);
    t.choice("optimizer", c.train.optimizer, kOptimizers);
    t("learning_rate", c.train.learning_rate);
    t("momentum", c.train.momentum);
    t("beta2", c.train.beta2);
    t("epsilon", c.train.epsilon);
    t("init_seed", c.train.init_seed);
  });
  root.section("data", false, [&](V& d) {
    d("min_boxes", c.data.min_boxes);
    d("max_boxes", c.data.max_boxes);
    d("points_per_box", c.data.points_per_box);
    d("background_points", c.data.background_points);
    d("noise_sigma", c.data.noise_sigma);
  });
}

void check(bool ok, const std::string& where, const std::string& what) {
  if (!ok) throw ConfigError("config: " + where + ": " + what);
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

void RunConfig::validate() const {
  model.validate(grid);
  check(head.heatmap_prior > 0 && head.heatmap_prior < 1, "head.heatmap_prior", "must lie in (0, 1)");
  check(head.targets.min_overlap > 0 && head.targets.min_overlap < 1, "head.min_overlap", "must lie in (0, 1)");
  check(head.targets.min_radius >= 0, "head.min_radius", "must be nonnegative");
  check(head.decode.top_k > 0, "head.top_k", "must be positive");
  check(head.decode.score_threshold >= 0 && head.decode.score_threshold < 1, "head.score_threshold",
        "must lie in [0, 1)");
  check(head.loss.regression_weight >= 0, "head.regression_weight", "must be nonnegative");
  check(eval.recall_points > 0, "eval.recall_points", "must be positive");
  for (int k = 0; k < kNumClasses; ++k) {
    const double t = eval.iou_threshold[static_cast<std::size_t>(k)];
    check(t > 0 && t <= 1, "eval.thresholds." + class_name(k), "must lie in (0, 1]");
  }
  check(train.steps >= 0, "train.steps", "must be nonnegative");
  check(train.learning_rate > 0, "train.learning_rate", "must be positive");
  check(train.momentum >= 0 && train.momentum < 1, "train.momentum", "must lie in [0, 1)");
  check(train.beta2 >= 0 && train.beta2 < 1, "train.beta2", "must lie in [0, 1)");
  check(train.epsilon > 0, "train.epsilon", "must be positive");
  check(data.min_boxes >= 0 && data.min_boxes <= data.max_boxes, "data.min_boxes",
        "must satisfy 0 <= min_boxes <= max_boxes");
  check(data.points_per_box > 0, "data.points_per_box", "must be positive");
  check(data.background_points >= 0, "data.background_points", "must be nonnegative");
  check(data.noise_sigma >= 0, "data.noise_sigma", "must be nonnegative");
}

SceneSpec RunConfig::scene_spec(std::uint64_t seed, std::uint64_t index) const {
  SceneSpec s;
  s.seed = splitmix(splitmix(seed) ^ index);
  Rng counts(splitmix(s.seed));
  for (auto& n : s.counts)
    n = data.min_boxes + static_cast<int>(counts.below(static_cast<std::uint64_t>(data.max_boxes - data.min_boxes + 1)));
  s.points_per_box = data.points_per_box;
  s.background_points = data.background_points;
  s.noise_sigma = data.noise_sigma;
  s.grid = grid;
  s.ground_z = grid.z_min + 1.0;
  return s;
}

RunConfig parse_config(const json& j) {
  RunConfig c;
  Reader root(&j, "");
  visit(root, c);
  root.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

json config_to_json(const RunConfig& config) {
  RunConfig copy = config;
  json out;
  Writer w(out);
  visit(w, copy);
  return out;
}

std::string to_string(OptimizerKind kind) {
  for (const auto& [name, v] : kOptimizers)
    if (v == kind) return name;
  return "unknown";
}

}  // namespace pillarmamba
