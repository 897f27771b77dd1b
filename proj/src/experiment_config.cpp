#include <charconv>
#include <functional>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "rmldp/error.hpp"
#include "rmldp/harness.hpp"

namespace rmldp {

namespace {

constexpr std::pair<const char*, Baseline> kBaselines[] = {
    {"stat", Baseline::stat}, {"finetune", Baseline::finetune}, {"maml", Baseline::maml}};

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <class T>
T parse_number(const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError("cannot parse '" + text + "' as a number");
  }
  return value;
}

template <class T>
std::string format_number(T value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T, class F>
std::string join(const std::vector<T>& items, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + std::string(fmt(items[i]));
  return out;
}

LossReduction parse_reduction(const std::string& s) {
  if (s == "mean") return LossReduction::mean;
  if (s == "sum") return LossReduction::sum;
  throw ConfigError("unknown loss reduction '" + s + "'");
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class T>
Field number(T ExperimentConfig::*outer) {
  return {[outer](ExperimentConfig& c, const std::string& v) { c.*outer = parse_number<T>(v); },
          [outer](const ExperimentConfig& c) { return format_number(c.*outer); }};
}

template <class S, class T>
Field number(S ExperimentConfig::*outer, T S::*inner) {
  return {[=](ExperimentConfig& c, const std::string& v) { (c.*outer).*inner = parse_number<T>(v); },
          [=](const ExperimentConfig& c) { return format_number((c.*outer).*inner); }};
}

template <class S, class E>
Field enumerated(S ExperimentConfig::*outer, E S::*inner, E (*parse)(const std::string&),
                 const char* (*name)(E)) {
  return {[=](ExperimentConfig& c, const std::string& v) { (c.*outer).*inner = parse(v); },
          [=](const ExperimentConfig& c) { return std::string(name((c.*outer).*inner)); }};
}

const std::map<std::string, Field>& fields() {
  using C = ExperimentConfig;
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["gen.num_categories"] = number(&C::gen, &GeneratorConfig::num_categories);
    t["gen.segments_per_category"] = number(&C::gen, &GeneratorConfig::segments_per_category);
    t["gen.days"] = number(&C::gen, &GeneratorConfig::days);
    t["gen.base"] = number(&C::gen, &GeneratorConfig::base);
    t["gen.base_spread"] = number(&C::gen, &GeneratorConfig::base_spread);
    t["gen.amplitude"] = number(&C::gen, &GeneratorConfig::amplitude);
    t["gen.phase_spread"] = number(&C::gen, &GeneratorConfig::phase_spread);
    t["gen.trend"] = number(&C::gen, &GeneratorConfig::trend);
    t["gen.noise"] = number(&C::gen, &GeneratorConfig::noise);
    t["gen.noise_corr"] = number(&C::gen, &GeneratorConfig::noise_corr);
    t["gen.lead_channels"] = number(&C::gen, &GeneratorConfig::lead_channels);
    t["gen.lead"] = number(&C::gen, &GeneratorConfig::lead);
    t["gen.feature_noise"] = number(&C::gen, &GeneratorConfig::feature_noise);
    t["gen.long_tail_fraction"] = number(&C::gen, &GeneratorConfig::long_tail_fraction);
    t["gen.poor_history"] = number(&C::gen, &GeneratorConfig::poor_history);
    t["gen.orders_per_day"] = number(&C::gen, &GeneratorConfig::orders_per_day);
    t["gen.affinity"] = number(&C::gen, &GeneratorConfig::affinity);
    t["gen.start_date"] = {[](C& c, const std::string& v) { c.gen.start_date = v; },
                           [](const C& c) { return c.gen.start_date; }};
    t["data.demand"] = {[](C& c, const std::string& v) { c.demand_path = v; },
                        [](const C& c) { return c.demand_path; }};
    t["data.orders"] = {[](C& c, const std::string& v) { c.orders_path = v; },
                        [](const C& c) { return c.orders_path; }};
    t["horizon.gap"] = number(&C::horizon, &HorizonConfig::gap);
    t["horizon.horizon"] = number(&C::horizon, &HorizonConfig::horizon);
    t["horizon.season"] = number(&C::horizon, &HorizonConfig::season);
    t["horizon.window"] = number(&C::horizon, &HorizonConfig::window);
    t["meta.alpha"] = number(&C::meta, &MetaConfig::alpha);
    t["meta.beta"] = number(&C::meta, &MetaConfig::beta);
    t["meta.lambda"] = number(&C::meta, &MetaConfig::lambda);
    t["meta.inner_steps"] = number(&C::meta, &MetaConfig::inner_steps);
    t["meta.batch"] = number(&C::meta, &MetaConfig::meta_batch);
    t["meta.layout"] = enumerated(&C::meta, &MetaConfig::layout, &parse_modulation_layout,
                                  static_cast<const char* (*)(ModulationLayout)>(&to_string));
    t["meta.order"] = enumerated(&C::meta, &MetaConfig::order, &parse_meta_gradient,
                                 static_cast<const char* (*)(MetaGradient)>(&to_string));
    t["meta.outer"] = enumerated(&C::meta, &MetaConfig::outer, &parse_optimizer_kind,
                                 static_cast<const char* (*)(OptimizerKind)>(&to_string));
    t["meta.reduction"] = {
        [](C& c, const std::string& v) { c.meta.reduction = parse_reduction(v); },
        [](const C& c) { return std::string(c.meta.reduction == LossReduction::sum ? "sum" : "mean"); }};
    t["model.e"] = number(&C::dims, &ModelDims::features);
    t["model.hidden"] = number(&C::dims, &ModelDims::hidden);
    t["model.d_q"] = number(&C::dims, &ModelDims::d_q);
    t["model.d_g"] = number(&C::dims, &ModelDims::d_g);
    t["model.d_walk"] = number(&C::dims, &ModelDims::d_walk);
    t["walk.walks_per_node"] = number(&C::walk, &DeepWalkConfig::walks_per_node);
    t["walk.length"] = number(&C::walk, &DeepWalkConfig::walk_length);
    t["walk.window"] = number(&C::walk, &DeepWalkConfig::window);
    t["walk.negatives"] = number(&C::walk, &DeepWalkConfig::negatives);
    t["walk.epochs"] = number(&C::walk, &DeepWalkConfig::epochs);
    t["walk.lr"] = number(&C::walk, &DeepWalkConfig::learning_rate);
    t["graph.percentile"] = number(&C::graph_percentile);
    t["episodes.split"] = number(&C::split);
    t["episodes.max_train"] = number(&C::layout, &EpisodeLayout::max_train);
    t["episodes.max_test"] = number(&C::layout, &EpisodeLayout::max_test);
    t["episodes.train_source"] = number(&C::layout, &EpisodeLayout::train_source);
    t["episodes.test_source"] = number(&C::layout, &EpisodeLayout::test_source);
    t["train.steps"] = number(&C::train_steps);
    t["run.ablations"] = {
        [](C& c, const std::string& v) {
          c.ablations.clear();
          for (const auto& s : split_list(v)) c.ablations.push_back(parse_ablation(s));
        },
        [](const C& c) { return join(c.ablations, [](Ablation a) { return to_string(a); }); }};
    t["run.baselines"] = {
        [](C& c, const std::string& v) {
          c.baselines.clear();
          for (const auto& s : split_list(v)) c.baselines.push_back(parse_baseline(s));
        },
        [](const C& c) { return join(c.baselines, [](Baseline b) { return to_string(b); }); }};
    t["run.seeds"] = {
        [](C& c, const std::string& v) {
          c.seeds.clear();
          for (const auto& s : split_list(v)) c.seeds.push_back(parse_number<std::uint64_t>(s));
        },
        [](const C& c) { return join(c.seeds, [](std::uint64_t s) { return format_number(s); }); }};
    t["run.sweep"] = {
        [](C& c, const std::string& v) {
          c.sweep.clear();
          for (const auto& s : split_list(v)) c.sweep.push_back(parse_number<std::size_t>(s));
        },
        [](const C& c) { return join(c.sweep, [](std::size_t s) { return format_number(s); }); }};
    return t;
  }();
  return table;
}

}  // namespace

Baseline parse_baseline(const std::string& text) {
  for (const auto& [name, value] : kBaselines) {
    if (text == name) return value;
  }
  throw ConfigError("unknown baseline '" + text + "'");
}

const char* to_string(Baseline b) {
  for (const auto& [name, value] : kBaselines) {
    if (value == b) return name;
  }
  return "?";
}

std::string Method::name() const {
  if (kind == Kind::baseline) return to_string(baseline);
  switch (ablation) {
    case Ablation::full: return "rmldp";
    case Ablation::no_d: return "rmldp-d";
    case Ablation::no_g: return "rmldp-g";
    case Ablation::szn: return "rmldp-szn";
    case Ablation::local: return "rmldp-local";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Ablation a : {Ablation::full, Ablation::no_d, Ablation::no_g, Ablation::szn, Ablation::local}) {
    if (Method::of(a).name() == name) return Method::of(a);
  }
  return Method::of(parse_baseline(name));
}

void ExperimentConfig::validate() const {
  horizon.validate();
  meta.validate();
  if (dims.features == 0 || dims.hidden == 0 || dims.d_q == 0 || dims.d_g == 0 || dims.d_walk == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (!(split > 0 && split < 1)) throw ConfigError("episodes.split must be in (0, 1)");
  if (layout.max_train == 0 || layout.max_test == 0 || layout.train_source == 0 ||
      layout.test_source == 0) {
    throw ConfigError("episode sizes must be positive");
  }
  if (!(graph_percentile >= 0 && graph_percentile < 1)) {
    throw ConfigError("graph.percentile must be in [0, 1)");
  }
  if (seeds.empty()) throw ConfigError("run.seeds is empty");
  if (ablations.empty() && baselines.empty()) throw ConfigError("nothing to run");
  if (demand_path.empty() != orders_path.empty()) {
    throw ConfigError("data.demand and data.orders must be given together");
  }
  for (std::size_t w : sweep) {
    if (w == 0) throw ConfigError("run.sweep windows must be positive");
  }
  if (demand_path.empty()) {
    GeneratorConfig g = gen;
    g.feature_dim = dims.features;
    g.season = horizon.season;
    g.validate();
  }
}

std::vector<Method> ExperimentConfig::methods() const {
  std::vector<Method> out;
  auto add = [&](const Method& m) {
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  };
  for (Ablation a : ablations) add(Method::of(a));
  for (Baseline b : baselines) add(Method::of(b));
  return out;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = fields();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  try {
    it->second.set(cfg, value);
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

ExperimentConfig parse_config(std::istream& in, ExperimentConfig base) {
  std::string line;
  std::size_t number = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(number) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key=value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + "repeated key '" + key + "'");
    try {
      set_config_value(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  try {
    return parse_config(in, std::move(base));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string config_echo(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + "=" + field.get(cfg) + "\n";
  return out;
}

}  // namespace rmldp
