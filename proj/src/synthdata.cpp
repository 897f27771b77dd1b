#include "rmldp/synthdata.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <map>
#include <numbers>
#include <optional>

#include "json.hpp"
#include "jsonl.hpp"
#include "rmldp/error.hpp"

namespace rmldp {

namespace {

enum Stream : std::uint32_t { kCategories = 0, kSegments = 1, kOrders = 2, kLongTail = 3 };

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t tag, std::uint32_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag,
                    index};
  return std::mt19937_64(seq);
}

std::chrono::sys_days parse_date(const std::string& iso) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (iso.size() != 10 || std::sscanf(iso.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
    throw DataError("bad ISO-8601 date '" + iso + "'");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) throw DataError("bad ISO-8601 date '" + iso + "'");
  return std::chrono::sys_days{ymd};
}

std::string format_date(std::chrono::sys_days day) {
  const std::chrono::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

struct CategoryShape {
  double phase = 0.0;
  double amplitude = 0.0;
};

/// Seasonal level times growth at day t (may be negative or past the world).
double expected_demand(double level, const CategoryShape& c, double growth, double t, double s) {
  return level * (1.0 + c.amplitude * std::sin(2.0 * std::numbers::pi * t / s + c.phase)) *
         std::exp(growth * t / s);
}

/// AR(1) series with unit stationary variance.
std::vector<double> ar_noise(std::size_t n, double rho, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(n);
  const double innovation = std::sqrt(1.0 - rho * rho);
  double e = normal(rng);
  for (auto& x : out) {
    x = e;
    e = rho * e + innovation * normal(rng);
  }
  return out;
}

std::size_t block_width(const GeneratorConfig& cfg) {
  const std::size_t externals = cfg.feature_dim - 1;
  const std::size_t room = externals > 2 ? (externals - 2) / cfg.num_categories : 0;
  return std::min(cfg.lead_channels, room);
}

SegmentSeries generate_segment(const GeneratorConfig& cfg, std::size_t index,
                               const std::vector<CategoryShape>& shapes, bool poor) {
  const std::size_t cat = index / cfg.segments_per_category;
  const double s = static_cast<double>(cfg.season);
  std::mt19937_64 rng = stream(cfg.seed, kSegments, static_cast<std::uint32_t>(index));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double level = cfg.base * std::exp(cfg.base_spread * normal(rng));
  const double growth = cfg.trend * (2.0 * unit(rng) - 1.0);
  CategoryShape shape = shapes[cat];
  shape.phase += cfg.phase_spread * normal(rng);
  const std::size_t lead_w = block_width(cfg);
  const std::size_t max_lead = cfg.lead + 1;
  constexpr std::size_t kMaxLag = 7;

  // Demand on [-kMaxLag, days + max_lead) so lagged and lead channels are defined everywhere.
  const std::size_t n_ext = kMaxLag + cfg.days + max_lead;
  auto demand_on = [&](const std::vector<double>& eps, const CategoryShape& shape) {
    std::vector<double> d(n_ext);
    for (std::size_t k = 0; k < n_ext; ++k) {
      const double t = static_cast<double>(k) - static_cast<double>(kMaxLag);
      d[k] = std::max(0.0, expected_demand(level, shape, growth, t, s) + level * cfg.noise * eps[k]);
    }
    return d;
  };
  const std::vector<double> own = demand_on(ar_noise(n_ext, cfg.noise_corr, rng), shape);

  // Lead blocks: channel block k follows category k's seasonal curve at this
  // segment's level; only the own-category block tracks the segment's demand.
  std::vector<std::vector<double>> block_signal(cfg.num_categories);
  for (std::size_t k = 0; k < cfg.num_categories; ++k) {
    block_signal[k] =
        k == cat ? own : demand_on(ar_noise(n_ext, cfg.noise_corr, rng), shapes[k]);
  }

  const std::size_t e = cfg.feature_dim;
  std::vector<double> rate(e, 1.0);
  for (std::size_t j = 3; j < e; ++j) rate[j] = 0.5 + 1.5 * unit(rng);

  SegmentSeries out;
  out.id = "cat" + std::to_string(cat) + "-seg" + (index % cfg.segments_per_category < 10 ? "0" : "") +
           std::to_string(index % cfg.segments_per_category);
  out.category = "cat" + std::to_string(cat);
  out.start = poor && cfg.poor_history < cfg.days ? cfg.days - cfg.poor_history : 0;
  out.demand.assign(cfg.days, 0.0);
  out.frames.assign(cfg.days * e, 0.0);
  const std::size_t lead_end = 3 + lead_w * cfg.num_categories;
  for (std::size_t t = 0; t < cfg.days; ++t) {
    // Draw every channel's noise so the stream does not depend on `start`.
    std::vector<double> jitter(e);
    for (std::size_t j = 3; j < e; ++j) jitter[j] = std::exp(cfg.feature_noise * normal(rng));
    if (t < out.start) continue;
    const std::size_t k0 = t + kMaxLag;
    double* row = &out.frames[t * e];
    out.demand[t] = own[k0];
    row[0] = own[k0];
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(t) / s;
    if (e > 1) row[1] = std::sin(angle);
    if (e > 2) row[2] = std::cos(angle);
    for (std::size_t j = 3; j < e; ++j) {
      double signal;
      if (j < lead_end) {
        const std::size_t k = (j - 3) / lead_w, slot = (j - 3) % lead_w;
        const std::size_t shift = cfg.lead > 2 * slot ? cfg.lead - 2 * slot : 0;
        signal = block_signal[k][k0 + shift];
      } else {
        signal = own[k0 - 1 - (j - lead_end) % kMaxLag];
      }
      row[j] = rate[j] * signal * jitter[j];
    }
  }
  return out;
}

std::vector<Order> generate_orders(const GeneratorConfig& cfg,
                                   const std::vector<SegmentSeries>& segments) {
  if (cfg.orders_per_day <= 0) return {};
  std::mt19937_64 rng = stream(cfg.seed, kOrders);
  std::poisson_distribution<int> count(cfg.orders_per_day);
  std::bernoulli_distribution same(cfg.affinity), third(0.3);
  const std::size_t width = std::to_string(cfg.days).size();
  std::vector<Order> orders;
  for (std::size_t t = 0; t < cfg.days; ++t) {
    std::vector<std::size_t> live;
    std::vector<double> weight;
    for (std::size_t i = 0; i < segments.size(); ++i) {
      if (segments[i].start <= t) {
        live.push_back(i);
        weight.push_back(segments[i].demand[t] + 1e-9);
      }
    }
    if (live.size() < 2) continue;
    std::discrete_distribution<std::size_t> anchor_of(weight.begin(), weight.end());
    const int n = count(rng);
    for (int k = 0; k < n; ++k) {
      const std::size_t anchor = live[anchor_of(rng)];
      std::vector<std::size_t> items{anchor};
      auto partner = [&] {
        const bool within = same(rng);
        std::vector<std::size_t> pool;
        for (std::size_t i : live) {
          if (std::find(items.begin(), items.end(), i) != items.end()) continue;
          if ((segments[i].category == segments[anchor].category) == within) pool.push_back(i);
        }
        if (pool.empty()) return;
        items.push_back(pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)]);
      };
      partner();
      if (third(rng)) partner();
      Order o;
      std::string day = std::to_string(t), idx = std::to_string(k);
      o.order_id = "o" + std::string(width - day.size(), '0') + day + "-" + idx;
      for (std::size_t i : items) o.segment_ids.push_back(segments[i].id);
      orders.push_back(std::move(o));
    }
  }
  return orders;
}

}  // namespace

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("GeneratorConfig: " + m); };
  if (num_categories == 0 || segments_per_category == 0) fail("need at least one segment");
  if (segments_per_category > 100) fail("segments_per_category must be at most 100");
  if (days == 0 || season == 0) fail("days and season must be positive");
  if (!(base > 0)) fail("base must be positive");
  if (base_spread < 0 || trend < 0 || noise < 0 || feature_noise < 0) fail("negative scale");
  if (amplitude < 0 || amplitude >= 1) fail("amplitude must be in [0, 1)");
  if (!(phase_spread >= 0)) fail("phase_spread must be >= 0");
  if (!(noise_corr >= 0 && noise_corr < 1)) fail("noise_corr must be in [0, 1)");
  if (feature_dim == 0) fail("feature_dim must be positive");
  if (!(long_tail_fraction >= 0 && long_tail_fraction <= 1)) fail("long_tail_fraction must be in [0, 1]");
  if (poor_history == 0) fail("poor_history must be positive");
  if (!(orders_per_day >= 0)) fail("orders_per_day must be non-negative");
  if (!(affinity >= 0 && affinity <= 1)) fail("affinity must be in [0, 1]");
  parse_date(start_date);
}

std::map<std::string, std::string> SyntheticWorld::categories() const {
  std::map<std::string, std::string> out;
  for (const auto& s : segments) out[s.id] = s.category;
  return out;
}

SyntheticWorld generate_world(const GeneratorConfig& cfg) {
  cfg.validate();
  std::mt19937_64 cat_rng = stream(cfg.seed, kCategories);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<CategoryShape> shapes(cfg.num_categories);
  for (std::size_t c = 0; c < cfg.num_categories; ++c) {
    const double spacing = 2.0 * std::numbers::pi / static_cast<double>(cfg.num_categories);
    shapes[c].phase = spacing * (static_cast<double>(c) + 0.3 * (unit(cat_rng) - 0.5));
    shapes[c].amplitude = cfg.amplitude * (0.5 + 0.5 * unit(cat_rng));
  }

  // Data-poor segments, spread evenly over categories.
  const std::size_t total = cfg.num_categories * cfg.segments_per_category;
  const auto n_poor = static_cast<std::size_t>(std::llround(cfg.long_tail_fraction * total));
  std::vector<bool> poor(total, false);
  std::mt19937_64 tail_rng = stream(cfg.seed, kLongTail);
  std::vector<std::size_t> cat_order(cfg.num_categories);
  for (std::size_t c = 0; c < cat_order.size(); ++c) cat_order[c] = c;
  std::shuffle(cat_order.begin(), cat_order.end(), tail_rng);
  for (std::size_t r = 0; r < cfg.num_categories; ++r) {
    const std::size_t c = cat_order[r];
    const std::size_t quota = n_poor / cfg.num_categories + (r < n_poor % cfg.num_categories ? 1 : 0);
    std::vector<std::size_t> members(cfg.segments_per_category);
    for (std::size_t j = 0; j < members.size(); ++j) members[j] = c * cfg.segments_per_category + j;
    std::shuffle(members.begin(), members.end(), tail_rng);
    for (std::size_t j = 0; j < std::min(quota, members.size()); ++j) poor[members[j]] = true;
  }

  SyntheticWorld world;
  world.start_date = cfg.start_date;
  world.days = cfg.days;
  for (std::size_t i = 0; i < total; ++i) world.segments.push_back(generate_segment(cfg, i, shapes, poor[i]));
  world.orders = generate_orders(cfg, world.segments);
  return world;
}

std::string add_days(const std::string& iso_date, long days) {
  return format_date(parse_date(iso_date) + std::chrono::days{days});
}

long days_between(const std::string& from, const std::string& to) {
  return static_cast<long>((parse_date(to) - parse_date(from)).count());
}

std::vector<std::size_t> valid_t_c(const SegmentSeries& s, const HorizonConfig& cfg) {
  std::vector<std::size_t> out;
  const std::size_t first = s.start + cfg.window - 1;
  if (s.days() < cfg.gap + cfg.horizon + 1) return out;
  const std::size_t last = s.days() - 1 - cfg.gap - cfg.horizon;
  for (std::size_t t = first; t <= last; ++t) out.push_back(t);
  return out;
}

bool has_seasonal_history(const SegmentSeries& s, std::size_t t_c, const HorizonConfig& cfg) {
  return t_c + cfg.gap + 1 >= s.start + cfg.season + cfg.window;
}

SampleWindow make_window(const SegmentSeries& s, std::size_t t_c, const HorizonConfig& cfg) {
  const std::size_t e = s.features(), w = cfg.window;
  if (t_c + 1 < s.start + w || t_c + cfg.gap + cfg.horizon >= s.days()) {
    throw DataError("segment " + s.id + ": no valid window at t_c=" + std::to_string(t_c));
  }
  SampleWindow out;
  out.t_c = t_c;
  const std::size_t first = t_c + 1 - w;
  out.local_seq = Tensor({w, e}, std::vector<double>(s.frames.begin() + static_cast<long>(first * e),
                                                     s.frames.begin() + static_cast<long>((t_c + 1) * e)));
  if (has_seasonal_history(s, t_c, cfg)) {
    const long t_l = static_cast<long>(t_c + cfg.gap) - static_cast<long>(cfg.season);
    const long s_first = t_l + 1 - static_cast<long>(w);
    out.seasonal_seq = Tensor({w, e}, std::vector<double>(s.frames.begin() + s_first * static_cast<long>(e),
                                                          s.frames.begin() + (t_l + 1) * static_cast<long>(e)));
    out.seasonal_mask = true;
  } else {
    out.seasonal_seq = Tensor::zeros({w, e});
    out.seasonal_mask = false;
  }
  out.target = target_demand(s.demand, t_c, cfg);
  return out;
}

Episode tail_episode(const SegmentSeries& s, const HorizonConfig& cfg, std::size_t n_train,
                     std::size_t n_test) {
  const auto v = valid_t_c(s, cfg);
  if (v.empty()) throw DataError("segment " + s.id + ": too short for any window");
  std::size_t n_te = std::min(n_test, v.size());
  for (; n_te > 0; --n_te) {
    const std::size_t first_test = v[v.size() - n_te];
    if (first_test >= v.front() + cfg.horizon + 1) break;
  }
  if (n_te == 0) throw DataError("segment " + s.id + ": too short for train and test windows");
  const std::size_t first_test = v[v.size() - n_te];
  const std::size_t last_train = first_test - cfg.horizon - 1;
  const std::size_t n_avail = last_train - v.front() + 1;
  const std::size_t n_tr = std::min(n_train, n_avail);

  Episode ep;
  ep.segment_id = s.id;
  ep.category = s.category;
  for (std::size_t t = last_train + 1 - n_tr; t <= last_train; ++t) ep.d_tr.push_back(make_window(s, t, cfg));
  for (std::size_t k = v.size() - n_te; k < v.size(); ++k) ep.d_te.push_back(make_window(s, v[k], cfg));
  return ep;
}

Episode sample_episode(const SegmentSeries& s, const HorizonConfig& cfg, std::size_t n_train,
                       std::size_t n_test, std::mt19937_64& rng) {
  auto v = valid_t_c(s, cfg);
  const std::size_t span = n_train + cfg.horizon + n_test;
  std::vector<std::size_t> seasonal;
  std::copy_if(v.begin(), v.end(), std::back_inserter(seasonal),
               [&](std::size_t t) { return has_seasonal_history(s, t, cfg); });
  if (seasonal.size() >= span) v = std::move(seasonal);
  if (n_train == 0 || n_test == 0 || v.size() < span) {
    throw DataError("segment " + s.id + ": " + std::to_string(v.size()) +
                    " windows cannot host a sampled episode");
  }
  const std::size_t first = v.front() +
                            std::uniform_int_distribution<std::size_t>(0, v.size() - span)(rng);
  Episode ep;
  ep.segment_id = s.id;
  ep.category = s.category;
  for (std::size_t k = 0; k < n_train; ++k) ep.d_tr.push_back(make_window(s, first + k, cfg));
  const std::size_t test0 = first + n_train + cfg.horizon;
  for (std::size_t k = 0; k < n_test; ++k) ep.d_te.push_back(make_window(s, test0 + k, cfg));
  return ep;
}

EpisodeSplit make_episodes(const SyntheticWorld& world, const HorizonConfig& cfg, double split,
                           const EpisodeLayout& layout) {
  cfg.validate();
  if (!(split > 0.0 && split < 1.0)) throw ConfigError("make_episodes: split must be in (0, 1)");
  EpisodeSplit out;
  std::vector<const SegmentSeries*> ranked;
  for (const auto& s : world.segments) {
    if (valid_t_c(s, cfg).empty()) {
      out.excluded.push_back({s.id, "too short for any window"});
    } else {
      ranked.push_back(&s);
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const SegmentSeries* a, const SegmentSeries* b) {
    if (a->record_count() != b->record_count()) return a->record_count() > b->record_count();
    return a->id < b->id;
  });
  const auto n_source = static_cast<std::size_t>(std::llround(split * static_cast<double>(ranked.size())));
  const std::size_t need = layout.train_source + cfg.horizon + layout.test_source;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    const SegmentSeries& s = *ranked[k];
    if (k < n_source) {
      if (valid_t_c(s, cfg).size() < need) {
        out.excluded.push_back({s.id, "too short to sample a source episode"});
      } else {
        out.source.push_back(&s);
      }
      continue;
    }
    try {
      out.target.push_back(tail_episode(s, cfg, layout.max_train, layout.max_test));
    } catch (const DataError& e) {
      out.excluded.push_back({s.id, e.what()});
    }
  }
  return out;
}

void write_demand(const std::filesystem::path& path, const SyntheticWorld& world) {
  auto out = detail::open_for_write(path);
  const auto start = parse_date(world.start_date);
  for (const auto& s : world.segments) {
    const std::size_t e = s.features();
    for (std::size_t t = s.start; t < s.days(); ++t) {
      nlohmann::ordered_json rec;
      rec["segment_id"] = s.id;
      rec["category"] = s.category;
      rec["date"] = format_date(start + std::chrono::days{static_cast<long>(t)});
      rec["demand"] = s.demand[t];
      rec["features"] = std::vector<double>(s.frames.begin() + static_cast<long>(t * e + 1),
                                            s.frames.begin() + static_cast<long>((t + 1) * e));
      out << rec.dump() << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

SyntheticWorld read_demand(const std::filesystem::path& path) {
  struct Row {
    long day;
    double demand;
    std::vector<double> features;
  };
  struct Pending {
    std::string category;
    std::vector<Row> rows;
  };
  std::map<std::string, Pending> by_id;
  std::vector<std::string> order;
  std::optional<std::chrono::sys_days> first, last;
  std::size_t width = 0;
  bool have_width = false;
  detail::for_each_json_line(path, [&](const nlohmann::json& j) {
    const auto id = j.at("segment_id").get<std::string>();
    const auto category = j.at("category").get<std::string>();
    const auto day = parse_date(j.at("date").get<std::string>());
    const double demand = j.at("demand").get<double>();
    auto features = j.at("features").get<std::vector<double>>();
    if (!std::isfinite(demand) || demand < 0) throw DataError("demand must be finite and non-negative");
    if (!have_width) {
      width = features.size();
      have_width = true;
    } else if (features.size() != width) {
      throw DataError("expected " + std::to_string(width) + " features, got " +
                      std::to_string(features.size()));
    }
    auto [it, fresh] = by_id.try_emplace(id, Pending{category, {}});
    if (fresh) order.push_back(id);
    if (it->second.category != category) throw DataError("segment " + id + " changes category");
    if (!first || day < *first) first = day;
    if (!last || day > *last) last = day;
    it->second.rows.push_back({static_cast<long>(day.time_since_epoch().count()), demand, std::move(features)});
  });
  if (by_id.empty()) throw DataError(path.string() + ": no demand records");

  SyntheticWorld world;
  world.start_date = format_date(*first);
  world.days = static_cast<std::size_t>((*last - *first).count() + 1);
  const long day0 = static_cast<long>(first->time_since_epoch().count());
  const std::size_t e = width + 1;
  for (const auto& id : order) {
    auto& p = by_id.at(id);
    std::sort(p.rows.begin(), p.rows.end(), [](const Row& a, const Row& b) { return a.day < b.day; });
    SegmentSeries s;
    s.id = id;
    s.category = p.category;
    s.start = static_cast<std::size_t>(p.rows.front().day - day0);
    s.demand.assign(world.days, 0.0);
    s.frames.assign(world.days * e, 0.0);
    for (std::size_t k = 0; k < p.rows.size(); ++k) {
      const auto& r = p.rows[k];
      const auto t = static_cast<std::size_t>(r.day - day0);
      if (t != s.start + k) {
        throw DataError(path.string() + ": segment " + id + " is not recorded on consecutive days through " +
                        format_date(*last));
      }
      s.demand[t] = r.demand;
      s.frames[t * e] = r.demand;
      std::copy(r.features.begin(), r.features.end(), s.frames.begin() + static_cast<long>(t * e + 1));
    }
    if (s.start + p.rows.size() != world.days) {
      throw DataError(path.string() + ": segment " + id + " is not recorded through " + format_date(*last));
    }
    world.segments.push_back(std::move(s));
  }
  return world;
}

}  // namespace rmldp
