#pragma once

// Synthetic marketplace: per-category seasonal demand, per-segment growth,
// external feature channels, an order log with within-category co-purchase
// affinity, and a long tail of segments whose history is a short suffix.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rmldp/meta_learner.hpp"
#include "rmldp/relation.hpp"

namespace rmldp {

struct GeneratorConfig {
  std::uint64_t seed = 1;
  std::size_t num_categories = 3;
  std::size_t segments_per_category = 20;
  std::size_t days = 730;
  std::size_t season = 365;
  double base = 50.0;          // median segment demand level
  double base_spread = 0.5;    // log-normal spread of segment levels
  double amplitude = 0.6;      // category amplitudes drawn from [amplitude/2, amplitude]
  double phase_spread = 0.0;   // std of a segment's phase offset from its category, radians
  double trend = 0.4;          // segment log growth per season drawn from [-trend, trend]
  double noise = 0.1;          // noise std relative to the segment level
  double noise_corr = 0.9;     // AR(1) coefficient of the noise
  std::size_t feature_dim = 48;      // e, demand included
  std::size_t lead_channels = 8;     // lead-indicator channels per category block
  std::size_t lead = 30;             // days the lead indicators look ahead
  double feature_noise = 0.3;        // log-normal noise of external channels
  double long_tail_fraction = 0.3;
  std::size_t poor_history = 484;    // recorded suffix of data-poor segments
  double orders_per_day = 20.0;
  double affinity = 0.8;             // chance a co-purchase stays in the category
  std::string start_date = "2019-01-01";

  void validate() const;
};

/// One segment's recorded series. Arrays cover every day of the world; days
/// before `start` are unrecorded and hold zeros.
struct SegmentSeries {
  std::string id;
  std::string category;
  std::size_t start = 0;
  std::vector<double> demand;  // days
  std::vector<double> frames;  // days x e, row-major, column 0 is demand

  std::size_t days() const { return demand.size(); }
  std::size_t features() const { return demand.empty() ? 0 : frames.size() / demand.size(); }
  std::size_t record_count() const { return days() - start; }
};

struct SyntheticWorld {
  std::string start_date;
  std::size_t days = 0;
  std::vector<SegmentSeries> segments;
  std::vector<Order> orders;

  /// segment id -> category label
  std::map<std::string, std::string> categories() const;
};

SyntheticWorld generate_world(const GeneratorConfig& cfg);

/// Calendar helpers on ISO-8601 dates (YYYY-MM-DD).
std::string add_days(const std::string& iso_date, long days);
long days_between(const std::string& from, const std::string& to);

/// Valid t_c of a segment: the local window and the target are recorded.
std::vector<std::size_t> valid_t_c(const SegmentSeries& s, const HorizonConfig& cfg);
/// Whether the seasonal window of t_c lies inside the recorded history.
bool has_seasonal_history(const SegmentSeries& s, std::size_t t_c, const HorizonConfig& cfg);
/// Window at t_c; the seasonal sequence is zeroed with mask=false when its
/// frames fall before the segment's first record.
SampleWindow make_window(const SegmentSeries& s, std::size_t t_c, const HorizonConfig& cfg);

struct EpisodeLayout {
  std::size_t max_train = 10;  // N^tr of a target segment
  std::size_t max_test = 20;   // N^te, the last windows of a series
  std::size_t train_source = 10;  // N^tr of a sampled source episode
  std::size_t test_source = 10;   // N^te of a sampled source episode
};

struct ExcludedSegment {
  std::string segment_id;
  std::string reason;
};

struct EpisodeSplit {
  std::vector<const SegmentSeries*> source;  // ranked by record count
  std::vector<Episode> target;
  std::vector<ExcludedSegment> excluded;
};

/// Ranks segments by record count (ties by id), takes the top `split` fraction
/// as sources and builds each remaining segment's chronological episode.
/// Pointers refer into `world`.
EpisodeSplit make_episodes(const SyntheticWorld& world, const HorizonConfig& cfg, double split,
                           const EpisodeLayout& layout = {});

/// D^tr / D^te of the last windows: the test windows end the series, the train
/// windows end T_f + 1 steps before the first test t_c.
Episode tail_episode(const SegmentSeries& s, const HorizonConfig& cfg, std::size_t n_train,
                     std::size_t n_test);

/// A random contiguous block of n_train windows followed, after the leakage
/// gap, by n_test windows. Blocks are drawn among windows with seasonal
/// history when the segment has enough of them, as target episodes always do.
Episode sample_episode(const SegmentSeries& s, const HorizonConfig& cfg, std::size_t n_train,
                       std::size_t n_test, std::mt19937_64& rng);

/// Line-oriented JSON records {segment_id, category, date, demand, features}.
void write_demand(const std::filesystem::path& path, const SyntheticWorld& world);
/// Rebuilds the series of a demand file. Each segment must be recorded on
/// consecutive days through the last date of the file.
SyntheticWorld read_demand(const std::filesystem::path& path);

}  // namespace rmldp
