#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "acpc/metrics.hpp"
#include "acpc/model.hpp"
#include "acpc/rng.hpp"
#include "acpc/trace.hpp"

namespace acpc {

// Replacement policy of the L2; L1 and L3 are always LRU.
enum class Policy { Lru, Random, Srrip, Mlp, Parm };

std::string_view to_string(Policy policy);
// Accepts any letter case ("parm", "PARM").
Policy policy_from_string(std::string_view name);
// MLP and PARM need a reuse model.
bool is_learned(Policy policy);

struct LevelGeometry {
  std::uint32_t line_size = 64;
  std::uint32_t sets = 1;
  std::uint32_t ways = 1;

  std::uint64_t lines() const { return std::uint64_t{sets} * ways; }
};

struct Latencies {
  std::uint32_t l1_hit = 4;
  std::uint32_t l2_hit = 14;
  std::uint32_t l3_hit = 40;
  std::uint32_t dram = 200;
};

struct PrefetcherConfig {
  bool enabled = true;
  std::uint32_t degree = 1;
  std::string target_level = "L2";
};

// Defaults: 64 KB 8-way L1, 512 KB 8-way L2, 64 MB 16-way L3, 64 B lines.
struct CacheConfig {
  LevelGeometry l1{64, 128, 8};
  LevelGeometry l2{64, 1024, 8};
  LevelGeometry l3{64, 65536, 16};
  Latencies latencies;
  PrefetcherConfig prefetcher;
  Policy policy = Policy::Lru;
  double alpha = 0.5;
  std::uint32_t predictor_stride = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const CacheConfig& cfg);
void from_json(const nlohmann::json& j, CacheConfig& cfg);

enum class Level { L1 = 0, L2 = 1, L3 = 2, Mem = 3 };
std::string_view to_string(Level level);

inline constexpr std::uint8_t kFreqMax = 15;
inline constexpr std::uint8_t kRrpvMax = 3;
inline constexpr std::uint8_t kRrpvInsert = 2;

struct LineState {
  std::uint64_t tag = 0;
  bool valid = false;
  double utility = 0.0;  // per-set softmax of predictions
  std::uint8_t freq_counter = 0;
  double priority = 0.0;
  std::uint8_t rrpv = 0;
  std::uint64_t lru_stamp = 0;
  bool inserted_by_prefetch = false;
  std::uint32_t demand_hits_since_fill = 0;
  double predicted = 0.5;  // last reuse prediction for this line
  std::uint64_t fill_id = 0;

  double frequency() const { return static_cast<double>(freq_counter) / kFreqMax; }
};

// One cache set plus its recency clock.
struct SetView {
  std::span<LineState> lines;
  std::uint64_t* clock;
};

namespace replacement {

// Way with the smallest stamp. The set must be full.
std::size_t lru_victim(std::span<const LineState> set);
void lru_touch(SetView set, std::size_t way);

void srrip_insert(LineState& line);
void srrip_hit(LineState& line);
// Leftmost way at the maximum RRPV, ageing every line until one exists.
std::size_t srrip_victim(std::span<LineState> set);

// exp(y_i) / sum_j exp(y_j) over the given predictions.
std::vector<double> utility_scores(std::span<const double> predictions);
// alpha * utility + (1 - alpha) * frequency.
double compute_priority(double utility, double frequency, double alpha);
// Recomputes utility and priority of every valid line in the set.
void refresh_priorities(std::span<LineState> set, double alpha);
// Lowest priority after a refresh; ties go to the lowest way.
std::size_t parm_victim(std::span<LineState> set, double alpha);
// Installs a line with frequency 1 and the given prediction, then refreshes.
void parm_insert(std::span<LineState> set, std::size_t way, std::uint64_t tag,
                 double prediction, double alpha);
// Saturating increment; when a counter reaches 15 every counter in the set
// is halved.
void update_frequency(std::span<LineState> set, std::size_t way);

// line+1 .. line+degree.
std::vector<std::uint64_t> prefetch_next_line(std::uint64_t line, std::uint32_t degree);

}  // namespace replacement

struct VictimInfo {
  std::uint64_t tag = 0;
  bool was_prefetch = false;
  bool was_ever_demand_hit = false;

  friend bool operator==(const VictimInfo&, const VictimInfo&) = default;
};

// One set-associative level with a fixed policy.
class CacheLevel {
 public:
  CacheLevel(const LevelGeometry& geometry, Policy policy, double alpha, std::uint64_t seed);

  const LevelGeometry& geometry() const { return geometry_; }
  Policy policy() const { return policy_; }
  std::size_t set_of(std::uint64_t line) const { return line & (geometry_.sets - 1); }
  std::optional<std::size_t> find(std::uint64_t line) const;
  std::span<const LineState> set(std::size_t index) const;
  std::span<LineState> set(std::size_t index);

  // Demand hit bookkeeping and policy promotion. `prediction` replaces the
  // stored one when present.
  void hit(std::size_t set_index, std::size_t way, std::optional<double> prediction = {});

  struct FillResult {
    std::size_t way = 0;
    std::optional<LineState> evicted;
  };
  // Installs `line` (which must be absent) in the first invalid way, or
  // over the policy's victim.
  FillResult fill(std::uint64_t line, bool prefetch, double prediction, std::uint64_t fill_id);

  // Simple lookup-then-fill, as used for single-level checks.
  struct AccessResult {
    bool hit = false;
    std::optional<std::uint64_t> victim;
  };
  AccessResult access(std::uint64_t line);

  template <typename F>
  void for_each_valid(F&& f) const {
    for (const auto& l : lines_) {
      if (l.valid) f(l);
    }
  }

 private:
  SetView view(std::size_t index);

  LevelGeometry geometry_;
  Policy policy_;
  double alpha_;
  Rng rng_;
  std::vector<LineState> lines_;
  std::vector<std::uint64_t> clocks_;
};

struct AccessOutcome {
  Level hit_level = Level::Mem;
  std::uint32_t latency = 0;
  std::optional<VictimInfo> victim;  // L2 line displaced by the demand fill
};

struct AccessEvent {
  std::uint64_t t = 0;
  Level level = Level::Mem;
  std::optional<VictimInfo> victim;
};

void write_event_log(std::span<const AccessEvent> events, std::ostream& out);

// Receives L2 fill/eviction notifications (used by the online learner).
class FillObserver {
 public:
  virtual ~FillObserver() = default;
  virtual void on_fill(std::uint64_t fill_id, std::uint64_t t, bool prefetch, double prediction,
                       std::vector<FeatureVector> context) = 0;
  virtual void on_evict(std::uint64_t fill_id, std::uint64_t t, bool demand_hit) = 0;
};

// Three-level non-inclusive, read-allocate hierarchy with a next-line L2
// prefetcher triggered by L2 demand misses.
class CacheSimulator {
 public:
  // `model` must outlive the simulator and is required for MLP/PARM.
  CacheSimulator(const CacheConfig& cfg, std::uint64_t seed, const ReuseModel* model = nullptr);
  ~CacheSimulator();

  AccessOutcome access(const AccessRecord& record);
  // Resolves end-of-trace accounting. Further accesses are rejected.
  void finish();
  const Counters& counters() const { return counters_; }

  void set_observer(FillObserver* observer) { observer_ = observer; }
  void record_events(bool on) { record_events_ = on; }
  const std::vector<AccessEvent>& events() const { return events_; }

  // Call after the model's parameters change.
  void model_updated();
  bool fill_received_demand_hit(std::uint64_t fill_id) const { return fill_useful_[fill_id] != 0; }
  std::uint64_t fills() const { return fill_useful_.size(); }

  const CacheLevel& level(Level level) const;
  const CacheConfig& config() const { return cfg_; }

 private:
  std::uint32_t level_latency(Level level) const;
  void fill_l2(std::uint64_t line, bool prefetch, double prediction, std::uint64_t t,
               std::optional<VictimInfo>* victim_out, const FeatureVector* synthesized);
  void sample_occupancy();

  CacheConfig cfg_;
  CacheLevel l1_, l2_, l3_;
  const ReuseModel* model_;
  std::unique_ptr<PredictionStream> stream_;
  FillObserver* observer_ = nullptr;
  Counters counters_;
  std::unordered_map<std::uint64_t, std::uint64_t> last_seen_;
  std::vector<std::uint8_t> fill_useful_;
  std::vector<std::uint64_t> occupancy_ids_;
  std::vector<std::size_t> occupancy_offsets_;
  std::optional<std::uint64_t> last_token_;
  bool record_events_ = false;
  bool finished_ = false;
  std::vector<AccessEvent> events_;
};

}  // namespace acpc
