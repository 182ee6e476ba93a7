#include "acpc/cache.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "acpc/error.hpp"

namespace acpc {

namespace {

constexpr std::array<std::string_view, 5> kPolicyNames = {"LRU", "RANDOM", "SRRIP", "MLP", "PARM"};
constexpr std::array<std::string_view, 4> kLevelNames = {"L1", "L2", "L3", "MEM"};

bool is_power_of_two(std::uint64_t x) { return x != 0 && (x & (x - 1)) == 0; }

void validate_level(const LevelGeometry& g, const char* name) {
  if (!is_power_of_two(g.sets)) throw ConfigError(std::string(name) + ".sets must be a power of two");
  if (g.ways < 1) throw ConfigError(std::string(name) + ".ways must be >= 1");
  if (g.line_size < 1) throw ConfigError(std::string(name) + ".line_size must be >= 1");
}

nlohmann::json level_json(const LevelGeometry& g) {
  return {{"line_size", g.line_size}, {"sets", g.sets}, {"ways", g.ways}};
}

template <typename F>
void for_fields(const nlohmann::json& j, const char* what, F&& f) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (!f(key, value)) throw ConfigError(std::string("unknown ") + what + " field '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string(what) + " field '" + key + "': " + e.what());
    }
  }
}

LevelGeometry level_from_json(const nlohmann::json& j, const char* what) {
  LevelGeometry g;
  for_fields(j, what, [&](const std::string& key, const nlohmann::json& v) {
    if (key == "line_size") g.line_size = v.get<std::uint32_t>();
    else if (key == "sets") g.sets = v.get<std::uint32_t>();
    else if (key == "ways") g.ways = v.get<std::uint32_t>();
    else return false;
    return true;
  });
  return g;
}

}  // namespace

std::string_view to_string(Policy policy) { return kPolicyNames[static_cast<std::size_t>(policy)]; }

Policy policy_from_string(std::string_view name) {
  std::string upper(name);
  for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (std::size_t i = 0; i < kPolicyNames.size(); ++i) {
    if (kPolicyNames[i] == upper) return static_cast<Policy>(i);
  }
  throw ConfigError("unknown policy '" + std::string(name) + "'");
}

bool is_learned(Policy policy) { return policy == Policy::Mlp || policy == Policy::Parm; }

std::string_view to_string(Level level) { return kLevelNames[static_cast<std::size_t>(level)]; }

void CacheConfig::validate() const {
  validate_level(l1, "l1");
  validate_level(l2, "l2");
  validate_level(l3, "l3");
  if (!(latencies.l1_hit < latencies.l2_hit && latencies.l2_hit < latencies.l3_hit &&
        latencies.l3_hit < latencies.dram)) {
    throw ConfigError("latencies must be strictly increasing l1_hit < l2_hit < l3_hit < dram");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (predictor_stride < 1) throw ConfigError("predictor_stride must be >= 1");
  if (prefetcher.target_level != "L2") throw ConfigError("prefetcher.target_level must be L2");
}

void to_json(nlohmann::json& j, const CacheConfig& cfg) {
  j = nlohmann::json{
      {"l1", level_json(cfg.l1)},
      {"l2", level_json(cfg.l2)},
      {"l3", level_json(cfg.l3)},
      {"latencies",
       {{"l1_hit", cfg.latencies.l1_hit},
        {"l2_hit", cfg.latencies.l2_hit},
        {"l3_hit", cfg.latencies.l3_hit},
        {"dram", cfg.latencies.dram}}},
      {"prefetcher",
       {{"enabled", cfg.prefetcher.enabled},
        {"degree", cfg.prefetcher.degree},
        {"target_level", cfg.prefetcher.target_level}}},
      {"policy", to_string(cfg.policy)},
      {"alpha", cfg.alpha},
      {"predictor_stride", cfg.predictor_stride}};
}

void from_json(const nlohmann::json& j, CacheConfig& cfg) {
  CacheConfig out;
  for_fields(j, "CacheConfig", [&](const std::string& key, const nlohmann::json& v) {
    if (key == "l1") out.l1 = level_from_json(v, "l1");
    else if (key == "l2") out.l2 = level_from_json(v, "l2");
    else if (key == "l3") out.l3 = level_from_json(v, "l3");
    else if (key == "latencies") {
      for_fields(v, "latencies", [&](const std::string& k, const nlohmann::json& x) {
        if (k == "l1_hit") out.latencies.l1_hit = x.get<std::uint32_t>();
        else if (k == "l2_hit") out.latencies.l2_hit = x.get<std::uint32_t>();
        else if (k == "l3_hit") out.latencies.l3_hit = x.get<std::uint32_t>();
        else if (k == "dram") out.latencies.dram = x.get<std::uint32_t>();
        else return false;
        return true;
      });
    } else if (key == "prefetcher") {
      for_fields(v, "prefetcher", [&](const std::string& k, const nlohmann::json& x) {
        if (k == "enabled") out.prefetcher.enabled = x.get<bool>();
        else if (k == "degree") out.prefetcher.degree = x.get<std::uint32_t>();
        else if (k == "target_level") out.prefetcher.target_level = x.get<std::string>();
        else return false;
        return true;
      });
    } else if (key == "policy") out.policy = policy_from_string(v.get<std::string>());
    else if (key == "alpha") out.alpha = v.get<double>();
    else if (key == "predictor_stride") out.predictor_stride = v.get<std::uint32_t>();
    else return false;
    return true;
  });
  out.validate();
  cfg = out;
}

// ---- replacement primitives ----

namespace replacement {

std::size_t lru_victim(std::span<const LineState> set) {
  std::size_t best = 0;
  for (std::size_t w = 0; w < set.size(); ++w) {
    if (!set[w].valid) throw InvariantError("lru_victim on a set with an empty way");
    if (set[w].lru_stamp < set[best].lru_stamp) best = w;
  }
  return best;
}

void lru_touch(SetView set, std::size_t way) { set.lines[way].lru_stamp = ++*set.clock; }

void srrip_insert(LineState& line) { line.rrpv = kRrpvInsert; }

void srrip_hit(LineState& line) { line.rrpv = 0; }

std::size_t srrip_victim(std::span<LineState> set) {
  for (int round = 0; round <= kRrpvMax; ++round) {
    for (std::size_t w = 0; w < set.size(); ++w) {
      if (set[w].rrpv >= kRrpvMax) return w;
    }
    for (auto& line : set) ++line.rrpv;
  }
  throw InvariantError("srrip_victim did not terminate");
}

std::vector<double> utility_scores(std::span<const double> predictions) {
  std::vector<double> u(predictions.size());
  if (predictions.empty()) return u;
  const double shift = *std::max_element(predictions.begin(), predictions.end());
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    u[i] = std::exp(predictions[i] - shift);
    total += u[i];
  }
  for (auto& x : u) x /= total;
  return u;
}

double compute_priority(double utility, double frequency, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  return alpha * utility + (1.0 - alpha) * frequency;
}

void refresh_priorities(std::span<LineState> set, double alpha) {
  std::array<double, 64> buf{};
  std::vector<double> heap;
  double* preds = buf.data();
  if (set.size() > buf.size()) {
    heap.resize(set.size());
    preds = heap.data();
  }
  std::size_t n = 0;
  for (const auto& l : set) {
    if (l.valid) preds[n++] = l.predicted;
  }
  const auto u = utility_scores(std::span<const double>(preds, n));
  std::size_t k = 0;
  for (auto& l : set) {
    if (!l.valid) continue;
    l.utility = u[k++];
    l.priority = compute_priority(l.utility, l.frequency(), alpha);
  }
}

std::size_t parm_victim(std::span<LineState> set, double alpha) {
  refresh_priorities(set, alpha);
  std::size_t best = set.size();
  for (std::size_t w = 0; w < set.size(); ++w) {
    if (!set[w].valid) continue;
    if (best == set.size() || set[w].priority < set[best].priority) best = w;
  }
  if (best == set.size()) throw InvariantError("parm_victim on an empty set");
  return best;
}

void parm_insert(std::span<LineState> set, std::size_t way, std::uint64_t tag,
                 double prediction, double alpha) {
  auto& line = set[way];
  line.tag = tag;
  line.valid = true;
  line.freq_counter = 1;
  line.predicted = prediction;
  refresh_priorities(set, alpha);
}

void update_frequency(std::span<LineState> set, std::size_t way) {
  auto& c = set[way].freq_counter;
  if (c < kFreqMax) ++c;
  if (c >= kFreqMax) {
    for (auto& l : set) {
      if (l.valid) l.freq_counter = static_cast<std::uint8_t>(l.freq_counter >> 1);
    }
  }
}

std::vector<std::uint64_t> prefetch_next_line(std::uint64_t line, std::uint32_t degree) {
  std::vector<std::uint64_t> out;
  out.reserve(degree);
  for (std::uint32_t d = 1; d <= degree; ++d) out.push_back(line + d);
  return out;
}

}  // namespace replacement

// ---- CacheLevel ----

CacheLevel::CacheLevel(const LevelGeometry& geometry, Policy policy, double alpha,
                       std::uint64_t seed)
    : geometry_(geometry),
      policy_(policy),
      alpha_(alpha),
      rng_(seed),
      lines_(geometry.lines()),
      clocks_(geometry.sets, 0) {
  validate_level(geometry, "level");
}

std::optional<std::size_t> CacheLevel::find(std::uint64_t line) const {
  const auto s = set(set_of(line));
  for (std::size_t w = 0; w < s.size(); ++w) {
    if (s[w].valid && s[w].tag == line) return w;
  }
  return std::nullopt;
}

std::span<const LineState> CacheLevel::set(std::size_t index) const {
  return std::span<const LineState>(lines_).subspan(index * geometry_.ways, geometry_.ways);
}

std::span<LineState> CacheLevel::set(std::size_t index) {
  return std::span<LineState>(lines_).subspan(index * geometry_.ways, geometry_.ways);
}

SetView CacheLevel::view(std::size_t index) { return {set(index), &clocks_[index]}; }

void CacheLevel::hit(std::size_t set_index, std::size_t way, std::optional<double> prediction) {
  auto v = view(set_index);
  auto& line = v.lines[way];
  ++line.demand_hits_since_fill;
  if (prediction) line.predicted = *prediction;
  replacement::lru_touch(v, way);
  switch (policy_) {
    case Policy::Srrip:
      replacement::srrip_hit(line);
      break;
    case Policy::Mlp:
    case Policy::Parm:
      replacement::update_frequency(v.lines, way);
      break;
    case Policy::Lru:
    case Policy::Random:
      break;
  }
}

CacheLevel::FillResult CacheLevel::fill(std::uint64_t line, bool prefetch, double prediction,
                                        std::uint64_t fill_id) {
  const std::size_t s = set_of(line);
  auto v = view(s);
  FillResult result;
  auto empty = std::find_if(v.lines.begin(), v.lines.end(), [](const LineState& l) { return !l.valid; });
  if (empty != v.lines.end()) {
    result.way = static_cast<std::size_t>(empty - v.lines.begin());
  } else {
    switch (policy_) {
      case Policy::Lru:
        result.way = replacement::lru_victim(v.lines);
        break;
      case Policy::Random:
        result.way = rng_.below(v.lines.size());
        break;
      case Policy::Srrip:
        result.way = replacement::srrip_victim(v.lines);
        break;
      case Policy::Mlp:
      case Policy::Parm:
        result.way = replacement::parm_victim(v.lines, alpha_);
        break;
    }
    result.evicted = v.lines[result.way];
  }

  auto& l = v.lines[result.way];
  l = LineState{};
  l.tag = line;
  l.valid = true;
  l.inserted_by_prefetch = prefetch;
  l.fill_id = fill_id;
  l.predicted = prediction;
  replacement::lru_touch(v, result.way);
  switch (policy_) {
    case Policy::Srrip:
      replacement::srrip_insert(l);
      break;
    case Policy::Mlp:
    case Policy::Parm:
      replacement::parm_insert(v.lines, result.way, line, prediction, alpha_);
      break;
    case Policy::Lru:
    case Policy::Random:
      break;
  }
  return result;
}

CacheLevel::AccessResult CacheLevel::access(std::uint64_t line) {
  if (auto way = find(line)) {
    hit(set_of(line), *way);
    return {true, std::nullopt};
  }
  auto r = fill(line, false, 0.5, 0);
  AccessResult out;
  if (r.evicted) out.victim = r.evicted->tag;
  return out;
}

// ---- event log ----

void write_event_log(std::span<const AccessEvent> events, std::ostream& out) {
  out << "t,level,hit,victim_tag,victim_was_prefetch\n";
  for (const auto& e : events) {
    out << e.t << ',' << to_string(e.level) << ',' << (e.level != Level::Mem ? 1 : 0) << ',';
    if (e.victim) {
      out << e.victim->tag << ',' << (e.victim->was_prefetch ? 1 : 0);
    } else {
      out << "-1,";
    }
    out << '\n';
  }
}

// ---- CacheSimulator ----

CacheSimulator::CacheSimulator(const CacheConfig& cfg, std::uint64_t seed, const ReuseModel* model)
    : cfg_((cfg.validate(), cfg)),
      l1_(cfg.l1, Policy::Lru, cfg.alpha, mix_seed(seed, 1)),
      l2_(cfg.l2, cfg.policy, cfg.alpha, mix_seed(seed, 2)),
      l3_(cfg.l3, Policy::Lru, cfg.alpha, mix_seed(seed, 3)),
      model_(model) {
  if (is_learned(cfg.policy)) {
    if (!model_) {
      throw ConfigError("policy " + std::string(to_string(cfg.policy)) + " requires a model");
    }
    const std::string_view want = cfg.policy == Policy::Parm ? "tcn" : "mlp";
    if (model_->kind() != want) {
      throw ConfigError("policy " + std::string(to_string(cfg.policy)) + " requires a " +
                        std::string(want) + " model, got " + std::string(model_->kind()));
    }
    stream_ = model_->open_stream();
  }
}

CacheSimulator::~CacheSimulator() = default;

std::uint32_t CacheSimulator::level_latency(Level level) const {
  switch (level) {
    case Level::L1: return cfg_.latencies.l1_hit;
    case Level::L2: return cfg_.latencies.l2_hit;
    case Level::L3: return cfg_.latencies.l3_hit;
    case Level::Mem: return cfg_.latencies.dram;
  }
  return cfg_.latencies.dram;
}

const CacheLevel& CacheSimulator::level(Level level) const {
  switch (level) {
    case Level::L1: return l1_;
    case Level::L2: return l2_;
    default: return l3_;
  }
}

void CacheSimulator::fill_l2(std::uint64_t line, bool prefetch, double prediction,
                             std::uint64_t t, std::optional<VictimInfo>* victim_out,
                             const FeatureVector* synthesized) {
  const std::uint64_t fill_id = fill_useful_.size();
  fill_useful_.push_back(0);
  auto r = l2_.fill(line, prefetch, prediction, fill_id);
  if (prefetch) ++counters_.prefetch_insertions;
  if (r.evicted) {
    const auto& ev = *r.evicted;
    const bool used = ev.demand_hits_since_fill > 0;
    if (ev.inserted_by_prefetch && !used) ++counters_.prefetch_unused_evictions;
    if (victim_out) *victim_out = VictimInfo{ev.tag, ev.inserted_by_prefetch, used};
    if (observer_) observer_->on_evict(ev.fill_id, t, used);
  }
  if (observer_) {
    std::vector<FeatureVector> ctx = stream_ ? stream_->context() : std::vector<FeatureVector>{};
    if (synthesized) {
      if (model_ && !ctx.empty() && ctx.size() >= model_->context_length()) ctx.erase(ctx.begin());
      ctx.push_back(*synthesized);
    }
    observer_->on_fill(fill_id, t, prefetch, prediction, std::move(ctx));
  }
}

AccessOutcome CacheSimulator::access(const AccessRecord& record) {
  if (finished_) throw InvariantError("access after finish()");
  const std::uint64_t index = counters_.demand_accesses++;
  if (!last_token_ || *last_token_ != record.token_id) {
    ++counters_.tokens;
    last_token_ = record.token_id;
  }

  std::optional<double> fresh;
  if (stream_) {
    auto [it, first] = last_seen_.try_emplace(record.line_id, record.t);
    const auto prev = first ? std::nullopt : std::optional<std::uint64_t>(it->second);
    it->second = record.t;
    stream_->push(extract_features(record, prev));
    if (index % cfg_.predictor_stride == 0) fresh = stream_->predict_last();
  }

  AccessOutcome out;
  const std::uint64_t line = record.line_id;
  if (auto way = l1_.find(line)) {
    ++counters_.levels[0].hits;
    l1_.hit(l1_.set_of(line), *way);
    out.hit_level = Level::L1;
    if (fresh) {
      if (auto w2 = l2_.find(line)) l2_.set(l2_.set_of(line))[*w2].predicted = *fresh;
    }
  } else {
    ++counters_.levels[0].misses;
    if (auto w2 = l2_.find(line)) {
      ++counters_.levels[1].hits;
      const auto& l = l2_.set(l2_.set_of(line))[*w2];
      fill_useful_[l.fill_id] = 1;
      l2_.hit(l2_.set_of(line), *w2, fresh);
      out.hit_level = Level::L2;
    } else {
      ++counters_.levels[1].misses;
      if (auto w3 = l3_.find(line)) {
        ++counters_.levels[2].hits;
        l3_.hit(l3_.set_of(line), *w3);
        out.hit_level = Level::L3;
      } else {
        ++counters_.levels[2].misses;
        l3_.fill(line, false, 0.5, 0);
        out.hit_level = Level::Mem;
      }
      fill_l2(line, false, fresh.value_or(0.5), record.t, &out.victim, nullptr);
      counters_.l2_miss_penalty_cycles += level_latency(out.hit_level) - cfg_.latencies.l2_hit;

      if (cfg_.prefetcher.enabled) {
        for (std::uint64_t cand : replacement::prefetch_next_line(line, cfg_.prefetcher.degree)) {
          if (l2_.find(cand)) continue;
          double prediction = 0.5;
          FeatureVector synth{};
          if (stream_) {
            AccessRecord s;
            s.t = record.t;
            s.line_id = cand;
            s.seq_len = record.seq_len;
            s.reuse_dist = kNeverReused;
            s.type = AccessType::Weight;
            s.token_id = record.token_id;
            synth = extract_features(s, std::nullopt);
            prediction = stream_->peek(synth);
          }
          fill_l2(cand, true, prediction, record.t, nullptr, stream_ ? &synth : nullptr);
        }
      }
    }
    l1_.fill(line, false, 0.5, 0);
  }

  out.latency = level_latency(out.hit_level);
  counters_.total_cycles += out.latency;
  if (record_events_) events_.push_back({record.t, out.hit_level, out.victim});
  if (counters_.demand_accesses % kOccupancyInterval == 0) sample_occupancy();
  return out;
}

void CacheSimulator::sample_occupancy() {
  occupancy_offsets_.push_back(occupancy_ids_.size());
  l2_.for_each_valid([&](const LineState& l) { occupancy_ids_.push_back(l.fill_id); });
}

void CacheSimulator::finish() {
  if (finished_) return;
  finished_ = true;
  l2_.for_each_valid([&](const LineState& l) {
    if (l.inserted_by_prefetch && l.demand_hits_since_fill == 0) {
      ++counters_.prefetch_unused_evictions;
    }
  });
  counters_.occupancy.clear();
  for (std::size_t s = 0; s < occupancy_offsets_.size(); ++s) {
    const std::size_t begin = occupancy_offsets_[s];
    const std::size_t end = s + 1 < occupancy_offsets_.size() ? occupancy_offsets_[s + 1]
                                                               : occupancy_ids_.size();
    std::uint64_t useful = 0;
    for (std::size_t i = begin; i < end; ++i) useful += fill_useful_[occupancy_ids_[i]];
    counters_.occupancy.emplace_back(useful, end - begin);
  }
}

void CacheSimulator::model_updated() {
  if (stream_) stream_->refresh();
}

}  // namespace acpc
