#pragma once

// Slow, independent reference implementations used by the tests.

#include <algorithm>
#include <cstdint>
#include <list>
#include <optional>
#include <set>
#include <vector>

#include "acpc/rng.hpp"
#include "acpc/trace.hpp"

namespace oracle {

// label[i] = 1 iff line i recurs in (i, i + w].
inline std::vector<std::uint8_t> labels(const std::vector<std::uint64_t>& lines, std::size_t w) {
  std::vector<std::uint8_t> out(lines.size(), 0);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    for (std::size_t j = i + 1; j < lines.size() && j <= i + w; ++j) {
      if (lines[j] == lines[i]) {
        out[i] = 1;
        break;
      }
    }
  }
  return out;
}

// Distinct lines strictly between the previous occurrence and i, or -1.
inline std::vector<std::int64_t> reuse_distance(const std::vector<std::uint64_t>& lines) {
  std::vector<std::int64_t> out(lines.size(), -1);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    for (std::size_t j = i; j-- > 0;) {
      if (lines[j] == lines[i]) {
        std::set<std::uint64_t> between(lines.begin() + static_cast<std::ptrdiff_t>(j) + 1,
                                        lines.begin() + static_cast<std::ptrdiff_t>(i));
        out[i] = static_cast<std::int64_t>(between.size());
        break;
      }
    }
  }
  return out;
}

struct Step {
  bool hit = false;
  std::optional<std::uint64_t> victim;
  bool operator==(const Step&) const = default;
};

// Set-associative LRU as one recency list per set, most recent first.
class LruCache {
 public:
  LruCache(std::size_t sets, std::size_t ways) : sets_(sets), ways_(ways), lists_(sets) {}

  Step access(std::uint64_t line) {
    auto& l = lists_[line % sets_];
    auto it = std::find(l.begin(), l.end(), line);
    Step s;
    if (it != l.end()) {
      l.erase(it);
      s.hit = true;
    } else if (l.size() == ways_) {
      s.victim = l.back();
      l.pop_back();
    }
    l.push_front(line);
    return s;
  }

 private:
  std::size_t sets_, ways_;
  std::vector<std::list<std::uint64_t>> lists_;
};

// SRRIP-HP with 2-bit values: insert at 2, promote to 0 on hit, evict the
// first way at 3 after ageing. Ways are an explicit association list.
class SrripCache {
 public:
  SrripCache(std::size_t sets, std::size_t ways)
      : sets_(sets), ways_(ways), tags_(sets), rrpv_(sets) {}

  Step access(std::uint64_t line) {
    const std::size_t s = line % sets_;
    auto& tags = tags_[s];
    auto& rr = rrpv_[s];
    Step out;
    for (std::size_t w = 0; w < tags.size(); ++w) {
      if (tags[w] == line) {
        rr[w] = 0;
        out.hit = true;
        return out;
      }
    }
    if (tags.size() < ways_) {
      tags.push_back(line);
      rr.push_back(2);
      return out;
    }
    while (true) {
      auto it = std::find(rr.begin(), rr.end(), 3);
      if (it != rr.end()) {
        const auto w = static_cast<std::size_t>(it - rr.begin());
        out.victim = tags[w];
        tags[w] = line;
        rr[w] = 2;
        return out;
      }
      for (auto& v : rr) ++v;
    }
  }

 private:
  std::size_t sets_, ways_;
  std::vector<std::vector<std::uint64_t>> tags_;
  std::vector<std::vector<int>> rrpv_;
};

inline acpc::Trace trace_of(const std::vector<std::uint64_t>& lines) {
  acpc::Trace t;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    acpc::AccessRecord r;
    r.t = i;
    r.line_id = lines[i];
    t.push_back(r);
  }
  return t;
}

inline std::vector<std::uint64_t> random_lines(acpc::Rng& rng, std::size_t n, std::uint64_t universe) {
  std::vector<std::uint64_t> out(n);
  for (auto& x : out) x = rng.below(universe);
  return out;
}

}  // namespace oracle
