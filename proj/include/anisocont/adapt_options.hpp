#pragma once

#include "anisocont/metric.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

namespace anisocont {

/// Which adaptation passes run inside one inner iteration.
struct ActionMask {
  bool move = false;
  bool refine = false;
  bool coarsen = false;
  bool swap = false;

  bool operator==(const ActionMask&) const = default;
};

/// Bit 0 move, bit 1 refine, bit 2 coarsen, bit 3 swap.
inline ActionMask decode_sw(int sw)
{
  if (sw < 0 || sw > 15)
    throw std::invalid_argument("sw must be in 0..15, got " + std::to_string(sw));
  return {(sw & 1) != 0, (sw & 2) != 0, (sw & 4) != 0, (sw & 8) != 0};
}

inline int encode_sw(const ActionMask& m)
{
  return (m.move ? 1 : 0) | (m.refine ? 2 : 0) | (m.coarsen ? 4 : 0) | (m.swap ? 8 : 0);
}

/// Short action list ("c,r,m,s" order), "none" for an empty mask.
inline std::string describe(const ActionMask& m)
{
  std::string s;
  auto add = [&s](bool on, const char* tag) {
    if (!on)
      return;
    if (!s.empty())
      s += ',';
    s += tag;
  };
  add(m.coarsen, "c");
  add(m.refine, "r");
  add(m.move, "m");
  add(m.swap, "s");
  return s.empty() ? "none" : s;
}

struct AdaptOptions {
  EtaPolicy eta_policy = EtaPolicy::constant(1e-3);
  double ppar = 1000.0;
  int innerit = 2;
  double l_low = 1.0 / std::numbers::sqrt2;
  double l_up = std::numbers::sqrt2;
  double qual_p = -1.0;  // negative: 0 in 2D, 2 in 3D
  int sw = 15;
  FieldSelector field_selector;

  /// Upper bound on target edge length as a fraction of the box diameter
  /// (<= 0 disables).
  double h_max_fraction = 0.1;

  // Heuristic constants of the passes.
  double collapse_quality_floor = 0.1;
  double move_damping = 0.5;
  int swap_sweeps = 3;

  template <int D>
  double quality_weight() const
  {
    if (qual_p >= 0.0)
      return qual_p;
    return D == 2 ? 0.0 : 2.0;
  }

  void check() const
  {
    if (!(l_low > 0.0) || !(l_low < l_up))
      throw ConfigError("adapt options: need 0 < l_low < l_up");
    if (innerit < 1)
      throw ConfigError("adapt options: innerit must be >= 1");
    if (sw < 0 || sw > 15)
      throw ConfigError("adapt options: sw must be in 0..15");
    if (!(ppar >= 1.0))
      throw ConfigError("adapt options: ppar must be >= 1");
    if (eta_policy.value <= 0.0)
      throw ConfigError("adapt options: eta must be positive");
  }
};

/// Options for the pure-coarsening stage of the two-step adaptation.
struct CoarsenOptions : AdaptOptions {
  int npb = 0;
  int crmax = 10;

  CoarsenOptions() { sw = 5; }
  explicit CoarsenOptions(const AdaptOptions& base) : AdaptOptions(base) { sw = 5; }

  void check() const
  {
    AdaptOptions::check();
    if (npb < 0 || crmax < 0)
      throw ConfigError("coarsen options: npb and crmax must be >= 0");
  }
};

struct PassCounts {
  int collapses = 0;
  int collapse_rejections = 0;
  int splits = 0;
  int moves = 0;
  int swaps = 0;

  PassCounts& operator+=(const PassCounts& o)
  {
    collapses += o.collapses;
    collapse_rejections += o.collapse_rejections;
    splits += o.splits;
    moves += o.moves;
    swaps += o.swaps;
    return *this;
  }
};

struct AdaptStats {
  int np_before = 0;
  int np_after = 0;
  int iterations = 0;
  int coarsening_calls = 0;
  std::vector<int> np_history;
  std::vector<double> lmax_history;
  PassCounts counts;

  void append(const AdaptStats& o)
  {
    if (np_history.empty())
      np_before = o.np_before;
    np_after = o.np_after;
    iterations += o.iterations;
    coarsening_calls += o.coarsening_calls;
    np_history.insert(np_history.end(), o.np_history.begin(), o.np_history.end());
    lmax_history.insert(lmax_history.end(), o.lmax_history.begin(), o.lmax_history.end());
    counts += o.counts;
  }

  /// One line of key=value pairs; trajectories are ';'-separated.
  std::string to_log_line() const
  {
    std::ostringstream os;
    os << "np_before=" << np_before << " np_after=" << np_after << " iterations=" << iterations
       << " coarsening_calls=" << coarsening_calls << " collapses=" << counts.collapses
       << " collapse_rejections=" << counts.collapse_rejections << " splits=" << counts.splits
       << " moves=" << counts.moves << " swaps=" << counts.swaps << " np_trajectory=";
    for (std::size_t i = 0; i < np_history.size(); ++i)
      os << (i ? ";" : "") << np_history[i];
    os << " lmax_trajectory=";
    for (std::size_t i = 0; i < lmax_history.size(); ++i)
      os << (i ? ";" : "") << lmax_history[i];
    return os.str();
  }
};

} // namespace anisocont
