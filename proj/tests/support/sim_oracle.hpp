#pragma once

// Independent re-simulation of an FIFO dispatch episode. Completion times
// come from the closed-form FIFO recurrence c = max(a, c_prev) + size/rate,
// and each step reward is recomputed by scanning every job (O(n^2)).

#include <algorithm>
#include <vector>

namespace lbwm::testing {

struct OracleResult {
  std::vector<double> completion;
  std::vector<double> rewards;
};

inline OracleResult oracle_simulate(const std::vector<double>& arrival, const std::vector<double>& size,
                                    const std::vector<int>& action, const std::vector<double>& rates, bool drain,
                                    double no_drain_final_time = 0.0) {
  const std::size_t n = arrival.size();
  OracleResult out;
  out.completion.assign(n, 0.0);
  std::vector<double> last(rates.size(), 0.0);
  std::vector<bool> used(rates.size(), false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(action[i]);
    const double start = used[s] ? std::max(arrival[i], last[s]) : arrival[i];
    out.completion[i] = start + size[i] / rates[s];
    last[s] = out.completion[i];
    used[s] = true;
  }
  double drain_time = arrival.back();
  for (double c : out.completion) drain_time = std::max(drain_time, c);
  for (std::size_t t = 0; t < n; ++t) {
    const double t_prev = arrival[t];
    const double t_now = t + 1 < n ? arrival[t + 1] : (drain ? drain_time : no_drain_final_time);
    double presence = 0.0;
    for (std::size_t j = 0; j <= t; ++j) {
      const double lo = std::max(t_prev, arrival[j]);
      const double hi = std::min(t_now, out.completion[j]);
      if (hi > lo) presence += hi - lo;
    }
    out.rewards.push_back(-presence);
  }
  return out;
}

}  // namespace lbwm::testing
