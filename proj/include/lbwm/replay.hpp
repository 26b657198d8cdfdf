#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "lbwm/nn/serialize.hpp"
#include "lbwm/rng.hpp"

namespace lbwm {

// One stored step. An episode of N jobs yields N+1 steps: the first carries no
// previous action (-1) and zero reward; the last has cont = 0 and an empty
// server queue job size.
struct ReplayStep {
  std::vector<double> obs;
  int prev_action = -1;
  double reward = 0.0;  // reward received on entering this step
  double cont = 1.0;
  bool first = false;

  bool operator==(const ReplayStep&) const = default;
};

struct ReplaySample {
  std::vector<std::vector<ReplayStep>> windows;  // [batch][time]
  std::vector<std::uint64_t> starts;             // absolute index of each window's first step

  std::size_t batch() const { return windows.size(); }
  std::size_t length() const { return windows.empty() ? 0 : windows.front().size(); }
};

// Ring of steps addressed by absolute index, with episode segments so that
// sampled windows never cross an episode boundary.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100000);

  // A step with first = true (or the very first step) opens a new episode.
  void append(ReplayStep step);
  void append(const std::vector<ReplayStep>& trajectory);

  // Uniform over all in-episode windows of length L; empty when none exists.
  std::optional<ReplaySample> sample(Rng& rng, std::size_t batch, std::size_t length) const;

  std::size_t size() const { return steps_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t oldest() const { return offset_; }
  std::uint64_t end() const { return offset_ + steps_.size(); }
  const ReplayStep& at(std::uint64_t absolute) const;
  // Episode id of a stored step (ids count up from 0 in append order).
  std::int64_t episode_of(std::uint64_t absolute) const;
  std::size_t num_windows(std::size_t length) const;

  void save(nn::BinaryWriter& w) const;
  void load(nn::BinaryReader& r);

 private:
  struct Segment {
    std::uint64_t begin, end;
    std::int64_t id;
  };
  std::size_t capacity_;
  std::deque<ReplayStep> steps_;
  std::uint64_t offset_ = 0;
  std::deque<Segment> segments_;
  std::int64_t next_id_ = 0;
};

}  // namespace lbwm
