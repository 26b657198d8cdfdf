#include "lbwm/replay.hpp"

#include <stdexcept>
#include <string>

namespace lbwm {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
}

void ReplayBuffer::append(ReplayStep step) {
  const std::uint64_t abs = end();
  if (step.first || segments_.empty() || segments_.back().end != abs) {
    segments_.push_back({abs, abs + 1, next_id_++});
  } else {
    ++segments_.back().end;
  }
  steps_.push_back(std::move(step));
  while (steps_.size() > capacity_) {
    steps_.pop_front();
    ++offset_;
    if (++segments_.front().begin == segments_.front().end) segments_.pop_front();
  }
}

void ReplayBuffer::append(const std::vector<ReplayStep>& trajectory) {
  for (const auto& s : trajectory) append(s);
}

const ReplayStep& ReplayBuffer::at(std::uint64_t absolute) const {
  if (absolute < offset_ || absolute >= end())
    throw std::out_of_range("ReplayBuffer: index " + std::to_string(absolute) + " not stored");
  return steps_[static_cast<std::size_t>(absolute - offset_)];
}

std::int64_t ReplayBuffer::episode_of(std::uint64_t absolute) const {
  for (const auto& s : segments_)
    if (absolute >= s.begin && absolute < s.end) return s.id;
  throw std::out_of_range("ReplayBuffer: index " + std::to_string(absolute) + " not stored");
}

std::size_t ReplayBuffer::num_windows(std::size_t length) const {
  if (length == 0) return 0;
  std::size_t total = 0;
  for (const auto& s : segments_) {
    const auto len = static_cast<std::size_t>(s.end - s.begin);
    if (len >= length) total += len - length + 1;
  }
  return total;
}

std::optional<ReplaySample> ReplayBuffer::sample(Rng& rng, std::size_t batch, std::size_t length) const {
  const std::size_t total = num_windows(length);
  if (total == 0 || batch == 0) return std::nullopt;
  ReplaySample out;
  out.windows.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    std::uint64_t pick = rng.below(total);
    std::uint64_t start = 0;
    for (const auto& s : segments_) {
      const auto len = static_cast<std::size_t>(s.end - s.begin);
      if (len < length) continue;
      const std::size_t n = len - length + 1;
      if (pick < n) {
        start = s.begin + pick;
        break;
      }
      pick -= n;
    }
    std::vector<ReplayStep> window;
    window.reserve(length);
    for (std::size_t t = 0; t < length; ++t) window.push_back(at(start + t));
    out.windows.push_back(std::move(window));
    out.starts.push_back(start);
  }
  return out;
}

void ReplayBuffer::save(nn::BinaryWriter& w) const {
  w.write_u64(capacity_);
  w.write_u64(offset_);
  w.write_i64(next_id_);
  w.write_u64(segments_.size());
  for (const auto& s : segments_) {
    w.write_u64(s.begin);
    w.write_u64(s.end);
    w.write_i64(s.id);
  }
  w.write_u64(steps_.size());
  for (const auto& s : steps_) {
    w.write_u64(s.obs.size());
    for (double x : s.obs) w.write_f64(x);
    w.write_i64(s.prev_action);
    w.write_f64(s.reward);
    w.write_f64(s.cont);
    w.write_bool(s.first);
  }
}

void ReplayBuffer::load(nn::BinaryReader& r) {
  ReplayBuffer fresh(static_cast<std::size_t>(r.read_u64()));
  fresh.offset_ = r.read_u64();
  fresh.next_id_ = r.read_i64();
  const std::uint64_t nseg = r.read_u64();
  for (std::uint64_t i = 0; i < nseg; ++i) {
    Segment s{};
    s.begin = r.read_u64();
    s.end = r.read_u64();
    s.id = r.read_i64();
    fresh.segments_.push_back(s);
  }
  const std::uint64_t nsteps = r.read_u64();
  for (std::uint64_t i = 0; i < nsteps; ++i) {
    ReplayStep s;
    const std::uint64_t dim = r.read_u64();
    if (dim > r.remaining() / 8) throw nn::CorruptData("replay: observation length exceeds data");
    s.obs.resize(static_cast<std::size_t>(dim));
    for (double& x : s.obs) x = r.read_f64();
    s.prev_action = static_cast<int>(r.read_i64());
    s.reward = r.read_f64();
    s.cont = r.read_f64();
    s.first = r.read_bool();
    fresh.steps_.push_back(std::move(s));
  }
  if (fresh.steps_.size() > fresh.capacity_) throw nn::CorruptData("replay: more steps than capacity");
  *this = std::move(fresh);
}

}  // namespace lbwm
