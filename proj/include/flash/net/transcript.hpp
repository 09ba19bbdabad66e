#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "flash/net/frame.hpp"

namespace flash {

enum class Phase : u8 { kOffline = 0, kOnline = 1 };
enum class Direction : u8 { kSent = 0, kReceived = 1 };

struct TrafficCount {
  u64 bytes_sent = 0;
  u64 bytes_received = 0;
  u64 frames_sent = 0;
  u64 frames_received = 0;

  u64 bytes() const { return bytes_sent + bytes_received; }
  u64 frames() const { return frames_sent + frames_received; }
  void add(std::size_t bytes, Direction dir);
};

struct LayerStats {
  std::string name;
  TrafficCount traffic;
  double seconds = 0;
  std::vector<int> budgets;  // noise budgets observed on arrival
  u64 max_frame = 0;
};

// Byte-exact record of one party's frames. Layer 0 holds setup traffic.
class TranscriptStats {
 public:
  void account(const Frame& frame, Phase phase, Direction dir);

  const TrafficCount& phase(Phase p) const { return phases_[static_cast<int>(p)]; }
  const std::map<u32, LayerStats>& layers() const { return layers_; }
  LayerStats& layer(u32 id) { return layers_[id]; }
  u64 total_bytes() const;
  u64 max_frame_bytes() const { return max_frame_; }
  const std::map<FrameKind, TrafficCount>& kinds() const { return kinds_; }

  // Human-readable per-layer table; `client` selects which direction is up.
  void print(std::ostream& os, bool client) const;
  // CSV rows: scope,name,bytes_up,bytes_down,frames,seconds,min_budget.
  void write_csv(std::ostream& os, bool client) const;

 private:
  TrafficCount phases_[2];
  std::map<u32, LayerStats> layers_;
  std::map<FrameKind, TrafficCount> kinds_;
  u64 max_frame_ = 0;
};

}  // namespace flash
