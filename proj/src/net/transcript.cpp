#include "flash/net/transcript.hpp"

#include <algorithm>
#include <iomanip>

namespace flash {

void TrafficCount::add(std::size_t bytes, Direction dir) {
  if (dir == Direction::kSent) {
    bytes_sent += bytes;
    ++frames_sent;
  } else {
    bytes_received += bytes;
    ++frames_received;
  }
}

void TranscriptStats::account(const Frame& frame, Phase phase, Direction dir) {
  const std::size_t bytes = frame.wire_size();
  phases_[static_cast<int>(phase)].add(bytes, dir);
  kinds_[frame.kind].add(bytes, dir);
  LayerStats& l = layers_[frame.layer_id];
  l.traffic.add(bytes, dir);
  l.max_frame = std::max<u64>(l.max_frame, bytes);
  max_frame_ = std::max<u64>(max_frame_, bytes);
}

u64 TranscriptStats::total_bytes() const {
  return phases_[0].bytes() + phases_[1].bytes();
}

namespace {

int min_budget(const LayerStats& l) {
  return l.budgets.empty() ? -1 : *std::min_element(l.budgets.begin(), l.budgets.end());
}

}  // namespace

void TranscriptStats::print(std::ostream& os, bool client) const {
  auto up = [&](const TrafficCount& t) { return client ? t.bytes_sent : t.bytes_received; };
  auto down = [&](const TrafficCount& t) { return client ? t.bytes_received : t.bytes_sent; };
  os << std::left << std::setw(6) << "layer" << std::setw(14) << "name" << std::right
     << std::setw(12) << "up B" << std::setw(12) << "down B" << std::setw(8) << "frames"
     << std::setw(11) << "ms" << std::setw(8) << "budget" << '\n';
  for (const auto& [id, l] : layers_) {
    os << std::left << std::setw(6) << id << std::setw(14)
       << (l.name.empty() ? "-" : l.name) << std::right << std::setw(12) << up(l.traffic)
       << std::setw(12) << down(l.traffic) << std::setw(8) << l.traffic.frames()
       << std::setw(11) << std::fixed << std::setprecision(2) << l.seconds * 1e3
       << std::setw(8) << min_budget(l) << '\n';
  }
  const char* names[2] = {"offline", "online"};
  for (int p = 0; p < 2; ++p) {
    os << std::left << std::setw(20) << names[p] << std::right << std::setw(12)
       << up(phases_[p]) << std::setw(12) << down(phases_[p]) << std::setw(8)
       << phases_[p].frames() << '\n';
  }
}

void TranscriptStats::write_csv(std::ostream& os, bool client) const {
  auto up = [&](const TrafficCount& t) { return client ? t.bytes_sent : t.bytes_received; };
  auto down = [&](const TrafficCount& t) { return client ? t.bytes_received : t.bytes_sent; };
  os << "scope,name,bytes_up,bytes_down,frames,seconds,min_budget\n";
  for (const auto& [id, l] : layers_) {
    os << "layer" << id << ',' << (l.name.empty() ? "-" : l.name) << ',' << up(l.traffic)
       << ',' << down(l.traffic) << ',' << l.traffic.frames() << ',' << l.seconds << ','
       << min_budget(l) << '\n';
  }
  const char* names[2] = {"offline", "online"};
  for (int p = 0; p < 2; ++p) {
    os << "phase," << names[p] << ',' << up(phases_[p]) << ',' << down(phases_[p]) << ','
       << phases_[p].frames() << ",,\n";
  }
}

}  // namespace flash
