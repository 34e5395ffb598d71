#pragma once

#include "dkcf/consensus.hpp"
#include "dkcf/rng.hpp"
#include "dkcf/types.hpp"

#include <map>
#include <optional>
#include <utility>
#include <vector>

namespace dkcf {

/// Directed link with tick-quantized latency.
struct LinkSpec {
  RobotId from = 0;
  RobotId to = 1;
  int base_latency = 0;     ///< ticks
  double jitter_std = 0.0;  ///< ticks; Gaussian truncated at zero, then rounded
  double drop_prob = 0.0;
};

struct Envelope {
  TrackMessage payload;
  Tick send_tick = 0;
  Tick deliver_tick = 0;
  std::uint64_t sequence = 0;  ///< global enqueue order, last tie-break
};

/// Draws the fate of one message: nullopt if dropped, else its delivery tick.
std::optional<Envelope> draw_envelope(const LinkSpec& link, TrackMessage msg, Tick tick, Rng& rng);

struct LinkCounters {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
};

/// Mailbox network owned by the simulation loop.
///
/// Each link draws from its own stream seeded by (master seed, from, to), so
/// adding a link never changes the draws of another.
class Network {
 public:
  Network(std::vector<LinkSpec> links, std::uint64_t seed);

  /// Sends msg from msg.sender over every outgoing link. Returns the number of
  /// envelopes enqueued (drops excluded).
  std::size_t broadcast(const TrackMessage& msg, Tick tick);
  /// Sends over one link; returns the enqueued envelope, if not dropped.
  std::optional<Envelope> send(std::size_t link_index, const TrackMessage& msg, Tick tick);

  /// Removes and returns every envelope for `robot` due at or before `tick`,
  /// ordered by (deliver_tick, send_tick, sender, sequence).
  std::vector<TrackMessage> poll(RobotId robot, Tick tick);

  const std::vector<LinkSpec>& links() const { return links_; }
  const LinkCounters& counters(std::size_t link_index) const { return counters_[link_index]; }
  std::size_t in_flight() const;

 private:
  std::vector<LinkSpec> links_;
  std::vector<Rng> rngs_;
  std::vector<LinkCounters> counters_;
  std::map<RobotId, std::vector<std::pair<Envelope, std::size_t>>> inboxes_;  // (envelope, link)
  std::uint64_t next_sequence_ = 0;
};

}  // namespace dkcf
