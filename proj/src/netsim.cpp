#include "dkcf/netsim.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace dkcf {

std::optional<Envelope> draw_envelope(const LinkSpec& link, TrackMessage msg, Tick tick, Rng& rng) {
  // Both draws are always taken so a link's stream advances identically
  // regardless of the outcome.
  const bool drop = rng.bernoulli(link.drop_prob);
  const double jitter = rng.gaussian(link.jitter_std);
  if (drop) return std::nullopt;
  Envelope env;
  env.payload = std::move(msg);
  env.send_tick = tick;
  env.deliver_tick = tick + link.base_latency + static_cast<Tick>(std::llround(std::max(0.0, jitter)));
  return env;
}

Network::Network(std::vector<LinkSpec> links, std::uint64_t seed) : links_(std::move(links)) {
  for (const auto& l : links_) {
    rngs_.emplace_back(derive_seed(seed, {0x4E37, static_cast<std::uint64_t>(l.from), static_cast<std::uint64_t>(l.to)}));
  }
  counters_.resize(links_.size());
}

std::optional<Envelope> Network::send(std::size_t link_index, const TrackMessage& msg, Tick tick) {
  const auto& link = links_[link_index];
  auto& counters = counters_[link_index];
  ++counters.sent;
  auto env = draw_envelope(link, msg, tick, rngs_[link_index]);
  if (!env) {
    ++counters.dropped;
    return std::nullopt;
  }
  env->sequence = next_sequence_++;
  inboxes_[link.to].emplace_back(*env, link_index);
  return env;
}

std::size_t Network::broadcast(const TrackMessage& msg, Tick tick) {
  std::size_t enqueued = 0;
  for (std::size_t i = 0; i < links_.size(); ++i) {
    if (links_[i].from != msg.sender) continue;
    if (send(i, msg, tick)) ++enqueued;
  }
  return enqueued;
}

std::vector<TrackMessage> Network::poll(RobotId robot, Tick tick) {
  std::vector<TrackMessage> out;
  auto it = inboxes_.find(robot);
  if (it == inboxes_.end()) return out;
  auto& inbox = it->second;

  auto due_end = std::stable_partition(inbox.begin(), inbox.end(),
                                       [tick](const auto& e) { return e.first.deliver_tick <= tick; });
  std::vector<std::pair<Envelope, std::size_t>> due(std::make_move_iterator(inbox.begin()),
                                                    std::make_move_iterator(due_end));
  inbox.erase(inbox.begin(), due_end);

  std::sort(due.begin(), due.end(), [](const auto& a, const auto& b) {
    return std::tie(a.first.deliver_tick, a.first.send_tick, a.first.payload.sender, a.first.sequence) <
           std::tie(b.first.deliver_tick, b.first.send_tick, b.first.payload.sender, b.first.sequence);
  });
  out.reserve(due.size());
  for (auto& [env, link] : due) {
    ++counters_[link].delivered;
    out.push_back(std::move(env.payload));
  }
  return out;
}

std::size_t Network::in_flight() const {
  std::size_t n = 0;
  for (const auto& [robot, inbox] : inboxes_) n += inbox.size();
  return n;
}

}  // namespace dkcf
