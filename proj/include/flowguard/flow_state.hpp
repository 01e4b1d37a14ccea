#pragma once

// Per-flow running statistics keyed by canonical five-tuple.
//
// For each tracked quantity x (packet length, inter-arrival time, direction)
// a flow keeps a running mean and a streaming mean absolute deviation:
//
//     n   = pkt_count + 1
//     mu  = mu + (x - mu) / n
//     mad = mad + (|x - mu| - mad) / n      (mu is the updated mean)
//
// Every division truncates toward zero in Q16, so the kernel-side program
// reproduces the same values bit for bit.

#include <algorithm>
#include <cstdint>
#include <list>
#include <unordered_map>

#include "flowguard/fxp.hpp"
#include "flowguard/packet.hpp"

namespace flowguard {

struct RunningStat {
    Fx64 mean;
    Fx64 mad;

    friend bool operator==(const RunningStat&, const RunningStat&) = default;
};

/// Applies one observation to a stat that currently summarizes n - 1 values.
inline RunningStat update_running(RunningStat s, Fx64 x, std::uint64_t n) {
    s.mean = fx_add(s.mean, fx_div_uint(fx_sub(x, s.mean), n));
    s.mad = fx_add(s.mad, fx_div_uint(fx_sub(fx_abs(fx_sub(x, s.mean)), s.mad), n));
    return s;
}

struct PacketObservation {
    Fx64 pkt_len;    // bytes
    Fx64 iat;        // microseconds
    Fx64 direction;  // 0: sent by the initiator, 1: reverse

    friend bool operator==(const PacketObservation&, const PacketObservation&) = default;
};

struct FlowRecord {
    Endpoint initiator;
    std::uint64_t pkt_count = 0;
    std::int64_t last_ts_us = 0;
    RunningStat len;
    RunningStat iat;
    RunningStat dir;

    Fx64 mean_len() const noexcept { return len.mean; }
    Fx64 mad_len() const noexcept { return len.mad; }
    Fx64 mean_iat() const noexcept { return iat.mean; }
    Fx64 mad_iat() const noexcept { return iat.mad; }
    Fx64 mean_dir() const noexcept { return dir.mean; }
    Fx64 mad_dir() const noexcept { return dir.mad; }

    friend bool operator==(const FlowRecord&, const FlowRecord&) = default;
};

/// Record for the first packet of a flow: the mean is the packet itself, all
/// deviations are zero, iat and direction are zero.
inline FlowRecord fresh_record(const ParsedPacket& p) {
    FlowRecord r;
    r.initiator = p.source();
    r.pkt_count = 1;
    r.last_ts_us = p.ts_us;
    r.len.mean = fx_from_int(p.pkt_len);
    return r;
}

inline FlowRecord update_stats(FlowRecord r, const PacketObservation& obs, std::int64_t ts_us) {
    const std::uint64_t n = r.pkt_count + 1;
    r.len = update_running(r.len, obs.pkt_len, n);
    r.iat = update_running(r.iat, obs.iat, n);
    r.dir = update_running(r.dir, obs.direction, n);
    r.last_ts_us = std::max(r.last_ts_us, ts_us);
    r.pkt_count = n;
    return r;
}

struct FlowTableConfig {
    std::size_t capacity = 65536;
    std::int64_t idle_timeout_us = 300'000'000;
};

struct FlowTableCounters {
    std::uint64_t inserts = 0;
    std::uint64_t idle_evictions = 0;
    std::uint64_t forced_evictions = 0;
    std::uint64_t active = 0;

    std::uint64_t evictions() const noexcept { return idle_evictions + forced_evictions; }
};

struct Observed {
    FlowRecord snapshot;  // includes the current packet
    PacketObservation obs;
    bool new_flow = false;
};

/// Owned by a single worker. Entries are kept in least-recently-updated order
/// so a full table can evict in O(1).
class FlowTable {
public:
    explicit FlowTable(FlowTableConfig cfg = {}) : cfg_(cfg) {
        if (cfg_.capacity == 0) cfg_.capacity = 1;
        index_.reserve(std::min<std::size_t>(cfg_.capacity, 1 << 16));
    }

    const FlowTableConfig& config() const noexcept { return cfg_; }
    const FlowTableCounters& counters() const noexcept { return counters_; }
    std::size_t size() const noexcept { return index_.size(); }

    Observed observe(const ParsedPacket& p) {
        const FlowKey key = canonical_key(p);
        auto it = index_.find(key);
        // An idle-expired entry restarts the flow whether or not a sweep has
        // reclaimed it yet.
        if (it != index_.end() && p.ts_us - it->second->record.last_ts_us > cfg_.idle_timeout_us) {
            lru_.erase(it->second);
            index_.erase(it);
            ++counters_.idle_evictions;
            it = index_.end();
        }
        if (it == index_.end()) {
            if (index_.size() >= cfg_.capacity) evict_lru();
            lru_.push_back(Entry{key, fresh_record(p)});
            index_.emplace(key, std::prev(lru_.end()));
            ++counters_.inserts;
            counters_.active = index_.size();
            const FlowRecord& r = lru_.back().record;
            return Observed{r, PacketObservation{r.len.mean, Fx64{}, Fx64{}}, true};
        }

        Entry& e = *it->second;
        lru_.splice(lru_.end(), lru_, it->second);
        // Out-of-order capture timestamps give a zero gap rather than a negative one.
        const std::int64_t gap = std::max<std::int64_t>(0, p.ts_us - e.record.last_ts_us);
        const PacketObservation obs{fx_from_int(p.pkt_len), fx_from_int(gap),
                                    p.source() == e.record.initiator ? Fx64{} : fx_from_int(1)};
        e.record = update_stats(e.record, obs, p.ts_us);
        return Observed{e.record, obs, false};
    }

    const FlowRecord* find(const FlowKey& key) const {
        auto it = index_.find(key);
        return it == index_.end() ? nullptr : &it->second->record;
    }

    /// Removes every flow idle for longer than the timeout.
    std::size_t evict_idle(std::int64_t now_us) {
        std::size_t evicted = 0;
        for (auto it = lru_.begin(); it != lru_.end();) {
            if (now_us - it->record.last_ts_us > cfg_.idle_timeout_us) {
                index_.erase(it->key);
                it = lru_.erase(it);
                ++evicted;
            } else {
                ++it;
            }
        }
        counters_.idle_evictions += evicted;
        counters_.active = index_.size();
        return evicted;
    }

private:
    struct Entry {
        FlowKey key;
        FlowRecord record;
    };

    void evict_lru() {
        index_.erase(lru_.front().key);
        lru_.pop_front();
        ++counters_.forced_evictions;
    }

    FlowTableConfig cfg_;
    FlowTableCounters counters_;
    std::list<Entry> lru_;
    std::unordered_map<FlowKey, std::list<Entry>::iterator, FlowKeyHash> index_;
};

}  // namespace flowguard
