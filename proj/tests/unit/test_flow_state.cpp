#include <gtest/gtest.h>

#include <random>

#include "flowguard/flow_state.hpp"
#include "oracle.hpp"

using namespace flowguard;

namespace {

ParsedPacket udp(std::int64_t ts, std::uint16_t len, bool reverse = false, std::uint16_t sport = 1234) {
    ParsedPacket p;
    p.ts_us = ts;
    p.src_ip = *parse_ipv4("10.0.0.1");
    p.dst_ip = *parse_ipv4("10.0.0.2");
    p.src_port = sport;
    p.dst_port = 80;
    p.protocol = kProtoUdp;
    p.pkt_len = len;
    return reverse ? reversed(p) : p;
}

Fx64 fx(std::int64_t i) { return fx_from_int(i); }

}  // namespace

TEST(Observe, FirstPacket) {
    FlowTable t;
    const auto o = t.observe(udp(0, 100));
    EXPECT_TRUE(o.new_flow);
    EXPECT_EQ(o.snapshot.pkt_count, 1u);
    EXPECT_EQ(o.snapshot.mean_len(), fx(100));
    EXPECT_EQ(o.snapshot.mad_len(), Fx64{});
    EXPECT_EQ(o.snapshot.mean_iat(), Fx64{});
    EXPECT_EQ(o.snapshot.mad_iat(), Fx64{});
    EXPECT_EQ(o.snapshot.mean_dir(), Fx64{});
    EXPECT_EQ(o.snapshot.mad_dir(), Fx64{});
    EXPECT_EQ(o.obs, (PacketObservation{fx(100), Fx64{}, Fx64{}}));
    EXPECT_EQ(o.snapshot.initiator.port, 1234);
}

TEST(Observe, SecondPacketSameDirection) {
    FlowTable t;
    t.observe(udp(0, 100));
    const auto o = t.observe(udp(1000, 200));
    EXPECT_FALSE(o.new_flow);
    EXPECT_EQ(o.snapshot.pkt_count, 2u);
    EXPECT_EQ(o.snapshot.mean_len(), fx(150));
    EXPECT_EQ(o.snapshot.mad_len(), fx(25));
    EXPECT_EQ(o.snapshot.mean_iat(), fx(500));
    EXPECT_EQ(o.snapshot.mad_iat(), fx(250));
    EXPECT_EQ(o.snapshot.mean_dir(), Fx64{});
    EXPECT_EQ(o.snapshot.mad_dir(), Fx64{});
    EXPECT_EQ(o.obs.iat, fx(1000));
}

TEST(Observe, SecondPacketReverseDirection) {
    FlowTable t;
    t.observe(udp(0, 100));
    const auto o = t.observe(udp(10, 100, true));
    EXPECT_EQ(o.obs.direction, fx(1));
    EXPECT_EQ(o.snapshot.mean_dir(), fx_from_decimal("0.5"));
    EXPECT_EQ(t.size(), 1u);
}

TEST(UpdateStats, ThirdPacketTruncates) {
    FlowTable t;
    t.observe(udp(0, 100));
    t.observe(udp(10, 200));
    const auto o = t.observe(udp(20, 100));
    // 150 + trunc(-50 * 65536 / 3) / 65536 in raw units.
    EXPECT_EQ(o.snapshot.mean_len().raw, 9830400 - 1092266);
    EXPECT_EQ(o.snapshot.mean_len().raw, 8738134);
}

TEST(UpdateStats, ObservationAtMeanDecaysMad) {
    FlowRecord r;
    r.pkt_count = 4;
    r.len = {fx(100), fx(9)};
    const auto out = update_stats(r, PacketObservation{fx(100), Fx64{}, Fx64{}}, 0);
    EXPECT_EQ(out.len.mean, fx(100));
    // mad + (0 - mad) / 5 = 9 - 1.8 (truncated toward zero in Q16)
    EXPECT_EQ(out.len.mad.raw, 9 * 65536 - (9 * 65536) / 5);
    EXPECT_EQ(out.pkt_count, 5u);
}

TEST(UpdateStats, IdenticalPacketsKeepZeroDeviation) {
    FlowTable t;
    for (int k = 0; k < 20; ++k) {
        const auto o = t.observe(udp(k * 250, 512));
        EXPECT_EQ(o.snapshot.mad_len(), Fx64{});
        if (k >= 1) {
            EXPECT_EQ(o.snapshot.mean_len(), fx(512));
        }
    }
}

TEST(UpdateStats, ConstantSpacingConvergesWithoutOvershoot) {
    // iat sequence 0, d, d, d...: mean approaches d from below, mad stays >= 0.
    FlowTable t;
    for (int k = 0; k < 50; ++k) {
        const auto o = t.observe(udp(k * 1000, 64));
        EXPECT_LE(o.snapshot.mean_iat(), fx(1000));
        EXPECT_GE(o.snapshot.mad_iat().raw, 0);
    }
}

TEST(UpdateStats, MatchesRationalOracle) {
    std::mt19937_64 rng(21);
    for (int flow = 0; flow < 300; ++flow) {
        FlowTable t;
        test_support::OracleState st;
        std::int64_t ts = static_cast<std::int64_t>(rng() % 1'000'000);
        const int n = 1 + static_cast<int>(rng() % 100);
        for (int k = 0; k < n; ++k) {
            if (k > 0) ts += static_cast<std::int64_t>(rng() % 10'000'001);
            const auto len = static_cast<std::uint16_t>(rng() % 65536);
            const bool rev = k > 0 && rng() % 3 == 0;
            const auto o = t.observe(udp(ts, len, rev));
            test_support::oracle_step(st, {ts, len, rev});
            ASSERT_EQ(o.snapshot.mean_len().raw, test_support::to_raw(st.len.mean()));
            ASSERT_EQ(o.snapshot.mad_len().raw, test_support::to_raw(st.len.mad()));
            ASSERT_EQ(o.snapshot.mean_iat().raw, test_support::to_raw(st.iat.mean()));
            ASSERT_EQ(o.snapshot.mad_iat().raw, test_support::to_raw(st.iat.mad()));
            ASSERT_EQ(o.snapshot.mean_dir().raw, test_support::to_raw(st.dir.mean()));
            ASSERT_EQ(o.snapshot.mad_dir().raw, test_support::to_raw(st.dir.mad()));
        }
    }
}

TEST(UpdateStats, Invariants) {
    std::mt19937_64 rng(23);
    for (int flow = 0; flow < 200; ++flow) {
        FlowTable t;
        std::int64_t ts = 0;
        std::uint16_t lo = 65535, hi = 0;
        for (int k = 0; k < 60; ++k) {
            ts += static_cast<std::int64_t>(rng() % 5000);
            const auto len = static_cast<std::uint16_t>(20 + rng() % 1481);
            lo = std::min(lo, len);
            hi = std::max(hi, len);
            const auto o = t.observe(udp(ts, len, rng() % 2 == 0 && k > 0));
            ASSERT_GE(o.snapshot.mean_len(), fx(lo));
            ASSERT_LE(o.snapshot.mean_len(), fx(hi));
            ASSERT_GE(o.snapshot.mean_dir().raw, 0);
            ASSERT_LE(o.snapshot.mean_dir(), fx(1));
            ASSERT_GE(o.snapshot.mad_len().raw, 0);
            ASSERT_GE(o.snapshot.mad_iat().raw, 0);
            ASSERT_GE(o.snapshot.mad_dir().raw, 0);
        }
    }
}

TEST(Observe, Deterministic) {
    std::mt19937_64 rng(25);
    std::vector<ParsedPacket> seq;
    for (int k = 0; k < 2000; ++k)
        seq.push_back(udp(k * 37, static_cast<std::uint16_t>(rng() % 1500), rng() % 2, static_cast<std::uint16_t>(rng() % 20)));
    FlowTable a, b;
    for (const auto& p : seq) ASSERT_EQ(a.observe(p).snapshot, b.observe(p).snapshot);
}

TEST(Observe, OutOfOrderTimestampGivesZeroGap) {
    FlowTable t;
    t.observe(udp(5000, 100));
    const auto o = t.observe(udp(4000, 100));
    EXPECT_EQ(o.obs.iat, Fx64{});
    EXPECT_EQ(o.snapshot.last_ts_us, 5000);
    const auto next = t.observe(udp(6000, 100));
    EXPECT_EQ(next.obs.iat, fx(1000));
}

TEST(FlowTable, NeverExceedsCapacity) {
    FlowTable t(FlowTableConfig{64, 300'000'000});
    for (int k = 0; k < 64 + 500; ++k) {
        t.observe(udp(k, 100, false, static_cast<std::uint16_t>(k)));
        ASSERT_LE(t.size(), 64u);
        ASSERT_LE(t.counters().active, 64u);
    }
    EXPECT_EQ(t.counters().inserts, 564u);
    EXPECT_EQ(t.counters().forced_evictions, 500u);
}

TEST(FlowTable, ForcedEvictionTakesLeastRecentlyUpdated) {
    FlowTable t(FlowTableConfig{2, 300'000'000});
    t.observe(udp(0, 100, false, 1));
    t.observe(udp(1, 100, false, 2));
    t.observe(udp(2, 100, false, 1));  // flow 1 refreshed; flow 2 is now oldest
    t.observe(udp(3, 100, false, 3));
    EXPECT_NE(t.find(canonical_key(udp(0, 100, false, 1))), nullptr);
    EXPECT_EQ(t.find(canonical_key(udp(0, 100, false, 2))), nullptr);
    EXPECT_NE(t.find(canonical_key(udp(0, 100, false, 3))), nullptr);
}

TEST(EvictIdle, Examples) {
    FlowTable empty;
    EXPECT_EQ(empty.evict_idle(1'000'000'000), 0u);

    FlowTable one(FlowTableConfig{16, 300'000'000});
    one.observe(udp(0, 100));
    EXPECT_EQ(one.evict_idle(400'000'000), 1u);
    EXPECT_EQ(one.size(), 0u);

    FlowTable two(FlowTableConfig{16, 300'000'000});
    two.observe(udp(0, 100, false, 1));
    two.observe(udp(350'000'000, 100, false, 2));
    EXPECT_EQ(two.evict_idle(400'000'000), 1u);
    EXPECT_EQ(two.size(), 1u);
    EXPECT_NE(two.find(canonical_key(udp(0, 100, false, 2))), nullptr);
    EXPECT_EQ(two.counters().idle_evictions, 1u);
}

TEST(EvictIdle, BoundaryIsStrict) {
    FlowTable t(FlowTableConfig{16, 1000});
    t.observe(udp(0, 100));
    EXPECT_EQ(t.evict_idle(1000), 0u);
    EXPECT_EQ(t.evict_idle(1001), 1u);
}

TEST(Observe, IdleFlowRestartsWithoutSweep) {
    FlowTable t(FlowTableConfig{16, 1000});
    t.observe(udp(0, 100));
    t.observe(udp(500, 300));
    const auto o = t.observe(udp(5000, 700, true));
    EXPECT_TRUE(o.new_flow);
    EXPECT_EQ(o.snapshot.pkt_count, 1u);
    EXPECT_EQ(o.snapshot.mean_len(), fx(700));
    EXPECT_EQ(o.snapshot.initiator.port, 80);  // the responder now starts the flow
    EXPECT_EQ(t.counters().idle_evictions, 1u);
}
