#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "flowguard/frame_builder.hpp"
#include "flowguard/packet.hpp"

using namespace flowguard;

namespace {

// 60-byte Ethernet/IPv4/UDP frame written out byte by byte:
// 10.0.0.1:1234 -> 10.0.0.2:80, IP total length 46.
std::vector<std::uint8_t> hand_udp_frame() {
    std::vector<std::uint8_t> f = {
        // dst mac, src mac, ethertype 0x0800
        0x02, 0x00, 0x00, 0x00, 0x00, 0x02, 0x02, 0x00, 0x00, 0x00, 0x00, 0x01, 0x08, 0x00,
        // version/ihl, tos, total length 46, id, flags/frag, ttl, proto 17, checksum
        0x45, 0x00, 0x00, 0x2e, 0x00, 0x01, 0x40, 0x00, 0x40, 0x11, 0x00, 0x00,
        // 10.0.0.1, 10.0.0.2
        0x0a, 0x00, 0x00, 0x01, 0x0a, 0x00, 0x00, 0x02,
        // udp: 1234 -> 80, length 26, checksum
        0x04, 0xd2, 0x00, 0x50, 0x00, 0x1a, 0x00, 0x00};
    f.resize(60, 0);
    return f;
}

std::vector<std::uint8_t> hand_icmp_frame() {
    std::vector<std::uint8_t> f = {
        0x02, 0x00, 0x00, 0x00, 0x00, 0x02, 0x02, 0x00, 0x00, 0x00, 0x00, 0x01, 0x08, 0x00,
        0x45, 0x00, 0x00, 0x54, 0x00, 0x02, 0x40, 0x00, 0x40, 0x01, 0x00, 0x00,
        0xc0, 0xa8, 0x01, 0x1e, 0x0a, 0x00, 0x00, 0x01,
        // echo request, code 0, checksum, id, seq
        0x08, 0x00, 0x00, 0x00, 0x12, 0x34, 0x00, 0x01};
    f.resize(98, 0);
    return f;
}

ParsedPacket pkt(const char* src, std::uint16_t sp, const char* dst, std::uint16_t dp, std::uint8_t proto) {
    ParsedPacket p;
    p.src_ip = *parse_ipv4(src);
    p.dst_ip = *parse_ipv4(dst);
    p.src_port = sp;
    p.dst_port = dp;
    p.protocol = proto;
    return p;
}

}  // namespace

TEST(ParsePacket, HandBuiltUdpFrame) {
    const auto f = hand_udp_frame();
    ASSERT_EQ(f.size(), 60u);
    const auto r = parse_packet(f, LinkType::ethernet, 42);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r->src_ip, *parse_ipv4("10.0.0.1"));
    EXPECT_EQ(r->dst_ip, *parse_ipv4("10.0.0.2"));
    EXPECT_EQ(r->src_port, 1234);
    EXPECT_EQ(r->dst_port, 80);
    EXPECT_EQ(r->protocol, 17);
    EXPECT_EQ(r->pkt_len, 46);
    EXPECT_EQ(r->ts_us, 42);
}

TEST(ParsePacket, IcmpHasNoPorts) {
    const auto r = parse_packet(hand_icmp_frame(), LinkType::ethernet);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r->protocol, 1);
    EXPECT_EQ(r->src_port, 0);
    EXPECT_EQ(r->dst_port, 0);
    EXPECT_EQ(r->pkt_len, 84);
}

TEST(ParsePacket, TenByteFrameIsTruncated) {
    const std::vector<std::uint8_t> f(10, 0x45);
    const auto r = parse_packet(f, LinkType::ethernet);
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.skip_reason(), SkipReason::truncated);
    EXPECT_EQ(parse_packet(f, LinkType::raw_ip).skip_reason(), SkipReason::truncated);
}

TEST(ParsePacket, NonIpv4IsNotIp) {
    auto arp = hand_udp_frame();
    arp[12] = 0x08;
    arp[13] = 0x06;
    EXPECT_EQ(parse_packet(arp, LinkType::ethernet).skip_reason(), SkipReason::not_ip);
    auto v6 = hand_udp_frame();
    v6[14] = 0x60;
    EXPECT_EQ(parse_packet(v6, LinkType::ethernet).skip_reason(), SkipReason::not_ip);
    const std::vector<std::uint8_t> raw_v6(40, 0x60);
    EXPECT_EQ(parse_packet(raw_v6, LinkType::raw_ip).skip_reason(), SkipReason::not_ip);
}

TEST(ParsePacket, BadHeaderLengthIsMalformed) {
    auto f = hand_udp_frame();
    f[14] = 0x44;  // ihl 16 bytes
    EXPECT_EQ(parse_packet(f, LinkType::ethernet).skip_reason(), SkipReason::malformed);
    f = hand_udp_frame();
    f[16] = 0x00;
    f[17] = 0x10;  // total length 16 < ihl
    EXPECT_EQ(parse_packet(f, LinkType::ethernet).skip_reason(), SkipReason::malformed);
}

TEST(ParsePacket, VlanTagsAreSkipped) {
    auto f = hand_udp_frame();
    const std::uint8_t outer[4] = {0x88, 0xa8, 0x00, 0x01};
    const std::uint8_t inner[4] = {0x81, 0x00, 0x00, 0x2a};
    f.insert(f.begin() + 12, inner, inner + 4);
    auto r = parse_packet(f, LinkType::ethernet);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r->src_port, 1234);
    f.insert(f.begin() + 12, outer, outer + 4);
    r = parse_packet(f, LinkType::ethernet);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r->dst_port, 80);
}

TEST(ParsePacket, TruncatedTransportGivesZeroPorts) {
    auto f = hand_udp_frame();
    f.resize(14 + 20 + 3);
    const auto r = parse_packet(f, LinkType::ethernet);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r->src_port, 0);
    EXPECT_EQ(r->dst_port, 0);
    EXPECT_EQ(r->pkt_len, 46);  // header length field, not captured bytes
}

TEST(ParsePacket, LaterFragmentsHaveNoPorts) {
    auto f = hand_udp_frame();
    f[14 + 6] = 0x00;
    f[14 + 7] = 0x10;
    const auto r = parse_packet(f, LinkType::ethernet);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r->src_port, 0);
}

TEST(ParsePacket, RawIpLinkType) {
    const auto f = hand_udp_frame();
    const std::vector<std::uint8_t> raw(f.begin() + 14, f.end());
    const auto r = parse_packet(raw, LinkType::raw_ip);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r->dst_port, 80);
}

TEST(ParsePacket, BuilderRoundTrip) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 2000; ++i) {
        FrameSpec s;
        s.src_ip = Ipv4{static_cast<std::uint32_t>(rng())};
        s.dst_ip = Ipv4{static_cast<std::uint32_t>(rng())};
        s.src_port = static_cast<std::uint16_t>(rng());
        s.dst_port = static_cast<std::uint16_t>(rng());
        const std::uint8_t protos[] = {kProtoTcp, kProtoUdp, kProtoIcmp, 47};
        s.protocol = protos[rng() % 4];
        s.ip_len = static_cast<std::uint16_t>(40 + rng() % 1460);
        const LinkType link = rng() % 2 ? LinkType::ethernet : LinkType::raw_ip;
        const auto r = parse_packet(build_frame(s, link), link);
        ASSERT_TRUE(r.ok());
        EXPECT_EQ(r->src_ip, s.src_ip);
        EXPECT_EQ(r->dst_ip, s.dst_ip);
        EXPECT_EQ(r->protocol, s.protocol);
        EXPECT_EQ(r->pkt_len, s.ip_len);
        const bool ports = s.protocol == kProtoTcp || s.protocol == kProtoUdp;
        EXPECT_EQ(r->src_port, ports ? s.src_port : 0);
        EXPECT_EQ(r->dst_port, ports ? s.dst_port : 0);
    }
}

// Every prefix and random corruption of valid frames parses or skips; the
// sanitizers / valgrind would flag any read past the span.
TEST(ParsePacket, FuzzNeverReadsPastFrame) {
    std::mt19937_64 rng(5);
    const auto base = hand_udp_frame();
    for (std::size_t n = 0; n <= base.size(); ++n) {
        std::vector<std::uint8_t> prefix(base.begin(), base.begin() + static_cast<std::ptrdiff_t>(n));
        prefix.shrink_to_fit();
        (void)parse_packet(prefix, LinkType::ethernet);
        (void)parse_packet(prefix, LinkType::raw_ip);
    }
    int parsed = 0;
    for (int i = 0; i < 100000; ++i) {
        std::vector<std::uint8_t> f(rng() % 80);
        for (auto& b : f) b = static_cast<std::uint8_t>(rng());
        if (f.size() > 14 && rng() % 2) {
            f[12] = 0x08;
            f[13] = 0x00;
            f[14] = static_cast<std::uint8_t>(0x40 | (rng() % 16));
        }
        const auto r = parse_packet(f, rng() % 2 ? LinkType::ethernet : LinkType::raw_ip);
        if (r.ok()) {
            ++parsed;
            EXPECT_GE(r->pkt_len, 20);
        }
    }
    EXPECT_GT(parsed, 0);
}

TEST(CanonicalKey, SymmetricForReversedPackets) {
    const auto a = pkt("10.0.0.1", 1000, "10.0.0.2", 80, kProtoTcp);
    EXPECT_EQ(canonical_key(a), canonical_key(reversed(a)));
    std::mt19937_64 rng(9);
    for (int i = 0; i < 10000; ++i) {
        ParsedPacket p;
        p.src_ip = Ipv4{static_cast<std::uint32_t>(rng() % 4)};
        p.dst_ip = Ipv4{static_cast<std::uint32_t>(rng() % 4)};
        p.src_port = static_cast<std::uint16_t>(rng() % 3);
        p.dst_port = static_cast<std::uint16_t>(rng() % 3);
        p.protocol = static_cast<std::uint8_t>(rng());
        const FlowKey k = canonical_key(p);
        ASSERT_EQ(k, canonical_key(reversed(p)));
        ASSERT_LE(k.endpoint_lo, k.endpoint_hi);
        ASSERT_EQ(k.protocol, p.protocol);
        ASSERT_EQ(flow_hash(k), flow_hash(canonical_key(reversed(p))));
    }
}

TEST(CanonicalKey, DegenerateSelfFlow) {
    const auto k = canonical_key(pkt("10.0.0.1", 80, "10.0.0.1", 80, kProtoTcp));
    EXPECT_EQ(k.endpoint_lo, k.endpoint_hi);
}

TEST(CanonicalKey, LexicographicIpThenPort) {
    const auto k = canonical_key(pkt("10.0.0.2", 53, "10.0.0.1", 9999, kProtoUdp));
    EXPECT_EQ(k.endpoint_lo.ip, *parse_ipv4("10.0.0.1"));
    EXPECT_EQ(k.endpoint_lo.port, 9999);
    EXPECT_EQ(k.endpoint_hi.port, 53);
    EXPECT_EQ(k.protocol, kProtoUdp);
    // Same address: ports decide.
    const auto s = canonical_key(pkt("10.0.0.1", 500, "10.0.0.1", 400, kProtoUdp));
    EXPECT_EQ(s.endpoint_lo.port, 400);
}

TEST(Ipv4Text, ParseAndFormat) {
    EXPECT_EQ(to_string(*parse_ipv4("192.168.1.254")), "192.168.1.254");
    for (const char* bad : {"", "1.2.3", "1.2.3.4.5", "256.1.1.1", "1..2.3", "a.b.c.d", "1.2.3.4 "})
        EXPECT_FALSE(parse_ipv4(bad).has_value()) << bad;
}
