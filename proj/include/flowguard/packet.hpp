#pragma once

// Link-layer frame parsing (Ethernet / raw IPv4) and canonical flow keys.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>

namespace flowguard {

enum class LinkType { ethernet, raw_ip };

inline constexpr std::uint8_t kProtoIcmp = 1;
inline constexpr std::uint8_t kProtoTcp = 6;
inline constexpr std::uint8_t kProtoUdp = 17;

/// IPv4 address in host byte order.
struct Ipv4 {
    std::uint32_t value = 0;

    static constexpr Ipv4 from_octets(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) noexcept {
        return Ipv4{(std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d};
    }

    friend constexpr auto operator<=>(Ipv4, Ipv4) noexcept = default;
};

inline std::string to_string(Ipv4 ip) {
    return std::to_string(ip.value >> 24) + "." + std::to_string((ip.value >> 16) & 0xff) + "." +
           std::to_string((ip.value >> 8) & 0xff) + "." + std::to_string(ip.value & 0xff);
}

inline std::optional<Ipv4> parse_ipv4(std::string_view text) {
    std::uint32_t value = 0;
    int octets = 0;
    std::size_t i = 0;
    while (octets < 4) {
        if (i >= text.size() || text[i] < '0' || text[i] > '9') return std::nullopt;
        std::uint32_t octet = 0;
        std::size_t n = 0;
        while (i < text.size() && text[i] >= '0' && text[i] <= '9' && n < 4) {
            octet = octet * 10 + static_cast<std::uint32_t>(text[i] - '0');
            ++i;
            ++n;
        }
        if (octet > 255 || n > 3) return std::nullopt;
        value = (value << 8) | octet;
        ++octets;
        if (octets < 4) {
            if (i >= text.size() || text[i] != '.') return std::nullopt;
            ++i;
        }
    }
    if (i != text.size()) return std::nullopt;
    return Ipv4{value};
}

struct Endpoint {
    Ipv4 ip;
    std::uint16_t port = 0;

    friend constexpr auto operator<=>(const Endpoint&, const Endpoint&) noexcept = default;
};

struct ParsedPacket {
    std::int64_t ts_us = 0;
    Ipv4 src_ip;
    Ipv4 dst_ip;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::uint8_t protocol = 0;
    std::uint16_t pkt_len = 0;  // IPv4 total length

    Endpoint source() const noexcept { return {src_ip, src_port}; }
    Endpoint destination() const noexcept { return {dst_ip, dst_port}; }

    friend bool operator==(const ParsedPacket&, const ParsedPacket&) = default;
};

inline ParsedPacket reversed(const ParsedPacket& p) {
    ParsedPacket r = p;
    std::swap(r.src_ip, r.dst_ip);
    std::swap(r.src_port, r.dst_port);
    return r;
}

enum class SkipReason { not_ip, truncated, malformed };

inline const char* to_string(SkipReason r) noexcept {
    switch (r) {
        case SkipReason::not_ip: return "not_ip";
        case SkipReason::truncated: return "truncated";
        case SkipReason::malformed: return "malformed";
    }
    return "unknown";
}

/// Either a parsed packet or the reason the frame was skipped.
class ParseResult {
public:
    ParseResult(ParsedPacket p) : packet_(p) {}  // NOLINT(google-explicit-constructor)
    ParseResult(SkipReason r) : skip_(r) {}      // NOLINT(google-explicit-constructor)

    bool ok() const noexcept { return packet_.has_value(); }
    explicit operator bool() const noexcept { return ok(); }
    const ParsedPacket& packet() const { return packet_.value(); }
    const ParsedPacket* operator->() const { return &packet_.value(); }
    SkipReason skip_reason() const noexcept { return skip_; }

private:
    std::optional<ParsedPacket> packet_;
    SkipReason skip_ = SkipReason::malformed;
};

namespace detail {

inline std::uint16_t load_be16(std::span<const std::uint8_t> b, std::size_t off) noexcept {
    return static_cast<std::uint16_t>((b[off] << 8) | b[off + 1]);
}

inline std::uint32_t load_be32(std::span<const std::uint8_t> b, std::size_t off) noexcept {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           b[off + 3];
}

}  // namespace detail

inline constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;
inline constexpr std::uint16_t kEtherTypeVlan = 0x8100;
inline constexpr std::uint16_t kEtherTypeQinQ = 0x88a8;

/// Extracts the IDS fields from one frame. Never reads past frame.size().
/// Transport ports are zero for non-TCP/UDP protocols, non-first fragments and
/// truncated transport headers.
inline ParseResult parse_packet(std::span<const std::uint8_t> frame, LinkType link, std::int64_t ts_us = 0) {
    using detail::load_be16;
    using detail::load_be32;

    std::size_t off = 0;
    if (link == LinkType::ethernet) {
        if (frame.size() < 14) return SkipReason::truncated;
        std::uint16_t ether_type = load_be16(frame, 12);
        off = 14;
        // At most two stacked VLAN tags.
        for (int tags = 0; tags < 2 && (ether_type == kEtherTypeVlan || ether_type == kEtherTypeQinQ); ++tags) {
            if (frame.size() < off + 4) return SkipReason::truncated;
            ether_type = load_be16(frame, off + 2);
            off += 4;
        }
        if (ether_type != kEtherTypeIpv4) return SkipReason::not_ip;
    }

    if (frame.size() < off + 20) {
        if (link == LinkType::raw_ip && !frame.empty() && (frame[0] >> 4) != 4) return SkipReason::not_ip;
        return SkipReason::truncated;
    }
    const auto ip = frame.subspan(off);
    if ((ip[0] >> 4) != 4) return SkipReason::not_ip;
    const std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0f) * 4;
    if (ihl < 20) return SkipReason::malformed;
    if (ip.size() < ihl) return SkipReason::truncated;
    const std::uint16_t total_len = load_be16(ip, 2);
    if (total_len < ihl) return SkipReason::malformed;

    ParsedPacket p;
    p.ts_us = ts_us;
    p.pkt_len = total_len;
    p.protocol = ip[9];
    p.src_ip = Ipv4{load_be32(ip, 12)};
    p.dst_ip = Ipv4{load_be32(ip, 16)};

    const std::uint16_t frag_offset = load_be16(ip, 6) & 0x1fff;
    if ((p.protocol == kProtoTcp || p.protocol == kProtoUdp) && frag_offset == 0 && ip.size() >= ihl + 4) {
        p.src_port = load_be16(ip, ihl);
        p.dst_port = load_be16(ip, ihl + 2);
    }
    return p;
}

struct FlowKey {
    Endpoint endpoint_lo;
    Endpoint endpoint_hi;
    std::uint8_t protocol = 0;

    friend constexpr auto operator<=>(const FlowKey&, const FlowKey&) noexcept = default;
};

inline FlowKey canonical_key(const ParsedPacket& p) noexcept {
    const Endpoint a = p.source();
    const Endpoint b = p.destination();
    return a <= b ? FlowKey{a, b, p.protocol} : FlowKey{b, a, p.protocol};
}

/// Platform-independent 64-bit mix of a flow key (used for sharding, so it must
/// not depend on std::hash).
inline std::uint64_t flow_hash(const FlowKey& k) noexcept {
    auto mix = [](std::uint64_t x) {
        x ^= x >> 33;
        x *= 0xff51afd7ed558ccdULL;
        x ^= x >> 33;
        x *= 0xc4ceb9fe1a85ec53ULL;
        x ^= x >> 33;
        return x;
    };
    std::uint64_t h = mix((std::uint64_t{k.endpoint_lo.ip.value} << 32) | k.endpoint_hi.ip.value);
    h = mix(h ^ ((std::uint64_t{k.endpoint_lo.port} << 24) | (std::uint64_t{k.endpoint_hi.port} << 8) | k.protocol));
    return h;
}

struct FlowKeyHash {
    std::size_t operator()(const FlowKey& k) const noexcept { return static_cast<std::size_t>(flow_hash(k)); }
};

}  // namespace flowguard
