#pragma once

// Synthesizes well-formed IPv4 frames. Used by the traffic generator, the
// fixture tool and tests.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "flowguard/packet.hpp"

namespace flowguard {

struct FrameSpec {
    Ipv4 src_ip;
    Ipv4 dst_ip;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    std::uint8_t protocol = kProtoUdp;
    std::uint16_t ip_len = 64;  // IPv4 total length; clamped up to the headers' size
    std::uint8_t tcp_flags = 0x10;
};

namespace detail {

inline void store_be16(std::vector<std::uint8_t>& b, std::size_t off, std::uint16_t v) {
    b[off] = static_cast<std::uint8_t>(v >> 8);
    b[off + 1] = static_cast<std::uint8_t>(v);
}

inline void store_be32(std::vector<std::uint8_t>& b, std::size_t off, std::uint32_t v) {
    store_be16(b, off, static_cast<std::uint16_t>(v >> 16));
    store_be16(b, off + 2, static_cast<std::uint16_t>(v));
}

inline std::uint16_t ip_checksum(const std::uint8_t* hdr, std::size_t len) {
    std::uint32_t sum = 0;
    for (std::size_t i = 0; i + 1 < len; i += 2) sum += static_cast<std::uint32_t>((hdr[i] << 8) | hdr[i + 1]);
    while (sum >> 16) sum = (sum & 0xffff) + (sum >> 16);
    return static_cast<std::uint16_t>(~sum);
}

}  // namespace detail

inline std::uint16_t transport_header_len(std::uint8_t protocol) {
    switch (protocol) {
        case kProtoTcp: return 20;
        case kProtoUdp: return 8;
        case kProtoIcmp: return 8;
        default: return 0;
    }
}

/// Builds a complete frame. The payload is zero-filled so the captured length
/// matches ip_len (plus the link header, padded to 60 bytes for Ethernet).
inline std::vector<std::uint8_t> build_frame(const FrameSpec& s, LinkType link) {
    using detail::store_be16;
    using detail::store_be32;
    const std::uint16_t min_len = static_cast<std::uint16_t>(20 + transport_header_len(s.protocol));
    const std::uint16_t ip_len = std::max(s.ip_len, min_len);
    const std::size_t l2 = link == LinkType::ethernet ? 14 : 0;
    std::vector<std::uint8_t> b(std::max<std::size_t>(l2 + ip_len, link == LinkType::ethernet ? 60 : 0), 0);

    if (link == LinkType::ethernet) {
        const std::uint8_t dst_mac[6] = {0x02, 0x00, 0x00, 0x00, 0x00, 0x02};
        const std::uint8_t src_mac[6] = {0x02, 0x00, 0x00, 0x00, 0x00, 0x01};
        std::copy(dst_mac, dst_mac + 6, b.begin());
        std::copy(src_mac, src_mac + 6, b.begin() + 6);
        store_be16(b, 12, kEtherTypeIpv4);
    }

    const std::size_t ip = l2;
    b[ip] = 0x45;
    store_be16(b, ip + 2, ip_len);
    b[ip + 6] = 0x40;  // DF
    b[ip + 8] = 64;
    b[ip + 9] = s.protocol;
    store_be32(b, ip + 12, s.src_ip.value);
    store_be32(b, ip + 16, s.dst_ip.value);
    store_be16(b, ip + 10, detail::ip_checksum(&b[ip], 20));

    const std::size_t l4 = ip + 20;
    switch (s.protocol) {
        case kProtoTcp:
            store_be16(b, l4, s.src_port);
            store_be16(b, l4 + 2, s.dst_port);
            b[l4 + 12] = 0x50;
            b[l4 + 13] = s.tcp_flags;
            store_be16(b, l4 + 14, 65535);
            break;
        case kProtoUdp:
            store_be16(b, l4, s.src_port);
            store_be16(b, l4 + 2, s.dst_port);
            store_be16(b, l4 + 4, static_cast<std::uint16_t>(ip_len - 20));
            break;
        case kProtoIcmp:
            b[l4] = 8;  // echo request
            break;
        default:
            break;
    }
    return b;
}

}  // namespace flowguard
