#pragma once

// Minimal classic pcap (not pcapng) reader and writer. Handles both byte
// orders and microsecond/nanosecond timestamp variants.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowguard/packet.hpp"

namespace flowguard {

class CaptureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kPcapMagicMicro = 0xa1b2c3d4;
inline constexpr std::uint32_t kPcapMagicNano = 0xa1b23c4d;
inline constexpr std::uint32_t kLinktypeEthernet = 1;
inline constexpr std::uint32_t kLinktypeRaw = 101;
inline constexpr std::uint32_t kLinktypeIpv4 = 228;

struct Frame {
    std::int64_t ts_us = 0;
    std::vector<std::uint8_t> bytes;
};

class PcapReader {
public:
    explicit PcapReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw CaptureError("cannot open capture file '" + path + "'");
        unsigned char hdr[24];
        if (!in_.read(reinterpret_cast<char*>(hdr), sizeof hdr))
            throw CaptureError("'" + path + "': file too short for a pcap header");
        const std::uint32_t magic_le = le32(hdr);
        const std::uint32_t magic_be = be32(hdr);
        if (magic_le == kPcapMagicMicro || magic_le == kPcapMagicNano) {
            swapped_ = false;
            nano_ = magic_le == kPcapMagicNano;
        } else if (magic_be == kPcapMagicMicro || magic_be == kPcapMagicNano) {
            swapped_ = true;
            nano_ = magic_be == kPcapMagicNano;
        } else {
            throw CaptureError("'" + path + "': not a pcap file (bad magic)");
        }
        snaplen_ = read32(hdr + 16);
        const std::uint32_t linktype = read32(hdr + 20) & 0x0fffffff;
        switch (linktype) {
            case kLinktypeEthernet: link_ = LinkType::ethernet; break;
            case kLinktypeRaw:
            case kLinktypeIpv4: link_ = LinkType::raw_ip; break;
            default:
                throw CaptureError("'" + path + "': unsupported link type " + std::to_string(linktype));
        }
    }

    LinkType link_type() const noexcept { return link_; }

    /// Next record, or nullopt at a clean end of file. A record cut short by
    /// end-of-file is treated as the end of the capture.
    std::optional<Frame> next() {
        unsigned char rec[16];
        if (!in_.read(reinterpret_cast<char*>(rec), sizeof rec)) return std::nullopt;
        const std::uint32_t sec = read32(rec);
        const std::uint32_t frac = read32(rec + 4);
        const std::uint32_t incl = read32(rec + 8);
        if (incl > kMaxRecord) throw CaptureError("'" + path_ + "': record length " + std::to_string(incl) + " too large");
        Frame f;
        f.ts_us = static_cast<std::int64_t>(sec) * 1000000 + (nano_ ? frac / 1000 : frac);
        f.bytes.resize(incl);
        if (incl > 0 && !in_.read(reinterpret_cast<char*>(f.bytes.data()), incl)) return std::nullopt;
        return f;
    }

private:
    static constexpr std::uint32_t kMaxRecord = 256 * 1024;

    static std::uint32_t le32(const unsigned char* p) {
        return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
    }
    static std::uint32_t be32(const unsigned char* p) {
        return std::uint32_t{p[3]} | (std::uint32_t{p[2]} << 8) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[0]} << 24);
    }
    std::uint32_t read32(const unsigned char* p) const { return swapped_ ? be32(p) : le32(p); }

    std::string path_;
    std::ifstream in_;
    bool swapped_ = false;
    bool nano_ = false;
    std::uint32_t snaplen_ = 0;
    LinkType link_ = LinkType::ethernet;
};

/// Writes little-endian microsecond pcap files.
class PcapWriter {
public:
    PcapWriter(const std::string& path, LinkType link) : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw CaptureError("cannot create capture file '" + path + "'");
        put32(kPcapMagicMicro);
        put16(2);
        put16(4);
        put32(0);
        put32(0);
        put32(65535);
        put32(link == LinkType::ethernet ? kLinktypeEthernet : kLinktypeRaw);
    }

    void write(const Frame& f) {
        put32(static_cast<std::uint32_t>(f.ts_us / 1000000));
        put32(static_cast<std::uint32_t>(f.ts_us % 1000000));
        put32(static_cast<std::uint32_t>(f.bytes.size()));
        put32(static_cast<std::uint32_t>(f.bytes.size()));
        out_.write(reinterpret_cast<const char*>(f.bytes.data()), static_cast<std::streamsize>(f.bytes.size()));
    }

private:
    void put16(std::uint16_t v) {
        const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
        out_.write(reinterpret_cast<const char*>(b), 2);
    }
    void put32(std::uint32_t v) {
        const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        out_.write(reinterpret_cast<const char*>(b), 4);
    }

    std::ofstream out_;
};

inline std::vector<Frame> read_capture(const std::string& path, LinkType* link = nullptr) {
    PcapReader reader(path);
    if (link) *link = reader.link_type();
    std::vector<Frame> frames;
    while (auto f = reader.next()) frames.push_back(std::move(*f));
    return frames;
}

}  // namespace flowguard
