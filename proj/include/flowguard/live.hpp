#pragma once

// Live capture from an AF_PACKET raw socket bound to one interface.

#include <net/if.h>  // before the linux/ headers, which otherwise redefine ifreq
#include <arpa/inet.h>
#include <linux/if_arp.h>
#include <linux/if_ether.h>
#include <linux/if_packet.h>
#include <poll.h>
#include <sys/ioctl.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <stdexcept>
#include <string>

#include "flowguard/datapath.hpp"

namespace flowguard {

class LiveError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Owns a raw packet socket bound to an interface.
class RawSocket {
public:
    explicit RawSocket(const std::string& interface) {
        ifindex_ = if_nametoindex(interface.c_str());
        if (ifindex_ == 0)
            throw LiveError("interface '" + interface + "' does not exist (see `ip link` for available interfaces)");
        fd_ = ::socket(AF_PACKET, SOCK_RAW, htons(ETH_P_ALL));
        if (fd_ < 0) {
            const int err = errno;
            if (err == EPERM || err == EACCES)
                throw LiveError("opening a raw socket requires CAP_NET_RAW: run as root or grant the binary "
                                "`setcap cap_net_raw+ep`");
            throw LiveError(std::string("socket(AF_PACKET): ") + std::strerror(err));
        }

        ifreq req{};
        std::strncpy(req.ifr_name, interface.c_str(), IFNAMSIZ - 1);
        if (::ioctl(fd_, SIOCGIFHWADDR, &req) < 0) {
            const int err = errno;
            ::close(fd_);
            throw LiveError("SIOCGIFHWADDR on '" + interface + "': " + std::strerror(err));
        }
        switch (req.ifr_hwaddr.sa_family) {
            case ARPHRD_ETHER: link_ = LinkType::ethernet; break;
            case ARPHRD_LOOPBACK:
                link_ = LinkType::ethernet;
                loopback_ = true;
                break;
            case ARPHRD_NONE: link_ = LinkType::raw_ip; break;
            default:
                ::close(fd_);
                throw LiveError("interface '" + interface + "' has unsupported hardware type " +
                                std::to_string(req.ifr_hwaddr.sa_family));
        }

        sockaddr_ll addr{};
        addr.sll_family = AF_PACKET;
        addr.sll_protocol = htons(ETH_P_ALL);
        addr.sll_ifindex = static_cast<int>(ifindex_);
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
            const int err = errno;
            ::close(fd_);
            throw LiveError("bind to '" + interface + "': " + std::strerror(err));
        }
    }

    RawSocket(const RawSocket&) = delete;
    RawSocket& operator=(const RawSocket&) = delete;
    ~RawSocket() {
        if (fd_ >= 0) ::close(fd_);
    }

    LinkType link_type() const noexcept { return link_; }

    /// Waits up to timeout_ms for a frame. Returns false on timeout. Loopback
    /// interfaces deliver each packet twice (outgoing and incoming); only the
    /// incoming copy is returned.
    bool receive(std::vector<std::uint8_t>& buf, int timeout_ms) {
        pollfd pfd{fd_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, timeout_ms);
        if (ready <= 0) return false;
        buf.resize(65536);
        sockaddr_ll from{};
        socklen_t len = sizeof from;
        const ssize_t n = ::recvfrom(fd_, buf.data(), buf.size(), MSG_DONTWAIT, reinterpret_cast<sockaddr*>(&from), &len);
        if (n < 0) return false;
        if (loopback_ && from.sll_pkttype == PACKET_OUTGOING) return false;
        buf.resize(static_cast<std::size_t>(n));
        return true;
    }

private:
    int fd_ = -1;
    unsigned ifindex_ = 0;
    LinkType link_ = LinkType::ethernet;
    bool loopback_ = false;
};

/// Captures until duration_s elapses or `stop` becomes true. Timestamps are
/// microseconds of a monotonic clock since the capture started.
inline RunSummary run_live(const std::string& interface, const Classifier& classifier, double duration_s,
                           const DatapathOptions& opts, const VerdictSink& sink,
                           const std::atomic<bool>* stop = nullptr) {
    if (duration_s <= 0) {
        if (if_nametoindex(interface.c_str()) == 0)
            throw LiveError("interface '" + interface + "' does not exist (see `ip link` for available interfaces)");
        RunSummary empty;
        empty.verdicts_per_label.assign(static_cast<std::size_t>(classifier.model().n_classes), 0);
        return empty;
    }
    RawSocket sock(interface);
    const auto start = std::chrono::steady_clock::now();
    const auto deadline = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                      std::chrono::duration<double>(duration_s));
    FrameSource source = [&](Frame& f) {
        while (true) {
            const auto now = std::chrono::steady_clock::now();
            if (now >= deadline || (stop && stop->load())) return false;
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
            if (sock.receive(f.bytes, static_cast<int>(std::clamp<long long>(left, 1, 100)))) {
                f.ts_us = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start)
                              .count();
                return true;
            }
        }
    };
    return run_frames(source, sock.link_type(), classifier, opts, sink);
}

}  // namespace flowguard
