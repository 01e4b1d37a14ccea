// Regenerates the bundled captures and the generated sample model under
// data/. Output is deterministic; the committed files came from this tool.
//
//   make_fixtures <data-dir>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <vector>

#include "flowguard/frame_builder.hpp"
#include "flowguard/pcap.hpp"
#include "model_gen.hpp"

namespace fg = flowguard;

namespace {

struct Event {
    std::int64_t ts_us;
    std::vector<std::uint8_t> bytes;
};

fg::FrameSpec spec(const char* src, std::uint16_t sport, const char* dst, std::uint16_t dport, std::uint8_t proto,
                   std::uint16_t len, std::uint8_t flags = 0x10) {
    fg::FrameSpec s;
    s.src_ip = *fg::parse_ipv4(src);
    s.dst_ip = *fg::parse_ipv4(dst);
    s.src_port = sport;
    s.dst_port = dport;
    s.protocol = proto;
    s.ip_len = len;
    s.tcp_flags = flags;
    return s;
}

fg::FrameSpec flipped(fg::FrameSpec s, std::uint16_t len) {
    std::swap(s.src_ip, s.dst_ip);
    std::swap(s.src_port, s.dst_port);
    s.ip_len = len;
    return s;
}

std::vector<Event> mixed_ethernet(std::mt19937_64& rng) {
    std::vector<Event> ev;
    const auto eth = fg::LinkType::ethernet;
    auto add = [&](std::int64_t ts, const fg::FrameSpec& s) { ev.push_back({ts, fg::build_frame(s, eth)}); };

    // Web sessions: small requests, large responses.
    for (int c = 0; c < 12; ++c) {
        auto req = spec("192.168.1.10", static_cast<std::uint16_t>(40000 + c), "10.0.0.5", c % 3 ? 443 : 80,
                        fg::kProtoTcp, 60, 0x02);
        std::int64_t t = 1'000'000 + c * 250'000;
        add(t, req);
        add(t += 180, flipped(req, 60));
        for (int k = 0; k < 30; ++k) {
            req.tcp_flags = 0x18;
            add(t += 400 + static_cast<std::int64_t>(rng() % 3000), [&] {
                auto r = req;
                r.ip_len = static_cast<std::uint16_t>(80 + rng() % 400);
                return r;
            }());
            const int burst = 1 + static_cast<int>(rng() % 4);
            for (int b = 0; b < burst; ++b)
                add(t += 50 + static_cast<std::int64_t>(rng() % 200),
                    flipped(req, static_cast<std::uint16_t>(b + 1 < burst ? 1500 : 200 + rng() % 1300)));
        }
    }

    // Port sweep: lone SYNs, a few answered with RST.
    for (int p = 1; p <= 400; ++p) {
        const auto syn = spec("192.168.1.66", 55000, "10.0.0.5", static_cast<std::uint16_t>(p), fg::kProtoTcp, 44, 0x02);
        const std::int64_t t = 2'000'000 + p * 900;
        add(t, syn);
        if (p % 7 == 0) add(t + 120, flipped(syn, 40));
    }

    // UDP flood at a fixed small size and tight spacing.
    for (int k = 0; k < 900; ++k)
        add(3'000'000 + k * 20, spec("172.16.0.9", 5353, "10.0.0.7", 53, fg::kProtoUdp, 64));

    // Ordinary DNS lookups.
    for (int q = 0; q < 60; ++q) {
        const auto query = spec("192.168.1.20", static_cast<std::uint16_t>(33000 + q % 5), "10.0.0.53", 53,
                                fg::kProtoUdp, static_cast<std::uint16_t>(60 + rng() % 30));
        const std::int64_t t = 500'000 + q * 70'000 + static_cast<std::int64_t>(rng() % 10'000);
        add(t, query);
        add(t + 900 + static_cast<std::int64_t>(rng() % 4000), flipped(query, static_cast<std::uint16_t>(90 + rng() % 300)));
    }

    // Pings in both directions.
    for (int k = 0; k < 40; ++k) {
        const auto echo = spec("192.168.1.30", 0, "10.0.0.1", 0, fg::kProtoIcmp, 84);
        add(800'000 + k * 100'000, echo);
        add(800'000 + k * 100'000 + 350, flipped(echo, 84));
    }

    // A flow that goes quiet past the default idle timeout and resumes.
    const auto idle = spec("192.168.1.40", 41000, "10.0.0.9", 8080, fg::kProtoTcp, 120);
    for (int k = 0; k < 5; ++k) add(4'000'000 + k * 1000, idle);
    for (int k = 0; k < 5; ++k) add(404'000'000 + k * 1000, flipped(idle, 300));

    // Non-IPv4 and damaged frames.
    {
        std::vector<std::uint8_t> arp(60, 0);
        arp[12] = 0x08;
        arp[13] = 0x06;
        for (int k = 0; k < 6; ++k) ev.push_back({1'500'000 + k * 400'000, arp});
        std::vector<std::uint8_t> v6(74, 0);
        v6[12] = 0x86;
        v6[13] = 0xdd;
        v6[14] = 0x60;
        ev.push_back({2'100'000, v6});
        auto cut = fg::build_frame(spec("192.168.1.50", 1000, "10.0.0.2", 2000, fg::kProtoUdp, 200), eth);
        cut.resize(24);
        ev.push_back({2'200'000, cut});
        auto bad_ihl = fg::build_frame(spec("192.168.1.50", 1000, "10.0.0.2", 2000, fg::kProtoUdp, 200), eth);
        bad_ihl[14] = 0x43;
        ev.push_back({2'300'000, bad_ihl});
    }

    // 802.1Q tagged UDP, and a non-first fragment (no ports).
    {
        auto f = fg::build_frame(spec("192.168.2.5", 7000, "10.0.0.8", 9000, fg::kProtoUdp, 300), eth);
        const std::uint8_t tag[4] = {0x81, 0x00, 0x00, 0x2a};
        f.insert(f.begin() + 12, tag, tag + 4);
        for (int k = 0; k < 4; ++k) ev.push_back({2'400'000 + k * 10'000, f});
        auto frag = fg::build_frame(spec("192.168.2.6", 7001, "10.0.0.8", 9001, fg::kProtoUdp, 600), eth);
        frag[14 + 6] = 0x00;
        frag[14 + 7] = 0xb9;  // offset 185 * 8
        ev.push_back({2'500'000, frag});
    }

    std::stable_sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.ts_us < b.ts_us; });
    // One capture timestamp that runs backwards.
    std::swap(ev[ev.size() / 2].ts_us, ev[ev.size() / 2 + 1].ts_us);
    return ev;
}

std::vector<Event> raw_ip(std::mt19937_64& rng) {
    std::vector<Event> ev;
    const auto raw = fg::LinkType::raw_ip;
    for (int f = 0; f < 8; ++f) {
        auto s = spec("10.8.0.2", static_cast<std::uint16_t>(50000 + f), "10.8.0.1", f % 2 ? 1194 : 22,
                      f % 2 ? fg::kProtoUdp : fg::kProtoTcp, 100);
        std::int64_t t = 10'000 * f;
        for (int k = 0; k < 60; ++k) {
            t += 100 + static_cast<std::int64_t>(rng() % 5000);
            const bool back = rng() % 3 == 0;
            const auto len = static_cast<std::uint16_t>(40 + rng() % 1400);
            ev.push_back({t, fg::build_frame(back ? flipped(s, len) : [&] {
                auto r = s;
                r.ip_len = len;
                return r;
            }(), raw)});
        }
    }
    std::stable_sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.ts_us < b.ts_us; });
    return ev;
}

void write(const std::filesystem::path& path, fg::LinkType link, const std::vector<Event>& ev) {
    fg::PcapWriter w(path.string(), link);
    for (const auto& e : ev) w.write(fg::Frame{e.ts_us, e.bytes});
    std::cout << path.string() << ": " << ev.size() << " frames\n";
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_fixtures <data-dir>\n";
        return 2;
    }
    const std::filesystem::path root = argv[1];
    std::filesystem::create_directories(root / "captures");
    std::filesystem::create_directories(root / "models");
    std::mt19937_64 rng(20240611);
    write(root / "captures" / "mixed.pcap", fg::LinkType::ethernet, mixed_ethernet(rng));
    write(root / "captures" / "tunnel_raw_ip.pcap", fg::LinkType::raw_ip, raw_ip(rng));

    fg::test_support::TreeGenOptions opt;
    opt.thresholds = fg::test_support::ThresholdMode::decimal;
    opt.n_classes = 4;
    opt.split_probability = 0.9;
    const auto deep = fg::test_support::random_tree(rng, opt);
    std::ofstream(root / "models" / "random_deep.json") << fg::to_document(deep);
    std::cout << "random_deep.json: depth " << deep.depth << ", " << deep.n_leaves << " leaves\n";
    return 0;
}
