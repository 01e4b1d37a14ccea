#pragma once

// Compiles an emitted program for the host (FG_HOST mode) together with a
// small driver, feeds it packets and reads back per-packet labels and flow
// statistics.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "flowguard/packet.hpp"

namespace flowguard::test_support {

inline constexpr const char* kHostDriver = R"(#define FG_HOST 1
#include FG_PROGRAM
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#define MAX_FLOWS 65536

struct slot {
    struct fg_flow_key key;
    struct fg_flow_record rec;
};

static struct slot table[MAX_FLOWS];
static int n_used;

int main(int argc, char **argv)
{
    long long timeout = argc > 1 ? atoll(argv[1]) : 300000000LL;
    struct fg_packet pkt;
    unsigned int src_ip, dst_ip, src_port, dst_port, proto, len;
    long long ts;

    while (scanf("%lld %u %u %u %u %u %u", &ts, &src_ip, &src_port, &dst_ip, &dst_port, &proto, &len) == 7) {
        struct fg_flow_key key;
        struct slot *s = 0;
        fg_s64 fv[12];
        int i;

        memset(&pkt, 0, sizeof pkt);
        pkt.ts_us = ts;
        pkt.src_ip = src_ip;
        pkt.dst_ip = dst_ip;
        pkt.src_port = (fg_u16)src_port;
        pkt.dst_port = (fg_u16)dst_port;
        pkt.protocol = (fg_u8)proto;
        pkt.pkt_len = (fg_u16)len;
        memset(&key, 0, sizeof key);
        fg_make_key(&key, &pkt);
        for (i = 0; i < n_used; i++)
            if (memcmp(&table[i].key, &key, sizeof key) == 0) {
                s = &table[i];
                break;
            }
        if (!s) {
            if (n_used == MAX_FLOWS)
                return 3;
            s = &table[n_used++];
            memset(s, 0, sizeof *s);
            s->key = key;
        } else if (ts - s->rec.last_ts_us > timeout) {
            memset(&s->rec, 0, sizeof s->rec);
        }
        fg_observe(&s->rec, &pkt, fv);
        printf("%d %llu %lld %lld %lld %lld %lld %lld\n", (int)fg_classify(fv), (unsigned long long)s->rec.pkt_count,
               (long long)s->rec.mean_len, (long long)s->rec.mad_len, (long long)s->rec.mean_iat,
               (long long)s->rec.mad_iat, (long long)s->rec.mean_dir, (long long)s->rec.mad_dir);
    }
    return 0;
}
)";

struct HostRun {
    int status = -1;
    std::vector<std::string> lines;
};

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return out + "'";
}

/// Returns the path of the compiled driver, or an empty string (with the
/// compiler output in `log`) on failure.
inline std::string compile_host_program(const std::string& cc, const std::filesystem::path& dir, const std::string& source,
                                        std::string& log) {
    std::filesystem::create_directories(dir);
    const auto prog = dir / "program.c";
    const auto driver = dir / "driver.c";
    const auto exe = dir / "driver";
    std::ofstream(prog) << source;
    std::ofstream(driver) << kHostDriver;
    const auto out = dir / "cc.log";
    const std::string cmd = shell_quote(cc) + " -std=c99 -O1 -Wall -Wextra -Werror -Wno-unused-function " +
                            "-DFG_PROGRAM='\"" + prog.string() + "\"' -o " + shell_quote(exe.string()) + " " +
                            shell_quote(driver.string()) + " > " + shell_quote(out.string()) + " 2>&1";
    const int rc = std::system(cmd.c_str());
    std::ifstream in(out);
    std::ostringstream buf;
    buf << in.rdbuf();
    log = buf.str();
    return rc == 0 ? exe.string() : std::string();
}

inline HostRun run_host_program(const std::string& exe, const std::vector<ParsedPacket>& packets, std::int64_t timeout_us,
                                const std::filesystem::path& dir) {
    const auto input = dir / "packets.txt";
    {
        std::ofstream in(input);
        for (const auto& p : packets)
            in << p.ts_us << ' ' << p.src_ip.value << ' ' << p.src_port << ' ' << p.dst_ip.value << ' ' << p.dst_port
               << ' ' << unsigned{p.protocol} << ' ' << p.pkt_len << '\n';
    }
    HostRun run;
    const std::string cmd = shell_quote(exe) + " " + std::to_string(timeout_us) + " < " + shell_quote(input.string());
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return run;
    char line[512];
    while (std::fgets(line, sizeof line, pipe)) {
        std::string s(line);
        if (!s.empty() && s.back() == '\n') s.pop_back();
        run.lines.push_back(s);
    }
    run.status = ::pclose(pipe);
    return run;
}

}  // namespace flowguard::test_support
