#pragma once

// Lowers a validated TreeModel to a flat node table walked by one counted
// loop, and emits a restricted-C XDP program (integer-only, bounded, every
// array index clamped) that tracks flow statistics and classifies packets.
//
// The emitted source also compiles for the host with -DFG_HOST, exposing
// fg_observe() and fg_classify() so tests can run it against the userspace
// pipeline.

#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowguard/constraint_check.hpp"
#include "flowguard/dt_model.hpp"
#include "flowguard/features.hpp"

namespace flowguard {

class EmitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FlatNode {
    std::int32_t feature_idx = kLeaf;
    std::int64_t threshold_raw = 0;
    std::int32_t left = 0;
    std::int32_t right = 0;
    std::int32_t label = 0;

    friend bool operator==(const FlatNode&, const FlatNode&) = default;
};

struct FlattenedProgram {
    std::vector<FlatNode> nodes;  // breadth-first order, root at 0
    int loop_bound = 0;
    int n_classes = 2;
    int n_leaves = 0;
    std::vector<std::string> comments;  // per node, e.g. "pkt_len <= 100"

    std::size_t n_nodes() const noexcept { return nodes.size(); }
};

/// Renumbers the tree breadth-first; loop_bound is the tree depth.
inline FlattenedProgram flatten(const TreeModel& model) {
    FlattenedProgram prog;
    prog.loop_bound = model.depth;
    prog.n_classes = model.n_classes;
    prog.n_leaves = model.n_leaves;

    std::vector<std::int32_t> order{0};
    std::vector<std::int32_t> new_index(model.nodes.size(), -1);
    new_index[0] = 0;
    for (std::size_t head = 0; head < order.size(); ++head) {
        const TreeNode& node = model.nodes[static_cast<std::size_t>(order[head])];
        if (node.is_leaf()) continue;
        for (std::int32_t child : {node.left, node.right}) {
            new_index[static_cast<std::size_t>(child)] = static_cast<std::int32_t>(order.size());
            order.push_back(child);
        }
    }

    prog.nodes.reserve(order.size());
    prog.comments.reserve(order.size());
    for (std::int32_t old : order) {
        const auto o = static_cast<std::size_t>(old);
        const TreeNode& node = model.nodes[o];
        FlatNode flat;
        if (node.is_leaf()) {
            flat.label = node.label;
            prog.comments.push_back("leaf: class " + std::to_string(node.label));
        } else {
            flat.feature_idx = node.feature_idx;
            flat.threshold_raw = node.threshold.raw;
            flat.left = new_index[static_cast<std::size_t>(node.left)];
            flat.right = new_index[static_cast<std::size_t>(node.right)];
            const std::string text = o < model.threshold_text.size() && !model.threshold_text[o].empty()
                                         ? model.threshold_text[o]
                                         : fx_to_decimal(node.threshold);
            prog.comments.push_back(std::string(kFeatureNames[static_cast<std::size_t>(node.feature_idx)]) +
                                    " <= " + text);
        }
        prog.nodes.push_back(flat);
    }
    return prog;
}

/// The counted-loop walk the emitted program performs, with the same index
/// clamping.
inline std::int32_t walk(const FlattenedProgram& prog, const FeatureVector& fv) noexcept {
    const auto n = static_cast<std::uint32_t>(prog.nodes.size());
    auto clamp = [](std::uint32_t x, std::uint32_t bound) { return x < bound ? x : bound - 1; };
    std::uint32_t idx = 0;
    for (int step = 0; step < prog.loop_bound; ++step) {
        const FlatNode& node = prog.nodes[clamp(idx, n)];
        if (node.feature_idx < 0) break;
        const Fx64 value = fv[clamp(static_cast<std::uint32_t>(node.feature_idx), kNumFeatures)];
        idx = static_cast<std::uint32_t>(value.raw <= node.threshold_raw ? node.left : node.right);
    }
    return prog.nodes[clamp(idx, n)].label;
}

/// Structural checks on the table itself (the emitted-source checker covers
/// the text form).
inline ConstraintReport check_constraints(const FlattenedProgram& prog, int max_depth = ModelLimits{}.max_depth) {
    ConstraintReport report;
    const auto n = static_cast<std::int64_t>(prog.nodes.size());
    if (n == 0) {
        report.add(Rule::parse, "program", "empty node table");
        return report;
    }
    if (prog.loop_bound < 0 || prog.loop_bound > max_depth)
        report.add(Rule::bounded_loop, "program",
                   "loop bound " + std::to_string(prog.loop_bound) + " outside [0, " + std::to_string(max_depth) + "]");
    for (std::int64_t i = 0; i < n; ++i) {
        const FlatNode& node = prog.nodes[static_cast<std::size_t>(i)];
        const std::string where = "node " + std::to_string(i);
        if (node.feature_idx < 0) {
            if (node.label < 0 || node.label >= prog.n_classes)
                report.add(Rule::unclamped_index, where, "label outside [0, n_classes)");
            continue;
        }
        if (node.feature_idx >= static_cast<std::int32_t>(kNumFeatures))
            report.add(Rule::unclamped_index, where, "feature index out of range");
        for (std::int32_t child : {node.left, node.right})
            if (child < 0 || child >= n)
                report.add(Rule::unclamped_index, where, "child index " + std::to_string(child) + " out of range");
            else if (child <= i)
                report.add(Rule::backward_jump, where, "child index " + std::to_string(child) + " is not forward");
    }
    if (!report.passed) return report;

    // Forward-only edges make the graph acyclic; every path must end within
    // loop_bound steps.
    std::vector<int> level(prog.nodes.size(), 0);
    for (std::size_t i = 0; i < prog.nodes.size(); ++i) {
        const FlatNode& node = prog.nodes[i];
        if (node.feature_idx < 0) continue;
        if (level[i] >= prog.loop_bound) {
            report.add(Rule::bounded_loop, "node " + std::to_string(i),
                       "reachable split at depth " + std::to_string(level[i]) + " exceeds loop bound " +
                           std::to_string(prog.loop_bound));
            break;
        }
        for (std::int32_t child : {node.left, node.right})
            level[static_cast<std::size_t>(child)] = std::max(level[static_cast<std::size_t>(child)], level[i] + 1);
    }
    return report;
}

struct EmitConfig {
    int max_depth = 10;
    int max_leaves = 1000;
    bool unroll = false;
    std::uint64_t flow_capacity = 65536;
};

namespace detail {

inline std::string c_int64(std::int64_t v) {
    if (v == std::numeric_limits<std::int64_t>::min()) return "(-9223372036854775807LL - 1)";
    return std::to_string(v) + "LL";
}

inline void emit_unrolled(std::ostringstream& os, const FlattenedProgram& prog, std::size_t i, int indent) {
    const std::string pad(static_cast<std::size_t>(indent) * 4, ' ');
    const FlatNode& node = prog.nodes[i];
    if (node.feature_idx < 0) {
        os << pad << "return " << node.label << ";\n";
        return;
    }
    os << pad << "if (fv[" << node.feature_idx << "] <= " << c_int64(node.threshold_raw) << ") { /* "
       << prog.comments[i] << " */\n";
    emit_unrolled(os, prog, static_cast<std::size_t>(node.left), indent + 1);
    os << pad << "} else {\n";
    emit_unrolled(os, prog, static_cast<std::size_t>(node.right), indent + 1);
    os << pad << "}\n";
}

}  // namespace detail

/// Emits the restricted-C program. Deterministic: same program and config give
/// byte-identical text.
inline std::string emit_restricted_source(const FlattenedProgram& prog, const EmitConfig& cfg = {}) {
    if (prog.loop_bound > cfg.max_depth)
        throw EmitError("tree depth " + std::to_string(prog.loop_bound) + " exceeds limit " +
                        std::to_string(cfg.max_depth));
    if (prog.n_leaves > cfg.max_leaves)
        throw EmitError("leaf count " + std::to_string(prog.n_leaves) + " exceeds limit " +
                        std::to_string(cfg.max_leaves));
    const std::size_t max_nodes = 2 * static_cast<std::size_t>(cfg.max_leaves) - 1;
    if (prog.n_nodes() > max_nodes)
        throw EmitError("node count " + std::to_string(prog.n_nodes()) + " exceeds limit " + std::to_string(max_nodes));
    if (const auto report = check_constraints(prog, cfg.max_depth); !report.passed)
        throw EmitError("invalid flattened program: " + report.violations.front().detail);

    const std::size_t n = prog.n_nodes();
    const bool constant = prog.nodes.front().feature_idx < 0;
    std::ostringstream body;

    body << R"(#ifdef FG_HOST
#define __always_inline inline __attribute__((always_inline))
#else
#include <linux/bpf.h>

#define SEC(name) __attribute__((section(name), used))
#define __uint(name, val) int (*name)[val]
#define __type(name, val) __typeof__(val) *name
#ifndef __always_inline
#define __always_inline inline __attribute__((always_inline))
#endif

static void *(*bpf_map_lookup_elem)(void *map, const void *key) = (void *)1;
static long (*bpf_map_update_elem)(void *map, const void *key, const void *value, unsigned long long flags) = (void *)2;
static unsigned long long (*bpf_ktime_get_ns)(void) = (void *)5;
#endif

typedef unsigned char fg_u8;
typedef unsigned short fg_u16;
typedef int fg_s32;
typedef unsigned int fg_u32;
typedef long long fg_s64;
typedef unsigned long long fg_u64;

#define FG_S64_MAX 9223372036854775807LL
#define FG_S64_MIN (-FG_S64_MAX - 1)
#define FG_ONE 65536LL
#define fg_clamp(x, n) ((fg_u32)(x) < (fg_u32)(n) ? (fg_u32)(x) : (fg_u32)(n) - 1)

struct fg_flow_key {
    fg_u32 lo_ip;
    fg_u32 hi_ip;
    fg_u16 lo_port;
    fg_u16 hi_port;
    fg_u8 protocol;
    fg_u8 pad[3];
};

/* Q47.16 running statistics; layout shared with the userspace FlowRecord. */
struct fg_flow_record {
    fg_u32 initiator_ip;
    fg_u16 initiator_port;
    fg_u16 pad;
    fg_u64 pkt_count;
    fg_s64 last_ts_us;
    fg_s64 mean_len;
    fg_s64 mad_len;
    fg_s64 mean_iat;
    fg_s64 mad_iat;
    fg_s64 mean_dir;
    fg_s64 mad_dir;
};

struct fg_packet {
    fg_s64 ts_us;
    fg_u32 src_ip;
    fg_u32 dst_ip;
    fg_u16 src_port;
    fg_u16 dst_port;
    fg_u16 pkt_len;
    fg_u8 protocol;
    fg_u8 pad;
};

#ifndef FG_HOST
struct {
    __uint(type, BPF_MAP_TYPE_LRU_HASH);
    __uint(max_entries, )" << cfg.flow_capacity << R"();
    __type(key, struct fg_flow_key);
    __type(value, struct fg_flow_record);
} fg_flows SEC(".maps");

struct {
    __uint(type, BPF_MAP_TYPE_PERCPU_ARRAY);
    __uint(max_entries, )" << prog.n_classes << R"();
    __type(key, fg_u32);
    __type(value, fg_u64);
} fg_verdicts SEC(".maps");
#endif

static __always_inline fg_s64 fg_sat_add(fg_s64 a, fg_s64 b)
{
    if (b > 0 && a > FG_S64_MAX - b)
        return FG_S64_MAX;
    if (b < 0 && a < FG_S64_MIN - b)
        return FG_S64_MIN;
    return a + b;
}

static __always_inline fg_s64 fg_sat_sub(fg_s64 a, fg_s64 b)
{
    if (b < 0 && a > FG_S64_MAX + b)
        return FG_S64_MAX;
    if (b > 0 && a < FG_S64_MIN + b)
        return FG_S64_MIN;
    return a - b;
}

static __always_inline fg_s64 fg_abs(fg_s64 a)
{
    if (a >= 0)
        return a;
    if (a == FG_S64_MIN)
        return FG_S64_MAX;
    return -a;
}

/* Truncates toward zero using unsigned division only. */
static __always_inline fg_s64 fg_div(fg_s64 a, fg_u64 n)
{
    if (n == 1)
        return a;
    if (a >= 0)
        return (fg_s64)((fg_u64)a / n);
    return -(fg_s64)(((fg_u64)0 - (fg_u64)a) / n);
}

static __always_inline fg_s64 fg_from_int(fg_s64 v)
{
    if (v >= (1LL << 47))
        return FG_S64_MAX;
    if (v < -(1LL << 47))
        return FG_S64_MIN;
    return v * FG_ONE;
}

/* mean += (x - mean) / n; mad += (|x - mean| - mad) / n */
static __always_inline void fg_stat_update(fg_s64 *mean, fg_s64 *mad, fg_s64 x, fg_u64 n)
{
    fg_s64 m = fg_sat_add(*mean, fg_div(fg_sat_sub(x, *mean), n));

    *mean = m;
    *mad = fg_sat_add(*mad, fg_div(fg_sat_sub(fg_abs(fg_sat_sub(x, m)), *mad), n));
}

static __always_inline void fg_make_key(struct fg_flow_key *key, const struct fg_packet *pkt)
{
    int src_first = pkt->src_ip < pkt->dst_ip || (pkt->src_ip == pkt->dst_ip && pkt->src_port <= pkt->dst_port);

    key->lo_ip = src_first ? pkt->src_ip : pkt->dst_ip;
    key->lo_port = src_first ? pkt->src_port : pkt->dst_port;
    key->hi_ip = src_first ? pkt->dst_ip : pkt->src_ip;
    key->hi_port = src_first ? pkt->dst_port : pkt->src_port;
    key->protocol = pkt->protocol;
}

/* Folds one packet into r (a zeroed record starts a new flow) and writes the
 * feature vector. */
static __always_inline void fg_observe(struct fg_flow_record *r, const struct fg_packet *pkt, fg_s64 *fv)
{
    fg_s64 len = fg_from_int(pkt->pkt_len);
    fg_s64 iat = 0;
    fg_s64 dir = 0;

    if (r->pkt_count == 0) {
        r->initiator_ip = pkt->src_ip;
        r->initiator_port = pkt->src_port;
        r->pkt_count = 1;
        r->last_ts_us = pkt->ts_us;
        r->mean_len = len;
        r->mad_len = 0;
        r->mean_iat = 0;
        r->mad_iat = 0;
        r->mean_dir = 0;
        r->mad_dir = 0;
    } else {
        fg_u64 n = r->pkt_count + 1;

        if (pkt->ts_us > r->last_ts_us) {
            iat = fg_from_int(pkt->ts_us - r->last_ts_us);
            r->last_ts_us = pkt->ts_us;
        }
        if (pkt->src_ip != r->initiator_ip || pkt->src_port != r->initiator_port)
            dir = FG_ONE;
        fg_stat_update(&r->mean_len, &r->mad_len, len, n);
        fg_stat_update(&r->mean_iat, &r->mad_iat, iat, n);
        fg_stat_update(&r->mean_dir, &r->mad_dir, dir, n);
        r->pkt_count = n;
    }

    fv[0] = fg_from_int(pkt->src_port);
    fv[1] = fg_from_int(pkt->dst_port);
    fv[2] = fg_from_int(pkt->protocol);
    fv[3] = len;
    fv[4] = iat;
    fv[5] = dir;
    fv[6] = r->mean_len;
    fv[7] = r->mean_iat;
    fv[8] = r->mean_dir;
    fv[9] = r->mad_len;
    fv[10] = r->mad_iat;
    fv[11] = r->mad_dir;
}

)";

    if (!constant && !cfg.unroll) {
        body << "struct fg_node {\n"
                "    fg_s64 threshold;\n"
                "    fg_s32 feature;\n"
                "    fg_u32 left;\n"
                "    fg_u32 right;\n"
                "    fg_s32 label;\n"
                "};\n\n";
        body << "static const struct fg_node fg_nodes[" << n << "] = {\n";
        for (std::size_t i = 0; i < n; ++i) {
            const FlatNode& node = prog.nodes[i];
            body << "    { " << detail::c_int64(node.threshold_raw) << ", " << node.feature_idx << ", " << node.left
                 << ", " << node.right << ", " << node.label << " }, /* " << i << ": " << prog.comments[i]
                 << " */\n";
        }
        body << "};\n\n";
    }

    body << "static __always_inline fg_s32 fg_classify(const fg_s64 *fv)\n{\n";
    if (constant) {
        body << "    (void)fv;\n    return " << prog.nodes.front().label << ";\n";
    } else if (cfg.unroll) {
        detail::emit_unrolled(body, prog, 0, 1);
    } else {
        body << "    fg_u32 idx = 0;\n\n"
             << "    for (int step = 0; step < " << prog.loop_bound << "; step++) {\n"
             << "        const struct fg_node *node = &fg_nodes[fg_clamp(idx, " << n << ")];\n\n"
             << "        if (node->feature < 0)\n"
             << "            break;\n"
             << "        if (fv[fg_clamp(node->feature, " << kNumFeatures << ")] <= node->threshold)\n"
             << "            idx = node->left;\n"
             << "        else\n"
             << "            idx = node->right;\n"
             << "    }\n"
             << "    return fg_nodes[fg_clamp(idx, " << n << ")].label;\n";
    }
    body << "}\n";

    body << R"(
#ifndef FG_HOST
static __always_inline fg_u16 fg_load_be16(const fg_u8 *b)
{
    return (fg_u16)((b[0] << 8) | b[1]);
}

static __always_inline fg_u32 fg_load_be32(const fg_u8 *b)
{
    return ((fg_u32)b[0] << 24) | ((fg_u32)b[1] << 16) | ((fg_u32)b[2] << 8) | (fg_u32)b[3];
}

SEC("xdp")
int fg_xdp(struct xdp_md *ctx)
{
    const fg_u8 *data = (const fg_u8 *)(long)ctx->data;
    const fg_u8 *data_end = (const fg_u8 *)(long)ctx->data_end;
    const fg_u8 *ip = data + 14;
    const fg_u8 *l4;
    struct fg_packet pkt = {0};
    struct fg_flow_key key = {0};
    struct fg_flow_record fresh = {0};
    struct fg_flow_record *rec;
    fg_s64 fv[12];
    fg_u32 ether_type;
    fg_u32 ihl;
    fg_u32 label;
    fg_u64 *count;

    if (ip > data_end)
        return XDP_PASS;
    ether_type = fg_load_be16(data + 12);
    if (ether_type == 0x8100 || ether_type == 0x88a8) {
        if (ip + 4 > data_end)
            return XDP_PASS;
        ether_type = fg_load_be16(ip + 2);
        ip += 4;
    }
    if (ether_type == 0x8100 || ether_type == 0x88a8) {
        if (ip + 4 > data_end)
            return XDP_PASS;
        ether_type = fg_load_be16(ip + 2);
        ip += 4;
    }
    if (ether_type != 0x0800 || ip + 20 > data_end)
        return XDP_PASS;
    if ((ip[0] >> 4) != 4)
        return XDP_PASS;
    ihl = (fg_u32)(ip[0] & 0x0f) * 4;
    pkt.pkt_len = fg_load_be16(ip + 2);
    if (ihl < 20 || pkt.pkt_len < ihl)
        return XDP_PASS;
    pkt.protocol = ip[9];
    pkt.src_ip = fg_load_be32(ip + 12);
    pkt.dst_ip = fg_load_be32(ip + 16);
    pkt.ts_us = (fg_s64)(bpf_ktime_get_ns() / 1000);
    l4 = ip + ihl;
    if ((pkt.protocol == 6 || pkt.protocol == 17) && (fg_load_be16(ip + 6) & 0x1fff) == 0 && l4 + 4 <= data_end) {
        pkt.src_port = fg_load_be16(l4);
        pkt.dst_port = fg_load_be16(l4 + 2);
    }

    fg_make_key(&key, &pkt);
    rec = bpf_map_lookup_elem(&fg_flows, &key);
    if (rec) {
        fg_observe(rec, &pkt, fv);
    } else {
        fg_observe(&fresh, &pkt, fv);
        bpf_map_update_elem(&fg_flows, &key, &fresh, BPF_ANY);
    }

    /* Report only: the verdict is counted, the packet always passes. */
    label = (fg_u32)fg_classify(fv);
    count = bpf_map_lookup_elem(&fg_verdicts, &label);
    if (count)
        *count += 1;
    return XDP_PASS;
}

char fg_license[4] SEC("license") = "GPL";
#endif
)";

    const std::string text = body.str();
    std::ostringstream out;
    out << "/*\n"
        << " * flowguard decision-tree classifier (generated, do not edit)\n"
        << " *\n"
        << " * nodes: " << n << "\n"
        << " * leaves: " << prog.n_leaves << "\n"
        << " * classes: " << prog.n_classes << "\n"
        << " * loop_bound: " << prog.loop_bound << "\n"
        << " * tree_walk: " << (constant ? "constant" : cfg.unroll ? "unrolled" : "counted-loop") << "\n"
        << " * stack_bytes: " << estimate_stack_bytes(text) << "\n"
        << " */\n\n"
        << text;
    return out.str();
}

}  // namespace flowguard
