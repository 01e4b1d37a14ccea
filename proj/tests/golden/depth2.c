/*
 * flowguard decision-tree classifier (generated, do not edit)
 *
 * nodes: 7
 * leaves: 4
 * classes: 3
 * loop_bound: 2
 * tree_walk: counted-loop
 * stack_bytes: 328
 */

#ifdef FG_HOST
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
    __uint(max_entries, 65536);
    __type(key, struct fg_flow_key);
    __type(value, struct fg_flow_record);
} fg_flows SEC(".maps");

struct {
    __uint(type, BPF_MAP_TYPE_PERCPU_ARRAY);
    __uint(max_entries, 3);
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

struct fg_node {
    fg_s64 threshold;
    fg_s32 feature;
    fg_u32 left;
    fg_u32 right;
    fg_s32 label;
};

static const struct fg_node fg_nodes[7] = {
    { 6553600LL, 3, 1, 2, 0 }, /* 0: pkt_len <= 100 */
    { 67043328LL, 1, 3, 4, 0 }, /* 1: dst_port <= 1023 */
    { 32768LL, 7, 5, 6, 0 }, /* 2: mean_iat <= 0.5 */
    { 0LL, -1, 0, 0, 0 }, /* 3: leaf: class 0 */
    { 0LL, -1, 0, 0, 1 }, /* 4: leaf: class 1 */
    { 0LL, -1, 0, 0, 1 }, /* 5: leaf: class 1 */
    { 0LL, -1, 0, 0, 2 }, /* 6: leaf: class 2 */
};

static __always_inline fg_s32 fg_classify(const fg_s64 *fv)
{
    fg_u32 idx = 0;

    for (int step = 0; step < 2; step++) {
        const struct fg_node *node = &fg_nodes[fg_clamp(idx, 7)];

        if (node->feature < 0)
            break;
        if (fv[fg_clamp(node->feature, 12)] <= node->threshold)
            idx = node->left;
        else
            idx = node->right;
    }
    return fg_nodes[fg_clamp(idx, 7)].label;
}

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
