#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

#include "flowguard/flow_state.hpp"
#include "flowguard/fxp.hpp"
#include "flowguard/packet.hpp"

namespace flowguard {

inline constexpr std::size_t kNumFeatures = 12;

enum class Feature : std::size_t {
    src_port,
    dst_port,
    protocol,
    pkt_len,
    iat,
    direction,
    mean_len,
    mean_iat,
    mean_dir,
    mad_len,
    mad_iat,
    mad_dir,
};

inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "src_port", "dst_port", "protocol", "pkt_len", "iat",     "direction",
    "mean_len", "mean_iat", "mean_dir", "mad_len", "mad_iat", "mad_dir",
};

inline std::optional<std::size_t> feature_index(std::string_view name) {
    for (std::size_t i = 0; i < kNumFeatures; ++i)
        if (kFeatureNames[i] == name) return i;
    return std::nullopt;
}

using FeatureVector = std::array<Fx64, kNumFeatures>;

constexpr std::size_t index_of(Feature f) noexcept { return static_cast<std::size_t>(f); }

/// Ports are the packet's own (not canonicalized).
inline FeatureVector assemble(const ParsedPacket& p, const FlowRecord& snap, const PacketObservation& obs) {
    FeatureVector fv;
    fv[index_of(Feature::src_port)] = fx_from_int(p.src_port);
    fv[index_of(Feature::dst_port)] = fx_from_int(p.dst_port);
    fv[index_of(Feature::protocol)] = fx_from_int(p.protocol);
    fv[index_of(Feature::pkt_len)] = obs.pkt_len;
    fv[index_of(Feature::iat)] = obs.iat;
    fv[index_of(Feature::direction)] = obs.direction;
    fv[index_of(Feature::mean_len)] = snap.len.mean;
    fv[index_of(Feature::mean_iat)] = snap.iat.mean;
    fv[index_of(Feature::mean_dir)] = snap.dir.mean;
    fv[index_of(Feature::mad_len)] = snap.len.mad;
    fv[index_of(Feature::mad_iat)] = snap.iat.mad;
    fv[index_of(Feature::mad_dir)] = snap.dir.mad;
    return fv;
}

}  // namespace flowguard
