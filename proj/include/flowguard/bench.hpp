#pragma once

// Throughput benchmark: packets/s each backend can fully process (parse, flow
// update, classify), measured over repeated fixed-duration trials with the
// backends run one after another. Reported as mean and population standard
// deviation per backend.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowguard/datapath.hpp"
#include "flowguard/frame_builder.hpp"

namespace flowguard {

class BenchConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct GeneratorSpec {
    std::uint32_t n_flows = 1;
    std::uint16_t pkt_size_min = 1500;  // IPv4 total length
    std::uint16_t pkt_size_max = 1500;
    double reverse_fraction = 0.0;  // share of packets sent by the responder
    std::uint8_t protocol = kProtoUdp;
    std::int64_t interval_us = 10;
    std::uint64_t seed = 1;
    LinkType link = LinkType::ethernet;
};

inline void validate(const GeneratorSpec& spec) {
    if (spec.n_flows == 0) throw BenchConfigError("generator needs at least one flow");
    if (spec.pkt_size_min > spec.pkt_size_max) throw BenchConfigError("pkt_size_min exceeds pkt_size_max");
    if (!(spec.reverse_fraction >= 0.0 && spec.reverse_fraction <= 1.0))
        throw BenchConfigError("reverse_fraction must be in [0, 1]");
    if (spec.interval_us < 0) throw BenchConfigError("interval_us must be non-negative");
}

/// Deterministic stream: packet i belongs to flow i % n_flows; sizes and
/// directions come from a seeded mt19937_64 (raw draws only, so the sequence
/// does not depend on the standard library's distribution implementations).
inline std::vector<Frame> generate_stream(const GeneratorSpec& spec, std::size_t count) {
    validate(spec);
    std::mt19937_64 rng(spec.seed);
    const std::uint32_t span = std::uint32_t{spec.pkt_size_max} - spec.pkt_size_min + 1;
    std::vector<Frame> frames;
    frames.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const auto flow = static_cast<std::uint32_t>(i % spec.n_flows);
        FrameSpec fs;
        fs.protocol = spec.protocol;
        fs.src_ip = Ipv4{Ipv4::from_octets(10, 0, 0, 0).value + 1 + flow / 50000};
        fs.src_port = static_cast<std::uint16_t>(10000 + flow % 50000);
        fs.dst_ip = Ipv4::from_octets(10, 1, 0, 1);
        fs.dst_port = 5201;
        fs.ip_len = static_cast<std::uint16_t>(spec.pkt_size_min + rng() % span);
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        if (u < spec.reverse_fraction) {
            std::swap(fs.src_ip, fs.dst_ip);
            std::swap(fs.src_port, fs.dst_port);
        }
        frames.push_back(Frame{static_cast<std::int64_t>(i) * spec.interval_us, build_frame(fs, spec.link)});
    }
    return frames;
}

struct TrialStats {
    double mean = 0.0;
    double sd = 0.0;  // population standard deviation
};

inline TrialStats compute_stats(std::span<const double> values) {
    TrialStats s;
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(sq / static_cast<double>(values.size()));
    return s;
}

struct BenchConfig {
    double duration_s = 1.0;
    int trials = 10;
    std::vector<Backend> backends{Backend::interpreter, Backend::flattened};
    GeneratorSpec generator;
    unsigned workers = 1;
    FlowTableConfig flows;
    std::size_t stream_packets = 1 << 16;  // pre-generated, replayed cyclically
    std::size_t warmup_packets = 1 << 16;
};

inline void validate(const BenchConfig& cfg) {
    if (!(cfg.duration_s > 0)) throw BenchConfigError("duration must be positive");
    if (cfg.trials < 1) throw BenchConfigError("trials must be at least 1");
    if (cfg.backends.empty()) throw BenchConfigError("no backends selected");
    if (cfg.stream_packets == 0) throw BenchConfigError("stream_packets must be positive");
    validate(cfg.generator);
}

struct BackendResult {
    Backend backend;
    std::vector<std::uint64_t> trial_packets;  // fully classified packets per trial
    std::vector<double> trial_rates;           // packets/s per trial
    TrialStats stats;
};

struct BenchResult {
    std::vector<BackendResult> backends;
};

namespace detail {

/// Cycles through the pre-generated stream, shifting timestamps on each pass
/// so inter-arrival times stay positive.
class CyclicStream {
public:
    CyclicStream(const std::vector<Frame>& frames, std::int64_t interval_us)
        : frames_(&frames),
          period_us_(frames.empty() ? 0 : frames.back().ts_us - frames.front().ts_us + std::max<std::int64_t>(1, interval_us)) {}

    const Frame& next(std::int64_t& ts_us) {
        const Frame& f = (*frames_)[pos_];
        ts_us = f.ts_us + offset_us_;
        if (++pos_ == frames_->size()) {
            pos_ = 0;
            offset_us_ += period_us_;
        }
        return f;
    }

private:
    const std::vector<Frame>* frames_;
    std::int64_t period_us_;
    std::size_t pos_ = 0;
    std::int64_t offset_us_ = 0;
};

struct TrialOutcome {
    std::uint64_t packets = 0;
    double seconds = 0.0;
};

inline TrialOutcome run_trial(const Classifier& classifier, const BenchConfig& cfg, const std::vector<Frame>& frames,
                              double duration_s, std::size_t max_packets = 0) {
    using clock = std::chrono::steady_clock;
    CyclicStream stream(frames, cfg.generator.interval_us);
    const auto budget = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(duration_s));
    const auto start = clock::now();
    const auto deadline = start + budget;
    TrialOutcome out;
    constexpr std::size_t kClockEvery = 256;

    if (cfg.workers <= 1) {
        Pipeline pipeline(classifier, cfg.flows);
        std::uint64_t index = 0;
        bool running = true;
        while (running) {
            for (std::size_t k = 0; k < kClockEvery; ++k) {
                std::int64_t ts = 0;
                const Frame& f = stream.next(ts);
                if (pipeline.process_frame(f.bytes, cfg.generator.link, ts, index++)) ++out.packets;
                if (max_packets && index >= max_packets) {
                    running = false;
                    break;
                }
            }
            if (clock::now() >= deadline) running = false;
        }
    } else {
        std::size_t k = 0;
        std::uint64_t produced = 0;
        FrameSource source = [&](Frame& f) {
            if (++k == kClockEvery) {
                k = 0;
                if (clock::now() >= deadline) return false;
            }
            if (max_packets && produced >= max_packets) return false;
            std::int64_t ts = 0;
            const Frame& g = stream.next(ts);
            f.ts_us = ts;
            f.bytes = g.bytes;
            ++produced;
            return true;
        };
        DatapathOptions opts;
        opts.flows = cfg.flows;
        opts.workers = cfg.workers;
        const RunSummary s = run_frames(source, cfg.generator.link, classifier, opts, VerdictSink{});
        out.packets = s.verdicts();
    }
    out.seconds = std::chrono::duration<double>(clock::now() - start).count();
    return out;
}

}  // namespace detail

/// Runs every backend in turn (never concurrently). Each backend gets an
/// uncounted warm-up pass, then cfg.trials timed trials on a fresh flow table.
inline BenchResult run_bench(const std::shared_ptr<const TreeModel>& model, const BenchConfig& cfg) {
    validate(cfg);
    const std::vector<Frame> frames = generate_stream(cfg.generator, cfg.stream_packets);
    BenchResult result;
    for (Backend backend : cfg.backends) {
        const Classifier classifier(model, backend);
        detail::run_trial(classifier, cfg, frames, 3600.0, cfg.warmup_packets);
        BackendResult br{backend, {}, {}, {}};
        for (int t = 0; t < cfg.trials; ++t) {
            const auto outcome = detail::run_trial(classifier, cfg, frames, cfg.duration_s);
            br.trial_packets.push_back(outcome.packets);
            br.trial_rates.push_back(outcome.seconds > 0 ? static_cast<double>(outcome.packets) / outcome.seconds : 0.0);
        }
        br.stats = compute_stats(br.trial_rates);
        result.backends.push_back(std::move(br));
    }
    return result;
}

/// Two-row table: a header naming each backend with Mean/SD columns, then the
/// packets/s row.
inline std::string format_bench_table(const BenchResult& r) {
    std::ostringstream os;
    constexpr int kLabel = 10;
    constexpr int kCol = 12;
    os << std::setw(kLabel) << "";
    for (const auto& b : r.backends) os << std::setw(2 * kCol) << to_string(b.backend);
    os << "\n" << std::setw(kLabel) << "";
    for (std::size_t i = 0; i < r.backends.size(); ++i) os << std::setw(kCol) << "Mean" << std::setw(kCol) << "SD";
    os << "\n" << std::left << std::setw(kLabel) << "packets/s" << std::right;
    os << std::fixed << std::setprecision(0);
    for (const auto& b : r.backends) os << std::setw(kCol) << b.stats.mean << std::setw(kCol) << b.stats.sd;
    os << "\n";
    return os.str();
}

/// Informational relative comparison (hardware dependent, never a pass/fail).
inline std::string format_relative(const BenchResult& r) {
    const BackendResult* interp = nullptr;
    const BackendResult* flat = nullptr;
    for (const auto& b : r.backends) (b.backend == Backend::interpreter ? interp : flat) = &b;
    if (!interp || !flat || interp->stats.mean <= 0) return "";
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << "flattened vs interpreter: "
       << (flat->stats.mean / interp->stats.mean - 1.0) * 100.0 << "% (informational)\n";
    return os.str();
}

inline std::string format_trials(const BenchResult& r) {
    std::ostringstream os;
    for (const auto& b : r.backends) {
        os << to_string(b.backend) << " trials (packets):";
        for (auto c : b.trial_packets) os << ' ' << c;
        os << "\n";
    }
    return os.str();
}

}  // namespace flowguard
