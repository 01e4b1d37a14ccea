#pragma once

// End-to-end packet pipeline: parse -> flow update -> features -> classify.
//
// Verdicts are report-only. With more than one worker, packets are sharded by
// flow hash so each FlowTable is owned by exactly one thread; verdicts of one
// flow stay in packet order, verdicts of different flows may interleave.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "flowguard/dt_model.hpp"
#include "flowguard/features.hpp"
#include "flowguard/flow_state.hpp"
#include "flowguard/kernel_codegen.hpp"
#include "flowguard/packet.hpp"
#include "flowguard/pcap.hpp"

namespace flowguard {

enum class Backend { interpreter, flattened };

inline const char* to_string(Backend b) noexcept { return b == Backend::interpreter ? "interpreter" : "flattened"; }

inline std::optional<Backend> parse_backend(std::string_view s) {
    if (s == "interpreter") return Backend::interpreter;
    if (s == "flattened") return Backend::flattened;
    return std::nullopt;
}

/// Evaluates feature vectors with either the tree interpreter or the
/// flattened counted-loop program. Immutable, shareable across threads.
class Classifier {
public:
    Classifier(std::shared_ptr<const TreeModel> model, Backend backend)
        : model_(std::move(model)), program_(flatten(*model_)), backend_(backend) {}

    Backend backend() const noexcept { return backend_; }
    const TreeModel& model() const noexcept { return *model_; }
    const FlattenedProgram& program() const noexcept { return program_; }

    std::int32_t classify(const FeatureVector& fv) const noexcept {
        return backend_ == Backend::interpreter ? eval(*model_, fv) : walk(program_, fv);
    }

private:
    std::shared_ptr<const TreeModel> model_;
    FlattenedProgram program_;
    Backend backend_;
};

struct VerdictRecord {
    std::uint64_t pkt_index = 0;
    std::int64_t ts_us = 0;
    std::uint8_t protocol = 0;
    Endpoint src;
    Endpoint dst;
    std::int32_t label = 0;
    std::uint64_t pkt_count = 0;

    friend bool operator==(const VerdictRecord&, const VerdictRecord&) = default;
};

/// `pkt_index ts_us proto src_ip:src_port>dst_ip:dst_port label pkt_count`
inline std::string format_verdict(const VerdictRecord& v) {
    std::string line;
    line.reserve(80);
    line += std::to_string(v.pkt_index);
    line += ' ';
    line += std::to_string(v.ts_us);
    line += ' ';
    line += std::to_string(v.protocol);
    line += ' ';
    line += to_string(v.src.ip);
    line += ':';
    line += std::to_string(v.src.port);
    line += '>';
    line += to_string(v.dst.ip);
    line += ':';
    line += std::to_string(v.dst.port);
    line += ' ';
    line += std::to_string(v.label);
    line += ' ';
    line += std::to_string(v.pkt_count);
    return line;
}

struct RunSummary {
    std::uint64_t packets_seen = 0;
    std::uint64_t packets_skipped = 0;
    std::uint64_t skipped_not_ip = 0;
    std::uint64_t skipped_truncated = 0;
    std::uint64_t skipped_malformed = 0;
    std::uint64_t flows_created = 0;
    std::uint64_t flows_evicted = 0;
    std::vector<std::uint64_t> verdicts_per_label;
    std::int64_t elapsed_us = 0;

    std::uint64_t verdicts() const noexcept {
        std::uint64_t total = 0;
        for (auto c : verdicts_per_label) total += c;
        return total;
    }

    void note_skip(SkipReason r) noexcept {
        ++packets_skipped;
        switch (r) {
            case SkipReason::not_ip: ++skipped_not_ip; break;
            case SkipReason::truncated: ++skipped_truncated; break;
            case SkipReason::malformed: ++skipped_malformed; break;
        }
    }

    void merge(const RunSummary& o) {
        packets_seen += o.packets_seen;
        packets_skipped += o.packets_skipped;
        skipped_not_ip += o.skipped_not_ip;
        skipped_truncated += o.skipped_truncated;
        skipped_malformed += o.skipped_malformed;
        flows_created += o.flows_created;
        flows_evicted += o.flows_evicted;
        if (verdicts_per_label.size() < o.verdicts_per_label.size()) verdicts_per_label.resize(o.verdicts_per_label.size());
        for (std::size_t i = 0; i < o.verdicts_per_label.size(); ++i) verdicts_per_label[i] += o.verdicts_per_label[i];
    }
};

inline std::string format_summary(const RunSummary& s, bool include_elapsed = true) {
    std::ostringstream os;
    os << "summary:\n"
       << "  packets_seen: " << s.packets_seen << "\n"
       << "  packets_skipped: " << s.packets_skipped << "\n"
       << "    not_ip: " << s.skipped_not_ip << "\n"
       << "    truncated: " << s.skipped_truncated << "\n"
       << "    malformed: " << s.skipped_malformed << "\n"
       << "  flows_created: " << s.flows_created << "\n"
       << "  flows_evicted: " << s.flows_evicted << "\n"
       << "  verdicts:\n";
    for (std::size_t i = 0; i < s.verdicts_per_label.size(); ++i)
        os << "    label_" << i << ": " << s.verdicts_per_label[i] << "\n";
    if (include_elapsed) os << "  elapsed_us: " << s.elapsed_us << "\n";
    return os.str();
}

using VerdictSink = std::function<void(const VerdictRecord&)>;

/// Thread-safe sink writing one verdict per line.
class StreamSink {
public:
    explicit StreamSink(std::ostream& os) : os_(&os) {}

    void operator()(const VerdictRecord& v) {
        const std::string line = format_verdict(v);
        std::lock_guard lock(mu_);
        *os_ << line << '\n';
    }

    VerdictSink as_sink() {
        return [this](const VerdictRecord& v) { (*this)(v); };
    }

private:
    std::ostream* os_;
    std::mutex mu_;
};

struct DatapathOptions {
    FlowTableConfig flows;
    unsigned workers = 1;
    std::size_t queue_capacity = 8192;
};

/// Single-worker processing state: one FlowTable plus summary counters.
class Pipeline {
public:
    Pipeline(const Classifier& classifier, FlowTableConfig flows)
        : classifier_(&classifier), table_(flows),
          evict_interval_us_(std::max<std::int64_t>(1, std::min<std::int64_t>(flows.idle_timeout_us, 1'000'000))) {
        summary_.verdicts_per_label.assign(static_cast<std::size_t>(classifier.model().n_classes), 0);
    }

    /// Classifies one parsed packet.
    VerdictRecord process(const ParsedPacket& p, std::uint64_t pkt_index) {
        if (p.ts_us >= next_evict_us_) {
            table_.evict_idle(p.ts_us);
            next_evict_us_ = p.ts_us + evict_interval_us_;
        }
        const Observed o = table_.observe(p);
        const FeatureVector fv = assemble(p, o.snapshot, o.obs);
        const std::int32_t label = classifier_->classify(fv);
        ++summary_.packets_seen;
        ++summary_.verdicts_per_label[static_cast<std::size_t>(label)];
        return VerdictRecord{pkt_index, p.ts_us, p.protocol, p.source(), p.destination(), label, o.snapshot.pkt_count};
    }

    /// Parses and classifies one frame; nullopt (and a counted skip) when the
    /// frame is not a usable IPv4 packet.
    std::optional<VerdictRecord> process_frame(std::span<const std::uint8_t> frame, LinkType link, std::int64_t ts_us,
                                               std::uint64_t pkt_index) {
        const ParseResult r = parse_packet(frame, link, ts_us);
        if (!r) {
            note_skip(r.skip_reason());
            return std::nullopt;
        }
        return process(r.packet(), pkt_index);
    }

    void note_skip(SkipReason reason) {
        ++summary_.packets_seen;
        summary_.note_skip(reason);
    }

    RunSummary summary() const {
        RunSummary s = summary_;
        s.flows_created = table_.counters().inserts;
        s.flows_evicted = table_.counters().evictions();
        return s;
    }

    const FlowTable& table() const noexcept { return table_; }

private:
    const Classifier* classifier_;
    FlowTable table_;
    std::int64_t evict_interval_us_;
    std::int64_t next_evict_us_ = std::numeric_limits<std::int64_t>::min();
    RunSummary summary_;
};

/// Bounded multi-producer/single-consumer queue moving batches.
template <typename T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {}

    void push(T item) {
        std::unique_lock lock(mu_);
        not_full_.wait(lock, [&] { return items_.size() < capacity_; });
        items_.push_back(std::move(item));
        not_empty_.notify_one();
    }

    /// Blocks until an item is available or the queue is closed and drained.
    std::optional<T> pop() {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
        if (items_.empty()) return std::nullopt;
        T item = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return item;
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        not_empty_.notify_all();
    }

private:
    std::size_t capacity_;
    std::mutex mu_;
    std::condition_variable not_full_;
    std::condition_variable not_empty_;
    std::deque<T> items_;
    bool closed_ = false;
};

/// Source of raw frames: returns false when exhausted.
using FrameSource = std::function<bool(Frame&)>;

/// Drives frames through one or more workers. pkt_index is the frame's
/// ordinal in the source (skipped frames consume an index too).
inline RunSummary run_frames(const FrameSource& next, LinkType link, const Classifier& classifier,
                             const DatapathOptions& opts, const VerdictSink& sink) {
    const auto start = std::chrono::steady_clock::now();
    RunSummary total;
    total.verdicts_per_label.assign(static_cast<std::size_t>(classifier.model().n_classes), 0);

    if (opts.workers <= 1) {
        Pipeline pipeline(classifier, opts.flows);
        Frame frame;
        std::uint64_t index = 0;
        while (next(frame)) {
            if (auto v = pipeline.process_frame(frame.bytes, link, frame.ts_us, index)) {
                if (sink) sink(*v);
            }
            ++index;
        }
        total.merge(pipeline.summary());
    } else {
        struct Item {
            ParsedPacket packet;
            std::uint64_t index;
        };
        using Batch = std::vector<Item>;
        constexpr std::size_t kBatch = 256;
        const unsigned n = opts.workers;
        std::vector<std::unique_ptr<BoundedQueue<Batch>>> queues;
        std::vector<std::unique_ptr<Pipeline>> pipelines;
        for (unsigned w = 0; w < n; ++w) {
            queues.push_back(std::make_unique<BoundedQueue<Batch>>(std::max<std::size_t>(1, opts.queue_capacity / kBatch)));
            pipelines.push_back(std::make_unique<Pipeline>(classifier, opts.flows));
        }
        std::vector<std::thread> threads;
        for (unsigned w = 0; w < n; ++w) {
            threads.emplace_back([&, w] {
                while (auto batch = queues[w]->pop()) {
                    for (const Item& item : *batch) {
                        const VerdictRecord v = pipelines[w]->process(item.packet, item.index);
                        if (sink) sink(v);
                    }
                }
            });
        }

        RunSummary ingest;
        std::vector<Batch> pending(n);
        Frame frame;
        std::uint64_t index = 0;
        while (next(frame)) {
            const ParseResult r = parse_packet(frame.bytes, link, frame.ts_us);
            if (!r) {
                ++ingest.packets_seen;
                ingest.note_skip(r.skip_reason());
            } else {
                const unsigned w = static_cast<unsigned>(flow_hash(canonical_key(r.packet())) % n);
                pending[w].push_back(Item{r.packet(), index});
                if (pending[w].size() >= kBatch) {
                    queues[w]->push(std::move(pending[w]));
                    pending[w] = Batch{};
                }
            }
            ++index;
        }
        for (unsigned w = 0; w < n; ++w) {
            if (!pending[w].empty()) queues[w]->push(std::move(pending[w]));
            queues[w]->close();
        }
        for (auto& t : threads) t.join();
        total.merge(ingest);
        for (const auto& p : pipelines) total.merge(p->summary());
    }

    total.elapsed_us =
        std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start).count();
    return total;
}

/// Replays a capture file. Timestamps come from the capture, so a replay is
/// reproducible.
inline RunSummary run_replay(const std::string& capture_path, const Classifier& classifier,
                             const DatapathOptions& opts, const VerdictSink& sink) {
    PcapReader reader(capture_path);
    const LinkType link = reader.link_type();
    FrameSource source = [&reader](Frame& f) {
        auto next = reader.next();
        if (!next) return false;
        f = std::move(*next);
        return true;
    };
    return run_frames(source, link, classifier, opts, sink);
}

}  // namespace flowguard
