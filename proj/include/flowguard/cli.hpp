#pragma once

// Command-line front end. Exit status: 0 success, 1 operational error,
// 2 usage error.

#include <atomic>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flowguard/bench.hpp"
#include "flowguard/constraint_check.hpp"
#include "flowguard/datapath.hpp"
#include "flowguard/dt_model.hpp"
#include "flowguard/kernel_codegen.hpp"
#include "flowguard/live.hpp"

namespace flowguard::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;

struct GlobalConfig {
    std::string model_path;
    int max_depth = 10;
    int max_leaves = 1000;
    std::size_t flow_capacity = 65536;
    double idle_timeout_s = 300.0;
    unsigned workers = 1;
    std::uint64_t seed = 1;
    int verbosity = 0;

    ModelLimits limits() const { return {max_depth, max_leaves}; }
    DatapathOptions datapath() const {
        DatapathOptions o;
        o.flows.capacity = flow_capacity;
        o.flows.idle_timeout_us = static_cast<std::int64_t>(idle_timeout_s * 1e6);
        o.workers = workers;
        return o;
    }
};

inline std::atomic<bool>& stop_requested() {
    static std::atomic<bool> flag{false};
    return flag;
}

extern "C" inline void flowguard_on_signal(int) { stop_requested().store(true); }

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline std::shared_ptr<const TreeModel> load(const GlobalConfig& g) {
    if (g.model_path.empty()) throw UsageError("--model is required");
    return std::make_shared<const TreeModel>(load_model_file(g.model_path, g.limits()));
}

inline Backend backend_from(const std::string& name) {
    auto b = parse_backend(name);
    if (!b) throw UsageError("unknown backend '" + name + "' (expected interpreter or flattened)");
    return *b;
}

/// Runs `body` writing verdicts to the file named by `output` ("-" = out).
template <typename Body>
RunSummary with_verdict_output(const std::string& output, std::ostream& out, Body&& body) {
    if (output == "-") {
        StreamSink sink(out);
        auto s = body(sink.as_sink());
        out.flush();
        return s;
    }
    std::ofstream file(output, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("cannot create output file '" + output + "'");
    StreamSink sink(file);
    auto s = body(sink.as_sink());
    file.flush();
    if (!file) throw std::runtime_error("error writing '" + output + "'");
    return s;
}

}  // namespace detail

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"flowguard: flow-based intrusion detection with a fixed-point decision tree", "flowguard"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_help_all_flag("--help-all", "Print help for every subcommand");

    GlobalConfig g;
    app.add_option("--model", g.model_path, "Model-exchange document");
    app.add_option("--max-depth", g.max_depth, "Maximum accepted tree depth")->capture_default_str();
    app.add_option("--max-leaves", g.max_leaves, "Maximum accepted leaf count")->capture_default_str();
    app.add_option("--flow-capacity", g.flow_capacity, "Flow table capacity per worker")->capture_default_str();
    app.add_option("--idle-timeout", g.idle_timeout_s, "Flow idle timeout in seconds")->capture_default_str();
    app.add_option("--workers", g.workers, "Worker threads (flows sharded by hash)")->capture_default_str();
    app.add_option("--seed", g.seed, "Seed for generated traffic")->capture_default_str();
    app.add_flag("-v,--verbose", g.verbosity, "More output");

    // replay
    std::string pcap_path;
    std::string backend_name = "flattened";
    std::string output = "-";
    auto* replay = app.add_subcommand("replay", "Classify every packet of a capture file");
    replay->add_option("--pcap", pcap_path, "Capture file (pcap)")->required();
    replay->add_option("--backend", backend_name, "interpreter or flattened")->capture_default_str();
    replay->add_option("--output", output, "Verdict file, '-' for stdout")->capture_default_str();

    // live
    std::string interface;
    double live_duration = 10.0;
    auto* live = app.add_subcommand("live", "Classify packets from a raw socket on an interface");
    live->add_option("--interface", interface, "Network interface")->required();
    live->add_option("--backend", backend_name, "interpreter or flattened")->capture_default_str();
    live->add_option("--duration", live_duration, "Seconds to capture (0 = return immediately)")
        ->capture_default_str();
    live->add_option("--output", output, "Verdict file, '-' for stdout")->capture_default_str();

    // bench
    BenchConfig bench_cfg;
    std::string backends_csv = "interpreter,flattened";
    bool long_run = false;
    bool show_trials = false;
    auto* bench = app.add_subcommand("bench", "Measure packets/s per backend (mean and SD over trials)");
    bench->add_option("--backends", backends_csv, "Comma-separated backends")->capture_default_str();
    bench->add_option("--trials", bench_cfg.trials, "Trials per backend")->capture_default_str();
    bench->add_option("--duration", bench_cfg.duration_s, "Seconds per trial")->capture_default_str();
    bench->add_option("--flows", bench_cfg.generator.n_flows, "Generated flows")->capture_default_str();
    bench->add_option("--pkt-size", bench_cfg.generator.pkt_size_max, "Generated IPv4 packet length")
        ->capture_default_str();
    bench->add_option("--reverse-fraction", bench_cfg.generator.reverse_fraction,
                      "Share of packets sent by the responder")
        ->capture_default_str();
    bench->add_flag("--long", long_run, "10 s x 10 trials");
    bench->add_flag("--show-trials", show_trials, "Print per-trial packet counts");

    // compile
    std::string compile_out;
    bool unroll = false;
    auto* compile = app.add_subcommand("compile", "Emit the restricted-C classifier program");
    compile->add_option("--out", compile_out, "Output source file")->required();
    compile->add_flag("--unroll", unroll, "Emit the tree as nested conditionals instead of a counted loop");

    // check
    std::string check_path;
    auto* check = app.add_subcommand("check", "Check an emitted program against the verifier constraints");
    check->add_option("file", check_path, "Emitted source file")->required();

    // quantize
    std::vector<std::string> values;
    auto* quantize_cmd = app.add_subcommand("quantize", "Show Q47.16 quantization of decimals or model thresholds");
    quantize_cmd->add_option("values", values, "Decimal values");

    // model-info
    auto* info = app.add_subcommand("model-info", "Summarize a model document");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (replay->parsed()) {
            const auto model = detail::load(g);
            const Classifier classifier(model, detail::backend_from(backend_name));
            const RunSummary s = detail::with_verdict_output(output, out, [&](const VerdictSink& sink) {
                return run_replay(pcap_path, classifier, g.datapath(), sink);
            });
            err << format_summary(s);
            if (saturation_count() > 0) err << "  saturations: " << saturation_count() << "\n";
            return kExitOk;
        }
        if (live->parsed()) {
            const auto model = detail::load(g);
            const Classifier classifier(model, detail::backend_from(backend_name));
            stop_requested().store(false);
            std::signal(SIGINT, flowguard_on_signal);
            std::signal(SIGTERM, flowguard_on_signal);
            const RunSummary s = detail::with_verdict_output(output, out, [&](const VerdictSink& sink) {
                return run_live(interface, classifier, live_duration, g.datapath(), sink, &stop_requested());
            });
            std::signal(SIGINT, SIG_DFL);
            std::signal(SIGTERM, SIG_DFL);
            err << format_summary(s);
            return kExitOk;
        }
        if (bench->parsed()) {
            const auto model = detail::load(g);
            bench_cfg.backends.clear();
            std::stringstream ss(backends_csv);
            for (std::string name; std::getline(ss, name, ',');) bench_cfg.backends.push_back(detail::backend_from(name));
            if (long_run) {
                bench_cfg.duration_s = 10.0;
                bench_cfg.trials = 10;
            }
            bench_cfg.generator.pkt_size_min = bench_cfg.generator.pkt_size_max;
            bench_cfg.generator.seed = g.seed;
            bench_cfg.workers = g.workers;
            bench_cfg.flows = g.datapath().flows;
            try {
                validate(bench_cfg);
            } catch (const BenchConfigError& e) {
                throw UsageError(e.what());
            }
            out << "packets each backend can process per second (mean and SD over " << bench_cfg.trials
                << " trials of " << bench_cfg.duration_s << " s)\n";
            const BenchResult r = run_bench(model, bench_cfg);
            out << format_bench_table(r) << format_relative(r);
            if (show_trials || g.verbosity > 0) out << format_trials(r);
            return kExitOk;
        }
        if (compile->parsed()) {
            const auto model = detail::load(g);
            EmitConfig cfg;
            cfg.max_depth = g.max_depth;
            cfg.max_leaves = g.max_leaves;
            cfg.unroll = unroll;
            cfg.flow_capacity = g.flow_capacity;
            const std::string source = emit_restricted_source(flatten(*model), cfg);
            std::ofstream file(compile_out, std::ios::binary | std::ios::trunc);
            if (!file) throw std::runtime_error("cannot create '" + compile_out + "'");
            file << source;
            if (!file.flush()) throw std::runtime_error("error writing '" + compile_out + "'");
            if (g.verbosity > 0) err << "wrote " << compile_out << " (" << source.size() << " bytes)\n";
            return kExitOk;
        }
        if (check->parsed()) {
            const ConstraintReport report = check_source(detail::read_file(check_path));
            if (report.passed) {
                out << check_path << ": ok\n";
                return kExitOk;
            }
            for (const auto& v : report.violations)
                out << check_path << ": " << v.location << ": [" << to_string(v.rule) << "] " << v.detail << "\n";
            return kExitError;
        }
        if (quantize_cmd->parsed()) {
            if (values.empty() && g.model_path.empty()) throw UsageError("give decimal values or --model");
            out << std::left << std::setw(24) << "decimal" << std::setw(22) << "raw" << "quantized\n";
            for (const auto& v : values) {
                const Fx64 q = fx_from_decimal(v);
                out << std::setw(24) << v << std::setw(22) << q.raw << fx_to_decimal(q) << "\n";
            }
            if (!g.model_path.empty()) {
                const auto model = detail::load(g);
                for (std::size_t i = 0; i < model->nodes.size(); ++i) {
                    const TreeNode& n = model->nodes[i];
                    if (n.is_leaf()) continue;
                    out << std::setw(24) << model->threshold_text[i] << std::setw(22) << n.threshold.raw
                        << fx_to_decimal(n.threshold) << "  (node " << i << ", "
                        << kFeatureNames[static_cast<std::size_t>(n.feature_idx)] << ")\n";
                }
            }
            return kExitOk;
        }
        if (info->parsed()) {
            const auto model = detail::load(g);
            out << "nodes: " << model->nodes.size() << "\n"
                << "depth: " << model->depth << "\n"
                << "leaves: " << model->n_leaves << "\n"
                << "classes: " << model->n_classes << "\n"
                << "splits per feature:\n";
            const auto usage = feature_usage(*model);
            for (std::size_t i = 0; i < kNumFeatures; ++i)
                out << "  " << std::left << std::setw(10) << kFeatureNames[i] << std::right << " " << usage.splits[i]
                    << "\n";
            return kExitOk;
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitUsage;
}

}  // namespace flowguard::cli
