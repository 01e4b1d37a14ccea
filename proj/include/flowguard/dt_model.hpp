#pragma once

// Decision-tree model: loading and validation of the model-exchange document,
// threshold quantization, and evaluation.
//
// Document layout (JSON):
//
//   {
//     "format_version": 1,
//     "n_classes": 2,
//     "feature_names": ["src_port", ..., "mad_dir"],       // all 12, any order
//     "nodes": [
//       {"id": 0, "kind": "split", "feature": "pkt_len", "threshold": "100.5",
//        "left": 1, "right": 2},
//       {"id": 1, "kind": "leaf", "label": 0},
//       {"id": 2, "kind": "leaf", "label": 1}
//     ]
//   }
//
// A split sends a feature vector left iff value <= threshold. Unknown fields
// are rejected.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "flowguard/features.hpp"
#include "flowguard/fxp.hpp"

namespace flowguard {

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ModelLimits {
    int max_depth = 10;
    int max_leaves = 1000;
};

inline constexpr int kFormatVersion = 1;
inline constexpr std::int32_t kLeaf = -1;

struct TreeNode {
    std::int32_t feature_idx = kLeaf;  // canonical feature index, or kLeaf
    Fx64 threshold;
    std::int32_t left = 0;
    std::int32_t right = 0;
    std::int32_t label = 0;

    bool is_leaf() const noexcept { return feature_idx < 0; }
};

struct TreeModel {
    std::vector<TreeNode> nodes;  // root at index 0; index == document id
    std::array<std::string, kNumFeatures> feature_names;  // document order
    int depth = 0;
    int n_leaves = 0;
    int n_classes = 2;

    // Audit/reference copies of the split thresholds, indexed like nodes.
    std::vector<std::string> threshold_text;
    std::vector<double> threshold_float;
};

namespace detail {

inline void reject_unknown_fields(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed,
                                  const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ModelError(where + ": unknown field '" + key + "'");
    }
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* field, const std::string& where) {
    auto it = obj.find(field);
    if (it == obj.end()) throw ModelError(where + ": missing field '" + field + "'");
    return *it;
}

inline std::int64_t require_int(const nlohmann::json& obj, const char* field, const std::string& where) {
    const auto& v = require(obj, field, where);
    if (!v.is_number_integer()) throw ModelError(where + ": field '" + field + "' must be an integer");
    return v.get<std::int64_t>();
}

inline std::string require_string(const nlohmann::json& obj, const char* field, const std::string& where) {
    const auto& v = require(obj, field, where);
    if (!v.is_string()) throw ModelError(where + ": field '" + field + "' must be a string");
    return v.get<std::string>();
}

}  // namespace detail

/// Structural checks shared by the loader and programmatic construction:
/// child indices in range, every node reachable from the root exactly once
/// (so the graph is a tree), labels in range, limits respected. Fills in
/// depth and n_leaves.
inline void validate_tree(TreeModel& m, const ModelLimits& limits) {
    const auto n = static_cast<std::int64_t>(m.nodes.size());
    if (n == 0) throw ModelError("model has no nodes");
    if (m.n_classes < 2) throw ModelError("n_classes must be at least 2");

    std::vector<std::int32_t> parents(m.nodes.size(), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        const TreeNode& node = m.nodes[static_cast<std::size_t>(i)];
        if (node.is_leaf()) {
            if (node.label < 0 || node.label >= m.n_classes)
                throw ModelError("node " + std::to_string(i) + ": label " + std::to_string(node.label) +
                                 " outside [0, " + std::to_string(m.n_classes) + ")");
            continue;
        }
        if (node.feature_idx >= static_cast<std::int32_t>(kNumFeatures))
            throw ModelError("node " + std::to_string(i) + ": feature index out of range");
        for (std::int32_t child : {node.left, node.right}) {
            if (child < 0 || child >= n)
                throw ModelError("node " + std::to_string(i) + " references node " + std::to_string(child) +
                                 ", but the model has " + std::to_string(n) + " nodes");
            if (child == 0) throw ModelError("node " + std::to_string(i) + " references the root (cycle)");
            if (++parents[static_cast<std::size_t>(child)] > 1)
                throw ModelError("node " + std::to_string(child) + " has more than one parent");
        }
    }

    // Breadth-first from the root; depth = edges on the longest root-to-leaf path.
    std::vector<std::int32_t> level(m.nodes.size(), -1);
    std::vector<std::int32_t> queue{0};
    level[0] = 0;
    int depth = 0;
    int leaves = 0;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const std::int32_t i = queue[head];
        const TreeNode& node = m.nodes[static_cast<std::size_t>(i)];
        depth = std::max(depth, level[static_cast<std::size_t>(i)]);
        if (node.is_leaf()) {
            ++leaves;
            continue;
        }
        for (std::int32_t child : {node.left, node.right}) {
            level[static_cast<std::size_t>(child)] = level[static_cast<std::size_t>(i)] + 1;
            queue.push_back(child);
        }
    }
    if (static_cast<std::int64_t>(queue.size()) != n) {
        for (std::size_t i = 0; i < level.size(); ++i)
            if (level[i] < 0) throw ModelError("node " + std::to_string(i) + " is unreachable from the root");
    }
    if (depth > limits.max_depth) throw ModelError("depth exceeds " + std::to_string(limits.max_depth) +
                                                   " (tree depth is " + std::to_string(depth) + ")");
    if (leaves > limits.max_leaves) throw ModelError("leaf count exceeds " + std::to_string(limits.max_leaves) +
                                                     " (tree has " + std::to_string(leaves) + " leaves)");
    m.depth = depth;
    m.n_leaves = leaves;
}

inline TreeModel load_model(std::string_view text, const ModelLimits& limits = {}) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ModelError(std::string("malformed model document: ") + e.what());
    }
    if (!doc.is_object()) throw ModelError("model document must be an object");
    detail::reject_unknown_fields(doc, {"format_version", "n_classes", "feature_names", "nodes"}, "document");

    const auto version = detail::require_int(doc, "format_version", "document");
    if (version != kFormatVersion)
        throw ModelError("unsupported format_version " + std::to_string(version));

    TreeModel m;
    const auto n_classes = detail::require_int(doc, "n_classes", "document");
    if (n_classes < 2 || n_classes > 65536) throw ModelError("n_classes must be in [2, 65536]");
    m.n_classes = static_cast<int>(n_classes);

    const auto& names = detail::require(doc, "feature_names", "document");
    if (!names.is_array() || names.size() != kNumFeatures)
        throw ModelError("feature_names must list exactly " + std::to_string(kNumFeatures) + " names");
    std::set<std::size_t> seen;
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
        if (!names[i].is_string()) throw ModelError("feature_names entries must be strings");
        const auto name = names[i].get<std::string>();
        const auto idx = feature_index(name);
        if (!idx) throw ModelError("unknown feature name '" + name + "'");
        if (!seen.insert(*idx).second) throw ModelError("duplicate feature name '" + name + "'");
        m.feature_names[i] = name;
    }

    const auto& nodes = detail::require(doc, "nodes", "document");
    if (!nodes.is_array() || nodes.empty()) throw ModelError("nodes must be a non-empty array");
    const std::size_t n = nodes.size();
    m.nodes.resize(n);
    m.threshold_text.assign(n, "");
    m.threshold_float.assign(n, 0.0);
    std::vector<bool> defined(n, false);

    for (std::size_t k = 0; k < n; ++k) {
        const auto& rec = nodes[k];
        const std::string where = "nodes[" + std::to_string(k) + "]";
        if (!rec.is_object()) throw ModelError(where + ": must be an object");
        const auto id = detail::require_int(rec, "id", where);
        if (id < 0 || id >= static_cast<std::int64_t>(n))
            throw ModelError(where + ": id " + std::to_string(id) + " outside [0, " + std::to_string(n) + ")");
        const auto slot = static_cast<std::size_t>(id);
        if (defined[slot]) throw ModelError(where + ": duplicate id " + std::to_string(id));
        defined[slot] = true;

        const auto kind = detail::require_string(rec, "kind", where);
        TreeNode& node = m.nodes[slot];
        if (kind == "leaf") {
            detail::reject_unknown_fields(rec, {"id", "kind", "label"}, where);
            const auto label = detail::require_int(rec, "label", where);
            if (label < 0 || label >= m.n_classes)
                throw ModelError(where + ": label " + std::to_string(label) + " outside [0, " +
                                 std::to_string(m.n_classes) + ")");
            node.feature_idx = kLeaf;
            node.label = static_cast<std::int32_t>(label);
        } else if (kind == "split") {
            detail::reject_unknown_fields(rec, {"id", "kind", "feature", "threshold", "left", "right"}, where);
            const auto feature = detail::require_string(rec, "feature", where);
            const auto idx = feature_index(feature);
            if (!idx) throw ModelError(where + ": unknown feature name '" + feature + "'");
            const auto threshold = detail::require_string(rec, "threshold", where);
            try {
                node.threshold = fx_from_decimal(threshold);
            } catch (const FxParseError& e) {
                throw ModelError(where + ": " + e.what());
            }
            const auto left = detail::require_int(rec, "left", where);
            const auto right = detail::require_int(rec, "right", where);
            auto as_index = [&](std::int64_t v) {
                if (v < 0 || v >= static_cast<std::int64_t>(n))
                    throw ModelError(where + " references node " + std::to_string(v) + ", but the model has " +
                                     std::to_string(n) + " nodes");
                return static_cast<std::int32_t>(v);
            };
            node.feature_idx = static_cast<std::int32_t>(*idx);
            node.left = as_index(left);
            node.right = as_index(right);
            m.threshold_text[slot] = threshold;
            m.threshold_float[slot] = std::strtod(threshold.c_str(), nullptr);
        } else {
            throw ModelError(where + ": kind must be 'split' or 'leaf', got '" + kind + "'");
        }
    }

    validate_tree(m, limits);
    return m;
}

inline TreeModel load_model_file(const std::string& path, const ModelLimits& limits = {}) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open model file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_model(buf.str(), limits);
}

/// Serializes a model back to the exchange format. Thresholds keep their
/// original decimal text when present, otherwise the exact Q16 value.
inline std::string to_document(const TreeModel& m) {
    nlohmann::ordered_json doc;
    doc["format_version"] = kFormatVersion;
    doc["n_classes"] = m.n_classes;
    doc["feature_names"] = m.feature_names;
    auto nodes = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < m.nodes.size(); ++i) {
        const TreeNode& node = m.nodes[i];
        nlohmann::ordered_json rec;
        rec["id"] = i;
        if (node.is_leaf()) {
            rec["kind"] = "leaf";
            rec["label"] = node.label;
        } else {
            rec["kind"] = "split";
            rec["feature"] = std::string(kFeatureNames[static_cast<std::size_t>(node.feature_idx)]);
            const bool have_text = i < m.threshold_text.size() && !m.threshold_text[i].empty();
            rec["threshold"] = have_text ? m.threshold_text[i] : fx_to_decimal(node.threshold);
            rec["left"] = node.left;
            rec["right"] = node.right;
        }
        nodes.push_back(std::move(rec));
    }
    doc["nodes"] = std::move(nodes);
    return doc.dump(1) + "\n";
}

/// Array walk from the root: left iff fv[feature] <= threshold.
inline std::int32_t eval(const TreeModel& m, const FeatureVector& fv) noexcept {
    const TreeNode* nodes = m.nodes.data();
    std::int32_t i = 0;
    // Validation bounds every path by m.depth internal nodes.
    for (int step = 0; step < m.depth && !nodes[i].is_leaf(); ++step) {
        const TreeNode& node = nodes[i];
        i = fv[static_cast<std::size_t>(node.feature_idx)] <= node.threshold ? node.left : node.right;
    }
    return nodes[i].label;
}

using FloatFeatureVector = std::array<double, kNumFeatures>;

/// Same traversal against the unquantized decimal thresholds.
inline std::int32_t eval_float(const TreeModel& m, const FloatFeatureVector& fv) noexcept {
    std::int32_t i = 0;
    for (int step = 0; step < m.depth && !m.nodes[static_cast<std::size_t>(i)].is_leaf(); ++step) {
        const TreeNode& node = m.nodes[static_cast<std::size_t>(i)];
        i = fv[static_cast<std::size_t>(node.feature_idx)] <= m.threshold_float[static_cast<std::size_t>(i)] ? node.left
                                                                                                             : node.right;
    }
    return m.nodes[static_cast<std::size_t>(i)].label;
}

inline FeatureVector quantize(const FloatFeatureVector& fv) noexcept {
    FeatureVector out;
    for (std::size_t i = 0; i < kNumFeatures; ++i) out[i] = fx_from_double(fv[i]);
    return out;
}

/// Distance below which fixed-point and float evaluation may legitimately
/// disagree (threshold and feature rounding each contribute up to 2^-17).
inline constexpr double kQuantizationMargin = 1.0 / 32768.0;

struct QuantizationCheck {
    std::int32_t label_fixed = 0;
    std::int32_t label_float = 0;
    // Some feature on either traversal path lies within kQuantizationMargin
    // of that node's threshold.
    bool near_threshold = false;

    bool diverged() const noexcept { return label_fixed != label_float; }
};

inline QuantizationCheck check_quantization(const TreeModel& m, const FloatFeatureVector& fv) {
    QuantizationCheck out;
    out.label_fixed = eval(m, quantize(fv));
    out.label_float = eval_float(m, fv);

    auto scan_path = [&](bool fixed) {
        const FeatureVector q = quantize(fv);
        std::int32_t i = 0;
        for (int step = 0; step < m.depth && !m.nodes[static_cast<std::size_t>(i)].is_leaf(); ++step) {
            const auto& node = m.nodes[static_cast<std::size_t>(i)];
            const auto f = static_cast<std::size_t>(node.feature_idx);
            const double thr = m.threshold_float[static_cast<std::size_t>(i)];
            if (std::abs(fv[f] - thr) <= kQuantizationMargin) out.near_threshold = true;
            const bool left = fixed ? q[f] <= node.threshold : fv[f] <= thr;
            i = left ? node.left : node.right;
        }
    };
    scan_path(true);
    scan_path(false);
    return out;
}

struct FeatureUsage {
    std::array<int, kNumFeatures> splits{};
};

inline FeatureUsage feature_usage(const TreeModel& m) {
    FeatureUsage u;
    for (const auto& node : m.nodes)
        if (!node.is_leaf()) ++u.splits[static_cast<std::size_t>(node.feature_idx)];
    return u;
}

}  // namespace flowguard
