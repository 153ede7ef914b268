#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmgnn/mat.hpp"

namespace mmgnn {

using NodeId = std::int64_t;

/// Undirected graph in CSR form. Storage is symmetric: (u,v) present iff
/// (v,u) present. No self-loops, no duplicate edges, neighbor lists sorted.
struct SparseGraph {
    NodeId num_nodes = 0;
    std::vector<NodeId> row_offsets;  // length num_nodes + 1, non-decreasing
    std::vector<NodeId> col_indices;  // length num_edges (directed count)

    NodeId num_edges() const { return static_cast<NodeId>(col_indices.size()); }
    NodeId degree(NodeId v) const { return row_offsets[v + 1] - row_offsets[v]; }
    std::span<const NodeId> neighbors(NodeId v) const {
        return {col_indices.data() + row_offsets[v], static_cast<std::size_t>(degree(v))};
    }

    /// Builds symmetric CSR from an edge list: drops self-loops, adds the
    /// reverse of every edge, sorts rows, removes duplicates.
    static SparseGraph from_edges(NodeId num_nodes, const std::vector<std::pair<NodeId, NodeId>>& edges,
                                  bool add_self_loops = false);

    /// Throws std::runtime_error on any CSR invariant violation.
    void validate() const;
};

struct FeatureMatrix {
    Mat values;  // num_nodes x d_in, finite
    std::vector<std::string> feature_names;
};

struct LabelVector {
    std::vector<NodeId> labels;  // in [0, num_classes)
    NodeId num_classes = 0;

    void validate() const;  // every class in 0..num_classes occupied
};

enum class Role { Train, Val, Test, Unused };

const char* role_name(Role r);
std::optional<Role> parse_role(std::string_view s);

struct SplitMask {
    std::vector<Role> roles;

    NodeId count(Role r) const;
    void validate() const;  // train/val/test all non-empty
};

struct Dataset {
    SparseGraph graph;
    FeatureMatrix features;
    LabelVector labels;
    std::optional<SplitMask> split;

    NodeId num_nodes() const { return graph.num_nodes; }
    std::size_t input_dim() const { return features.values.cols; }
};

/// Reads edges.tsv / features.csv / labels.tsv (+ optional split.tsv) from a
/// dataset directory. Self-loops in the edge file are dropped; pass
/// add_self_loops to re-add one per node.
Dataset load_graph(const std::filesystem::path& dir, bool add_self_loops = false);

/// Writes the directory format read by load_graph; feature values are
/// round-trip exact (17 significant digits).
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);

struct SplitPolicy {
    enum class Kind { PerClassCount, Ratio };
    Kind kind = Kind::Ratio;
    // PerClassCount
    NodeId train_per_class = 0;
    NodeId val_total = 0;
    NodeId test_total = 0;
    // Ratio (fractions summing to <= 1; remainder unused)
    double train_frac = 0.6;
    double val_frac = 0.2;
    double test_frac = 0.2;

    static SplitPolicy per_class(NodeId train_per_class, NodeId val_total, NodeId test_total);
    static SplitPolicy ratio(double train, double val, double test);
};

/// Deterministic under (labels, policy, seed).
SplitMask make_split(const LabelVector& labels, const SplitPolicy& policy, std::uint64_t seed);

/// Class-conditional Gaussian construction used for the separation
/// experiments: nodes of class c draw features from N(mean_c, scale_c * I)
/// and connect to uniformly sampled same-class nodes, so each class's
/// neighborhood feature distribution is that same Gaussian.
struct SyntheticSpec {
    NodeId nodes_per_class = 0;
    NodeId num_classes = 0;
    std::size_t feature_dim = 0;
    Mat class_means;  // num_classes x feature_dim; empty => all zero
    std::vector<double> class_covariance_scales;
    NodeId neighbors_per_node = 0;
    std::uint64_t seed = 0;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace mmgnn
