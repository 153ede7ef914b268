#include "mmgnn/graph.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mmgnn/rng.hpp"

namespace mmgnn {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::ifstream open_or_fail(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) fail("missing or unreadable file: " + p.string());
    return f;
}

bool blank_or_comment(const std::string& line) {
    for (char c : line) {
        if (c == '#') return true;
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

NodeId parse_node_id(const std::string& tok, const std::string& where) {
    std::size_t pos = 0;
    long long v;
    try {
        v = std::stoll(tok, &pos);
    } catch (const std::exception&) {
        fail("non-integer node id '" + tok + "' in " + where);
    }
    if (pos != tok.size() || v < 0) fail("invalid node id '" + tok + "' in " + where);
    return static_cast<NodeId>(v);
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

SparseGraph SparseGraph::from_edges(NodeId num_nodes, const std::vector<std::pair<NodeId, NodeId>>& edges,
                                    bool add_self_loops) {
    std::vector<std::vector<NodeId>> adj(static_cast<std::size_t>(num_nodes));
    for (const auto& [u, v] : edges) {
        if (u < 0 || u >= num_nodes || v < 0 || v >= num_nodes)
            fail("edge index out of range: " + std::to_string(u) + " " + std::to_string(v));
        if (u == v) continue;  // self-loops stripped
        adj[static_cast<std::size_t>(u)].push_back(v);
        adj[static_cast<std::size_t>(v)].push_back(u);
    }
    if (add_self_loops)
        for (NodeId v = 0; v < num_nodes; ++v) adj[static_cast<std::size_t>(v)].push_back(v);

    SparseGraph g;
    g.num_nodes = num_nodes;
    g.row_offsets.assign(static_cast<std::size_t>(num_nodes) + 1, 0);
    for (auto& nbrs : adj) {
        std::sort(nbrs.begin(), nbrs.end());
        nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    }
    for (NodeId v = 0; v < num_nodes; ++v)
        g.row_offsets[static_cast<std::size_t>(v) + 1] =
            g.row_offsets[static_cast<std::size_t>(v)] + static_cast<NodeId>(adj[static_cast<std::size_t>(v)].size());
    g.col_indices.reserve(static_cast<std::size_t>(g.row_offsets.back()));
    for (auto& nbrs : adj) g.col_indices.insert(g.col_indices.end(), nbrs.begin(), nbrs.end());
    return g;
}

void SparseGraph::validate() const {
    if (row_offsets.size() != static_cast<std::size_t>(num_nodes) + 1) fail("CSR: row_offsets length mismatch");
    if (row_offsets.front() != 0) fail("CSR: row_offsets[0] != 0");
    for (std::size_t i = 0; i + 1 < row_offsets.size(); ++i)
        if (row_offsets[i] > row_offsets[i + 1]) fail("CSR: row_offsets not non-decreasing");
    if (row_offsets.back() != num_edges()) fail("CSR: row_offsets[n] != num_edges");
    for (NodeId v = 0; v < num_nodes; ++v) {
        auto nbrs = neighbors(v);
        for (std::size_t i = 0; i < nbrs.size(); ++i) {
            if (nbrs[i] < 0 || nbrs[i] >= num_nodes) fail("CSR: col index out of range");
            if (i > 0 && nbrs[i - 1] >= nbrs[i]) fail("CSR: row not strictly increasing");
        }
    }
    // symmetry
    for (NodeId v = 0; v < num_nodes; ++v)
        for (NodeId u : neighbors(v)) {
            auto nb = neighbors(u);
            if (!std::binary_search(nb.begin(), nb.end(), v)) fail("CSR: asymmetric edge");
        }
}

void LabelVector::validate() const {
    if (num_classes < 1) fail("labels: num_classes < 1");
    std::vector<NodeId> counts(static_cast<std::size_t>(num_classes), 0);
    for (NodeId y : labels) {
        if (y < 0 || y >= num_classes) fail("label out of range: " + std::to_string(y));
        ++counts[static_cast<std::size_t>(y)];
    }
    for (NodeId c = 0; c < num_classes; ++c)
        if (counts[static_cast<std::size_t>(c)] == 0) fail("class " + std::to_string(c) + " has no nodes");
}

const char* role_name(Role r) {
    switch (r) {
        case Role::Train: return "train";
        case Role::Val: return "val";
        case Role::Test: return "test";
        case Role::Unused: return "unused";
    }
    return "unused";
}

std::optional<Role> parse_role(std::string_view s) {
    if (s == "train") return Role::Train;
    if (s == "val") return Role::Val;
    if (s == "test") return Role::Test;
    if (s == "unused") return Role::Unused;
    return std::nullopt;
}

NodeId SplitMask::count(Role r) const {
    NodeId n = 0;
    for (Role x : roles)
        if (x == r) ++n;
    return n;
}

void SplitMask::validate() const {
    if (count(Role::Train) == 0) fail("split: no training nodes");
    if (count(Role::Val) == 0) fail("split: no validation nodes");
    if (count(Role::Test) == 0) fail("split: no test nodes");
}

Dataset load_graph(const std::filesystem::path& dir, bool add_self_loops) {
    Dataset ds;

    // features.csv fixes the node count
    {
        auto f = open_or_fail(dir / "features.csv");
        std::string line;
        if (!std::getline(f, line)) fail("features.csv is empty: " + (dir / "features.csv").string());
        {
            std::stringstream ss(line);
            std::string name;
            while (std::getline(ss, name, ',')) ds.features.feature_names.push_back(name);
        }
        const std::size_t d_in = ds.features.feature_names.size();
        if (d_in < 1) fail("features.csv: no feature columns");
        std::vector<double> vals;
        std::size_t rows = 0;
        while (std::getline(f, line)) {
            if (blank_or_comment(line)) continue;
            std::stringstream ss(line);
            std::string cell;
            std::size_t got = 0;
            while (std::getline(ss, cell, ',')) {
                std::size_t pos = 0;
                double v = 0;
                try {
                    v = std::stod(cell, &pos);
                } catch (const std::exception&) {
                    fail("features.csv row " + std::to_string(rows) + ": non-numeric cell '" + cell + "'");
                }
                if (pos != cell.size() || !std::isfinite(v))
                    fail("features.csv row " + std::to_string(rows) + ": non-numeric cell '" + cell + "'");
                vals.push_back(v);
                ++got;
            }
            if (got != d_in)
                fail("features.csv row " + std::to_string(rows) + ": expected " + std::to_string(d_in) +
                     " cells, got " + std::to_string(got));
            ++rows;
        }
        if (rows == 0) fail("features.csv has no data rows");
        ds.features.values = Mat(rows, d_in);
        ds.features.values.a = std::move(vals);
    }
    const NodeId n = static_cast<NodeId>(ds.features.values.rows);

    // labels.tsv: one label per node
    {
        auto f = open_or_fail(dir / "labels.tsv");
        ds.labels.labels.assign(static_cast<std::size_t>(n), -1);
        std::string line;
        while (std::getline(f, line)) {
            if (blank_or_comment(line)) continue;
            std::stringstream ss(line);
            std::string a, b;
            if (!(ss >> a >> b)) fail("labels.tsv: malformed line '" + line + "'");
            const NodeId v = parse_node_id(a, "labels.tsv");
            const NodeId y = parse_node_id(b, "labels.tsv");
            if (v >= n) fail("labels.tsv: node id out of range: " + std::to_string(v));
            ds.labels.labels[static_cast<std::size_t>(v)] = y;
            ds.labels.num_classes = std::max(ds.labels.num_classes, y + 1);
        }
        for (NodeId v = 0; v < n; ++v)
            if (ds.labels.labels[static_cast<std::size_t>(v)] < 0)
                fail("labels.tsv: no label for node " + std::to_string(v));
        ds.labels.validate();
    }

    // edges.tsv
    {
        auto f = open_or_fail(dir / "edges.tsv");
        std::vector<std::pair<NodeId, NodeId>> edges;
        std::string line;
        while (std::getline(f, line)) {
            if (blank_or_comment(line)) continue;
            std::stringstream ss(line);
            std::string a, b;
            if (!(ss >> a >> b)) fail("edges.tsv: malformed line '" + line + "'");
            const NodeId u = parse_node_id(a, "edges.tsv");
            const NodeId v = parse_node_id(b, "edges.tsv");
            if (u >= n || v >= n)
                fail("edges.tsv: node id out of range: " + std::to_string(std::max(u, v)));
            edges.emplace_back(u, v);
        }
        ds.graph = SparseGraph::from_edges(n, edges, add_self_loops);
    }

    // split.tsv (optional)
    if (std::filesystem::exists(dir / "split.tsv")) {
        auto f = open_or_fail(dir / "split.tsv");
        SplitMask mask;
        mask.roles.assign(static_cast<std::size_t>(n), Role::Unused);
        std::string line;
        while (std::getline(f, line)) {
            if (blank_or_comment(line)) continue;
            std::stringstream ss(line);
            std::string a, b;
            if (!(ss >> a >> b)) fail("split.tsv: malformed line '" + line + "'");
            const NodeId v = parse_node_id(a, "split.tsv");
            if (v >= n) fail("split.tsv: node id out of range: " + std::to_string(v));
            auto r = parse_role(b);
            if (!r) fail("split.tsv: unknown role '" + b + "'");
            mask.roles[static_cast<std::size_t>(v)] = *r;
        }
        mask.validate();
        ds.split = std::move(mask);
    }

    return ds;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir / "edges.tsv");
        if (!f) fail("cannot write " + (dir / "edges.tsv").string());
        f << "# one undirected edge per line (u <= v)\n";
        for (NodeId u = 0; u < ds.graph.num_nodes; ++u)
            for (NodeId v : ds.graph.neighbors(u))
                if (u <= v) f << u << '\t' << v << '\n';
    }
    {
        std::ofstream f(dir / "features.csv");
        if (!f) fail("cannot write " + (dir / "features.csv").string());
        const auto& X = ds.features.values;
        for (std::size_t j = 0; j < X.cols; ++j) {
            if (j) f << ',';
            f << (j < ds.features.feature_names.size() ? ds.features.feature_names[j]
                                                       : "f" + std::to_string(j));
        }
        f << '\n';
        for (std::size_t i = 0; i < X.rows; ++i) {
            for (std::size_t j = 0; j < X.cols; ++j) {
                if (j) f << ',';
                f << fmt17(X(i, j));
            }
            f << '\n';
        }
    }
    {
        std::ofstream f(dir / "labels.tsv");
        if (!f) fail("cannot write " + (dir / "labels.tsv").string());
        for (std::size_t v = 0; v < ds.labels.labels.size(); ++v) f << v << '\t' << ds.labels.labels[v] << '\n';
    }
    if (ds.split) {
        std::ofstream f(dir / "split.tsv");
        if (!f) fail("cannot write " + (dir / "split.tsv").string());
        for (std::size_t v = 0; v < ds.split->roles.size(); ++v)
            f << v << '\t' << role_name(ds.split->roles[v]) << '\n';
    }
}

SplitPolicy SplitPolicy::per_class(NodeId train_per_class, NodeId val_total, NodeId test_total) {
    SplitPolicy p;
    p.kind = Kind::PerClassCount;
    p.train_per_class = train_per_class;
    p.val_total = val_total;
    p.test_total = test_total;
    return p;
}

SplitPolicy SplitPolicy::ratio(double train, double val, double test) {
    SplitPolicy p;
    p.kind = Kind::Ratio;
    p.train_frac = train;
    p.val_frac = val;
    p.test_frac = test;
    return p;
}

SplitMask make_split(const LabelVector& labels, const SplitPolicy& policy, std::uint64_t seed) {
    const NodeId n = static_cast<NodeId>(labels.labels.size());
    SplitMask mask;
    mask.roles.assign(static_cast<std::size_t>(n), Role::Unused);
    Rng rng = Rng(seed).fork("split");

    if (policy.kind == SplitPolicy::Kind::PerClassCount) {
        if (policy.train_per_class < 1) fail("split: train_per_class must be >= 1");
        std::vector<NodeId> pool;
        for (NodeId c = 0; c < labels.num_classes; ++c) {
            std::vector<NodeId> members;
            for (NodeId v = 0; v < n; ++v)
                if (labels.labels[static_cast<std::size_t>(v)] == c) members.push_back(v);
            if (static_cast<NodeId>(members.size()) < policy.train_per_class)
                fail("split: class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                     " nodes, fewer than train_per_class=" + std::to_string(policy.train_per_class));
            rng.shuffle(members);
            for (NodeId i = 0; i < policy.train_per_class; ++i)
                mask.roles[static_cast<std::size_t>(members[static_cast<std::size_t>(i)])] = Role::Train;
            pool.insert(pool.end(), members.begin() + policy.train_per_class, members.end());
        }
        std::sort(pool.begin(), pool.end());
        rng.shuffle(pool);
        if (static_cast<NodeId>(pool.size()) < policy.val_total + policy.test_total)
            fail("split: not enough remaining nodes for val+test");
        NodeId i = 0;
        for (; i < policy.val_total; ++i) mask.roles[static_cast<std::size_t>(pool[static_cast<std::size_t>(i)])] = Role::Val;
        for (; i < policy.val_total + policy.test_total; ++i)
            mask.roles[static_cast<std::size_t>(pool[static_cast<std::size_t>(i)])] = Role::Test;
    } else {
        const double sum = policy.train_frac + policy.val_frac + policy.test_frac;
        if (policy.train_frac <= 0 || policy.val_frac <= 0 || policy.test_frac <= 0 || sum > 1.0 + 1e-12)
            fail("split: ratios must be positive and sum to <= 1");
        std::vector<NodeId> order(static_cast<std::size_t>(n));
        for (NodeId v = 0; v < n; ++v) order[static_cast<std::size_t>(v)] = v;
        rng.shuffle(order);
        const NodeId n_train = static_cast<NodeId>(std::floor(policy.train_frac * static_cast<double>(n)));
        const NodeId n_val = static_cast<NodeId>(std::floor(policy.val_frac * static_cast<double>(n)));
        const NodeId n_test = static_cast<NodeId>(std::floor(policy.test_frac * static_cast<double>(n)));
        NodeId i = 0;
        for (; i < n_train; ++i) mask.roles[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = Role::Train;
        for (; i < n_train + n_val; ++i) mask.roles[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = Role::Val;
        for (; i < n_train + n_val + n_test; ++i)
            mask.roles[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = Role::Test;
    }
    mask.validate();
    return mask;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.num_classes < 1 || spec.nodes_per_class < 1) fail("synthetic: need at least one class and node");
    if (spec.feature_dim < 1) fail("synthetic: feature_dim must be >= 1");
    if (static_cast<NodeId>(spec.class_covariance_scales.size()) != spec.num_classes)
        fail("synthetic: one covariance scale per class required");
    for (double s : spec.class_covariance_scales)
        if (!(s > 0)) fail("synthetic: covariance scales must be positive");
    if (spec.neighbors_per_node < 1) fail("synthetic: neighbors_per_node must be >= 1");
    if (spec.nodes_per_class <= spec.neighbors_per_node)
        fail("synthetic: insufficient nodes per class for requested neighbor count");
    if (spec.class_means.rows != 0 &&
        (spec.class_means.rows != static_cast<std::size_t>(spec.num_classes) ||
         spec.class_means.cols != spec.feature_dim))
        fail("synthetic: class_means shape mismatch");

    const NodeId n = spec.num_classes * spec.nodes_per_class;
    Dataset ds;
    ds.labels.num_classes = spec.num_classes;
    ds.labels.labels.resize(static_cast<std::size_t>(n));
    for (NodeId v = 0; v < n; ++v) ds.labels.labels[static_cast<std::size_t>(v)] = v / spec.nodes_per_class;

    Rng root(spec.seed);
    Rng feat_rng = root.fork("features");
    ds.features.values = Mat(static_cast<std::size_t>(n), spec.feature_dim);
    for (NodeId v = 0; v < n; ++v) {
        const NodeId c = ds.labels.labels[static_cast<std::size_t>(v)];
        const double sd = std::sqrt(spec.class_covariance_scales[static_cast<std::size_t>(c)]);
        for (std::size_t j = 0; j < spec.feature_dim; ++j) {
            const double mean = spec.class_means.rows ? spec.class_means(static_cast<std::size_t>(c), j) : 0.0;
            ds.features.values(static_cast<std::size_t>(v), j) = mean + sd * feat_rng.normal();
        }
    }
    ds.features.feature_names.resize(spec.feature_dim);
    for (std::size_t j = 0; j < spec.feature_dim; ++j) ds.features.feature_names[j] = "f" + std::to_string(j);

    // wire each node to distinct uniformly sampled same-class nodes, then symmetrize
    Rng edge_rng = root.fork("edges");
    std::vector<std::pair<NodeId, NodeId>> edges;
    edges.reserve(static_cast<std::size_t>(n * spec.neighbors_per_node));
    for (NodeId v = 0; v < n; ++v) {
        const NodeId c = ds.labels.labels[static_cast<std::size_t>(v)];
        const NodeId base = c * spec.nodes_per_class;
        std::vector<NodeId> picked;
        while (static_cast<NodeId>(picked.size()) < spec.neighbors_per_node) {
            const NodeId u = base + static_cast<NodeId>(edge_rng.uniform_int(static_cast<std::uint64_t>(spec.nodes_per_class)));
            if (u == v || std::find(picked.begin(), picked.end(), u) != picked.end()) continue;
            picked.push_back(u);
        }
        for (NodeId u : picked) edges.emplace_back(v, u);
    }
    ds.graph = SparseGraph::from_edges(n, edges);
    return ds;
}

}  // namespace mmgnn
