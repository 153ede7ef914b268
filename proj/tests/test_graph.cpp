#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mmgnn/graph.hpp"
#include "oracles.hpp"

using namespace mmgnn;
namespace fs = std::filesystem;

namespace {

fs::path make_temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("mmgnn_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_file(const fs::path& p, const std::string& body) {
    std::ofstream f(p);
    f << body;
}

fs::path write_tiny_dataset(const std::string& tag, const std::string& edges,
                            const std::string& features = "f0\n1\n2\n3\n",
                            const std::string& labels = "0\t0\n1\t1\n2\t0\n") {
    fs::path dir = make_temp_dir(tag);
    write_file(dir / "edges.tsv", edges);
    write_file(dir / "features.csv", features);
    write_file(dir / "labels.tsv", labels);
    return dir;
}

}  // namespace

TEST_CASE("path graph produces the expected CSR offsets") {
    auto ds = load_graph(write_tiny_dataset("path", "0\t1\n1\t2\n"));
    CHECK(ds.graph.num_nodes == 3);
    CHECK(ds.graph.row_offsets == std::vector<NodeId>{0, 1, 3, 4});
    CHECK(ds.graph.col_indices == std::vector<NodeId>{1, 0, 2, 1});
    ds.graph.validate();
}

TEST_CASE("self-loop lines are dropped") {
    auto with_loop = load_graph(write_tiny_dataset("loop", "0\t1\n1\t1\n1\t2\n"));
    auto without = load_graph(write_tiny_dataset("noloop", "0\t1\n1\t2\n"));
    CHECK(with_loop.graph.num_edges() == without.graph.num_edges());
    CHECK(with_loop.graph.col_indices == without.graph.col_indices);
}

TEST_CASE("self-loop flag re-adds one loop per node") {
    auto ds = load_graph(write_tiny_dataset("addloop", "0\t1\n1\t2\n"), /*add_self_loops=*/true);
    CHECK(ds.graph.num_edges() == 4 + 3);
    for (NodeId v = 0; v < 3; ++v) {
        auto nbrs = ds.graph.neighbors(v);
        CHECK(std::binary_search(nbrs.begin(), nbrs.end(), v));
    }
    ds.graph.validate();
}

TEST_CASE("duplicate edges collapse") {
    auto ds = load_graph(write_tiny_dataset("dup", "0\t1\n1\t0\n0\t1\n1\t2\n"));
    CHECK(ds.graph.num_edges() == 4);
}

TEST_CASE("degree identity: sum of degrees equals directed edge count") {
    SyntheticSpec spec;
    spec.num_classes = 2;
    spec.nodes_per_class = 40;
    spec.feature_dim = 3;
    spec.neighbors_per_node = 5;
    spec.class_covariance_scales = {1.0, 2.0};
    spec.seed = 11;
    auto ds = generate_synthetic(spec);
    ds.graph.validate();
    NodeId total = 0;
    for (NodeId v = 0; v < ds.graph.num_nodes; ++v) {
        CHECK(ds.graph.degree(v) == ds.graph.row_offsets[v + 1] - ds.graph.row_offsets[v]);
        total += ds.graph.degree(v);
    }
    CHECK(total == ds.graph.num_edges());
}

TEST_CASE("loader error paths name the problem") {
    SUBCASE("missing file") {
        fs::path dir = make_temp_dir("missing");
        write_file(dir / "features.csv", "f0\n1\n");
        CHECK_THROWS_WITH_AS(load_graph(dir), doctest::Contains("labels.tsv"), std::runtime_error);
    }
    SUBCASE("edge index out of range") {
        auto dir = write_tiny_dataset("oob", "0\t7\n");
        CHECK_THROWS_WITH_AS(load_graph(dir), doctest::Contains("out of range"), std::runtime_error);
    }
    SUBCASE("non-numeric feature cell") {
        fs::path dir = make_temp_dir("nonnum");
        write_file(dir / "edges.tsv", "0\t1\n");
        write_file(dir / "features.csv", "f0\n1\nx\n2\n");
        write_file(dir / "labels.tsv", "0\t0\n1\t1\n2\t0\n");
        CHECK_THROWS_WITH_AS(load_graph(dir), doctest::Contains("non-numeric"), std::runtime_error);
    }
    SUBCASE("label out of declared range") {
        auto dir = write_tiny_dataset("badlabel", "0\t1\n1\t2\n", "f0\n1\n2\n3\n", "0\t0\n1\t2\n2\t0\n");
        // class 1 never appears although class 2 does
        CHECK_THROWS_WITH_AS(load_graph(dir), doctest::Contains("class"), std::runtime_error);
    }
    SUBCASE("missing label row") {
        auto dir = write_tiny_dataset("nolabel", "0\t1\n1\t2\n", "f0\n1\n2\n3\n", "0\t0\n2\t1\n");
        CHECK_THROWS_WITH_AS(load_graph(dir), doctest::Contains("no label"), std::runtime_error);
    }
}

TEST_CASE("save/load round trip reproduces the CSR bit-exactly") {
    SyntheticSpec spec;
    spec.num_classes = 3;
    spec.nodes_per_class = 30;
    spec.feature_dim = 4;
    spec.neighbors_per_node = 4;
    spec.class_covariance_scales = {0.5, 1.0, 2.0};
    spec.seed = 5;
    Dataset ds = generate_synthetic(spec);
    ds.split = make_split(ds.labels, SplitPolicy::ratio(0.5, 0.25, 0.25), 5);

    fs::path dir = make_temp_dir("roundtrip");
    save_dataset(dir, ds);
    Dataset back = load_graph(dir);

    CHECK(back.graph.row_offsets == ds.graph.row_offsets);
    CHECK(back.graph.col_indices == ds.graph.col_indices);
    CHECK(back.features.values == ds.features.values);  // %.17g is exact for doubles
    CHECK(back.labels.labels == ds.labels.labels);
    REQUIRE(back.split.has_value());
    CHECK(back.split->roles == ds.split->roles);
}

TEST_CASE("per-class split policy yields exactly train_per_class nodes per class") {
    LabelVector labels;
    labels.num_classes = 7;
    for (int c = 0; c < 7; ++c)
        for (int i = 0; i < 300; ++i) labels.labels.push_back(c);
    Rng shuffle_rng(3);
    shuffle_rng.shuffle(labels.labels);

    SplitMask mask = make_split(labels, SplitPolicy::per_class(20, 500, 1000), 42);
    CHECK(mask.count(Role::Train) == 140);  // 20 nodes x 7 classes
    CHECK(mask.count(Role::Val) == 500);
    CHECK(mask.count(Role::Test) == 1000);
    std::vector<int> per_class(7, 0);
    for (std::size_t v = 0; v < labels.labels.size(); ++v)
        if (mask.roles[v] == Role::Train) ++per_class[static_cast<std::size_t>(labels.labels[v])];
    for (int c : per_class) CHECK(c == 20);
}

TEST_CASE("ratio split on 100 nodes divides exactly") {
    LabelVector labels;
    labels.num_classes = 2;
    for (int i = 0; i < 100; ++i) labels.labels.push_back(i % 2);
    SplitMask mask = make_split(labels, SplitPolicy::ratio(0.6, 0.2, 0.2), 0);
    CHECK(mask.count(Role::Train) == 60);
    CHECK(mask.count(Role::Val) == 20);
    CHECK(mask.count(Role::Test) == 20);
    CHECK(mask.count(Role::Unused) == 0);
}

TEST_CASE("splits are deterministic under a fixed seed") {
    LabelVector labels;
    labels.num_classes = 3;
    for (int i = 0; i < 90; ++i) labels.labels.push_back(i % 3);
    auto a = make_split(labels, SplitPolicy::ratio(0.5, 0.3, 0.2), 9);
    auto b = make_split(labels, SplitPolicy::ratio(0.5, 0.3, 0.2), 9);
    CHECK(a.roles == b.roles);
    auto c = make_split(labels, SplitPolicy::ratio(0.5, 0.3, 0.2), 10);
    CHECK(a.roles != c.roles);
}

TEST_CASE("split errors") {
    LabelVector labels;
    labels.num_classes = 2;
    for (int i = 0; i < 30; ++i) labels.labels.push_back(i % 2);
    CHECK_THROWS_AS(make_split(labels, SplitPolicy::per_class(20, 5, 5), 0), std::runtime_error);
    CHECK_THROWS_AS(make_split(labels, SplitPolicy::ratio(0.8, 0.3, 0.2), 0), std::runtime_error);
}

TEST_CASE("synthetic generator rejects bad specs") {
    SyntheticSpec spec;
    spec.num_classes = 2;
    spec.nodes_per_class = 10;
    spec.feature_dim = 2;
    spec.neighbors_per_node = 3;
    spec.class_covariance_scales = {1.0, -1.0};
    spec.seed = 0;
    CHECK_THROWS_WITH_AS(generate_synthetic(spec), doctest::Contains("positive"), std::runtime_error);
    spec.class_covariance_scales = {1.0, 1.0};
    spec.neighbors_per_node = 10;
    CHECK_THROWS_WITH_AS(generate_synthetic(spec), doctest::Contains("insufficient"), std::runtime_error);
}

namespace {

// The class mean of neighborhood averages is a weighted sum of that class's
// iid feature draws: M_c = sum_j w_j x_j with w_j = (1/n_c) sum_{v in N(j)} 1/deg(v),
// and edges are sampled independently of features, so conditional on the
// graph Var(M_c) = scale_c * sum_j w_j^2 exactly.
double class_mean_stderr(const Dataset& ds, NodeId cls, double scale) {
    NodeId n_c = 0;
    for (NodeId lab : ds.labels.labels)
        if (lab == cls) ++n_c;
    std::vector<double> w(static_cast<std::size_t>(ds.num_nodes()), 0.0);
    for (NodeId v = 0; v < ds.num_nodes(); ++v) {
        if (ds.labels.labels[static_cast<std::size_t>(v)] != cls) continue;
        const auto nbrs = ds.graph.neighbors(v);
        for (NodeId j : nbrs) w[static_cast<std::size_t>(j)] += 1.0 / static_cast<double>(nbrs.size());
    }
    double sum_w2 = 0;
    for (double& x : w) {
        x /= static_cast<double>(n_c);
        sum_w2 += x * x;
    }
    return std::sqrt(scale * sum_w2);
}

}  // namespace

// Monte-Carlo oracle over the generator: with identical means the per-class
// neighborhood-average distributions coincide; the 2nd central moment
// separates by the scale ratio.
TEST_CASE("theorem-1 construction: means overlap, second moments separate") {
    SyntheticSpec spec;
    spec.num_classes = 2;
    spec.nodes_per_class = 5000;
    spec.feature_dim = 4;
    spec.neighbors_per_node = 10;
    spec.class_covariance_scales = {1.0, 9.0};
    spec.seed = 7;
    Dataset ds = generate_synthetic(spec);

    const Mat avg = oracle::neighborhood_mean(ds.graph, ds.features.values);
    const NodeId n = ds.num_nodes();

    const double se0 = class_mean_stderr(ds, 0, spec.class_covariance_scales[0]);
    const double se1 = class_mean_stderr(ds, 1, spec.class_covariance_scales[1]);
    const double stderr_diff = std::sqrt(se0 * se0 + se1 * se1);
    for (std::size_t dimidx = 0; dimidx < spec.feature_dim; ++dimidx) {
        double mean[2] = {0, 0};
        NodeId cnt[2] = {0, 0};
        for (NodeId v = 0; v < n; ++v) {
            const auto c = static_cast<std::size_t>(ds.labels.labels[static_cast<std::size_t>(v)]);
            mean[c] += avg(static_cast<std::size_t>(v), dimidx);
            ++cnt[c];
        }
        for (int c : {0, 1}) mean[c] /= static_cast<double>(cnt[c]);
        CHECK(std::abs(mean[0] - mean[1]) < 3.0 * stderr_diff);
    }

    // class-average neighborhood variance ratio tracks the scale ratio 9
    double mom2[2] = {0, 0};
    NodeId cnt[2] = {0, 0};
    for (NodeId v = 0; v < n; ++v) {
        const auto nbrs = ds.graph.neighbors(v);
        const auto c = static_cast<std::size_t>(ds.labels.labels[static_cast<std::size_t>(v)]);
        double node_var = 0;
        for (std::size_t dimidx = 0; dimidx < spec.feature_dim; ++dimidx) {
            double mu = 0;
            for (NodeId j : nbrs) mu += ds.features.values(static_cast<std::size_t>(j), dimidx);
            mu /= static_cast<double>(nbrs.size());
            double s = 0;
            for (NodeId j : nbrs) {
                const double d = ds.features.values(static_cast<std::size_t>(j), dimidx) - mu;
                s += d * d;
            }
            node_var += s / static_cast<double>(nbrs.size());
        }
        mom2[c] += node_var;
        ++cnt[c];
    }
    const double ratio = (mom2[1] / cnt[1]) / (mom2[0] / cnt[0]);
    CHECK(ratio > 8.2);
    CHECK(ratio < 9.8);
}

TEST_CASE("equal scales and equal means leave all low-order statistics indistinguishable") {
    SyntheticSpec spec;
    spec.num_classes = 2;
    spec.nodes_per_class = 4000;
    spec.feature_dim = 3;
    spec.neighbors_per_node = 8;
    spec.class_covariance_scales = {1.0, 1.0};
    spec.seed = 123;
    Dataset ds = generate_synthetic(spec);

    const Mat avg = oracle::neighborhood_mean(ds.graph, ds.features.values);
    const double se0 = class_mean_stderr(ds, 0, spec.class_covariance_scales[0]);
    const double se1 = class_mean_stderr(ds, 1, spec.class_covariance_scales[1]);
    const double stderr_diff = std::sqrt(se0 * se0 + se1 * se1);
    for (std::size_t dimidx = 0; dimidx < spec.feature_dim; ++dimidx) {
        double mean[2] = {0, 0}, var[2] = {0, 0};
        NodeId cnt[2] = {0, 0};
        for (NodeId v = 0; v < ds.num_nodes(); ++v) {
            const auto c = static_cast<std::size_t>(ds.labels.labels[static_cast<std::size_t>(v)]);
            mean[c] += avg(static_cast<std::size_t>(v), dimidx);
            ++cnt[c];
        }
        for (int c : {0, 1}) mean[c] /= static_cast<double>(cnt[c]);
        for (NodeId v = 0; v < ds.num_nodes(); ++v) {
            const auto c = static_cast<std::size_t>(ds.labels.labels[static_cast<std::size_t>(v)]);
            const double d = avg(static_cast<std::size_t>(v), dimidx) - mean[c];
            var[c] += d * d;
        }
        for (int c : {0, 1}) var[c] /= static_cast<double>(cnt[c]);
        CHECK(std::abs(mean[0] - mean[1]) < 3.0 * stderr_diff);
        // identical scales: per-node neighborhood-average spreads agree too
        CHECK(var[1] / var[0] == doctest::Approx(1.0).epsilon(0.1));
    }
}
