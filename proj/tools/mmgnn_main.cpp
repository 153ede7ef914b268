// Command-line front end: train / analyze / synth / gradcheck / ablate.
// Exit codes: 0 success, 1 usage or config error, 2 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mmgnn/analysis.hpp"
#include "mmgnn/config.hpp"
#include "mmgnn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mmgnn;

namespace {

std::string fmt17(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    return f;
}

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

void write_config_echo(const RunConfig& cfg, const fs::path& out_dir) {
    auto f = open_out(out_dir / "config.json");
    f << cfg.to_json().dump(2) << '\n';
}

void write_metrics_jsonl(const fs::path& path, const RepeatSummary& summary, std::uint64_t base_seed) {
    auto f = open_out(path);
    for (std::size_t i = 0; i < summary.runs.size(); ++i) {
        for (const EpochRecord& r : summary.runs[i].epochs) {
            json line{{"seed", base_seed + i},     {"epoch", r.epoch},       {"train_loss", r.train_loss},
                      {"train_acc", r.train_acc},  {"val_loss", r.val_loss}, {"val_acc", r.val_acc}};
            f << line.dump() << '\n';
        }
    }
}

void write_summary_csv(const fs::path& path, const RepeatSummary& summary, std::uint64_t base_seed) {
    auto f = open_out(path);
    f << "seed,test_acc,best_epoch,epochs\n";
    for (std::size_t i = 0; i < summary.runs.size(); ++i) {
        const RunMetrics& r = summary.runs[i];
        f << base_seed + i << ',' << fmt17(r.test_accuracy) << ',' << r.best_epoch << ',' << r.epochs.size() << '\n';
    }
    f << "mean," << fmt17(summary.mean_test_acc) << ",,\n";
    f << "std," << fmt17(summary.std_test_acc) << ",,\n";
}

void write_attention_csv(const fs::path& path, const Mat& summary) {
    auto f = open_out(path);
    f << "layer";
    for (std::size_t k = 0; k < summary.cols; ++k) f << ",order_" << k + 1;
    f << '\n';
    for (std::size_t l = 0; l < summary.rows; ++l) {
        f << l;
        for (std::size_t k = 0; k < summary.cols; ++k) f << ',' << fmt17(summary(l, k));
        f << '\n';
    }
}

int fan_out_for(int n) { return std::min(max_threads(), n); }

// Shared flag overrides for commands that take a run config.
struct ConfigFlags {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    int repeats = 0;
    int k = 0;
    std::string moment;
    std::string fusion;
    int bins = 0;
    double p = 0;

    void attach(CLI::App* cmd, bool config_required) {
        auto* c = cmd->add_option("--config", config_path, "run config JSON");
        if (config_required) c->required()->check(CLI::ExistingFile);
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--seed", seed, "root seed (overrides config)");
        cmd->add_option("--repeats", repeats, "number of seeded repetitions");
        cmd->add_option("--k", k, "max moment order")->check(CLI::Range(1, 3));
        cmd->add_option("--moment", moment, "origin|central");
        cmd->add_option("--fusion", fusion, "attention|mlp|mean|single:K");
        cmd->add_option("--bins", bins, "mutual-information bins");
        cmd->add_option("--p", p, "complexity-measure norm order");
    }

    RunConfig merge(const CLI::App* cmd) const {
        RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
        if (cmd->count("--seed")) {
            cfg.seed = seed;
            cfg.apply_seed();
            if (cfg.synth) cfg.synth->seed = seed;
        }
        if (cmd->count("--repeats")) cfg.train.repeats = repeats;
        if (cmd->count("--k")) cfg.model.max_order = k;
        if (cmd->count("--moment")) {
            auto kind = parse_moment_kind(moment);
            if (!kind) throw ConfigError("unknown moment kind '" + moment + "'");
            cfg.model.kind = *kind;
        }
        if (cmd->count("--fusion")) {
            const std::string err = parse_fusion(fusion, cfg.model.fusion, cfg.model.single_order);
            if (!err.empty()) throw ConfigError(err);
        }
        if (cmd->count("--bins")) cfg.bins = bins;
        if (cmd->count("--p")) cfg.norm_p = p;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (cfg.out_dir.empty()) throw ConfigError("no output directory (--out or config 'out')");
        return cfg;
    }
};

int cmd_train(const ConfigFlags& flags, const CLI::App* cmd) {
    Timer timer;
    RunConfig cfg = flags.merge(cmd);
    cfg.validate();
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    write_config_echo(cfg, out);

    Dataset ds = cfg.realize_dataset();
    RepeatSummary summary = repeat_runs(cfg.model, cfg.train, ds, cfg.train.repeats, fan_out_for(cfg.train.repeats));
    write_metrics_jsonl(out / "metrics.jsonl", summary, cfg.seed);
    write_summary_csv(out / "summary.csv", summary, cfg.seed);

    // checkpoint + attention heat map from the base-seed run
    TrainResult base = train(cfg.model, cfg.train, ds);
    const auto params = base.params.all();
    save_parameters(out / "checkpoint.txt", std::vector<const Parameter*>(params.begin(), params.end()));
    if (cfg.model.fusion == FusionMode::Attention) {
        ForwardTrace trace;
        Tensor x(ds.features.values);
        model_forward(ds.graph, x, base.params, cfg.model, nullptr, &trace);
        write_attention_csv(out / "attention.csv", attention_summary(trace.attention));
    }

    auto log = open_out(out / "run.log");
    log << "wall_seconds_total " << timer.seconds() << '\n';
    for (std::size_t i = 0; i < summary.runs.size(); ++i)
        log << "wall_seconds_run" << i << ' ' << summary.runs[i].wall_seconds << '\n';
    std::cout << "mean test accuracy " << fmt17(summary.mean_test_acc) << " +- " << fmt17(summary.std_test_acc)
              << " over " << summary.runs.size() << " runs\n";
    return 0;
}

int cmd_ablate(const ConfigFlags& flags, const CLI::App* cmd) {
    Timer timer;
    RunConfig cfg = flags.merge(cmd);
    cfg.validate();
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    write_config_echo(cfg, out);
    Dataset ds = cfg.realize_dataset();

    struct Row {
        std::string label;
        std::string fusion;
        RepeatSummary summary;
    };
    std::vector<Row> rows;
    auto run_variant = [&](const std::string& label, FusionMode mode, int order) {
        ModelConfig mc = cfg.model;
        mc.fusion = mode;
        mc.single_order = order;
        rows.push_back({label, fusion_mode_name(mode, order),
                        repeat_runs(mc, cfg.train, ds, cfg.train.repeats, fan_out_for(cfg.train.repeats))});
    };
    for (int k = 1; k <= cfg.model.max_order; ++k)
        run_variant("M-" + std::to_string(k), FusionMode::SingleMoment, k);
    run_variant("Ensemble", FusionMode::MeanEnsemble, 0);
    run_variant("MLP", FusionMode::Mlp, 0);
    run_variant("Attention", FusionMode::Attention, 0);

    auto f = open_out(out / "ablate.csv");
    f << "model,fusion,mean_test_acc,std_test_acc\n";
    for (const Row& r : rows)
        f << r.label << ',' << r.fusion << ',' << fmt17(r.summary.mean_test_acc) << ','
          << fmt17(r.summary.std_test_acc) << '\n';

    auto log = open_out(out / "run.log");
    log << "wall_seconds_total " << timer.seconds() << '\n';
    for (const Row& r : rows) std::cout << r.label << ' ' << fmt17(r.summary.mean_test_acc) << '\n';
    return 0;
}

int cmd_analyze(const std::string& data_dir, const ConfigFlags& flags, const CLI::App* cmd,
                const std::string& checkpoint, const std::vector<std::string>& stat_names, std::size_t dim) {
    Timer timer;
    RunConfig cfg = flags.config_path.empty() ? RunConfig{} : RunConfig::from_file(flags.config_path);
    if (cmd->count("--bins")) cfg.bins = flags.bins;
    if (cmd->count("--p")) cfg.norm_p = flags.p;
    if (cmd->count("--k")) cfg.model.max_order = flags.k;
    if (cmd->count("--moment")) {
        auto kind = parse_moment_kind(flags.moment);
        if (!kind) throw ConfigError("unknown moment kind '" + flags.moment + "'");
        cfg.model.kind = *kind;
    }
    if (cmd->count("--fusion")) {
        const std::string err = parse_fusion(flags.fusion, cfg.model.fusion, cfg.model.single_order);
        if (!err.empty()) throw ConfigError(err);
    }
    const std::string out_dir = !flags.out_dir.empty() ? flags.out_dir : cfg.out_dir;
    if (out_dir.empty()) throw ConfigError("no output directory (--out or config 'out')");
    if (cfg.bins < 2 || cfg.norm_p < 1) throw ConfigError("invalid bins/p");
    const fs::path out(out_dir);
    fs::create_directories(out);

    Dataset ds = load_graph(data_dir, cfg.self_loops);
    std::vector<Statistic> stats;
    for (const std::string& s : stat_names) {
        auto st = Statistic::parse(s);
        if (!st) throw ConfigError("unknown statistic '" + s + "'");
        st->validate();
        stats.push_back(*st);
    }
    if (dim >= ds.input_dim()) throw ConfigError("--dim out of range");

    // per-node statistic values at --dim
    {
        auto f = open_out(out / "stats.csv");
        f << "node";
        for (const Statistic& s : stats) f << ',' << s.name();
        f << '\n';
        std::vector<std::vector<double>> cols;
        for (const Statistic& s : stats) cols.push_back(neighborhood_statistic(ds.graph, ds.features.values, dim, s));
        for (NodeId v = 0; v < ds.num_nodes(); ++v) {
            f << v;
            for (const auto& c : cols) f << ',' << fmt17(c[static_cast<std::size_t>(v)]);
            f << '\n';
        }
    }

    // statistic x feature-dimension correlation grids
    {
        auto ff = open_out(out / "fisher.csv");
        auto fm = open_out(out / "mi.csv");
        ff << "statistic";
        fm << "statistic";
        for (std::size_t d = 0; d < ds.input_dim(); ++d) {
            ff << ",dim_" << d;
            fm << ",dim_" << d;
        }
        ff << '\n';
        fm << '\n';
        for (const Statistic& s : stats) {
            ff << s.name();
            fm << s.name();
            for (std::size_t d = 0; d < ds.input_dim(); ++d) {
                const auto vals = neighborhood_statistic(ds.graph, ds.features.values, d, s);
                ff << ',' << fmt17(fisher_index(vals, ds.labels));
                fm << ',' << fmt17(mutual_information(vals, ds.labels, cfg.bins));
            }
            ff << '\n';
            fm << '\n';
        }
    }

    // complexity measure: model representations when a checkpoint is given,
    // otherwise mean-aggregated raw features
    {
        Mat rep;
        if (!checkpoint.empty()) {
            if (flags.config_path.empty()) throw ConfigError("--checkpoint requires --config for the model shape");
            ModelParams params = init_model_params(cfg.model, ds.input_dim(), ds.labels.num_classes, Rng(cfg.model.seed));
            auto ptrs = params.all();
            load_parameters(checkpoint, ptrs);
            Tensor x(ds.features.values);
            ForwardTrace trace;
            rep = model_forward(ds.graph, x, params, cfg.model, nullptr, &trace).m();
            if (cfg.model.fusion == FusionMode::Attention)
                write_attention_csv(out / "attention.csv", attention_summary(trace.attention));
        } else {
            Tensor x(ds.features.values);
            rep = spmm_mean(ds.graph, x).m();
        }
        auto f = open_out(out / "gamma.txt");
        f << fmt17(complexity_measure(rep, ds.labels, ComplexityConfig{cfg.norm_p})) << '\n';
    }

    auto log = open_out(out / "run.log");
    log << "wall_seconds_total " << timer.seconds() << '\n';
    return 0;
}

int cmd_synth(const SyntheticSpec& spec, const std::string& out_dir) {
    if (out_dir.empty()) throw ConfigError("synth: --out is required");
    Dataset ds = generate_synthetic(spec);
    save_dataset(out_dir, ds);
    std::cout << "wrote " << ds.num_nodes() << " nodes, " << ds.graph.num_edges() / 2 << " undirected edges to "
              << out_dir << '\n';
    return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
    // canned 12-node instance: 3 classes x 4 nodes, full-featured model
    SyntheticSpec spec;
    spec.num_classes = 3;
    spec.nodes_per_class = 4;
    spec.feature_dim = 4;
    spec.neighbors_per_node = 2;
    spec.class_covariance_scales = {1.0, 2.0, 3.0};
    spec.seed = seed;
    Dataset ds = generate_synthetic(spec);
    ds.split = make_split(ds.labels, SplitPolicy::ratio(0.5, 0.25, 0.25), seed);

    ModelConfig mc;
    mc.num_layers = 2;
    mc.hidden_dim = 5;
    mc.max_order = 3;
    mc.kind = MomentKind::Central;
    mc.fusion = FusionMode::Attention;
    mc.residual = true;
    mc.root_eps = 1e-2;
    mc.seed = seed;

    ModelParams params = init_model_params(mc, ds.input_dim(), ds.labels.num_classes, Rng(seed));
    auto ptrs = params.all();
    std::size_t coords = 0;
    for (const Parameter* p : ptrs) coords += p->value.size();

    const Tensor x(ds.features.values);
    const double err = grad_check(
        [&](Tape& tape) {
            Tensor logits = model_forward(ds.graph, x, params, mc, &tape);
            return softmax_cross_entropy(logits, ds.labels, *ds.split, Role::Train);
        },
        ptrs, 1e-4, 1024, seed);

    std::cout << "gradcheck: max relative error " << fmt17(err) << " over " << coords << " coordinates\n";
    return err < 1e-3 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mix-moment graph neural network toolkit"};
    app.require_subcommand(1);

    ConfigFlags train_flags, ablate_flags, analyze_flags;

    auto* train_cmd = app.add_subcommand("train", "train a model and write metrics/checkpoint");
    train_flags.attach(train_cmd, true);

    auto* ablate_cmd = app.add_subcommand("ablate", "run fusion-mode ablations with shared seeds");
    ablate_flags.attach(ablate_cmd, true);

    auto* analyze_cmd = app.add_subcommand("analyze", "neighborhood statistics, Fisher/MI grids, complexity");
    std::string analyze_dir, analyze_checkpoint;
    std::vector<std::string> analyze_stats{"mean", "variance", "skewness"};
    std::size_t analyze_dim = 0;
    analyze_cmd->add_option("data", analyze_dir, "dataset directory")->required();
    analyze_cmd->add_option("--checkpoint", analyze_checkpoint, "checkpoint for model representations");
    analyze_cmd->add_option("--stats", analyze_stats, "statistics (mean|variance|skewness|origin:k|central:k|std:k)")
        ->delimiter(',');
    analyze_cmd->add_option("--dim", analyze_dim, "feature dimension for stats.csv");
    analyze_flags.attach(analyze_cmd, false);

    auto* synth_cmd = app.add_subcommand("synth", "write a class-conditional Gaussian dataset");
    SyntheticSpec synth_spec;
    std::string synth_out;
    synth_cmd->add_option("--classes", synth_spec.num_classes, "number of classes")->required();
    synth_cmd->add_option("--per-class", synth_spec.nodes_per_class, "nodes per class")->required();
    synth_cmd->add_option("--dim", synth_spec.feature_dim, "feature dimension")->required();
    synth_cmd->add_option("--scales", synth_spec.class_covariance_scales, "per-class covariance scales")
        ->required()
        ->delimiter(',');
    synth_cmd->add_option("--neighbors", synth_spec.neighbors_per_node, "sampled same-class neighbors per node")
        ->required();
    synth_cmd->add_option("--seed", synth_spec.seed, "generator seed");
    synth_cmd->add_option("--out", synth_out, "output dataset directory")->required();

    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference check of the full model gradient");
    std::uint64_t gradcheck_seed = 0;
    gradcheck_cmd->add_option("--seed", gradcheck_seed, "instance seed");

    try {
        app.parse(argc, argv);
        if (train_cmd->parsed()) return cmd_train(train_flags, train_cmd);
        if (ablate_cmd->parsed()) return cmd_ablate(ablate_flags, ablate_cmd);
        if (analyze_cmd->parsed())
            return cmd_analyze(analyze_dir, analyze_flags, analyze_cmd, analyze_checkpoint, analyze_stats, analyze_dim);
        if (synth_cmd->parsed()) return cmd_synth(synth_spec, synth_out);
        if (gradcheck_cmd->parsed()) return cmd_gradcheck(gradcheck_seed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints help or the usage error
        return code == 0 ? 0 : 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
