#include "mmgnn/config.hpp"

#include <fstream>

namespace mmgnn {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok) throw ConfigError("config: unknown key '" + key + "' in " + where);
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config: bad value for '") + key + "'");
    }
}

}  // namespace

std::string parse_fusion(const std::string& s, FusionMode& mode, int& single_order) {
    if (s == "attention") {
        mode = FusionMode::Attention;
    } else if (s == "mlp") {
        mode = FusionMode::Mlp;
    } else if (s == "mean") {
        mode = FusionMode::MeanEnsemble;
    } else if (s.rfind("single:", 0) == 0 && s.size() == 8 && s[7] >= '1' && s[7] <= '9') {
        mode = FusionMode::SingleMoment;
        single_order = s[7] - '0';
    } else {
        return "unknown fusion mode '" + s + "' (expect attention|mlp|mean|single:K)";
    }
    return "";
}

RunConfig RunConfig::from_json(const json& j) {
    reject_unknown(j, {"dataset", "synth", "self_loops", "split", "model", "train", "seed", "bins", "p", "out"},
                   "top level");
    RunConfig cfg;
    cfg.dataset_dir = get_or<std::string>(j, "dataset", "");
    cfg.self_loops = get_or<bool>(j, "self_loops", false);
    cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
    cfg.bins = get_or<int>(j, "bins", 16);
    cfg.norm_p = get_or<double>(j, "p", 2.0);
    cfg.out_dir = get_or<std::string>(j, "out", "");

    if (j.contains("synth")) {
        const json& s = j.at("synth");
        reject_unknown(s, {"classes", "per_class", "dim", "neighbors", "scales", "seed", "means"}, "synth");
        SyntheticSpec spec;
        spec.num_classes = get_or<NodeId>(s, "classes", 2);
        spec.nodes_per_class = get_or<NodeId>(s, "per_class", 1000);
        spec.feature_dim = get_or<std::size_t>(s, "dim", 4);
        spec.neighbors_per_node = get_or<NodeId>(s, "neighbors", 10);
        spec.seed = get_or<std::uint64_t>(s, "seed", cfg.seed);
        spec.class_covariance_scales = get_or<std::vector<double>>(s, "scales", {});
        if (s.contains("means")) {
            const auto rows = s.at("means").get<std::vector<std::vector<double>>>();
            spec.class_means = Mat(rows.size(), spec.feature_dim);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (rows[i].size() != spec.feature_dim) throw ConfigError("config: synth.means row width != dim");
                for (std::size_t k = 0; k < spec.feature_dim; ++k) spec.class_means(i, k) = rows[i][k];
            }
        }
        cfg.synth = std::move(spec);
    }

    if (j.contains("split")) {
        const json& s = j.at("split");
        reject_unknown(s, {"policy", "train_per_class", "val", "test", "train", "val_frac", "test_frac"}, "split");
        const auto policy = get_or<std::string>(s, "policy", "ratio");
        if (policy == "per_class") {
            cfg.split = SplitPolicy::per_class(get_or<NodeId>(s, "train_per_class", 20), get_or<NodeId>(s, "val", 500),
                                               get_or<NodeId>(s, "test", 1000));
        } else if (policy == "ratio") {
            cfg.split = SplitPolicy::ratio(get_or<double>(s, "train", 0.6), get_or<double>(s, "val_frac", 0.2),
                                           get_or<double>(s, "test_frac", 0.2));
        } else {
            throw ConfigError("config: split.policy must be per_class or ratio");
        }
    }

    if (j.contains("model")) {
        const json& m = j.at("model");
        reject_unknown(m, {"layers", "hidden", "k", "moment", "fusion", "residual", "root_eps"}, "model");
        cfg.model.num_layers = get_or<int>(m, "layers", cfg.model.num_layers);
        cfg.model.hidden_dim = get_or<int>(m, "hidden", cfg.model.hidden_dim);
        cfg.model.max_order = get_or<int>(m, "k", cfg.model.max_order);
        cfg.model.residual = get_or<bool>(m, "residual", cfg.model.residual);
        cfg.model.root_eps = get_or<double>(m, "root_eps", cfg.model.root_eps);
        if (m.contains("moment")) {
            const auto kind = parse_moment_kind(m.at("moment").get<std::string>());
            if (!kind) throw ConfigError("config: model.moment must be origin or central");
            cfg.model.kind = *kind;
        }
        if (m.contains("fusion")) {
            const std::string err = parse_fusion(m.at("fusion").get<std::string>(), cfg.model.fusion, cfg.model.single_order);
            if (!err.empty()) throw ConfigError("config: " + err);
        }
    }

    if (j.contains("train")) {
        const json& t = j.at("train");
        reject_unknown(t, {"lr", "weight_decay", "max_epochs", "patience", "repeats"}, "train");
        cfg.train.learning_rate = get_or<double>(t, "lr", cfg.train.learning_rate);
        cfg.train.weight_decay = get_or<double>(t, "weight_decay", cfg.train.weight_decay);
        cfg.train.max_epochs = get_or<int>(t, "max_epochs", cfg.train.max_epochs);
        cfg.train.patience = get_or<int>(t, "patience", cfg.train.patience);
        cfg.train.repeats = get_or<int>(t, "repeats", cfg.train.repeats);
    }

    cfg.apply_seed();
    return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) throw ConfigError("missing or unreadable config file: " + p.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config: invalid JSON in " + p.string() + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
    json j;
    if (!dataset_dir.empty()) j["dataset"] = dataset_dir;
    if (synth) {
        json s;
        s["classes"] = synth->num_classes;
        s["per_class"] = synth->nodes_per_class;
        s["dim"] = synth->feature_dim;
        s["neighbors"] = synth->neighbors_per_node;
        s["scales"] = synth->class_covariance_scales;
        s["seed"] = synth->seed;
        if (synth->class_means.rows) {
            std::vector<std::vector<double>> rows(synth->class_means.rows);
            for (std::size_t i = 0; i < synth->class_means.rows; ++i)
                rows[i].assign(synth->class_means.row(i), synth->class_means.row(i) + synth->class_means.cols);
            s["means"] = rows;
        }
        j["synth"] = std::move(s);
    }
    j["self_loops"] = self_loops;
    if (split) {
        json s;
        if (split->kind == SplitPolicy::Kind::PerClassCount) {
            s["policy"] = "per_class";
            s["train_per_class"] = split->train_per_class;
            s["val"] = split->val_total;
            s["test"] = split->test_total;
        } else {
            s["policy"] = "ratio";
            s["train"] = split->train_frac;
            s["val_frac"] = split->val_frac;
            s["test_frac"] = split->test_frac;
        }
        j["split"] = std::move(s);
    }
    j["model"] = {{"layers", model.num_layers},   {"hidden", model.hidden_dim},
                  {"k", model.max_order},         {"moment", moment_kind_name(model.kind)},
                  {"fusion", fusion_mode_name(model.fusion, model.single_order)},
                  {"residual", model.residual},   {"root_eps", model.root_eps}};
    j["train"] = {{"lr", train.learning_rate},
                  {"weight_decay", train.weight_decay},
                  {"max_epochs", train.max_epochs},
                  {"patience", train.patience},
                  {"repeats", train.repeats}};
    j["seed"] = seed;
    j["bins"] = bins;
    j["p"] = norm_p;
    if (!out_dir.empty()) j["out"] = out_dir;
    return j;
}

void RunConfig::apply_seed() {
    model.seed = seed;
    train.seed = seed;
    if (synth && !synth->seed) synth->seed = seed;
}

void RunConfig::validate() const {
    if (dataset_dir.empty() && !synth) throw ConfigError("config: either dataset or synth must be given");
    if (!dataset_dir.empty() && synth) throw ConfigError("config: dataset and synth are mutually exclusive");
    if (bins < 2) throw ConfigError("config: bins must be >= 2");
    if (norm_p < 1) throw ConfigError("config: p must be >= 1");
    try {
        model.validate();
        train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

Dataset RunConfig::realize_dataset() const {
    validate();
    Dataset ds = synth ? generate_synthetic(*synth) : load_graph(dataset_dir, self_loops);
    if (split) {
        ds.split = make_split(ds.labels, *split, seed);
    } else if (!ds.split) {
        ds.split = make_split(ds.labels, SplitPolicy::ratio(0.6, 0.2, 0.2), seed);
    }
    return ds;
}

}  // namespace mmgnn
