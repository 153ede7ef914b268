#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "mmgnn/graph.hpp"
#include "mmgnn/train.hpp"

namespace mmgnn {

/// Thrown for malformed configs / usage errors (CLI exit code 1).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One reproducible run: dataset source, split, model and training settings.
/// Parsing rejects unknown keys at every level; the effective config (after
/// defaults and flag overrides) serializes back via to_json.
struct RunConfig {
    std::string dataset_dir;               // exclusive with synth
    std::optional<SyntheticSpec> synth;
    bool self_loops = false;
    std::optional<SplitPolicy> split;      // nullopt: split.tsv if present, else 60/20/20
    ModelConfig model;
    TrainConfig train;
    std::uint64_t seed = 0;                // root seed, mirrored into model/train seeds
    int bins = 16;                         // mutual-information histogram bins
    double norm_p = 2.0;                   // complexity-measure norm order
    std::string out_dir;

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::filesystem::path& p);
    nlohmann::json to_json() const;

    void apply_seed();  // copies seed into model.seed / train.seed
    void validate() const;

    /// Loads or synthesizes the dataset and guarantees a split mask.
    Dataset realize_dataset() const;
};

std::string parse_fusion(const std::string& s, FusionMode& mode, int& single_order);  // "" or error text

}  // namespace mmgnn
