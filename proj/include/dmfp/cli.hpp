#pragma once

#include <filesystem>
#include <iosfwd>

#include "dmfp/baselines.hpp"
#include "dmfp/evaluation.hpp"
#include "dmfp/synthgen.hpp"

namespace dmfp {

// File-backed run configuration: sections of key = value pairs, unknown
// keys rejected. Command-line flags override file values. The canonical
// serialization is hashed and embedded in every output artifact.
struct RunConfig {
    // [data]
    std::filesystem::path manifest = "data/manifest.json";
    std::filesystem::path out_dir = "runs";

    SplitSpec split{0, 15.0 / 32.0, 10.0 / 32.0, 7.0 / 32.0, true};
    TrainConfig train;
    NeighborhoodConfig neighborhood;
    CompetenceOptions competence;

    // [fusion]
    double fusion_threshold = 0.5;
    FallbackPolicy fusion_fallback = FallbackPolicy::HighestCompetence;
    PrivacyLabel posterior_tie_label = PrivacyLabel::Public;
    bool literal_agreement_guard = false;

    SynthConfig synth;

    // [baselines]
    bool train_policy = true;
    bool train_stacked_meta = true;
    bool train_cluster = true;
    bool train_concat_model = true;
    bool stacked_out_of_fold = false;
    ClusterEnsembleConfig cluster;

    SweepConfig sweep;

    // [run]
    std::string variant;   // empty = full DMFP, else ablation name
    std::string baseline;  // empty = DMFP, else baseline name

    FusionConfig fusion_config() const;
    std::string canonical_text() const;  // full serialization, sorted keys
    std::uint64_t hash() const { return fnv1a(canonical_text()); }
};

RunConfig parse_run_config(const std::filesystem::path& file);
RunConfig parse_run_config_text(const std::string& text);

// Run directory for a config: <out_dir>/run-<hash16>/ with models/,
// predictions/, reports/ and the config echo inside.
std::filesystem::path run_directory(const RunConfig& cfg);

int cmd_generate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_predict(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_reproduce_figure3(std::ostream& out, std::ostream& err);

// Full argv-level entry point used by the binary and by integration tests.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dmfp
