#pragma once

#include <filesystem>

#include "dmfp/evaluation.hpp"

namespace dmfp {

// Deterministic multi-modal generator whose ground truth makes modality
// competence region-dependent: records fall into Gaussian regions, and only
// the region's informative modality encodes the label (linearly separably,
// minus a corrupted fraction). The other blocks carry region structure but
// no label signal, so visual nearest neighbors still recover regions.
struct SynthConfig {
    std::size_t n = 3000;
    std::array<std::size_t, kNumModalities> dims = {8, 6, 6};
    std::size_t n_regions = 3;
    // One informative modality per region; empty means cycle object, scene, tag.
    std::vector<ModalityId> informative;
    double noise = 0.1;        // fraction of records with a flipped label encoding
    double class_ratio = 0.25; // private share
    long seed = 0;
    double spacing = 4.0;      // region center separation, in noise sigmas
    double margin = 2.5;       // label-signal offset on the informative axis
};

struct SynthSidecar {
    std::vector<std::string> ids;
    std::vector<int> region;
    std::vector<bool> corrupted;
    SynthConfig cfg;

    std::string to_json() const;
};

struct SynthResult {
    LabeledDataset dataset;
    SynthSidecar sidecar;
};

// Pure function of cfg; bit-identical across runs. Errors on infeasible
// configs (dims < 2, n < 10 * n_regions, informative size mismatch).
SynthResult generate(const SynthConfig& cfg);

// Writes the dataset in manifest/CSV form (normalize flag on) plus the
// sidecar JSON next to it.
void save_synth(const SynthResult& result, const std::filesystem::path& dir);

SynthSidecar load_sidecar(const std::filesystem::path& file);

// Per-modality correctness rates plus the at-least-one-correct ceiling the
// fused system is meant to capture, overall and per region.
struct OracleReport {
    ExploratoryTable table;
    std::vector<double> region_ceiling_pct;       // at-least-one per region
    std::vector<double> region_best_single_pct;   // best single modality per region
    double ceiling_pct = 0.0;
    double best_single_pct = 0.0;

    std::string to_text() const;
};

OracleReport oracle_report(const LabeledDataset& ds, const SynthSidecar& sidecar,
                           const std::vector<CalibratedClassifier>& base);

}  // namespace dmfp
