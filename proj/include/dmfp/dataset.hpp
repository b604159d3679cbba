#pragma once

#include <filesystem>

#include "dmfp/types.hpp"

namespace dmfp {

// Manifest format:
//   { "modalities": [{"name": "object", "file": "object.csv", "dim": N}, ...],
//     "labels_file": "labels.csv",   // optional; omit for unlabeled targets
//     "normalize": true }
// Feature CSVs carry a header "id,f0..f{d-1}"; the labels CSV "id,label".
// File paths are resolved relative to the manifest's directory. When
// "normalize" is true (the default) every modality block is L2-normalized
// at load time.
LabeledDataset load_dataset(const std::filesystem::path& manifest_path);

// Writes manifest + per-modality CSVs + labels CSV under dir. Values are
// written with full round-trip precision. normalize_flag is echoed into the
// manifest; pass false when the in-memory data is already normalized.
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& dir,
                  bool normalize_flag = false);

struct SplitResult {
    LabeledDataset train;
    LabeledDataset estimate;
    LabeledDataset test;
};

// Deterministic for a fixed seed. Stratified mode allocates per-class counts
// by largest remainder, keeping each split's class ratio within one record
// of the input ratio. Errors if any split would be empty.
SplitResult split_dataset(const LabeledDataset& ds, const SplitSpec& spec);

// Object block, then scene, then tag. Errors on a missing block.
std::vector<double> concat_modalities(const FeatureRecord& rec);

// Unit L2 norm, same direction; the zero vector maps to itself. Errors on
// non-finite input.
std::vector<double> l2_normalize(const std::vector<double>& v);

}  // namespace dmfp
