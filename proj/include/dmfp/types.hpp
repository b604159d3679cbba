#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dmfp/util.hpp"

namespace dmfp {

enum class PrivacyLabel { Private, Public };

// Modalities are ordered (Object < Scene < Tag) so that concatenation and
// privacy-profile layout are deterministic.
enum class ModalityId { Object = 0, Scene = 1, Tag = 2 };

inline constexpr std::size_t kNumModalities = 3;
inline constexpr std::array<ModalityId, kNumModalities> kAllModalities = {
    ModalityId::Object, ModalityId::Scene, ModalityId::Tag};

std::string_view to_string(PrivacyLabel label);           // "private" / "public"
PrivacyLabel parse_privacy_label(std::string_view text);  // case-insensitive
std::string_view to_string(ModalityId m);                 // "object" / "scene" / "tag"
ModalityId parse_modality(std::string_view text);

inline std::size_t index_of(ModalityId m) { return static_cast<std::size_t>(m); }

// (private, public) posterior from one classifier; entries sum to 1.
struct ProbabilityPair {
    double p_private = 0.5;
    double p_public = 0.5;

    double max_posterior() const { return p_private > p_public ? p_private : p_public; }

    // Argmax with an explicit tie convention; exact 0.5 resolves to tie_wins.
    PrivacyLabel argmax(PrivacyLabel tie_wins = PrivacyLabel::Public) const {
        if (p_private > p_public) return PrivacyLabel::Private;
        if (p_public > p_private) return PrivacyLabel::Public;
        return tie_wins;
    }
};

// One image's per-modality feature blocks plus its gold label (absent for
// unlabeled prediction targets).
struct FeatureRecord {
    std::string id;
    std::array<std::vector<double>, kNumModalities> blocks;
    std::optional<PrivacyLabel> label;

    const std::vector<double>& block(ModalityId m) const { return blocks[index_of(m)]; }
    std::vector<double>& block(ModalityId m) { return blocks[index_of(m)]; }
};

// Immutable after construction via make_dataset(); ids unique, block
// dimensions uniform across records.
struct LabeledDataset {
    std::vector<FeatureRecord> records;
    std::array<std::size_t, kNumModalities> dims{};

    std::size_t size() const { return records.size(); }
    std::size_t dim(ModalityId m) const { return dims[index_of(m)]; }
    std::size_t concat_dim() const { return dims[0] + dims[1] + dims[2]; }
    bool fully_labeled() const;

    // Throws Error on unknown id.
    std::size_t index_of_id(const std::string& id) const;
    const FeatureRecord* find(const std::string& id) const;

    std::unordered_map<std::string, std::size_t> id_index;
};

// Validates invariants (unique ids, uniform dims, finite values) and builds
// the id index.
LabeledDataset make_dataset(std::vector<FeatureRecord> records,
                            std::array<std::size_t, kNumModalities> dims);

struct SplitSpec {
    long seed = 0;
    double train_fraction = 0.0;
    double estimate_fraction = 0.0;
    double test_fraction = 0.0;
    bool stratified = true;
};

}  // namespace dmfp
