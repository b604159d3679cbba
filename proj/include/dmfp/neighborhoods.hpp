#pragma once

#include "dmfp/linear.hpp"
#include "dmfp/types.hpp"

namespace dmfp {

// Posterior privacy probabilities of all base classifiers for one image,
// laid out [object.private, object.public, scene.private, scene.public,
// tag.private, tag.public].
struct PrivacyProfile {
    std::array<double, 2 * kNumModalities> values{};
};

enum class NeighborhoodKind { Visual, Privacy };
enum class VisualMetric { Cosine, Euclidean };

struct NeighborhoodConfig {
    std::size_t k_v = 900;
    std::size_t k_p = 100;
    VisualMetric visual_metric = VisualMetric::Cosine;
    bool include_self = false;  // keep the query when it is its own reference
};

// member_ids are sorted by non-increasing similarity, ties broken by
// ascending id. requested_k is kept so undersized neighborhoods can be
// zero-padded downstream.
struct Neighborhood {
    NeighborhoodKind kind = NeighborhoodKind::Visual;
    std::size_t requested_k = 0;
    std::vector<std::string> member_ids;
    std::vector<double> similarities;  // parallel to member_ids

    std::size_t size() const { return member_ids.size(); }
    std::string to_json() const;  // debugging aid
};

// a.b / (|a||b|); 0 when either norm is 0. Errors on length mismatch.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// base must be ordered (Object, Scene, Tag); errors otherwise.
PrivacyProfile privacy_profile(const FeatureRecord& rec,
                               const std::vector<CalibratedClassifier>& base);

// Precomputed concatenated (and id-tagged) reference rows so batch queries
// do not re-concatenate the reference set per call.
struct VisualIndex {
    std::vector<std::vector<double>> rows;
    std::vector<std::string> ids;

    static VisualIndex build(const LabeledDataset& reference);
};

Neighborhood visual_neighbors(const FeatureRecord& query, const VisualIndex& index,
                              const NeighborhoodConfig& cfg);
Neighborhood visual_neighbors(const FeatureRecord& query, const LabeledDataset& reference,
                              const NeighborhoodConfig& cfg);

// Profiles of a whole reference set, parallel to its record order.
struct ProfileTable {
    std::vector<PrivacyProfile> profiles;
    std::vector<std::string> ids;

    static ProfileTable build(const LabeledDataset& reference,
                              const std::vector<CalibratedClassifier>& base);
};

// Cosine over 6-vectors; query_id (when non-empty) is excluded from the
// result unless cfg.include_self.
Neighborhood privacy_neighbors(const PrivacyProfile& query_profile, const ProfileTable& table,
                               const NeighborhoodConfig& cfg,
                               const std::string& query_id = std::string());

}  // namespace dmfp
