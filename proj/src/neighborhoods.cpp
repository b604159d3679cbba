#include "dmfp/neighborhoods.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dmfp/dataset.hpp"

#include <json.hpp>

namespace dmfp {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw Error("cosine_similarity: length mismatch (" + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + ")");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

PrivacyProfile privacy_profile(const FeatureRecord& rec,
                               const std::vector<CalibratedClassifier>& base) {
    if (base.size() != kNumModalities)
        throw Error("privacy_profile: expected one base classifier per modality");
    PrivacyProfile profile;
    for (std::size_t i = 0; i < kNumModalities; ++i) {
        if (base[i].modality != kAllModalities[i])
            throw Error("privacy_profile: base classifiers must be ordered object, scene, tag");
        ProbabilityPair p = predict_proba(base[i], rec.block(base[i].modality));
        profile.values[2 * i] = p.p_private;
        profile.values[2 * i + 1] = p.p_public;
    }
    return profile;
}

std::string Neighborhood::to_json() const {
    nlohmann::json j;
    j["kind"] = kind == NeighborhoodKind::Visual ? "visual" : "privacy";
    j["requested_k"] = requested_k;
    j["member_ids"] = member_ids;
    j["similarities"] = similarities;
    return j.dump();
}

VisualIndex VisualIndex::build(const LabeledDataset& reference) {
    VisualIndex index;
    index.rows.reserve(reference.size());
    index.ids.reserve(reference.size());
    for (const auto& rec : reference.records) {
        index.rows.push_back(concat_modalities(rec));
        index.ids.push_back(rec.id);
    }
    return index;
}

namespace {

struct Candidate {
    double similarity;
    std::size_t index;
};

// Shared top-k selection: rank by similarity descending, ties by ascending
// id, then clamp to k.
Neighborhood select_top_k(NeighborhoodKind kind, std::size_t k,
                          std::vector<Candidate> candidates,
                          const std::vector<std::string>& ids) {
    auto better = [&](const Candidate& a, const Candidate& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return ids[a.index] < ids[b.index];
    };
    const std::size_t take = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                      candidates.end(), better);

    Neighborhood nb;
    nb.kind = kind;
    nb.requested_k = k;
    nb.member_ids.reserve(take);
    nb.similarities.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        nb.member_ids.push_back(ids[candidates[i].index]);
        nb.similarities.push_back(candidates[i].similarity);
    }
    return nb;
}

}  // namespace

Neighborhood visual_neighbors(const FeatureRecord& query, const VisualIndex& index,
                              const NeighborhoodConfig& cfg) {
    if (index.rows.empty()) throw Error("visual_neighbors: empty reference set");
    if (cfg.k_v < 1) throw Error("k_v must be at least 1");
    const std::vector<double> q = concat_modalities(query);
    if (q.size() != index.rows[0].size())
        throw Error("visual_neighbors: query dimension " + std::to_string(q.size()) +
                    " does not match reference dimension " + std::to_string(index.rows[0].size()));

    std::vector<Candidate> candidates;
    candidates.reserve(index.rows.size());
    for (std::size_t i = 0; i < index.rows.size(); ++i) {
        if (!cfg.include_self && index.ids[i] == query.id) continue;
        double sim;
        if (cfg.visual_metric == VisualMetric::Cosine) {
            sim = cosine_similarity(q, index.rows[i]);
        } else {
            double sq = 0.0;
            for (std::size_t j = 0; j < q.size(); ++j) {
                const double d = q[j] - index.rows[i][j];
                sq += d * d;
            }
            sim = -std::sqrt(sq);  // negated distance keeps "larger is closer"
        }
        candidates.push_back({sim, i});
    }
    return select_top_k(NeighborhoodKind::Visual, cfg.k_v, std::move(candidates), index.ids);
}

Neighborhood visual_neighbors(const FeatureRecord& query, const LabeledDataset& reference,
                              const NeighborhoodConfig& cfg) {
    return visual_neighbors(query, VisualIndex::build(reference), cfg);
}

ProfileTable ProfileTable::build(const LabeledDataset& reference,
                                 const std::vector<CalibratedClassifier>& base) {
    ProfileTable table;
    table.profiles.resize(reference.size());
    table.ids.reserve(reference.size());
    for (const auto& rec : reference.records) table.ids.push_back(rec.id);
    parallel_for(reference.size(), [&](std::size_t i) {
        table.profiles[i] = privacy_profile(reference.records[i], base);
    });
    return table;
}

Neighborhood privacy_neighbors(const PrivacyProfile& query_profile, const ProfileTable& table,
                               const NeighborhoodConfig& cfg, const std::string& query_id) {
    if (table.profiles.empty()) throw Error("privacy_neighbors: empty reference set");
    if (cfg.k_p < 1) throw Error("k_p must be at least 1");
    std::vector<Candidate> candidates;
    candidates.reserve(table.profiles.size());
    for (std::size_t i = 0; i < table.profiles.size(); ++i) {
        if (!cfg.include_self && !query_id.empty() && table.ids[i] == query_id) continue;
        candidates.push_back(
            {cosine_similarity(query_profile.values, table.profiles[i].values), i});
    }
    return select_top_k(NeighborhoodKind::Privacy, cfg.k_p, std::move(candidates), table.ids);
}

}  // namespace dmfp
