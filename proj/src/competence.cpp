#include "dmfp/competence.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "dmfp/dataset.hpp"

namespace dmfp {

std::vector<double> CompetenceVector::dense() const {
    std::vector<double> out;
    out.reserve(length());
    out.insert(out.end(), phi1.begin(), phi1.end());
    out.insert(out.end(), phi2.begin(), phi2.end());
    if (phi3) out.push_back(*phi3);
    return out;
}

PredictionCache PredictionCache::build(const LabeledDataset& ds,
                                       const std::vector<CalibratedClassifier>& base) {
    if (base.size() != kNumModalities)
        throw Error("prediction cache: expected one base classifier per modality");
    for (std::size_t m = 0; m < kNumModalities; ++m)
        if (base[m].modality != kAllModalities[m])
            throw Error("prediction cache: base classifiers must be ordered object, scene, tag");
    PredictionCache cache;
    cache.dataset = &ds;
    for (std::size_t m = 0; m < kNumModalities; ++m) cache.probs[m].resize(ds.size());
    parallel_for(ds.size(), [&](std::size_t i) {
        for (std::size_t m = 0; m < kNumModalities; ++m)
            cache.probs[m][i] = predict_proba(base[m], ds.records[i].block(base[m].modality));
    });
    return cache;
}

namespace {

bool wants_phi1(FeatureVariant v) {
    return v != FeatureVariant::NoVisual && v != FeatureVariant::NoPhi1;
}
bool wants_phi2(FeatureVariant v) {
    return v != FeatureVariant::NoPrivacy && v != FeatureVariant::NoPhi2;
}
bool wants_phi3(FeatureVariant v) { return v != FeatureVariant::NoPhi3; }

// Correctness entries over one neighborhood: 1/0 bits, or the posterior of
// the gold label in probability mode. other_members masks entries outside
// the neighborhood intersection.
std::vector<double> region_entries(const Neighborhood& nb, const CalibratedClassifier& b,
                                   const LabeledDataset& estimate_set,
                                   const CompetenceOptions& opts,
                                   const std::unordered_set<std::string>* other_members,
                                   const PredictionCache* cache) {
    std::vector<double> entries(nb.requested_k, 0.0);
    for (std::size_t j = 0; j < nb.member_ids.size() && j < nb.requested_k; ++j) {
        const std::string& id = nb.member_ids[j];
        const std::size_t idx = estimate_set.index_of_id(id);
        const FeatureRecord& neighbor = estimate_set.records[idx];
        if (!neighbor.label) throw Error("neighbor '" + id + "' is unlabeled");
        if (other_members && !other_members->contains(id)) continue;  // masked to 0

        ProbabilityPair p = cache && cache->dataset == &estimate_set
                                ? cache->at(b.modality, idx)
                                : predict_proba(b, neighbor.block(b.modality));
        if (opts.probability_features) {
            entries[j] = *neighbor.label == PrivacyLabel::Private ? p.p_private : p.p_public;
        } else {
            entries[j] = p.argmax() == *neighbor.label ? 1.0 : 0.0;
        }
    }
    return entries;
}

}  // namespace

CompetenceVector competence_features(const FeatureRecord& target, const Neighborhood* nv,
                                     const Neighborhood* np, const CalibratedClassifier& b,
                                     const LabeledDataset& estimate_set,
                                     const CompetenceOptions& opts,
                                     const PredictionCache* cache) {
    const FeatureVariant v = opts.variant;
    if (wants_phi1(v) && nv == nullptr)
        throw Error("competence_features: visual neighborhood required for this variant");
    if (wants_phi2(v) && np == nullptr)
        throw Error("competence_features: privacy neighborhood required for this variant");

    std::unordered_set<std::string> nv_members, np_members;
    if (opts.intersection_mode) {
        if (nv) nv_members.insert(nv->member_ids.begin(), nv->member_ids.end());
        if (np) np_members.insert(np->member_ids.begin(), np->member_ids.end());
    }

    CompetenceVector phi;
    phi.modality = b.modality;
    if (wants_phi1(v))
        phi.phi1 = region_entries(*nv, b, estimate_set, opts,
                                  opts.intersection_mode && np ? &np_members : nullptr, cache);
    if (wants_phi2(v))
        phi.phi2 = region_entries(*np, b, estimate_set, opts,
                                  opts.intersection_mode && nv ? &nv_members : nullptr, cache);
    if (wants_phi3(v))
        phi.phi3 = predict_proba(b, target.block(b.modality)).max_posterior();
    return phi;
}

CompetenceVector competence_features(const FeatureRecord& target, const Neighborhood& nv,
                                     const Neighborhood& np, const CalibratedClassifier& b,
                                     const LabeledDataset& estimate_set) {
    return competence_features(target, &nv, &np, b, estimate_set, CompetenceOptions{}, nullptr);
}

CompetenceModelSet train_competence(const LabeledDataset& estimate_set,
                                    const std::vector<CalibratedClassifier>& base,
                                    const NeighborhoodConfig& ncfg, const TrainConfig& tcfg,
                                    const CompetenceOptions& opts) {
    if (base.size() != kNumModalities)
        throw Error("train_competence: expected one base classifier per modality");
    if (estimate_set.size() < 2)
        throw Error("competence estimation set has no neighbors after self-exclusion (need "
                    "at least 2 records)");
    if (!estimate_set.fully_labeled())
        throw Error("competence estimation set must be fully labeled");

    const PredictionCache cache = PredictionCache::build(estimate_set, base);

    const bool need_visual = wants_phi1(opts.variant) ||
                             (opts.variant == FeatureVariant::NoPhi1 &&
                              opts.intersection_mode);
    const bool need_privacy = wants_phi2(opts.variant) ||
                              (opts.variant == FeatureVariant::NoPhi2 &&
                               opts.intersection_mode);

    VisualIndex vindex;
    if (need_visual) vindex = VisualIndex::build(estimate_set);
    ProfileTable ptable;
    if (need_privacy) ptable = ProfileTable::build(estimate_set, base);

    const std::size_t n = estimate_set.size();
    std::array<std::vector<std::vector<double>>, kNumModalities> phis;
    std::array<std::vector<int>, kNumModalities> labels;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
        phis[m].resize(n);
        labels[m].assign(n, 0);
    }

    parallel_for(n, [&](std::size_t j) {
        const FeatureRecord& record = estimate_set.records[j];
        Neighborhood nv, np;
        if (need_visual) nv = visual_neighbors(record, vindex, ncfg);
        if (need_privacy) {
            PrivacyProfile profile;
            for (std::size_t m = 0; m < kNumModalities; ++m) {
                const ProbabilityPair& p = cache.at(kAllModalities[m], j);
                profile.values[2 * m] = p.p_private;
                profile.values[2 * m + 1] = p.p_public;
            }
            np = privacy_neighbors(profile, ptable, ncfg, record.id);
        }
        for (std::size_t m = 0; m < kNumModalities; ++m) {
            CompetenceVector phi =
                competence_features(record, need_visual ? &nv : nullptr,
                                    need_privacy ? &np : nullptr, base[m], estimate_set, opts,
                                    &cache);
            phis[m][j] = phi.dense();
            labels[m][j] =
                cache.at(base[m].modality, j).argmax() == *record.label ? 1 : 0;
        }
    });

    CompetenceModelSet set;
    set.ncfg = ncfg;
    set.options = opts;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
        const std::size_t ones =
            static_cast<std::size_t>(std::count(labels[m].begin(), labels[m].end(), 1));
        if (ones == 0 || ones == n) {
            // Degenerate: this base classifier is always right (or wrong) on
            // the estimation set. Constant predictor at the observed rate.
            const double rate = clamp01_open(static_cast<double>(ones) / static_cast<double>(n));
            LinearModel constant;
            constant.loss = LossKind::Logistic;
            constant.weights.assign(phis[m][0].size(), 0.0);
            constant.bias = logit(rate);
            set.models[m] = std::move(constant);
            set.warnings.push_back("competence labels for modality '" +
                                   std::string(to_string(kAllModalities[m])) +
                                   "' are all " + (ones == n ? "1" : "0") +
                                   "; using a constant predictor");
        } else {
            TrainConfig mcfg = tcfg;
            mcfg.seed = tcfg.seed + static_cast<long>(m);
            set.models[m] = train_logistic(phis[m], labels[m], mcfg);
        }
    }
    return set;
}

double predict_competence(const CompetenceModelSet& models, const CompetenceVector& phi) {
    const LinearModel& model = models.model(phi.modality);
    return predict_logistic(model, phi.dense());
}

}  // namespace dmfp
