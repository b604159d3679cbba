#include "dmfp/fusion.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace dmfp {

std::string_view to_string(DecisionPath path) {
    switch (path) {
        case DecisionPath::Unanimous: return "unanimous";
        case DecisionPath::Voted: return "voted";
        case DecisionPath::Fallback: return "fallback";
        case DecisionPath::TieBrokenByPosterior: return "tie_broken_by_posterior";
    }
    return "voted";
}

AgreementResult base_agreement(const std::vector<CalibratedClassifier>& base,
                               const FeatureRecord& target, PrivacyLabel tie_label) {
    if (base.size() != kNumModalities)
        throw Error("base_agreement: expected one base classifier per modality");
    AgreementResult result;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
        result.posteriors[m] = predict_proba(base[m], target.block(base[m].modality));
        result.labels[m] = result.posteriors[m].argmax(tie_label);
    }
    result.unanimous =
        result.labels[0] == result.labels[1] && result.labels[1] == result.labels[2];
    return result;
}

VoteOutcome weighted_majority_vote(const std::vector<WeightedVote>& votes) {
    if (votes.empty()) throw Error("weighted_majority_vote: no votes");
    for (const auto& v : votes)
        if (v.weight < 0.0) throw Error("weighted_majority_vote: negative weight");

    VoteOutcome outcome;
    for (const auto& v : votes)
        (v.label == PrivacyLabel::Private ? outcome.tally_private : outcome.tally_public) +=
            v.weight;

    if (outcome.tally_private != outcome.tally_public) {
        outcome.label = outcome.tally_private > outcome.tally_public ? PrivacyLabel::Private
                                                                     : PrivacyLabel::Public;
        outcome.path = DecisionPath::Voted;
        return outcome;
    }
    // Exact tie: the single vote with the largest max posterior decides.
    const WeightedVote* best = &votes[0];
    for (const auto& v : votes)
        if (v.posterior.max_posterior() > best->posterior.max_posterior()) best = &v;
    outcome.label = best->label;
    outcome.path = DecisionPath::TieBrokenByPosterior;
    return outcome;
}

FusionDecision dmfp_predict_scored(const FeatureRecord& target, const LabeledDataset& estimate_set,
                                   const std::vector<CalibratedClassifier>& base,
                                   const CompetenceScorer& scorer, const FusionConfig& cfg,
                                   const CompetenceOptions& opts, const VisualIndex* vindex,
                                   const ProfileTable* ptable, const PredictionCache* cache) {
    if (estimate_set.size() == 0) throw Error("dmfp_predict: empty estimation set");
    if (cfg.threshold <= 0.0 || cfg.threshold >= 1.0)
        throw Error("dmfp_predict: competence threshold must lie in (0, 1)");
    const AgreementResult agreement = base_agreement(base, target, cfg.posterior_tie_label);

    FusionDecision decision;
    if (agreement.unanimous && !cfg.literal_agreement_guard) {
        decision.label = agreement.labels[0];
        decision.path = DecisionPath::Unanimous;
        for (std::size_t m = 0; m < kNumModalities; ++m)
            decision.selected.push_back(SelectedVote{kAllModalities[m], std::nullopt,
                                                     agreement.labels[m],
                                                     agreement.posteriors[m]});
        return decision;
    }

    const FeatureVariant v = opts.variant;
    const bool need_visual = v != FeatureVariant::NoVisual;
    const bool need_privacy = v != FeatureVariant::NoPrivacy;

    VisualIndex local_vindex;
    if (need_visual && vindex == nullptr) {
        local_vindex = VisualIndex::build(estimate_set);
        vindex = &local_vindex;
    }
    ProfileTable local_ptable;
    if (need_privacy && ptable == nullptr) {
        local_ptable = ProfileTable::build(estimate_set, base);
        ptable = &local_ptable;
    }

    Neighborhood nv, np;
    if (need_visual) nv = visual_neighbors(target, *vindex, cfg.ncfg);
    if (need_privacy) {
        PrivacyProfile profile;
        for (std::size_t m = 0; m < kNumModalities; ++m) {
            profile.values[2 * m] = agreement.posteriors[m].p_private;
            profile.values[2 * m + 1] = agreement.posteriors[m].p_public;
        }
        np = privacy_neighbors(profile, *ptable, cfg.ncfg, target.id);
    }

    std::array<double, kNumModalities> scores{};
    for (std::size_t m = 0; m < kNumModalities; ++m) {
        CompetenceVector phi =
            competence_features(target, need_visual ? &nv : nullptr,
                                need_privacy ? &np : nullptr, base[m], estimate_set, opts, cache);
        scores[m] = scorer(phi);
    }

    std::vector<WeightedVote> votes;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
        if (scores[m] > cfg.threshold) {
            votes.push_back(
                {agreement.labels[m], scores[m], agreement.posteriors[m]});
            decision.selected.push_back(SelectedVote{kAllModalities[m], scores[m],
                                                     agreement.labels[m],
                                                     agreement.posteriors[m]});
        }
    }

    if (votes.empty()) {
        if (cfg.fallback == FallbackPolicy::HighestCompetence) {
            std::size_t best = 0;
            for (std::size_t m = 1; m < kNumModalities; ++m)
                if (scores[m] > scores[best]) best = m;
            decision.label = agreement.labels[best];
            decision.path = DecisionPath::Fallback;
            decision.selected.push_back(SelectedVote{kAllModalities[best], scores[best],
                                                     agreement.labels[best],
                                                     agreement.posteriors[best]});
            (decision.label == PrivacyLabel::Private ? decision.tally_private
                                                     : decision.tally_public) += scores[best];
            return decision;
        }
        // WeightedAll: vote with all three, weighted by their scores.
        for (std::size_t m = 0; m < kNumModalities; ++m) {
            votes.push_back({agreement.labels[m], scores[m], agreement.posteriors[m]});
            decision.selected.push_back(SelectedVote{kAllModalities[m], scores[m],
                                                     agreement.labels[m],
                                                     agreement.posteriors[m]});
        }
        const VoteOutcome outcome = weighted_majority_vote(votes);
        decision.label = outcome.label;
        decision.path = DecisionPath::Fallback;
        decision.tally_private = outcome.tally_private;
        decision.tally_public = outcome.tally_public;
        return decision;
    }

    const VoteOutcome outcome = weighted_majority_vote(votes);
    decision.label = outcome.label;
    decision.path = outcome.path;
    decision.tally_private = outcome.tally_private;
    decision.tally_public = outcome.tally_public;
    return decision;
}

FusionDecision dmfp_predict(const FeatureRecord& target, const LabeledDataset& estimate_set,
                            const std::vector<CalibratedClassifier>& base,
                            const CompetenceModelSet& cmodels, const FusionConfig& cfg,
                            const VisualIndex* vindex, const ProfileTable* ptable,
                            const PredictionCache* cache) {
    if (cmodels.ncfg.k_v != cfg.ncfg.k_v || cmodels.ncfg.k_p != cfg.ncfg.k_p ||
        cmodels.ncfg.visual_metric != cfg.ncfg.visual_metric ||
        cmodels.ncfg.include_self != cfg.ncfg.include_self)
        throw Error("dmfp_predict: fusion neighborhood config differs from the one the "
                    "competence models were trained with");
    return dmfp_predict_scored(
        target, estimate_set, base,
        [&](const CompetenceVector& phi) { return predict_competence(cmodels, phi); }, cfg,
        cmodels.options, vindex, ptable, cache);
}

std::string_view to_string(AblationVariant v) {
    switch (v) {
        case AblationVariant::NoNV: return "no_nv";
        case AblationVariant::NoNP: return "no_np";
        case AblationVariant::NoPhi1: return "no_phi1";
        case AblationVariant::NoPhi2: return "no_phi2";
        case AblationVariant::NoPhi3: return "no_phi3";
        case AblationVariant::NvCl: return "nv_cl";
        case AblationVariant::NpCl: return "np_cl";
        case AblationVariant::BothCl: return "both_cl";
    }
    return "no_nv";
}

AblationVariant parse_ablation(std::string_view text) {
    const std::string lower = to_lower(trim(text));
    for (AblationVariant v :
         {AblationVariant::NoNV, AblationVariant::NoNP, AblationVariant::NoPhi1,
          AblationVariant::NoPhi2, AblationVariant::NoPhi3, AblationVariant::NvCl,
          AblationVariant::NpCl, AblationVariant::BothCl})
        if (lower == to_string(v)) return v;
    throw Error("unknown ablation variant: '" + std::string(text) + "'");
}

FeatureVariant feature_variant_for(AblationVariant v) {
    switch (v) {
        case AblationVariant::NoNV: return FeatureVariant::NoVisual;
        case AblationVariant::NoNP: return FeatureVariant::NoPrivacy;
        case AblationVariant::NoPhi1: return FeatureVariant::NoPhi1;
        case AblationVariant::NoPhi2: return FeatureVariant::NoPhi2;
        case AblationVariant::NoPhi3: return FeatureVariant::NoPhi3;
        default: return FeatureVariant::Full;
    }
}

bool is_counting_variant(AblationVariant v) {
    return v == AblationVariant::NvCl || v == AblationVariant::NpCl ||
           v == AblationVariant::BothCl;
}

namespace {

// Competence as the raw fraction of correct neighbor predictions in the
// named region(s); padding entries are excluded from the denominator.
double counting_score(AblationVariant v, const CompetenceVector& phi,
                      std::size_t nv_size, std::size_t np_size) {
    double correct = 0.0;
    double total = 0.0;
    if (v == AblationVariant::NvCl || v == AblationVariant::BothCl) {
        for (std::size_t j = 0; j < nv_size && j < phi.phi1.size(); ++j) correct += phi.phi1[j];
        total += static_cast<double>(std::min(nv_size, phi.phi1.size()));
    }
    if (v == AblationVariant::NpCl || v == AblationVariant::BothCl) {
        for (std::size_t j = 0; j < np_size && j < phi.phi2.size(); ++j) correct += phi.phi2[j];
        total += static_cast<double>(std::min(np_size, phi.phi2.size()));
    }
    return total > 0.0 ? correct / total : 0.0;
}

}  // namespace

FusionDecision ablation_predict(AblationVariant variant, const FeatureRecord& target,
                                const LabeledDataset& estimate_set,
                                const std::vector<CalibratedClassifier>& base,
                                const CompetenceModelSet* cmodels, const FusionConfig& cfg,
                                const VisualIndex* vindex, const ProfileTable* ptable,
                                const PredictionCache* cache) {
    if (is_counting_variant(variant)) {
        // Actual neighborhood sizes are needed to ignore zero padding; they
        // are the same for every modality, so compute once via a probe.
        std::size_t nv_size = 0, np_size = 0;
        bool sized = false;
        CompetenceOptions opts;  // no model; only the named region is computed
        if (variant == AblationVariant::NvCl) opts.variant = FeatureVariant::NoPrivacy;
        if (variant == AblationVariant::NpCl) opts.variant = FeatureVariant::NoVisual;
        auto scorer = [&](const CompetenceVector& phi) {
            if (!sized) {
                // requested_k-sized blocks; count real members from the
                // estimate set size (self may be excluded).
                std::size_t available = estimate_set.size();
                if (!cfg.ncfg.include_self && estimate_set.find(target.id) != nullptr)
                    available -= 1;
                nv_size = std::min(cfg.ncfg.k_v, available);
                np_size = std::min(cfg.ncfg.k_p, available);
                sized = true;
            }
            return counting_score(variant, phi, nv_size, np_size);
        };
        return dmfp_predict_scored(target, estimate_set, base, scorer, cfg, opts, vindex, ptable,
                                   cache);
    }

    if (cmodels == nullptr)
        throw Error("ablation_predict: this variant needs competence models");
    if (cmodels->options.variant != feature_variant_for(variant))
        throw Error("ablation_predict: competence models were trained with a different variant");
    return dmfp_predict_scored(
        target, estimate_set, base,
        [&](const CompetenceVector& phi) { return predict_competence(*cmodels, phi); }, cfg,
        cmodels->options, vindex, ptable, cache);
}

std::string decision_to_json(const std::string& id, const FusionDecision& d,
                             const AgreementResult& agreement) {
    nlohmann::json j;
    j["id"] = id;
    j["label"] = to_string(d.label);
    j["path"] = to_string(d.path);
    j["tallies"] = {d.tally_private, d.tally_public};
    j["selected"] = nlohmann::json::array();
    for (const auto& vote : d.selected) {
        nlohmann::json entry;
        entry["modality"] = to_string(vote.modality);
        if (vote.competence) entry["score"] = *vote.competence;
        entry["label"] = to_string(vote.predicted);
        entry["posterior"] = {vote.posterior.p_private, vote.posterior.p_public};
        j["selected"].push_back(entry);
    }
    nlohmann::json base_preds;
    for (std::size_t m = 0; m < kNumModalities; ++m)
        base_preds[std::string(to_string(kAllModalities[m]))] =
            to_string(agreement.labels[m]);
    j["base"] = base_preds;
    return j.dump();
}

}  // namespace dmfp
