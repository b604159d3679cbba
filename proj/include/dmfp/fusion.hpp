#pragma once

#include <functional>

#include "dmfp/competence.hpp"

namespace dmfp {

enum class FallbackPolicy { HighestCompetence, WeightedAll };
enum class DecisionPath { Unanimous, Voted, Fallback, TieBrokenByPosterior };

std::string_view to_string(DecisionPath path);

struct FusionConfig {
    double threshold = 0.5;  // competence gate, strict >
    FallbackPolicy fallback = FallbackPolicy::HighestCompetence;
    NeighborhoodConfig ncfg;
    // Label an exact 0.5 posterior resolves to.
    PrivacyLabel posterior_tie_label = PrivacyLabel::Public;
    // Run the competence stage even on unanimous targets instead of
    // short-circuiting.
    bool literal_agreement_guard = false;
};

struct SelectedVote {
    ModalityId modality = ModalityId::Object;
    std::optional<double> competence;  // unset on the Unanimous path
    PrivacyLabel predicted = PrivacyLabel::Public;
    ProbabilityPair posterior;
};

struct FusionDecision {
    PrivacyLabel label = PrivacyLabel::Public;
    DecisionPath path = DecisionPath::Voted;
    std::vector<SelectedVote> selected;
    double tally_private = 0.0;
    double tally_public = 0.0;
};

struct AgreementResult {
    std::array<PrivacyLabel, kNumModalities> labels{};
    std::array<ProbabilityPair, kNumModalities> posteriors{};
    bool unanimous = false;
};

AgreementResult base_agreement(const std::vector<CalibratedClassifier>& base,
                               const FeatureRecord& target,
                               PrivacyLabel tie_label = PrivacyLabel::Public);

struct WeightedVote {
    PrivacyLabel label = PrivacyLabel::Public;
    double weight = 0.0;
    ProbabilityPair posterior;
};

struct VoteOutcome {
    PrivacyLabel label = PrivacyLabel::Public;
    DecisionPath path = DecisionPath::Voted;
    double tally_private = 0.0;
    double tally_public = 0.0;
};

// Larger summed weight wins; an exact tie goes to the single vote with the
// largest max posterior. Errors on empty votes.
VoteOutcome weighted_majority_vote(const std::vector<WeightedVote>& votes);

// Competence score per modality given its feature vector. Lets tests inject
// stub scores and lets the counting ablations skip the learned models.
using CompetenceScorer = std::function<double(const CompetenceVector&)>;

// Core of the fusion stage: agreement short-circuit, feature extraction per
// modality, scorer gating at cfg.threshold, weighted vote, fallback.
FusionDecision dmfp_predict_scored(const FeatureRecord& target, const LabeledDataset& estimate_set,
                                   const std::vector<CalibratedClassifier>& base,
                                   const CompetenceScorer& scorer, const FusionConfig& cfg,
                                   const CompetenceOptions& opts = {},
                                   const VisualIndex* vindex = nullptr,
                                   const ProfileTable* ptable = nullptr,
                                   const PredictionCache* cache = nullptr);

FusionDecision dmfp_predict(const FeatureRecord& target, const LabeledDataset& estimate_set,
                            const std::vector<CalibratedClassifier>& base,
                            const CompetenceModelSet& cmodels, const FusionConfig& cfg,
                            const VisualIndex* vindex = nullptr,
                            const ProfileTable* ptable = nullptr,
                            const PredictionCache* cache = nullptr);

enum class AblationVariant { NoNV, NoNP, NoPhi1, NoPhi2, NoPhi3, NvCl, NpCl, BothCl };

AblationVariant parse_ablation(std::string_view text);
std::string_view to_string(AblationVariant v);
FeatureVariant feature_variant_for(AblationVariant v);  // Full for the *_CL variants
bool is_counting_variant(AblationVariant v);

// For NoNV..NoPhi3 the model set must have been trained with the matching
// variant; the *_CL variants score competence as the fraction of correct
// neighbor predictions in the named region(s) and take no model set.
FusionDecision ablation_predict(AblationVariant variant, const FeatureRecord& target,
                                const LabeledDataset& estimate_set,
                                const std::vector<CalibratedClassifier>& base,
                                const CompetenceModelSet* cmodels, const FusionConfig& cfg,
                                const VisualIndex* vindex = nullptr,
                                const ProfileTable* ptable = nullptr,
                                const PredictionCache* cache = nullptr);

// One JSON object per target for batch prediction output.
std::string decision_to_json(const std::string& id, const FusionDecision& d,
                             const AgreementResult& agreement);

}  // namespace dmfp
