#pragma once

#include <optional>

#include "dmfp/neighborhoods.hpp"

namespace dmfp {

// Which feature blocks the competence vector carries. NoVisual/NoPrivacy
// skip computing that neighborhood entirely; NoPhi1/NoPhi2 still compute
// both neighborhoods (so intersection masking keeps working) but drop the
// block from the vector; NoPhi3 drops the confidence entry.
enum class FeatureVariant { Full, NoVisual, NoPrivacy, NoPhi1, NoPhi2, NoPhi3 };

struct CompetenceOptions {
    FeatureVariant variant = FeatureVariant::Full;
    // Zero phi1/phi2 entries whose record is not in both neighborhoods.
    bool intersection_mode = false;
    // Replace correctness bits with the posterior assigned to the gold label.
    bool probability_features = false;
};

// phi1: correctness over the visual neighborhood, length k_v (zero-padded
// on the right when the neighborhood is smaller). phi2: the same over the
// privacy neighborhood, length k_p. phi3: the classifier's max posterior on
// the target itself, in [0.5, 1]. Dense layout is phi1 | phi2 | phi3.
struct CompetenceVector {
    std::vector<double> phi1;
    std::vector<double> phi2;
    std::optional<double> phi3;
    ModalityId modality = ModalityId::Object;

    std::size_t length() const { return phi1.size() + phi2.size() + (phi3 ? 1 : 0); }
    std::vector<double> dense() const;
};

struct CompetenceSample {
    CompetenceVector phi;
    int label = 0;  // 1 iff the base classifier predicted the gold label
};

// Base-classifier posteriors over a fixed dataset, computed once; Algorithm
// feature extraction re-predicts each neighbor per target otherwise.
struct PredictionCache {
    std::array<std::vector<ProbabilityPair>, kNumModalities> probs;
    const LabeledDataset* dataset = nullptr;

    static PredictionCache build(const LabeledDataset& ds,
                                 const std::vector<CalibratedClassifier>& base);
    const ProbabilityPair& at(ModalityId m, std::size_t record_index) const {
        return probs[index_of(m)][record_index];
    }
};

// One logistic model per modality plus the configuration the features were
// extracted with. A degenerate modality (all competence labels equal) is
// represented by a constant predictor: zero weights, bias = logit(rate).
struct CompetenceModelSet {
    std::array<LinearModel, kNumModalities> models;
    NeighborhoodConfig ncfg;
    CompetenceOptions options;
    std::vector<std::string> warnings;

    const LinearModel& model(ModalityId m) const { return models[index_of(m)]; }
};

// nv/np may be null only when the variant omits that neighborhood. cache,
// when given, must have been built over estimate_set with the same base
// classifiers.
CompetenceVector competence_features(const FeatureRecord& target, const Neighborhood* nv,
                                     const Neighborhood* np, const CalibratedClassifier& b,
                                     const LabeledDataset& estimate_set,
                                     const CompetenceOptions& opts = {},
                                     const PredictionCache* cache = nullptr);

// Convenience overload for the full-feature case.
CompetenceVector competence_features(const FeatureRecord& target, const Neighborhood& nv,
                                     const Neighborhood& np, const CalibratedClassifier& b,
                                     const LabeledDataset& estimate_set);

// For every record of estimate_set: neighborhoods within estimate_set
// (self-excluded unless ncfg.include_self), one competence sample per
// modality, then one logistic model per modality.
CompetenceModelSet train_competence(const LabeledDataset& estimate_set,
                                    const std::vector<CalibratedClassifier>& base,
                                    const NeighborhoodConfig& ncfg, const TrainConfig& tcfg,
                                    const CompetenceOptions& opts = {});

// Probability that phi.modality's base classifier is competent.
double predict_competence(const CompetenceModelSet& models, const CompetenceVector& phi);

}  // namespace dmfp
