#pragma once

#include "dmfp/fusion.hpp"

namespace dmfp {

enum class BaselineKind {
    SingleObject,
    SingleScene,
    SingleTag,
    MajorityVote,
    DecisionFusionAvg,
    DecisionFusionMax,
    PolicySelect,
    StackedEnsemble,
    ClusterEnsemble,
    // Stand-in for the feature-concatenation single model: a calibrated
    // linear classifier over the concatenated blocks, an approximation and
    // flagged as such in reports.
    ConcatLinear,
};

BaselineKind parse_baseline(std::string_view text);
std::string_view to_string(BaselineKind kind);

// Unweighted majority over the three argmax labels; three voters, no ties.
PrivacyLabel majority_vote_predict(const std::vector<CalibratedClassifier>& base,
                                   const FeatureRecord& target,
                                   PrivacyLabel tie_label = PrivacyLabel::Public);

enum class FusionRule { Average, MaxConfidence };

// Average: argmax of the mean posteriors. MaxConfidence: the label of the
// classifier with the largest max posterior.
PrivacyLabel decision_fusion_predict(const std::vector<CalibratedClassifier>& base,
                                     const FeatureRecord& target, FusionRule rule,
                                     PrivacyLabel tie_label = PrivacyLabel::Public);

// One logistic policy per base classifier over the 6-dim privacy profile,
// labeled by that classifier's correctness on the estimation set.
struct PolicySet {
    std::array<LinearModel, kNumModalities> policies;
    std::vector<std::string> warnings;
};

PolicySet train_policy_select(const LabeledDataset& estimate_set,
                              const std::vector<CalibratedClassifier>& base,
                              const TrainConfig& tcfg);

// Selects the policies' > 0.5 picks, then a unit-weight majority vote with
// posterior tie-break; an empty selection falls back to all three voters.
FusionDecision policy_select_predict(const PolicySet& policies,
                                     const std::vector<CalibratedClassifier>& base,
                                     const FeatureRecord& target,
                                     PrivacyLabel tie_label = PrivacyLabel::Public);

// Calibrated meta-classifier over privacy profiles. By default the meta
// model trains on the same set that trained the base classifiers; the
// out_of_fold flag re-encodes each fold with classifiers trained on the
// remaining folds instead.
struct StackedModel {
    std::vector<FoldModel> folds;
    bool out_of_fold = false;
};

StackedModel train_stacked(const LabeledDataset& train_set,
                           const std::vector<CalibratedClassifier>& base,
                           const TrainConfig& tcfg, bool out_of_fold = false);

PrivacyLabel stacked_predict(const StackedModel& meta,
                             const std::vector<CalibratedClassifier>& base,
                             const FeatureRecord& target,
                             PrivacyLabel tie_label = PrivacyLabel::Public);

// Single calibrated model over concatenated modality blocks.
struct ConcatModel {
    std::vector<FoldModel> folds;
};

ConcatModel train_concat(const LabeledDataset& train_set, const TrainConfig& tcfg);

PrivacyLabel concat_predict(const ConcatModel& model, const FeatureRecord& target,
                            PrivacyLabel tie_label = PrivacyLabel::Public);

enum class Linkage { Ward, Single, Complete, Average };

struct ClusterEnsembleConfig {
    std::size_t n_clusters = 5;
    std::size_t knn = 15;
    Linkage linkage = Linkage::Ward;
    VisualMetric metric = VisualMetric::Cosine;
};

struct ClusterModel {
    std::vector<FoldModel> folds;       // empty for a degenerate cluster
    ProbabilityPair constant{0.5, 0.5}; // used when folds is empty
};

struct ClusterEnsemble {
    std::vector<int> assignment;  // cluster id per training record
    std::vector<ClusterModel> models;
    VisualIndex index;  // training rows for the k-NN cluster lookup
    ClusterEnsembleConfig cfg;
    std::vector<std::string> warnings;
};

// Agglomerative clustering of the training set over concatenated modality
// features, one calibrated classifier per cluster. A single-class cluster
// degrades to a constant predictor with a warning; all clusters degenerate
// is an error.
ClusterEnsemble train_cluster_ensemble(const LabeledDataset& train_set,
                                       const ClusterEnsembleConfig& ccfg,
                                       const TrainConfig& tcfg);

PrivacyLabel cluster_predict(const ClusterEnsemble& ens, const FeatureRecord& target,
                             PrivacyLabel tie_label = PrivacyLabel::Public);

// Exact agglomerative clustering via the nearest-neighbor chain, exposed for
// oracle tests. Returns cluster ids 0..n_clusters-1 given a full pairwise
// distance matrix (squared Euclidean for Ward).
std::vector<int> agglomerative_cluster(const std::vector<std::vector<double>>& dist,
                                       std::size_t n_clusters, Linkage linkage);

}  // namespace dmfp
