#pragma once

#include <filesystem>

#include "dmfp/baselines.hpp"
#include "dmfp/competence.hpp"

namespace dmfp {

// JSON persistence: weights, bias, sigmoid params, modality, dims, config
// echo. Readers validate the "kind" tag and shapes.
void save_calibrated(const CalibratedClassifier& clf, const TrainConfig& cfg,
                     const std::filesystem::path& file);
CalibratedClassifier load_calibrated(const std::filesystem::path& file);

void save_competence(const CompetenceModelSet& models, const std::filesystem::path& file);
CompetenceModelSet load_competence(const std::filesystem::path& file);

void save_policies(const PolicySet& policies, const std::filesystem::path& file);
PolicySet load_policies(const std::filesystem::path& file);

void save_stacked(const StackedModel& meta, const std::filesystem::path& file);
StackedModel load_stacked(const std::filesystem::path& file);

void save_cluster_ensemble(const ClusterEnsemble& ens, const std::filesystem::path& file);
ClusterEnsemble load_cluster_ensemble(const std::filesystem::path& file);

void save_concat(const ConcatModel& model, const std::filesystem::path& file);
ConcatModel load_concat(const std::filesystem::path& file);

}  // namespace dmfp
