#pragma once

#include "dmfp/fusion.hpp"

namespace dmfp {

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct EvalReport {
    ClassMetrics private_cls;
    ClassMetrics public_cls;
    double accuracy_pct = 0.0;
    // Overall columns, both conventions side by side: macro is the
    // unweighted class mean, weighted is support-weighted.
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    double weighted_precision = 0.0, weighted_recall = 0.0, weighted_f1 = 0.0;
    std::size_t total = 0;
    long seed = 0;
    std::uint64_t config_hash = 0;

    std::string to_json() const;
    std::string to_text() const;  // aligned table, Private / Public / Overall
};

EvalReport confusion_metrics(const std::vector<PrivacyLabel>& preds,
                             const std::vector<PrivacyLabel>& golds);

// Percentages of each class (and overall) satisfying a correctness
// condition: one row per modality, then all-correct / all-wrong /
// at-least-one-correct. at_least_one == 100 - all_wrong by construction.
struct ExploratoryRow {
    std::string name;
    double private_pct = 0.0;
    double public_pct = 0.0;
    double overall_pct = 0.0;
};

struct ExploratoryTable {
    std::vector<ExploratoryRow> rows;

    std::string to_json() const;
    std::string to_text() const;
    const ExploratoryRow& row(const std::string& name) const;
};

ExploratoryTable exploratory_analysis(
    const std::array<std::vector<PrivacyLabel>, kNumModalities>& per_modality_preds,
    const std::vector<PrivacyLabel>& golds);

// Per base classifier: the share of its errors the fused system predicts
// correctly, split private / public / overall.
struct ErrorCorrectionRow {
    ModalityId modality = ModalityId::Object;
    double overall_pct = 0.0;
    double private_pct = 0.0;
    double public_pct = 0.0;
    std::size_t overall_errors = 0;
    std::size_t private_errors = 0;
    std::size_t public_errors = 0;
};

struct ErrorCorrectionTable {
    std::vector<ErrorCorrectionRow> rows;

    std::string to_json() const;
    std::string to_text() const;
};

ErrorCorrectionTable error_correction(
    const std::array<std::vector<PrivacyLabel>, kNumModalities>& base_preds,
    const std::vector<PrivacyLabel>& system_preds, const std::vector<PrivacyLabel>& golds);

// Private-class F1 per (k_v, k_p) cell, each cell retraining competence
// models under cross-validation inside the estimation set; the test set is
// never touched.
struct SweepConfig {
    std::vector<std::size_t> kv_grid;
    std::vector<std::size_t> kp_grid;
    int cv_folds = 3;
    long seed = 0;
};

struct SweepResult {
    std::vector<std::size_t> kv_grid;
    std::vector<std::size_t> kp_grid;
    std::vector<std::vector<double>> f1;  // f1[i][j] for (kv_grid[i], kp_grid[j])
    std::size_t best_kv = 0;
    std::size_t best_kp = 0;
    double best_f1 = 0.0;

    std::string to_csv() const;
};

SweepResult sweep(const LabeledDataset& estimate_set,
                  const std::vector<CalibratedClassifier>& base, const SweepConfig& scfg,
                  const TrainConfig& tcfg, const FusionConfig& fcfg,
                  const CompetenceOptions& opts = {});

// Arithmetic mean and (sample) standard deviation over per-seed reports.
struct MultiSeedReport {
    std::vector<EvalReport> per_seed;
    EvalReport mean;
    EvalReport stddev;

    std::string to_json() const;
};

MultiSeedReport multi_seed_run(int n_seeds, long base_seed,
                               const std::function<EvalReport(long seed)>& run);

// Two-sided paired t statistic over per-seed metric pairs, with a 5% table
// lookup for significance.
struct PairedTResult {
    double t = 0.0;
    int dof = 0;
    bool significant_at_05 = false;
};

PairedTResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace dmfp
