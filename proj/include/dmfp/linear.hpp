#pragma once

#include <span>
#include <utility>

#include "dmfp/types.hpp"

namespace dmfp {

enum class LossKind { Hinge, Logistic };

struct LinearModel {
    std::vector<double> weights;
    double bias = 0.0;
    LossKind loss = LossKind::Hinge;

    double score(std::span<const double> x) const;
};

// P(private | score s) = 1 / (1 + exp(a*s + b)); monotone decreasing in s
// iff a < 0, so a trained pair (model, sigmoid) with private = +1 ends up
// with a < 0.
struct PlattSigmoid {
    double a = -1.0;
    double b = 0.0;

    double prob_private(double score) const { return clamp01_open(sigmoid(-(a * score + b))); }
};

struct TrainConfig {
    int epochs = 50;
    double learning_rate = 0.1;
    double l2_penalty = 1e-4;
    long seed = 0;
    int folds = 3;
    bool balanced_classes = false;
};

struct FoldModel {
    LinearModel model;
    PlattSigmoid sigmoid;
};

// Cross-validated linear SVM with per-fold Platt calibration; prediction
// averages the fold probabilities.
struct CalibratedClassifier {
    std::vector<FoldModel> folds;
    ModalityId modality = ModalityId::Object;
};

// Features are row-major, rows.size() == labels.size(). Each fold's linear
// model is fit on the other folds with subgradient descent on L2-regularized
// hinge loss; the held-out fold supplies the calibration scores. Folds are
// stratified. Errors on single-class data or classes smaller than cfg.folds.
CalibratedClassifier train_calibrated(const std::vector<std::vector<double>>& rows,
                                      const std::vector<PrivacyLabel>& labels,
                                      const TrainConfig& cfg, ModalityId modality);

ProbabilityPair predict_proba(const CalibratedClassifier& clf, std::span<const double> x);

// Fits (a, b) by Newton iterations on the log-loss of 1/(1+exp(a*s+b))
// against smoothed targets (N+ + 1)/(N+ + 2) and 1/(N- + 2). Errors if only
// one class is present.
PlattSigmoid platt_fit(const std::vector<double>& scores,
                       const std::vector<PrivacyLabel>& labels);

// Single logistic model, probability = sigmoid(w.x + b); labels are 1 for
// the positive class. Errors on empty/zero-dimensional input or one class.
LinearModel train_logistic(const std::vector<std::vector<double>>& rows,
                           const std::vector<int>& labels, const TrainConfig& cfg);

double predict_logistic(const LinearModel& model, std::span<const double> x);

// Shared fold machinery, exposed for stacked-ensemble reuse: folds[i] lists
// the row indices of fold i, every fold containing both classes.
std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<PrivacyLabel>& labels,
                                                       int n_folds, long seed);

std::vector<FoldModel> train_calibrated_folds(const std::vector<std::vector<double>>& rows,
                                              const std::vector<PrivacyLabel>& labels,
                                              const TrainConfig& cfg);

ProbabilityPair predict_proba_folds(const std::vector<FoldModel>& folds,
                                    std::span<const double> x);

}  // namespace dmfp
