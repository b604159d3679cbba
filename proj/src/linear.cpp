#include "dmfp/linear.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dmfp {

double LinearModel::score(std::span<const double> x) const {
    if (x.size() != weights.size())
        throw Error("feature dimension mismatch: got " + std::to_string(x.size()) +
                    ", model expects " + std::to_string(weights.size()));
    double s = bias;
    for (std::size_t i = 0; i < x.size(); ++i) s += weights[i] * x[i];
    return s;
}

namespace {

void check_training_input(const std::vector<std::vector<double>>& rows,
                          std::size_t n_labels) {
    if (rows.empty()) throw Error("training data is empty");
    if (rows.size() != n_labels) throw Error("feature rows and labels disagree in length");
    const std::size_t dim = rows[0].size();
    if (dim == 0) throw Error("training data has zero-dimensional features");
    for (const auto& row : rows)
        if (row.size() != dim) throw Error("inconsistent feature dimensions in training data");
}

// Subgradient descent with a decaying step; learning_rate 0 leaves the
// parameters at initialization. targets are +1/-1 for hinge, 1/0 for
// logistic. sample_weight compensates class imbalance when enabled.
LinearModel sgd_train(const std::vector<std::vector<double>>& rows,
                      const std::vector<double>& targets, const TrainConfig& cfg,
                      LossKind loss) {
    const std::size_t n = rows.size();
    const std::size_t dim = rows[0].size();
    LinearModel model;
    model.loss = loss;
    model.weights.assign(dim, 0.0);

    std::vector<double> sample_weight(n, 1.0);
    if (cfg.balanced_classes) {
        double n_pos = 0.0;
        for (double t : targets)
            if (t > 0.0) n_pos += 1.0;
        double n_neg = static_cast<double>(n) - n_pos;
        if (n_pos > 0.0 && n_neg > 0.0) {
            double w_pos = static_cast<double>(n) / (2.0 * n_pos);
            double w_neg = static_cast<double>(n) / (2.0 * n_neg);
            for (std::size_t i = 0; i < n; ++i)
                sample_weight[i] = targets[i] > 0.0 ? w_pos : w_neg;
        }
    }

    std::mt19937_64 rng(static_cast<std::uint64_t>(cfg.seed));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    const double lr = cfg.learning_rate;
    const double l2 = cfg.l2_penalty;
    long t = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i : order) {
            ++t;
            const double eta = lr / (1.0 + lr * l2 * static_cast<double>(t));
            if (eta == 0.0) continue;
            const auto& x = rows[i];
            double s = model.bias;
            for (std::size_t j = 0; j < dim; ++j) s += model.weights[j] * x[j];

            if (loss == LossKind::Hinge) {
                const double y = targets[i];  // +1 / -1
                const double decay = 1.0 - eta * l2;
                for (double& w : model.weights) w *= decay;
                if (y * s < 1.0) {
                    const double step = eta * y * sample_weight[i];
                    for (std::size_t j = 0; j < dim; ++j) model.weights[j] += step * x[j];
                    model.bias += step;
                }
            } else {
                const double p = sigmoid(s);
                const double g = (p - targets[i]) * sample_weight[i];
                for (std::size_t j = 0; j < dim; ++j)
                    model.weights[j] -= eta * (g * x[j] + l2 * model.weights[j]);
                model.bias -= eta * g;
            }
        }
    }
    return model;
}

}  // namespace

PlattSigmoid platt_fit(const std::vector<double>& scores,
                       const std::vector<PrivacyLabel>& labels) {
    if (scores.size() != labels.size()) throw Error("platt_fit: scores/labels length mismatch");
    if (scores.empty()) throw Error("platt_fit: empty input");
    double n_pos = 0.0, n_neg = 0.0;
    for (PrivacyLabel y : labels) (y == PrivacyLabel::Private ? n_pos : n_neg) += 1.0;
    if (n_pos == 0.0 || n_neg == 0.0)
        throw Error("platt_fit: both classes must be present in the calibration fold");

    // Newton with backtracking on the negative log-likelihood of
    // p = 1/(1+exp(a*s+b)) against smoothed targets.
    const double t_pos = (n_pos + 1.0) / (n_pos + 2.0);
    const double t_neg = 1.0 / (n_neg + 2.0);
    const std::size_t n = scores.size();
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i)
        t[i] = labels[i] == PrivacyLabel::Private ? t_pos : t_neg;

    auto nll = [&](double a, double b) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = a * scores[i] + b;
            if (z >= 0.0)
                sum += t[i] * z + std::log1p(std::exp(-z));
            else
                sum += (t[i] - 1.0) * z + std::log1p(std::exp(z));
        }
        return sum;
    };

    double a = 0.0;
    double b = std::log((n_neg + 1.0) / (n_pos + 1.0));
    const double eps = 1e-8;
    for (int iter = 0; iter < 200; ++iter) {
        double h11 = 1e-12, h22 = 1e-12, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = a * scores[i] + b;
            double p, q;  // p = 1/(1+e^z), q = 1-p
            if (z >= 0.0) {
                const double e = std::exp(-z);
                p = e / (1.0 + e);
                q = 1.0 / (1.0 + e);
            } else {
                const double e = std::exp(z);
                p = 1.0 / (1.0 + e);
                q = e / (1.0 + e);
            }
            h11 += scores[i] * scores[i] * p * q;
            h22 += p * q;
            h21 += scores[i] * p * q;
            g1 += scores[i] * (t[i] - p);
            g2 += t[i] - p;
        }
        if (std::abs(g1) < eps && std::abs(g2) < eps) break;
        const double det = h11 * h22 - h21 * h21;
        const double da = -(h22 * g1 - h21 * g2) / det;
        const double db = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * da + g2 * db;
        const double value = nll(a, b);
        double step = 1.0;
        while (step >= 1e-10) {
            const double na = a + step * da;
            const double nb = b + step * db;
            if (nll(na, nb) < value + 1e-4 * step * gd) {
                a = na;
                b = nb;
                break;
            }
            step /= 2.0;
        }
        if (step < 1e-10) break;
    }
    if (!std::isfinite(a) || !std::isfinite(b)) return PlattSigmoid{-1.0, 0.0};
    return PlattSigmoid{a, b};
}

std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<PrivacyLabel>& labels,
                                                       int n_folds, long seed) {
    if (n_folds < 1) throw Error("fold count must be positive");
    std::array<std::vector<std::size_t>, 2> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i)
        by_class[labels[i] == PrivacyLabel::Private ? 0 : 1].push_back(i);
    if (by_class[0].empty() || by_class[1].empty())
        throw Error("training data contains a single class");
    for (const auto& members : by_class)
        if (members.size() < static_cast<std::size_t>(n_folds))
            throw Error("each class needs at least " + std::to_string(n_folds) +
                        " examples for stratified folding");
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(n_folds));
    for (auto& members : by_class) {
        std::shuffle(members.begin(), members.end(), rng);
        for (std::size_t i = 0; i < members.size(); ++i)
            folds[i % static_cast<std::size_t>(n_folds)].push_back(members[i]);
    }
    for (auto& fold : folds) std::sort(fold.begin(), fold.end());
    return folds;
}

std::vector<FoldModel> train_calibrated_folds(const std::vector<std::vector<double>>& rows,
                                              const std::vector<PrivacyLabel>& labels,
                                              const TrainConfig& cfg) {
    check_training_input(rows, labels.size());
    auto folds = stratified_folds(labels, cfg.folds, cfg.seed);

    std::vector<FoldModel> result(folds.size());
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<char> held(rows.size(), 0);
        for (std::size_t i : folds[f]) held[i] = 1;

        std::vector<std::vector<double>> train_rows;
        std::vector<double> train_targets;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (held[i]) continue;
            train_rows.push_back(rows[i]);
            train_targets.push_back(labels[i] == PrivacyLabel::Private ? 1.0 : -1.0);
        }
        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = cfg.seed + static_cast<long>(f) + 1;
        LinearModel model = sgd_train(train_rows, train_targets, fold_cfg, LossKind::Hinge);

        std::vector<double> scores;
        std::vector<PrivacyLabel> fold_labels;
        scores.reserve(folds[f].size());
        for (std::size_t i : folds[f]) {
            scores.push_back(model.score(rows[i]));
            fold_labels.push_back(labels[i]);
        }
        result[f] = FoldModel{std::move(model), platt_fit(scores, fold_labels)};
    }
    return result;
}

CalibratedClassifier train_calibrated(const std::vector<std::vector<double>>& rows,
                                      const std::vector<PrivacyLabel>& labels,
                                      const TrainConfig& cfg, ModalityId modality) {
    CalibratedClassifier clf;
    clf.modality = modality;
    clf.folds = train_calibrated_folds(rows, labels, cfg);
    return clf;
}

ProbabilityPair predict_proba_folds(const std::vector<FoldModel>& folds,
                                    std::span<const double> x) {
    if (folds.empty()) throw Error("classifier has no folds");
    double p = 0.0;
    for (const auto& fold : folds) p += fold.sigmoid.prob_private(fold.model.score(x));
    p /= static_cast<double>(folds.size());
    return ProbabilityPair{p, 1.0 - p};
}

ProbabilityPair predict_proba(const CalibratedClassifier& clf, std::span<const double> x) {
    return predict_proba_folds(clf.folds, x);
}

LinearModel train_logistic(const std::vector<std::vector<double>>& rows,
                           const std::vector<int>& labels, const TrainConfig& cfg) {
    check_training_input(rows, labels.size());
    bool has_pos = false, has_neg = false;
    std::vector<double> targets(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        targets[i] = labels[i] != 0 ? 1.0 : 0.0;
        (labels[i] != 0 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) throw Error("training data contains a single class");
    return sgd_train(rows, targets, cfg, LossKind::Logistic);
}

double predict_logistic(const LinearModel& model, std::span<const double> x) {
    return sigmoid(model.score(x));
}

}  // namespace dmfp
