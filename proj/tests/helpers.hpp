#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dmfp/dataset.hpp"
#include "dmfp/linear.hpp"

namespace dmfp::testing {

// Classifier that outputs the same posterior for every input: zero weights,
// bias at the logit of the wanted probability, identity-ish sigmoid.
inline CalibratedClassifier constant_classifier(ModalityId m, double p_private) {
    CalibratedClassifier clf;
    clf.modality = m;
    LinearModel model;
    model.weights = {0.0};
    model.bias = logit(clamp01_open(p_private));
    clf.folds = {FoldModel{model, PlattSigmoid{-1.0, 0.0}}};
    return clf;
}

// 1-D classifier whose private probability is sigmoid(x): positive feature
// means private.
inline CalibratedClassifier sign_classifier(ModalityId m) {
    CalibratedClassifier clf;
    clf.modality = m;
    LinearModel model;
    model.weights = {1.0};
    clf.folds = {FoldModel{model, PlattSigmoid{-1.0, 0.0}}};
    return clf;
}

inline FeatureRecord record_1d(const std::string& id, double obj, double scene, double tag,
                               std::optional<PrivacyLabel> label = std::nullopt) {
    FeatureRecord rec;
    rec.id = id;
    rec.block(ModalityId::Object) = {obj};
    rec.block(ModalityId::Scene) = {scene};
    rec.block(ModalityId::Tag) = {tag};
    rec.label = label;
    return rec;
}

inline std::vector<CalibratedClassifier> sign_base() {
    return {sign_classifier(ModalityId::Object), sign_classifier(ModalityId::Scene),
            sign_classifier(ModalityId::Tag)};
}

// Random labeled dataset with 1-D blocks, used where only structure matters.
inline LabeledDataset random_1d_dataset(std::size_t n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> unit(-2.0, 2.0);
    std::bernoulli_distribution coin(0.5);
    std::vector<FeatureRecord> records;
    for (std::size_t i = 0; i < n; ++i) {
        records.push_back(record_1d("r" + std::to_string(1000 + i), unit(rng), unit(rng),
                                    unit(rng),
                                    coin(rng) ? PrivacyLabel::Private : PrivacyLabel::Public));
    }
    return make_dataset(std::move(records), {1, 1, 1});
}

// Perceptron convergence check: returns true when the data admits a linear
// separator (labels +1/-1), i.e. the perceptron converges within the cap.
inline bool perceptron_separable(const std::vector<std::vector<double>>& rows,
                                 const std::vector<int>& labels, int max_epochs = 2000) {
    const std::size_t dim = rows.empty() ? 0 : rows[0].size();
    std::vector<double> w(dim, 0.0);
    double b = 0.0;
    for (int epoch = 0; epoch < max_epochs; ++epoch) {
        bool mistake = false;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            double s = b;
            for (std::size_t j = 0; j < dim; ++j) s += w[j] * rows[i][j];
            const double y = labels[i] > 0 ? 1.0 : -1.0;
            if (y * s <= 0.0) {
                for (std::size_t j = 0; j < dim; ++j) w[j] += y * rows[i][j];
                b += y;
                mistake = true;
            }
        }
        if (!mistake) return true;
    }
    return false;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("dmfp_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace dmfp::testing
