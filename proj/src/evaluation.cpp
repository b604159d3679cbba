#include "dmfp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace dmfp {

namespace {

using nlohmann::json;

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double harmonic_f1(double p, double r) { return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

std::string fixed3(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << v;
    return os.str();
}

std::string fixed2(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
}

}  // namespace

EvalReport confusion_metrics(const std::vector<PrivacyLabel>& preds,
                             const std::vector<PrivacyLabel>& golds) {
    if (preds.size() != golds.size()) throw Error("confusion_metrics: length mismatch");
    if (preds.empty()) throw Error("confusion_metrics: empty input");

    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;  // private is the positive class
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool pred_private = preds[i] == PrivacyLabel::Private;
        const bool gold_private = golds[i] == PrivacyLabel::Private;
        if (pred_private && gold_private) ++tp;
        else if (pred_private && !gold_private) ++fp;
        else if (!pred_private && gold_private) ++fn;
        else ++tn;
    }

    EvalReport r;
    r.total = preds.size();
    r.private_cls.support = tp + fn;
    r.public_cls.support = tn + fp;
    r.private_cls.precision = safe_div(static_cast<double>(tp), static_cast<double>(tp + fp));
    r.private_cls.recall = safe_div(static_cast<double>(tp), static_cast<double>(tp + fn));
    r.private_cls.f1 = harmonic_f1(r.private_cls.precision, r.private_cls.recall);
    r.public_cls.precision = safe_div(static_cast<double>(tn), static_cast<double>(tn + fn));
    r.public_cls.recall = safe_div(static_cast<double>(tn), static_cast<double>(tn + fp));
    r.public_cls.f1 = harmonic_f1(r.public_cls.precision, r.public_cls.recall);
    r.accuracy_pct = 100.0 * static_cast<double>(tp + tn) / static_cast<double>(r.total);

    r.macro_precision = (r.private_cls.precision + r.public_cls.precision) / 2.0;
    r.macro_recall = (r.private_cls.recall + r.public_cls.recall) / 2.0;
    r.macro_f1 = (r.private_cls.f1 + r.public_cls.f1) / 2.0;
    const double n = static_cast<double>(r.total);
    r.weighted_precision = (r.private_cls.precision * static_cast<double>(r.private_cls.support) +
                            r.public_cls.precision * static_cast<double>(r.public_cls.support)) /
                           n;
    r.weighted_recall = (r.private_cls.recall * static_cast<double>(r.private_cls.support) +
                         r.public_cls.recall * static_cast<double>(r.public_cls.support)) /
                        n;
    r.weighted_f1 = (r.private_cls.f1 * static_cast<double>(r.private_cls.support) +
                     r.public_cls.f1 * static_cast<double>(r.public_cls.support)) /
                    n;
    return r;
}

std::string EvalReport::to_json() const {
    json j;
    j["private"] = {{"precision", private_cls.precision},
                    {"recall", private_cls.recall},
                    {"f1", private_cls.f1},
                    {"support", private_cls.support}};
    j["public"] = {{"precision", public_cls.precision},
                   {"recall", public_cls.recall},
                   {"f1", public_cls.f1},
                   {"support", public_cls.support}};
    j["accuracy_pct"] = accuracy_pct;
    j["macro"] = {{"precision", macro_precision}, {"recall", macro_recall}, {"f1", macro_f1}};
    j["weighted"] = {{"precision", weighted_precision},
                     {"recall", weighted_recall},
                     {"f1", weighted_f1}};
    j["total"] = total;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    return j.dump(2);
}

std::string EvalReport::to_text() const {
    std::ostringstream os;
    os << "              Precision  Recall  F1-score  Support\n";
    os << "Private         " << fixed3(private_cls.precision) << "   " << fixed3(private_cls.recall)
       << "     " << fixed3(private_cls.f1) << "  " << std::setw(7) << private_cls.support << "\n";
    os << "Public          " << fixed3(public_cls.precision) << "   " << fixed3(public_cls.recall)
       << "     " << fixed3(public_cls.f1) << "  " << std::setw(7) << public_cls.support << "\n";
    os << "Accuracy (%)    " << fixed2(accuracy_pct) << "\n";
    os << "Overall/macro   " << fixed3(macro_precision) << "   " << fixed3(macro_recall) << "     "
       << fixed3(macro_f1) << "\n";
    os << "Overall/wtd     " << fixed3(weighted_precision) << "   " << fixed3(weighted_recall)
       << "     " << fixed3(weighted_f1) << "\n";
    return os.str();
}

namespace {

struct ConditionCounts {
    std::size_t private_hit = 0, public_hit = 0;
};

ExploratoryRow make_row(const std::string& name, const ConditionCounts& counts,
                        std::size_t n_private, std::size_t n_public) {
    ExploratoryRow row;
    row.name = name;
    row.private_pct = 100.0 * safe_div(static_cast<double>(counts.private_hit),
                                       static_cast<double>(n_private));
    row.public_pct =
        100.0 * safe_div(static_cast<double>(counts.public_hit), static_cast<double>(n_public));
    row.overall_pct = 100.0 * safe_div(static_cast<double>(counts.private_hit + counts.public_hit),
                                       static_cast<double>(n_private + n_public));
    return row;
}

}  // namespace

ExploratoryTable exploratory_analysis(
    const std::array<std::vector<PrivacyLabel>, kNumModalities>& per_modality_preds,
    const std::vector<PrivacyLabel>& golds) {
    if (golds.empty()) throw Error("exploratory_analysis: empty input");
    for (const auto& preds : per_modality_preds)
        if (preds.size() != golds.size()) throw Error("exploratory_analysis: length mismatch");

    std::size_t n_private = 0, n_public = 0;
    for (PrivacyLabel g : golds) (g == PrivacyLabel::Private ? n_private : n_public) += 1;

    std::array<ConditionCounts, kNumModalities> modality_counts;
    ConditionCounts all_correct, all_wrong, at_least_one;
    for (std::size_t i = 0; i < golds.size(); ++i) {
        const bool is_private = golds[i] == PrivacyLabel::Private;
        std::size_t n_correct = 0;
        for (std::size_t m = 0; m < kNumModalities; ++m) {
            if (per_modality_preds[m][i] == golds[i]) {
                ++n_correct;
                (is_private ? modality_counts[m].private_hit : modality_counts[m].public_hit) += 1;
            }
        }
        if (n_correct == kNumModalities)
            (is_private ? all_correct.private_hit : all_correct.public_hit) += 1;
        if (n_correct == 0) (is_private ? all_wrong.private_hit : all_wrong.public_hit) += 1;
        if (n_correct > 0)
            (is_private ? at_least_one.private_hit : at_least_one.public_hit) += 1;
    }

    ExploratoryTable table;
    static const char* names[kNumModalities] = {"Object is correct", "Scene is correct",
                                                "Tag is correct"};
    for (std::size_t m = 0; m < kNumModalities; ++m)
        table.rows.push_back(make_row(names[m], modality_counts[m], n_private, n_public));
    table.rows.push_back(make_row("All are correct", all_correct, n_private, n_public));
    table.rows.push_back(make_row("All are wrong", all_wrong, n_private, n_public));
    table.rows.push_back(
        make_row("Atleast one modality is correct", at_least_one, n_private, n_public));
    return table;
}

const ExploratoryRow& ExploratoryTable::row(const std::string& name) const {
    for (const auto& r : rows)
        if (r.name == name) return r;
    throw Error("exploratory table has no row '" + name + "'");
}

std::string ExploratoryTable::to_json() const {
    json j = json::array();
    for (const auto& r : rows)
        j.push_back({{"name", r.name},
                     {"pr_pct", r.private_pct},
                     {"pu_pct", r.public_pct},
                     {"o_pct", r.overall_pct}});
    return j.dump(2);
}

std::string ExploratoryTable::to_text() const {
    std::ostringstream os;
    os << std::left << std::setw(34) << "Test" << std::right << std::setw(8) << "Pr(%)"
       << std::setw(8) << "Pu(%)" << std::setw(8) << "O(%)" << "\n";
    for (const auto& r : rows)
        os << std::left << std::setw(34) << r.name << std::right << std::setw(8)
           << fixed2(r.private_pct) << std::setw(8) << fixed2(r.public_pct) << std::setw(8)
           << fixed2(r.overall_pct) << "\n";
    return os.str();
}

ErrorCorrectionTable error_correction(
    const std::array<std::vector<PrivacyLabel>, kNumModalities>& base_preds,
    const std::vector<PrivacyLabel>& system_preds, const std::vector<PrivacyLabel>& golds) {
    if (golds.empty()) throw Error("error_correction: empty input");
    if (system_preds.size() != golds.size()) throw Error("error_correction: length mismatch");
    for (const auto& preds : base_preds)
        if (preds.size() != golds.size()) throw Error("error_correction: length mismatch");

    ErrorCorrectionTable table;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
        ErrorCorrectionRow row;
        row.modality = kAllModalities[m];
        std::size_t corrected_private = 0, corrected_public = 0;
        for (std::size_t i = 0; i < golds.size(); ++i) {
            if (base_preds[m][i] == golds[i]) continue;  // not a base error
            const bool is_private = golds[i] == PrivacyLabel::Private;
            (is_private ? row.private_errors : row.public_errors) += 1;
            if (system_preds[i] == golds[i])
                (is_private ? corrected_private : corrected_public) += 1;
        }
        row.overall_errors = row.private_errors + row.public_errors;
        row.private_pct = 100.0 * safe_div(static_cast<double>(corrected_private),
                                           static_cast<double>(row.private_errors));
        row.public_pct = 100.0 * safe_div(static_cast<double>(corrected_public),
                                          static_cast<double>(row.public_errors));
        row.overall_pct = 100.0 * safe_div(static_cast<double>(corrected_private + corrected_public),
                                           static_cast<double>(row.overall_errors));
        table.rows.push_back(row);
    }
    return table;
}

std::string ErrorCorrectionTable::to_json() const {
    json j = json::array();
    for (const auto& r : rows)
        j.push_back({{"modality", to_string(r.modality)},
                     {"overall_pct", r.overall_pct},
                     {"private_pct", r.private_pct},
                     {"public_pct", r.public_pct},
                     {"overall_errors", r.overall_errors},
                     {"private_errors", r.private_errors},
                     {"public_errors", r.public_errors}});
    return j.dump(2);
}

std::string ErrorCorrectionTable::to_text() const {
    std::ostringstream os;
    os << std::left << std::setw(10) << "B" << std::right << std::setw(10) << "overall"
       << std::setw(10) << "private" << std::setw(10) << "public" << "\n";
    for (const auto& r : rows)
        os << std::left << std::setw(10) << to_string(r.modality) << std::right << std::setw(10)
           << fixed2(r.overall_pct) << std::setw(10) << fixed2(r.private_pct) << std::setw(10)
           << fixed2(r.public_pct) << "\n";
    return os.str();
}

std::string SweepResult::to_csv() const {
    std::ostringstream os;
    os << "kv\\kp";
    for (std::size_t kp : kp_grid) os << ',' << kp;
    os << "\n";
    for (std::size_t i = 0; i < kv_grid.size(); ++i) {
        os << kv_grid[i];
        for (std::size_t j = 0; j < kp_grid.size(); ++j)
            os << ',' << std::setprecision(6) << std::fixed << f1[i][j];
        os << "\n";
    }
    return os.str();
}

SweepResult sweep(const LabeledDataset& estimate_set,
                  const std::vector<CalibratedClassifier>& base, const SweepConfig& scfg,
                  const TrainConfig& tcfg, const FusionConfig& fcfg,
                  const CompetenceOptions& opts) {
    if (scfg.kv_grid.empty() || scfg.kp_grid.empty()) throw Error("sweep: empty grid");
    if (scfg.cv_folds < 2) throw Error("sweep: need at least 2 folds");

    std::vector<PrivacyLabel> labels;
    labels.reserve(estimate_set.size());
    for (const auto& rec : estimate_set.records) {
        if (!rec.label) throw Error("sweep: estimation set must be fully labeled");
        labels.push_back(*rec.label);
    }
    const auto folds = stratified_folds(labels, scfg.cv_folds, scfg.seed);

    // Per-fold datasets are shared across cells; only the competence models
    // depend on (k_v, k_p).
    struct FoldData {
        LabeledDataset rest;
        std::vector<std::size_t> held;
    };
    std::vector<FoldData> fold_data;
    for (const auto& fold : folds) {
        std::vector<char> held(estimate_set.size(), 0);
        for (std::size_t i : fold) held[i] = 1;
        std::vector<FeatureRecord> rest;
        for (std::size_t i = 0; i < estimate_set.size(); ++i)
            if (!held[i]) rest.push_back(estimate_set.records[i]);
        fold_data.push_back({make_dataset(std::move(rest), estimate_set.dims), fold});
    }

    SweepResult result;
    result.kv_grid = scfg.kv_grid;
    result.kp_grid = scfg.kp_grid;
    result.f1.assign(scfg.kv_grid.size(), std::vector<double>(scfg.kp_grid.size(), 0.0));

    bool first_cell = true;
    for (std::size_t i = 0; i < scfg.kv_grid.size(); ++i) {
        for (std::size_t j = 0; j < scfg.kp_grid.size(); ++j) {
            NeighborhoodConfig ncfg = fcfg.ncfg;
            ncfg.k_v = scfg.kv_grid[i];
            ncfg.k_p = scfg.kp_grid[j];
            FusionConfig cell_cfg = fcfg;
            cell_cfg.ncfg = ncfg;

            std::vector<PrivacyLabel> preds(estimate_set.size());
            std::vector<PrivacyLabel> golds(estimate_set.size());
            for (const auto& fd : fold_data) {
                const CompetenceModelSet cmodels =
                    train_competence(fd.rest, base, ncfg, tcfg, opts);
                const VisualIndex vindex = VisualIndex::build(fd.rest);
                const ProfileTable ptable = ProfileTable::build(fd.rest, base);
                parallel_for(fd.held.size(), [&](std::size_t h) {
                    const std::size_t idx = fd.held[h];
                    const FusionDecision d =
                        dmfp_predict(estimate_set.records[idx], fd.rest, base, cmodels, cell_cfg,
                                     &vindex, &ptable);
                    preds[idx] = d.label;
                    golds[idx] = labels[idx];
                });
            }
            result.f1[i][j] = confusion_metrics(preds, golds).private_cls.f1;
            if (first_cell || result.f1[i][j] > result.best_f1) {
                first_cell = false;
                result.best_f1 = result.f1[i][j];
                result.best_kv = scfg.kv_grid[i];
                result.best_kp = scfg.kp_grid[j];
            }
        }
    }
    return result;
}

MultiSeedReport multi_seed_run(int n_seeds, long base_seed,
                               const std::function<EvalReport(long seed)>& run) {
    if (n_seeds < 1) throw Error("multi_seed_run: need at least one seed");
    MultiSeedReport report;
    for (int s = 0; s < n_seeds; ++s) report.per_seed.push_back(run(base_seed + s));

    auto fold_metric = [&](const std::function<double(const EvalReport&)>& get, double& mean_out,
                           double& std_out) {
        double mean = 0.0;
        for (const auto& r : report.per_seed) mean += get(r);
        mean /= static_cast<double>(n_seeds);
        double var = 0.0;
        for (const auto& r : report.per_seed) {
            const double d = get(r) - mean;
            var += d * d;
        }
        std_out = n_seeds > 1 ? std::sqrt(var / static_cast<double>(n_seeds - 1)) : 0.0;
        mean_out = mean;
    };

    auto fold_all = [&](EvalReport& dst, bool stddev) {
        auto take = [&](const std::function<double(const EvalReport&)>& get) {
            double m = 0.0, s = 0.0;
            fold_metric(get, m, s);
            return stddev ? s : m;
        };
        dst.private_cls.precision = take([](const EvalReport& r) { return r.private_cls.precision; });
        dst.private_cls.recall = take([](const EvalReport& r) { return r.private_cls.recall; });
        dst.private_cls.f1 = take([](const EvalReport& r) { return r.private_cls.f1; });
        dst.public_cls.precision = take([](const EvalReport& r) { return r.public_cls.precision; });
        dst.public_cls.recall = take([](const EvalReport& r) { return r.public_cls.recall; });
        dst.public_cls.f1 = take([](const EvalReport& r) { return r.public_cls.f1; });
        dst.accuracy_pct = take([](const EvalReport& r) { return r.accuracy_pct; });
        dst.macro_precision = take([](const EvalReport& r) { return r.macro_precision; });
        dst.macro_recall = take([](const EvalReport& r) { return r.macro_recall; });
        dst.macro_f1 = take([](const EvalReport& r) { return r.macro_f1; });
        dst.weighted_precision = take([](const EvalReport& r) { return r.weighted_precision; });
        dst.weighted_recall = take([](const EvalReport& r) { return r.weighted_recall; });
        dst.weighted_f1 = take([](const EvalReport& r) { return r.weighted_f1; });
        dst.total = report.per_seed.front().total;
    };
    fold_all(report.mean, false);
    fold_all(report.stddev, true);
    return report;
}

std::string MultiSeedReport::to_json() const {
    json j;
    j["n_seeds"] = per_seed.size();
    j["per_seed"] = json::array();
    for (const auto& r : per_seed) j["per_seed"].push_back(json::parse(r.to_json()));
    j["mean"] = json::parse(mean.to_json());
    j["stddev"] = json::parse(stddev.to_json());
    return j.dump(2);
}

PairedTResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw Error("paired_t_test: need two samples of equal length >= 2");
    const std::size_t n = a.size();
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = (a[i] - b[i]) - mean;
        var += d * d;
    }
    var /= static_cast<double>(n - 1);

    PairedTResult result;
    result.dof = static_cast<int>(n) - 1;
    if (var == 0.0) {
        result.t = mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity() * (mean > 0 ? 1 : -1);
    } else {
        result.t = mean / std::sqrt(var / static_cast<double>(n));
    }

    // Two-sided 5% critical values of the t distribution, df 1..30.
    static const double crit[30] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                                    2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                                    2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                                    2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
    const double threshold = result.dof <= 30 ? crit[result.dof - 1] : 1.96;
    result.significant_at_05 = std::abs(result.t) > threshold;
    return result;
}

}  // namespace dmfp
