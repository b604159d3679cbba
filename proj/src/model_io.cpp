#include "dmfp/model_io.hpp"

#include <fstream>

#include <json.hpp>

namespace dmfp {

namespace {

using nlohmann::json;

json dump_linear(const LinearModel& m) {
    return {{"weights", m.weights},
            {"bias", m.bias},
            {"loss", m.loss == LossKind::Hinge ? "hinge" : "logistic"}};
}

LinearModel parse_linear(const json& j) {
    LinearModel m;
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.loss = j.at("loss").get<std::string>() == "hinge" ? LossKind::Hinge : LossKind::Logistic;
    return m;
}

json dump_folds(const std::vector<FoldModel>& folds) {
    json arr = json::array();
    for (const auto& fold : folds) {
        json f = dump_linear(fold.model);
        f["sigmoid"] = {{"a", fold.sigmoid.a}, {"b", fold.sigmoid.b}};
        arr.push_back(f);
    }
    return arr;
}

std::vector<FoldModel> parse_folds(const json& arr) {
    std::vector<FoldModel> folds;
    for (const auto& f : arr) {
        FoldModel fold;
        fold.model = parse_linear(f);
        fold.sigmoid.a = f.at("sigmoid").at("a").get<double>();
        fold.sigmoid.b = f.at("sigmoid").at("b").get<double>();
        folds.push_back(std::move(fold));
    }
    if (folds.empty()) throw Error("model file has no folds");
    return folds;
}

json load_json(const std::filesystem::path& file, const std::string& expected_kind) {
    std::ifstream in(file);
    if (!in) throw Error("missing model file: " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error("bad model file " + file.string() + ": " + e.what());
    }
    if (j.value("kind", "") != expected_kind)
        throw Error("model file " + file.string() + " is not of kind '" + expected_kind + "'");
    return j;
}

void write_json(const json& j, const std::filesystem::path& file) {
    std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) throw Error("cannot write " + file.string());
    out << j.dump(2) << "\n";
}

json dump_ncfg(const NeighborhoodConfig& ncfg) {
    return {{"k_v", ncfg.k_v},
            {"k_p", ncfg.k_p},
            {"visual_metric", ncfg.visual_metric == VisualMetric::Cosine ? "cosine" : "euclidean"},
            {"include_self", ncfg.include_self}};
}

NeighborhoodConfig parse_ncfg(const json& j) {
    NeighborhoodConfig ncfg;
    ncfg.k_v = j.at("k_v").get<std::size_t>();
    ncfg.k_p = j.at("k_p").get<std::size_t>();
    ncfg.visual_metric = j.at("visual_metric").get<std::string>() == "euclidean"
                             ? VisualMetric::Euclidean
                             : VisualMetric::Cosine;
    ncfg.include_self = j.at("include_self").get<bool>();
    return ncfg;
}

std::string_view variant_name(FeatureVariant v) {
    switch (v) {
        case FeatureVariant::Full: return "full";
        case FeatureVariant::NoVisual: return "no_visual";
        case FeatureVariant::NoPrivacy: return "no_privacy";
        case FeatureVariant::NoPhi1: return "no_phi1";
        case FeatureVariant::NoPhi2: return "no_phi2";
        case FeatureVariant::NoPhi3: return "no_phi3";
    }
    return "full";
}

FeatureVariant parse_variant_name(const std::string& s) {
    for (FeatureVariant v : {FeatureVariant::Full, FeatureVariant::NoVisual,
                             FeatureVariant::NoPrivacy, FeatureVariant::NoPhi1,
                             FeatureVariant::NoPhi2, FeatureVariant::NoPhi3})
        if (s == variant_name(v)) return v;
    throw Error("unknown feature variant '" + s + "' in model file");
}

}  // namespace

void save_calibrated(const CalibratedClassifier& clf, const TrainConfig& cfg,
                     const std::filesystem::path& file) {
    json j;
    j["kind"] = "calibrated_linear";
    j["modality"] = to_string(clf.modality);
    j["dim"] = clf.folds.empty() ? 0 : clf.folds[0].model.weights.size();
    j["folds"] = dump_folds(clf.folds);
    j["config"] = {{"epochs", cfg.epochs},       {"learning_rate", cfg.learning_rate},
                   {"l2_penalty", cfg.l2_penalty}, {"seed", cfg.seed},
                   {"folds", cfg.folds},         {"balanced_classes", cfg.balanced_classes}};
    write_json(j, file);
}

CalibratedClassifier load_calibrated(const std::filesystem::path& file) {
    json j = load_json(file, "calibrated_linear");
    CalibratedClassifier clf;
    clf.modality = parse_modality(j.at("modality").get<std::string>());
    clf.folds = parse_folds(j.at("folds"));
    return clf;
}

void save_competence(const CompetenceModelSet& models, const std::filesystem::path& file) {
    json j;
    j["kind"] = "competence_set";
    j["neighborhood"] = dump_ncfg(models.ncfg);
    j["options"] = {{"variant", variant_name(models.options.variant)},
                    {"intersection_mode", models.options.intersection_mode},
                    {"probability_features", models.options.probability_features}};
    j["warnings"] = models.warnings;
    json mj;
    for (std::size_t m = 0; m < kNumModalities; ++m)
        mj[std::string(to_string(kAllModalities[m]))] = dump_linear(models.models[m]);
    j["models"] = mj;
    write_json(j, file);
}

CompetenceModelSet load_competence(const std::filesystem::path& file) {
    json j = load_json(file, "competence_set");
    CompetenceModelSet set;
    set.ncfg = parse_ncfg(j.at("neighborhood"));
    set.options.variant = parse_variant_name(j.at("options").at("variant").get<std::string>());
    set.options.intersection_mode = j.at("options").at("intersection_mode").get<bool>();
    set.options.probability_features = j.at("options").at("probability_features").get<bool>();
    set.warnings = j.value("warnings", std::vector<std::string>{});
    for (std::size_t m = 0; m < kNumModalities; ++m)
        set.models[m] = parse_linear(j.at("models").at(std::string(to_string(kAllModalities[m]))));
    return set;
}

void save_policies(const PolicySet& policies, const std::filesystem::path& file) {
    json j;
    j["kind"] = "policy_set";
    json mj;
    for (std::size_t m = 0; m < kNumModalities; ++m)
        mj[std::string(to_string(kAllModalities[m]))] = dump_linear(policies.policies[m]);
    j["policies"] = mj;
    j["warnings"] = policies.warnings;
    write_json(j, file);
}

PolicySet load_policies(const std::filesystem::path& file) {
    json j = load_json(file, "policy_set");
    PolicySet set;
    for (std::size_t m = 0; m < kNumModalities; ++m)
        set.policies[m] =
            parse_linear(j.at("policies").at(std::string(to_string(kAllModalities[m]))));
    set.warnings = j.value("warnings", std::vector<std::string>{});
    return set;
}

void save_stacked(const StackedModel& meta, const std::filesystem::path& file) {
    json j;
    j["kind"] = "stacked_meta";
    j["out_of_fold"] = meta.out_of_fold;
    j["folds"] = dump_folds(meta.folds);
    write_json(j, file);
}

StackedModel load_stacked(const std::filesystem::path& file) {
    json j = load_json(file, "stacked_meta");
    StackedModel meta;
    meta.out_of_fold = j.at("out_of_fold").get<bool>();
    meta.folds = parse_folds(j.at("folds"));
    return meta;
}

void save_cluster_ensemble(const ClusterEnsemble& ens, const std::filesystem::path& file) {
    json j;
    j["kind"] = "cluster_ensemble";
    j["n_clusters"] = ens.cfg.n_clusters;
    j["knn"] = ens.cfg.knn;
    j["metric"] = ens.cfg.metric == VisualMetric::Cosine ? "cosine" : "euclidean";
    j["assignment"] = ens.assignment;
    j["ids"] = ens.index.ids;
    j["rows"] = ens.index.rows;
    j["warnings"] = ens.warnings;
    json models = json::array();
    for (const auto& model : ens.models) {
        json mj;
        mj["folds"] = model.folds.empty() ? json::array() : dump_folds(model.folds);
        mj["constant"] = {model.constant.p_private, model.constant.p_public};
        models.push_back(mj);
    }
    j["models"] = models;
    write_json(j, file);
}

void save_concat(const ConcatModel& model, const std::filesystem::path& file) {
    json j;
    j["kind"] = "concat_linear";
    j["folds"] = dump_folds(model.folds);
    write_json(j, file);
}

ConcatModel load_concat(const std::filesystem::path& file) {
    json j = load_json(file, "concat_linear");
    ConcatModel model;
    model.folds = parse_folds(j.at("folds"));
    return model;
}

ClusterEnsemble load_cluster_ensemble(const std::filesystem::path& file) {
    json j = load_json(file, "cluster_ensemble");
    ClusterEnsemble ens;
    ens.cfg.n_clusters = j.at("n_clusters").get<std::size_t>();
    ens.cfg.knn = j.at("knn").get<std::size_t>();
    ens.cfg.metric = j.at("metric").get<std::string>() == "euclidean" ? VisualMetric::Euclidean
                                                                      : VisualMetric::Cosine;
    ens.assignment = j.at("assignment").get<std::vector<int>>();
    ens.index.ids = j.at("ids").get<std::vector<std::string>>();
    ens.index.rows = j.at("rows").get<std::vector<std::vector<double>>>();
    ens.warnings = j.value("warnings", std::vector<std::string>{});
    for (const auto& mj : j.at("models")) {
        ClusterModel model;
        if (!mj.at("folds").empty()) model.folds = parse_folds(mj.at("folds"));
        model.constant.p_private = mj.at("constant")[0].get<double>();
        model.constant.p_public = mj.at("constant")[1].get<double>();
        ens.models.push_back(std::move(model));
    }
    return ens;
}

}  // namespace dmfp
