#include "dmfp/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "dmfp/dataset.hpp"
#include "dmfp/model_io.hpp"

#include <json.hpp>

namespace dmfp {

namespace {

using nlohmann::json;

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string fmt_compact(double v) {
    std::ostringstream os;
    os << v;  // %g-style: 1.96 -> "1.96", 0 -> "0"
    return os.str();
}

bool parse_bool(const std::string& value, const std::string& key) {
    const std::string lower = to_lower(value);
    if (lower == "true") return true;
    if (lower == "false") return false;
    throw ConfigError("expected true/false for '" + key + "', got '" + value + "'", {key});
}

double parse_num(const std::string& value, const std::string& key) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("expected a number for '" + key + "', got '" + value + "'", {key});
    }
}

long parse_int(const std::string& value, const std::string& key) {
    try {
        std::size_t used = 0;
        const long v = std::stol(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("expected an integer for '" + key + "', got '" + value + "'", {key});
    }
}

std::vector<std::size_t> parse_size_list(const std::string& value, const std::string& key) {
    std::vector<std::size_t> out;
    for (const auto& part : split(value, ',')) {
        const std::string item = trim(part);
        if (item.empty()) continue;
        const long v = parse_int(item, key);
        if (v < 1) throw ConfigError("list entries for '" + key + "' must be >= 1", {key});
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

std::string unquote(std::string value) {
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
        return value.substr(1, value.size() - 2);
    return value;
}

void apply_key(RunConfig& cfg, const std::string& section, const std::string& key,
               const std::string& value) {
    const std::string full = section + "." + key;
    if (section == "data") {
        if (key == "manifest") cfg.manifest = unquote(value);
        else if (key == "out_dir") cfg.out_dir = unquote(value);
        else throw ConfigError("unknown config key '" + full + "'", {full});
    } else if (section == "split") {
        if (key == "seed") cfg.split.seed = parse_int(value, full);
        else if (key == "train") cfg.split.train_fraction = parse_num(value, full);
        else if (key == "estimate") cfg.split.estimate_fraction = parse_num(value, full);
        else if (key == "test") cfg.split.test_fraction = parse_num(value, full);
        else if (key == "stratified") cfg.split.stratified = parse_bool(value, full);
        else throw ConfigError("unknown config key '" + full + "'", {full});
    } else if (section == "train") {
        if (key == "epochs") cfg.train.epochs = static_cast<int>(parse_int(value, full));
        else if (key == "learning_rate") cfg.train.learning_rate = parse_num(value, full);
        else if (key == "l2_penalty") cfg.train.l2_penalty = parse_num(value, full);
        else if (key == "seed") cfg.train.seed = parse_int(value, full);
        else if (key == "folds") cfg.train.folds = static_cast<int>(parse_int(value, full));
        else if (key == "balanced_classes") cfg.train.balanced_classes = parse_bool(value, full);
        else throw ConfigError("unknown config key '" + full + "'", {full});
    } else if (section == "neighborhood") {
        if (key == "k_v") cfg.neighborhood.k_v = static_cast<std::size_t>(parse_int(value, full));
        else if (key == "k_p")
            cfg.neighborhood.k_p = static_cast<std::size_t>(parse_int(value, full));
        else if (key == "visual_metric") {
            const std::string metric = to_lower(unquote(value));
            if (metric == "cosine") cfg.neighborhood.visual_metric = VisualMetric::Cosine;
            else if (metric == "euclidean")
                cfg.neighborhood.visual_metric = VisualMetric::Euclidean;
            else throw ConfigError("visual_metric must be cosine or euclidean", {full});
        } else if (key == "include_self")
            cfg.neighborhood.include_self = parse_bool(value, full);
        else throw ConfigError("unknown config key '" + full + "'", {full});
    } else if (section == "competence") {
        if (key == "intersection_mode")
            cfg.competence.intersection_mode = parse_bool(value, full);
        else if (key == "probability_features")
            cfg.competence.probability_features = parse_bool(value, full);
        else throw ConfigError("unknown config key '" + full + "'", {full});
    } else if (section == "fusion") {
        if (key == "threshold") cfg.fusion_threshold = parse_num(value, full);
        else if (key == "fallback") {
            const std::string fb = to_lower(unquote(value));
            if (fb == "highest_competence") cfg.fusion_fallback = FallbackPolicy::HighestCompetence;
            else if (fb == "weighted_all") cfg.fusion_fallback = FallbackPolicy::WeightedAll;
            else throw ConfigError("fallback must be highest_competence or weighted_all", {full});
        } else if (key == "posterior_tie_label")
            cfg.posterior_tie_label = parse_privacy_label(unquote(value));
        else if (key == "literal_agreement_guard")
            cfg.literal_agreement_guard = parse_bool(value, full);
        else throw ConfigError("unknown config key '" + full + "'", {full});
    } else if (section == "synth") {
        if (key == "n") cfg.synth.n = static_cast<std::size_t>(parse_int(value, full));
        else if (key == "dim_object")
            cfg.synth.dims[0] = static_cast<std::size_t>(parse_int(value, full));
        else if (key == "dim_scene")
            cfg.synth.dims[1] = static_cast<std::size_t>(parse_int(value, full));
        else if (key == "dim_tag")
            cfg.synth.dims[2] = static_cast<std::size_t>(parse_int(value, full));
        else if (key == "n_regions")
            cfg.synth.n_regions = static_cast<std::size_t>(parse_int(value, full));
        else if (key == "informative") {
            cfg.synth.informative.clear();
            for (const auto& part : split(unquote(value), ','))
                if (!trim(part).empty()) cfg.synth.informative.push_back(parse_modality(part));
        } else if (key == "noise") cfg.synth.noise = parse_num(value, full);
        else if (key == "class_ratio") cfg.synth.class_ratio = parse_num(value, full);
        else if (key == "seed") cfg.synth.seed = parse_int(value, full);
        else if (key == "spacing") cfg.synth.spacing = parse_num(value, full);
        else if (key == "margin") cfg.synth.margin = parse_num(value, full);
        else throw ConfigError("unknown config key '" + full + "'", {full});
    } else if (section == "baselines") {
        if (key == "train_policy") cfg.train_policy = parse_bool(value, full);
        else if (key == "train_stacked") cfg.train_stacked_meta = parse_bool(value, full);
        else if (key == "train_cluster") cfg.train_cluster = parse_bool(value, full);
        else if (key == "train_concat") cfg.train_concat_model = parse_bool(value, full);
        else if (key == "stacked_out_of_fold")
            cfg.stacked_out_of_fold = parse_bool(value, full);
        else if (key == "n_clusters")
            cfg.cluster.n_clusters = static_cast<std::size_t>(parse_int(value, full));
        else if (key == "knn") cfg.cluster.knn = static_cast<std::size_t>(parse_int(value, full));
        else if (key == "linkage") {
            const std::string lk = to_lower(unquote(value));
            if (lk == "ward") cfg.cluster.linkage = Linkage::Ward;
            else if (lk == "single") cfg.cluster.linkage = Linkage::Single;
            else if (lk == "complete") cfg.cluster.linkage = Linkage::Complete;
            else if (lk == "average") cfg.cluster.linkage = Linkage::Average;
            else throw ConfigError("linkage must be ward, single, complete or average", {full});
        } else throw ConfigError("unknown config key '" + full + "'", {full});
    } else if (section == "sweep") {
        if (key == "kv_grid") cfg.sweep.kv_grid = parse_size_list(unquote(value), full);
        else if (key == "kp_grid") cfg.sweep.kp_grid = parse_size_list(unquote(value), full);
        else if (key == "cv_folds") cfg.sweep.cv_folds = static_cast<int>(parse_int(value, full));
        else if (key == "seed") cfg.sweep.seed = parse_int(value, full);
        else throw ConfigError("unknown config key '" + full + "'", {full});
    } else if (section == "run") {
        if (key == "variant") cfg.variant = to_lower(unquote(value));
        else if (key == "baseline") cfg.baseline = to_lower(unquote(value));
        else throw ConfigError("unknown config key '" + full + "'", {full});
    } else {
        throw ConfigError("unknown config section '" + section + "'", {section});
    }
}

std::string_view metric_name(VisualMetric m) {
    return m == VisualMetric::Cosine ? "cosine" : "euclidean";
}

std::string_view linkage_name(Linkage l) {
    switch (l) {
        case Linkage::Ward: return "ward";
        case Linkage::Single: return "single";
        case Linkage::Complete: return "complete";
        case Linkage::Average: return "average";
    }
    return "ward";
}

std::string size_list_text(const std::vector<std::size_t>& xs) {
    std::ostringstream os;
    for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
    return os.str();
}

std::string hash_hex(std::uint64_t h, int digits = 16) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str().substr(0, static_cast<std::size_t>(digits));
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::vector<std::string> bad_keys;
    std::string first_message;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        if (stripped.front() == '[' && stripped.back() == ']') {
            section = to_lower(trim(stripped.substr(1, stripped.size() - 2)));
            continue;
        }
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + " is not key = value",
                              {stripped});
        const std::string key = to_lower(trim(stripped.substr(0, eq)));
        const std::string value = trim(stripped.substr(eq + 1));
        if (section.empty())
            throw ConfigError("config key '" + key + "' appears before any [section]", {key});
        try {
            apply_key(cfg, section, key, value);
        } catch (const ConfigError& e) {
            if (first_message.empty()) first_message = e.what();
            bad_keys.insert(bad_keys.end(), e.keys.begin(), e.keys.end());
        }
    }
    if (!bad_keys.empty()) throw ConfigError(first_message, bad_keys);
    return cfg;
}

RunConfig parse_run_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("missing config file: " + file.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    RunConfig cfg = parse_run_config_text(buffer.str());
    // Paths in the file are relative to the file itself.
    const auto base = file.parent_path();
    if (cfg.manifest.is_relative()) cfg.manifest = base / cfg.manifest;
    if (cfg.out_dir.is_relative()) cfg.out_dir = base / cfg.out_dir;
    return cfg;
}

FusionConfig RunConfig::fusion_config() const {
    FusionConfig fcfg;
    fcfg.threshold = fusion_threshold;
    fcfg.fallback = fusion_fallback;
    fcfg.ncfg = neighborhood;
    fcfg.posterior_tie_label = posterior_tie_label;
    fcfg.literal_agreement_guard = literal_agreement_guard;
    return fcfg;
}

namespace {

// The trained artifacts depend on the feature variant, not the ablation
// name: counting variants reuse full-feature models.
std::string training_variant_name(const std::string& variant) {
    if (variant.empty()) return "full";
    try {
        switch (feature_variant_for(parse_ablation(variant))) {
            case FeatureVariant::Full: return "full";
            case FeatureVariant::NoVisual: return "no_visual";
            case FeatureVariant::NoPrivacy: return "no_privacy";
            case FeatureVariant::NoPhi1: return "no_phi1";
            case FeatureVariant::NoPhi2: return "no_phi2";
            case FeatureVariant::NoPhi3: return "no_phi3";
        }
    } catch (const Error&) {
        // Invalid names fail later with a proper message; hash them as-is.
    }
    return variant;
}

// The sections that shape trained artifacts; fusion/sweep/baseline choice
// only affect prediction-time outputs.
std::string canonical_sections(const RunConfig& c, bool training_only) {
    std::ostringstream os;
    os << "[data]\nmanifest = " << c.manifest.string() << "\n";
    if (!training_only) os << "out_dir = " << c.out_dir.string() << "\n";
    os << "[split]\nseed = " << c.split.seed << "\ntrain = " << fmt_double(c.split.train_fraction)
       << "\nestimate = " << fmt_double(c.split.estimate_fraction)
       << "\ntest = " << fmt_double(c.split.test_fraction)
       << "\nstratified = " << (c.split.stratified ? "true" : "false") << "\n";
    os << "[train]\nepochs = " << c.train.epochs
       << "\nlearning_rate = " << fmt_double(c.train.learning_rate)
       << "\nl2_penalty = " << fmt_double(c.train.l2_penalty) << "\nseed = " << c.train.seed
       << "\nfolds = " << c.train.folds
       << "\nbalanced_classes = " << (c.train.balanced_classes ? "true" : "false") << "\n";
    os << "[neighborhood]\nk_v = " << c.neighborhood.k_v << "\nk_p = " << c.neighborhood.k_p
       << "\nvisual_metric = " << metric_name(c.neighborhood.visual_metric)
       << "\ninclude_self = " << (c.neighborhood.include_self ? "true" : "false") << "\n";
    os << "[competence]\nintersection_mode = "
       << (c.competence.intersection_mode ? "true" : "false")
       << "\nprobability_features = " << (c.competence.probability_features ? "true" : "false")
       << "\n";
    if (!training_only) {
        os << "[fusion]\nthreshold = " << fmt_double(c.fusion_threshold) << "\nfallback = "
           << (c.fusion_fallback == FallbackPolicy::HighestCompetence ? "highest_competence"
                                                                      : "weighted_all")
           << "\nposterior_tie_label = " << to_string(c.posterior_tie_label)
           << "\nliteral_agreement_guard = " << (c.literal_agreement_guard ? "true" : "false")
           << "\n";
    }
    os << "[synth]\nn = " << c.synth.n << "\ndim_object = " << c.synth.dims[0]
       << "\ndim_scene = " << c.synth.dims[1] << "\ndim_tag = " << c.synth.dims[2]
       << "\nn_regions = " << c.synth.n_regions << "\ninformative = ";
    for (std::size_t i = 0; i < c.synth.informative.size(); ++i)
        os << (i ? "," : "") << to_string(c.synth.informative[i]);
    os << "\nnoise = " << fmt_double(c.synth.noise)
       << "\nclass_ratio = " << fmt_double(c.synth.class_ratio) << "\nseed = " << c.synth.seed
       << "\nspacing = " << fmt_double(c.synth.spacing)
       << "\nmargin = " << fmt_double(c.synth.margin) << "\n";
    os << "[baselines]\ntrain_policy = " << (c.train_policy ? "true" : "false")
       << "\ntrain_stacked = " << (c.train_stacked_meta ? "true" : "false")
       << "\ntrain_cluster = " << (c.train_cluster ? "true" : "false")
       << "\ntrain_concat = " << (c.train_concat_model ? "true" : "false")
       << "\nstacked_out_of_fold = " << (c.stacked_out_of_fold ? "true" : "false")
       << "\nn_clusters = " << c.cluster.n_clusters << "\nknn = " << c.cluster.knn
       << "\nlinkage = " << linkage_name(c.cluster.linkage) << "\n";
    if (!training_only) {
        os << "[sweep]\nkv_grid = " << size_list_text(c.sweep.kv_grid)
           << "\nkp_grid = " << size_list_text(c.sweep.kp_grid)
           << "\ncv_folds = " << c.sweep.cv_folds << "\nseed = " << c.sweep.seed << "\n";
    }
    os << "[run]\nvariant = "
       << (training_only ? training_variant_name(c.variant) : c.variant) << "\n";
    if (!training_only) os << "baseline = " << c.baseline << "\n";
    return os.str();
}

std::uint64_t train_hash(const RunConfig& cfg) {
    return fnv1a(canonical_sections(cfg, /*training_only=*/true));
}

}  // namespace

std::string RunConfig::canonical_text() const { return canonical_sections(*this, false); }

std::filesystem::path run_directory(const RunConfig& cfg) {
    return cfg.out_dir / ("run-" + hash_hex(train_hash(cfg)));
}

namespace {

struct TrainedArtifacts {
    std::vector<CalibratedClassifier> base;
    CompetenceModelSet competence;
    LabeledDataset full;
    SplitResult splits;
};

FeatureVariant variant_for_config(const RunConfig& cfg) {
    if (cfg.variant.empty()) return FeatureVariant::Full;
    const AblationVariant v = parse_ablation(cfg.variant);
    return feature_variant_for(v);
}

std::vector<std::vector<double>> modality_rows(const LabeledDataset& ds, ModalityId m) {
    std::vector<std::vector<double>> rows;
    rows.reserve(ds.size());
    for (const auto& rec : ds.records) rows.push_back(rec.block(m));
    return rows;
}

std::vector<PrivacyLabel> gold_labels(const LabeledDataset& ds) {
    std::vector<PrivacyLabel> labels;
    labels.reserve(ds.size());
    for (const auto& rec : ds.records) {
        if (!rec.label) throw Error("record '" + rec.id + "' is unlabeled");
        labels.push_back(*rec.label);
    }
    return labels;
}

std::vector<CalibratedClassifier> train_base(const LabeledDataset& train_set,
                                             const TrainConfig& tcfg) {
    const std::vector<PrivacyLabel> labels = gold_labels(train_set);
    std::vector<CalibratedClassifier> base(kNumModalities);
    // Independent models; train them concurrently.
    parallel_for(kNumModalities, [&](std::size_t m) {
        TrainConfig mcfg = tcfg;
        mcfg.seed = tcfg.seed + static_cast<long>(m) * 1000;
        base[m] = train_calibrated(modality_rows(train_set, kAllModalities[m]), labels, mcfg,
                                   kAllModalities[m]);
    });
    return base;
}

void write_split_file(const SplitResult& splits, const std::filesystem::path& file) {
    json j;
    auto ids_of = [](const LabeledDataset& ds) {
        std::vector<std::string> ids;
        ids.reserve(ds.size());
        for (const auto& rec : ds.records) ids.push_back(rec.id);
        return ids;
    };
    j["kind"] = "split";
    j["train"] = ids_of(splits.train);
    j["estimate"] = ids_of(splits.estimate);
    j["test"] = ids_of(splits.test);
    std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) throw Error("cannot write " + file.string());
    out << j.dump(2) << "\n";
}

SplitResult read_split_file(const LabeledDataset& ds, const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("missing split file: " + file.string() + " (run train first)");
    json j;
    in >> j;
    auto subset = [&](const char* name) {
        std::vector<FeatureRecord> records;
        for (const auto& id : j.at(name))
            records.push_back(ds.records[ds.index_of_id(id.get<std::string>())]);
        return make_dataset(std::move(records), ds.dims);
    };
    return SplitResult{subset("train"), subset("estimate"), subset("test")};
}

void echo_config(const RunConfig& cfg, const std::filesystem::path& run_dir) {
    std::filesystem::create_directories(run_dir);
    // The echo is keyed by the full config hash, so runs that share trained
    // artifacts but differ elsewhere never clobber each other's echo.
    const auto file = run_dir / ("config-" + hash_hex(cfg.hash(), 8) + ".toml");
    std::ofstream out(file);
    if (!out) throw Error("cannot write " + file.string());
    out << "# config hash " << hash_hex(cfg.hash()) << "\n" << cfg.canonical_text();
}

std::string artifact_stem(const RunConfig& cfg) {
    std::string name = "dmfp";
    if (!cfg.baseline.empty()) name = cfg.baseline;
    else if (!cfg.variant.empty()) name = cfg.variant;
    return name + "-" + hash_hex(cfg.hash(), 8);
}

}  // namespace

int cmd_generate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    (void)err;
    if (cfg.manifest.filename() != "manifest.json")
        throw ConfigError("generate writes manifest.json; set data.manifest accordingly",
                          {"data.manifest"});
    const SynthResult result = generate(cfg.synth);
    save_synth(result, cfg.manifest.parent_path());
    out << "generated " << result.dataset.size() << " records in "
        << cfg.manifest.parent_path().string() << " (config " << hash_hex(cfg.hash(), 8) << ")\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const LabeledDataset ds = load_dataset(cfg.manifest);
    const SplitResult splits = split_dataset(ds, cfg.split);

    const std::vector<CalibratedClassifier> base = train_base(splits.train, cfg.train);

    CompetenceOptions opts = cfg.competence;
    opts.variant = variant_for_config(cfg);
    const CompetenceModelSet cmodels =
        train_competence(splits.estimate, base, cfg.neighborhood, cfg.train, opts);
    for (const auto& warning : cmodels.warnings) err << "warning: " << warning << "\n";

    const auto run_dir = run_directory(cfg);
    const auto models_dir = run_dir / "models";
    echo_config(cfg, run_dir);
    write_split_file(splits, models_dir / "split.json");
    for (std::size_t m = 0; m < kNumModalities; ++m)
        save_calibrated(base[m], cfg.train,
                        models_dir / ("base_" + std::string(to_string(kAllModalities[m])) +
                                      ".json"));
    save_competence(cmodels, models_dir / "competence.json");

    if (cfg.train_policy) {
        const PolicySet policies = train_policy_select(splits.estimate, base, cfg.train);
        for (const auto& warning : policies.warnings) err << "warning: " << warning << "\n";
        save_policies(policies, models_dir / "policy.json");
    }
    if (cfg.train_stacked_meta) {
        const StackedModel meta =
            train_stacked(splits.train, base, cfg.train, cfg.stacked_out_of_fold);
        save_stacked(meta, models_dir / "stacked.json");
    }
    if (cfg.train_cluster) {
        const ClusterEnsemble ens = train_cluster_ensemble(splits.train, cfg.cluster, cfg.train);
        for (const auto& warning : ens.warnings) err << "warning: " << warning << "\n";
        save_cluster_ensemble(ens, models_dir / "cluster.json");
    }
    if (cfg.train_concat_model)
        save_concat(train_concat(splits.train, cfg.train), models_dir / "concat.json");

    out << "trained models in " << models_dir.string() << " (train " << splits.train.size()
        << ", estimate " << splits.estimate.size() << ", test " << splits.test.size() << ")\n";
    return 0;
}

namespace {

struct LoadedModels {
    std::vector<CalibratedClassifier> base;
    CompetenceModelSet competence;
};

LoadedModels load_models(const std::filesystem::path& models_dir) {
    LoadedModels loaded;
    for (std::size_t m = 0; m < kNumModalities; ++m)
        loaded.base.push_back(load_calibrated(
            models_dir / ("base_" + std::string(to_string(kAllModalities[m])) + ".json")));
    loaded.competence = load_competence(models_dir / "competence.json");
    return loaded;
}

}  // namespace

int cmd_predict(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    (void)err;
    const auto run_dir = run_directory(cfg);
    const auto models_dir = run_dir / "models";
    const LabeledDataset ds = load_dataset(cfg.manifest);
    const SplitResult splits = read_split_file(ds, models_dir / "split.json");
    const LoadedModels models = load_models(models_dir);

    const LabeledDataset& targets = splits.test;
    const LabeledDataset& estimate = splits.estimate;
    const FusionConfig fcfg = cfg.fusion_config();

    const VisualIndex vindex = VisualIndex::build(estimate);
    const ProfileTable ptable = ProfileTable::build(estimate, models.base);
    const PredictionCache cache = PredictionCache::build(estimate, models.base);

    std::optional<BaselineKind> baseline;
    if (!cfg.baseline.empty()) baseline = parse_baseline(cfg.baseline);
    std::optional<AblationVariant> variant;
    if (!cfg.variant.empty() && !baseline) variant = parse_ablation(cfg.variant);

    // Baseline artifacts are loaded on demand.
    std::optional<PolicySet> policies;
    std::optional<StackedModel> stacked;
    std::optional<ClusterEnsemble> cluster;
    std::optional<ConcatModel> concat;
    if (baseline == BaselineKind::PolicySelect)
        policies = load_policies(models_dir / "policy.json");
    if (baseline == BaselineKind::StackedEnsemble)
        stacked = load_stacked(models_dir / "stacked.json");
    if (baseline == BaselineKind::ClusterEnsemble)
        cluster = load_cluster_ensemble(models_dir / "cluster.json");
    if (baseline == BaselineKind::ConcatLinear)
        concat = load_concat(models_dir / "concat.json");

    std::vector<std::string> lines(targets.size());
    parallel_for(targets.size(), [&](std::size_t i) {
        const FeatureRecord& target = targets.records[i];
        const AgreementResult agreement =
            base_agreement(models.base, target, cfg.posterior_tie_label);
        if (baseline) {
            PrivacyLabel label = PrivacyLabel::Public;
            switch (*baseline) {
                case BaselineKind::SingleObject:
                    label = agreement.labels[0];
                    break;
                case BaselineKind::SingleScene:
                    label = agreement.labels[1];
                    break;
                case BaselineKind::SingleTag:
                    label = agreement.labels[2];
                    break;
                case BaselineKind::MajorityVote:
                    label = majority_vote_predict(models.base, target, cfg.posterior_tie_label);
                    break;
                case BaselineKind::DecisionFusionAvg:
                    label = decision_fusion_predict(models.base, target, FusionRule::Average,
                                                    cfg.posterior_tie_label);
                    break;
                case BaselineKind::DecisionFusionMax:
                    label = decision_fusion_predict(models.base, target, FusionRule::MaxConfidence,
                                                    cfg.posterior_tie_label);
                    break;
                case BaselineKind::PolicySelect:
                    label = policy_select_predict(*policies, models.base, target,
                                                  cfg.posterior_tie_label)
                                .label;
                    break;
                case BaselineKind::StackedEnsemble:
                    label = stacked_predict(*stacked, models.base, target,
                                            cfg.posterior_tie_label);
                    break;
                case BaselineKind::ClusterEnsemble:
                    label = cluster_predict(*cluster, target, cfg.posterior_tie_label);
                    break;
                case BaselineKind::ConcatLinear:
                    label = concat_predict(*concat, target, cfg.posterior_tie_label);
                    break;
            }
            json j;
            j["id"] = target.id;
            j["label"] = to_string(label);
            j["baseline"] = to_string(*baseline);
            if (*baseline == BaselineKind::ConcatLinear)
                j["note"] = "linear approximation over concatenated features";
            json base_preds;
            for (std::size_t m = 0; m < kNumModalities; ++m)
                base_preds[std::string(to_string(kAllModalities[m]))] =
                    to_string(agreement.labels[m]);
            j["base"] = base_preds;
            lines[i] = j.dump();
            return;
        }
        FusionDecision decision;
        if (variant) {
            decision = ablation_predict(*variant, target, estimate, models.base,
                                        is_counting_variant(*variant) ? nullptr
                                                                      : &models.competence,
                                        fcfg, &vindex, &ptable, &cache);
        } else {
            decision = dmfp_predict(target, estimate, models.base, models.competence, fcfg,
                                    &vindex, &ptable, &cache);
        }
        lines[i] = decision_to_json(target.id, decision, agreement);
    });

    const auto pred_dir = run_dir / "predictions";
    std::filesystem::create_directories(pred_dir);
    const auto pred_file = pred_dir / (artifact_stem(cfg) + ".jsonl");
    std::ofstream pout(pred_file);
    if (!pout) throw Error("cannot write " + pred_file.string());
    for (const auto& line : lines) pout << line << "\n";
    out << "wrote " << lines.size() << " decisions to " << pred_file.string() << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    (void)err;
    const auto run_dir = run_directory(cfg);
    const LabeledDataset ds = load_dataset(cfg.manifest);

    const auto pred_file = run_dir / "predictions" / (artifact_stem(cfg) + ".jsonl");
    std::ifstream in(pred_file);
    if (!in) throw Error("missing predictions file: " + pred_file.string() +
                         " (run predict first)");

    std::vector<PrivacyLabel> preds, golds;
    std::array<std::vector<PrivacyLabel>, kNumModalities> base_preds;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        const std::string id = j.at("id").get<std::string>();
        const FeatureRecord& rec = ds.records[ds.index_of_id(id)];
        if (!rec.label) throw Error("record '" + id + "' has no gold label");
        preds.push_back(parse_privacy_label(j.at("label").get<std::string>()));
        golds.push_back(*rec.label);
        for (std::size_t m = 0; m < kNumModalities; ++m)
            base_preds[m].push_back(parse_privacy_label(
                j.at("base").at(std::string(to_string(kAllModalities[m]))).get<std::string>()));
    }
    if (preds.empty()) throw Error("predictions file is empty: " + pred_file.string());

    EvalReport report = confusion_metrics(preds, golds);
    report.seed = cfg.split.seed;
    report.config_hash = cfg.hash();
    const ExploratoryTable exploratory = exploratory_analysis(base_preds, golds);
    const ErrorCorrectionTable corrections = error_correction(base_preds, preds, golds);

    const auto reports_dir = run_dir / "reports";
    std::filesystem::create_directories(reports_dir);
    const std::string stem = artifact_stem(cfg);
    std::string header = "config " + hash_hex(cfg.hash()) + "\n";
    if (cfg.baseline == "concat")
        header += "note: concat is a calibrated linear approximation over concatenated "
                  "features\n";
    auto write_file = [&](const std::string& name, const std::string& content) {
        std::ofstream f(reports_dir / name);
        if (!f) throw Error("cannot write " + (reports_dir / name).string());
        f << content;
    };
    write_file(stem + "_metrics.json", report.to_json() + "\n");
    write_file(stem + "_metrics.txt", header + report.to_text());
    write_file(stem + "_exploratory.json", exploratory.to_json() + "\n");
    write_file(stem + "_exploratory.txt", header + exploratory.to_text());
    write_file(stem + "_corrections.json", corrections.to_json() + "\n");
    write_file(stem + "_corrections.txt", header + corrections.to_text());

    out << report.to_text();
    out << "reports written to " << reports_dir.string() << " (stem " << stem << ")\n";
    return 0;
}

int cmd_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    (void)err;
    if (cfg.sweep.kv_grid.empty() || cfg.sweep.kp_grid.empty())
        throw ConfigError("sweep needs non-empty kv_grid and kp_grid",
                          {"sweep.kv_grid", "sweep.kp_grid"});
    const LabeledDataset ds = load_dataset(cfg.manifest);
    const SplitResult splits = split_dataset(ds, cfg.split);
    const std::vector<CalibratedClassifier> base = train_base(splits.train, cfg.train);

    CompetenceOptions opts = cfg.competence;
    opts.variant = variant_for_config(cfg);
    const SweepResult result =
        sweep(splits.estimate, base, cfg.sweep, cfg.train, cfg.fusion_config(), opts);

    const auto run_dir = run_directory(cfg);
    const auto reports_dir = run_dir / "reports";
    std::filesystem::create_directories(reports_dir);
    echo_config(cfg, run_dir);
    const auto csv_file = reports_dir / ("sweep-" + hash_hex(cfg.hash(), 8) + ".csv");
    std::ofstream csv(csv_file);
    if (!csv) throw Error("cannot write " + csv_file.string());
    csv << result.to_csv();

    out << result.to_csv();
    out << "best cell: k_v = " << result.best_kv << ", k_p = " << result.best_kp
        << ", private F1 = " << fmt_compact(result.best_f1) << "\n";
    out << "grid written to " << csv_file.string() << "\n";
    return 0;
}

int cmd_reproduce_figure3(std::ostream& out, std::ostream& err) {
    (void)err;
    // Hand-built worked example: seven visual neighbors, five privacy
    // neighbors, per-modality correctness patterns, injected competence
    // scores, and the weighted vote they produce.
    const std::vector<std::vector<double>> phi1_bits = {
        {1, 1, 0, 1, 0, 1, 1},  // object
        {1, 0, 1, 1, 1, 1, 1},  // scene
        {0, 0, 0, 1, 0, 1, 1},  // tag
    };
    const std::vector<std::vector<double>> phi2_bits = {
        {1, 1, 1, 1, 1},
        {0, 0, 0, 0, 0},
        {1, 1, 1, 1, 1},
    };
    const std::array<double, 3> target_private = {0.67, 0.42, 0.99};
    const std::array<double, 3> competence_scores = {0.97, 0.08, 0.99};

    // One record per neighbor; each modality block is 1-D and its sign
    // encodes whether that modality gets the (private) neighbor right.
    std::vector<FeatureRecord> records;
    const std::size_t k_v = 7, k_p = 5;
    for (std::size_t j = 0; j < k_v + k_p; ++j) {
        FeatureRecord rec;
        rec.id = (j < k_v ? "v" : "p") + std::to_string(j < k_v ? j : j - k_v);
        rec.label = PrivacyLabel::Private;
        const bool in_visual = j < k_v;
        const std::size_t pos = in_visual ? j : j - k_v;
        for (std::size_t m = 0; m < kNumModalities; ++m) {
            const double bit = in_visual ? phi1_bits[m][pos] : phi2_bits[m][pos];
            rec.block(kAllModalities[m]) = {bit > 0.5 ? 1.0 : -1.0};
        }
        records.push_back(std::move(rec));
    }
    const LabeledDataset estimate = make_dataset(std::move(records), {1, 1, 1});

    std::vector<CalibratedClassifier> base(kNumModalities);
    for (std::size_t m = 0; m < kNumModalities; ++m) {
        LinearModel model;
        model.weights = {1.0};
        base[m].modality = kAllModalities[m];
        base[m].folds = {FoldModel{model, PlattSigmoid{-1.0, 0.0}}};
    }

    FeatureRecord target;
    target.id = "target";
    for (std::size_t m = 0; m < kNumModalities; ++m)
        target.block(kAllModalities[m]) = {logit(target_private[m])};

    Neighborhood nv{NeighborhoodKind::Visual, k_v, {}, {}};
    Neighborhood np{NeighborhoodKind::Privacy, k_p, {}, {}};
    for (std::size_t j = 0; j < k_v; ++j) {
        nv.member_ids.push_back("v" + std::to_string(j));
        nv.similarities.push_back(1.0 - 0.01 * static_cast<double>(j));
    }
    for (std::size_t j = 0; j < k_p; ++j) {
        np.member_ids.push_back("p" + std::to_string(j));
        np.similarities.push_back(1.0 - 0.01 * static_cast<double>(j));
    }

    static const char* names[3] = {"phi^o", "phi^s", "phi^t"};
    out << "Target: base predictions object: private, scene: public, tag: private\n";
    for (std::size_t m = 0; m < kNumModalities; ++m) {
        const CompetenceVector phi = competence_features(target, nv, np, base[m], estimate);
        out << names[m] << " = [";
        for (std::size_t j = 0; j < phi.phi1.size(); ++j)
            out << (j ? " " : "") << fmt_compact(phi.phi1[j]);
        out << " | ";
        for (std::size_t j = 0; j < phi.phi2.size(); ++j)
            out << (j ? " " : "") << fmt_compact(phi.phi2[j]);
        out << " | " << std::fixed << std::setprecision(2) << *phi.phi3 << "]\n";
        out.unsetf(std::ios::fixed);
    }
    out << "Competence scores: CS_o = " << fmt_compact(competence_scores[0])
        << ", CS_s = " << fmt_compact(competence_scores[1])
        << ", CS_t = " << fmt_compact(competence_scores[2]) << " (gate > 0.5)\n";

    FusionConfig fcfg;
    fcfg.ncfg.k_v = k_v;
    fcfg.ncfg.k_p = k_p;
    const FusionDecision decision = dmfp_predict_scored(
        target, estimate, base,
        [&](const CompetenceVector& phi) { return competence_scores[index_of(phi.modality)]; },
        fcfg);

    out << "Selected:";
    for (const auto& vote : decision.selected) out << " " << to_string(vote.modality);
    out << "\n";
    out << "Private: " << fmt_compact(decision.tally_private)
        << ", Public: " << fmt_compact(decision.tally_public) << " → "
        << (decision.label == PrivacyLabel::Private ? "Private" : "Public") << "\n";
    return 0;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        if (args.empty())
            throw Error("usage: dmfp <generate|train|predict|evaluate|sweep|reproduce-figure3> "
                        "[--config FILE] [--seed N] [--out DIR] [--variant V] [--baseline B]");
        const std::string command = args[0];
        if (command == "reproduce-figure3") return cmd_reproduce_figure3(out, err);

        std::optional<std::filesystem::path> config_path;
        std::optional<long> seed;
        std::optional<std::string> out_dir, variant, baseline;
        for (std::size_t i = 1; i < args.size(); ++i) {
            auto need_value = [&](const std::string& flag) -> const std::string& {
                if (i + 1 >= args.size()) throw Error("flag " + flag + " needs a value");
                return args[++i];
            };
            if (args[i] == "--config") config_path = need_value("--config");
            else if (args[i] == "--seed") seed = parse_int(need_value("--seed"), "--seed");
            else if (args[i] == "--out") out_dir = need_value("--out");
            else if (args[i] == "--variant") variant = to_lower(need_value("--variant"));
            else if (args[i] == "--baseline") baseline = to_lower(need_value("--baseline"));
            else throw Error("unknown flag: " + args[i]);
        }

        RunConfig cfg = config_path ? parse_run_config(*config_path) : RunConfig{};
        if (seed) {
            cfg.split.seed = *seed;
            cfg.train.seed = *seed;
            cfg.synth.seed = *seed;
            cfg.sweep.seed = *seed;
        }
        if (out_dir) cfg.out_dir = *out_dir;
        if (variant) cfg.variant = *variant;
        if (baseline) cfg.baseline = *baseline;

        if (command == "generate") return cmd_generate(cfg, out, err);
        if (command == "train") return cmd_train(cfg, out, err);
        if (command == "predict") return cmd_predict(cfg, out, err);
        if (command == "evaluate") return cmd_evaluate(cfg, out, err);
        if (command == "sweep") return cmd_sweep(cfg, out, err);
        throw Error("unknown command: " + command);
    } catch (const ConfigError& e) {
        json j;
        j["error"] = e.what();
        j["keys"] = e.keys;
        err << j.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        json j;
        j["error"] = e.what();
        err << j.dump() << "\n";
        return 1;
    }
}

}  // namespace dmfp
