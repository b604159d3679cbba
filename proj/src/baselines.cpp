#include "dmfp/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dmfp/dataset.hpp"

namespace dmfp {

std::string_view to_string(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::SingleObject: return "single_object";
        case BaselineKind::SingleScene: return "single_scene";
        case BaselineKind::SingleTag: return "single_tag";
        case BaselineKind::MajorityVote: return "majority_vote";
        case BaselineKind::DecisionFusionAvg: return "decision_fusion_avg";
        case BaselineKind::DecisionFusionMax: return "decision_fusion_max";
        case BaselineKind::PolicySelect: return "policy_select";
        case BaselineKind::StackedEnsemble: return "stacked";
        case BaselineKind::ClusterEnsemble: return "cluster";
        case BaselineKind::ConcatLinear: return "concat";
    }
    return "majority_vote";
}

BaselineKind parse_baseline(std::string_view text) {
    const std::string lower = to_lower(trim(text));
    for (BaselineKind k :
         {BaselineKind::SingleObject, BaselineKind::SingleScene, BaselineKind::SingleTag,
          BaselineKind::MajorityVote, BaselineKind::DecisionFusionAvg,
          BaselineKind::DecisionFusionMax, BaselineKind::PolicySelect,
          BaselineKind::StackedEnsemble, BaselineKind::ClusterEnsemble,
          BaselineKind::ConcatLinear})
        if (lower == to_string(k)) return k;
    throw Error("unknown baseline: '" + std::string(text) + "'");
}

PrivacyLabel majority_vote_predict(const std::vector<CalibratedClassifier>& base,
                                   const FeatureRecord& target, PrivacyLabel tie_label) {
    int private_votes = 0;
    for (const auto& clf : base)
        if (predict_proba(clf, target.block(clf.modality)).argmax(tie_label) ==
            PrivacyLabel::Private)
            ++private_votes;
    return 2 * private_votes > static_cast<int>(base.size()) ? PrivacyLabel::Private
                                                             : PrivacyLabel::Public;
}

PrivacyLabel decision_fusion_predict(const std::vector<CalibratedClassifier>& base,
                                     const FeatureRecord& target, FusionRule rule,
                                     PrivacyLabel tie_label) {
    if (base.empty()) throw Error("decision_fusion_predict: no base classifiers");
    if (rule == FusionRule::Average) {
        double p = 0.0;
        for (const auto& clf : base)
            p += predict_proba(clf, target.block(clf.modality)).p_private;
        p /= static_cast<double>(base.size());
        return ProbabilityPair{p, 1.0 - p}.argmax(tie_label);
    }
    // MaxConfidence: the most confident classifier decides.
    ProbabilityPair best;
    double best_conf = -1.0;
    for (const auto& clf : base) {
        ProbabilityPair p = predict_proba(clf, target.block(clf.modality));
        if (p.max_posterior() > best_conf) {
            best_conf = p.max_posterior();
            best = p;
        }
    }
    return best.argmax(tie_label);
}

PolicySet train_policy_select(const LabeledDataset& estimate_set,
                              const std::vector<CalibratedClassifier>& base,
                              const TrainConfig& tcfg) {
    if (!estimate_set.fully_labeled())
        throw Error("train_policy_select: estimation set must be fully labeled");
    if (estimate_set.size() == 0) throw Error("train_policy_select: empty estimation set");
    const PredictionCache cache = PredictionCache::build(estimate_set, base);

    const std::size_t n = estimate_set.size();
    std::vector<std::vector<double>> profiles(n);
    for (std::size_t i = 0; i < n; ++i) {
        profiles[i].resize(2 * kNumModalities);
        for (std::size_t m = 0; m < kNumModalities; ++m) {
            const ProbabilityPair& p = cache.at(kAllModalities[m], i);
            profiles[i][2 * m] = p.p_private;
            profiles[i][2 * m + 1] = p.p_public;
        }
    }

    PolicySet set;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
        std::vector<int> labels(n);
        std::size_t ones = 0;
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = cache.at(kAllModalities[m], i).argmax() ==
                                *estimate_set.records[i].label
                            ? 1
                            : 0;
            ones += static_cast<std::size_t>(labels[i]);
        }
        if (ones == 0 || ones == n) {
            const double rate = clamp01_open(static_cast<double>(ones) / static_cast<double>(n));
            LinearModel constant;
            constant.loss = LossKind::Logistic;
            constant.weights.assign(2 * kNumModalities, 0.0);
            constant.bias = logit(rate);
            set.policies[m] = std::move(constant);
            set.warnings.push_back("policy labels for modality '" +
                                   std::string(to_string(kAllModalities[m])) +
                                   "' are constant; using a constant policy");
        } else {
            TrainConfig mcfg = tcfg;
            mcfg.seed = tcfg.seed + static_cast<long>(m);
            set.policies[m] = train_logistic(profiles, labels, mcfg);
        }
    }
    return set;
}

FusionDecision policy_select_predict(const PolicySet& policies,
                                     const std::vector<CalibratedClassifier>& base,
                                     const FeatureRecord& target, PrivacyLabel tie_label) {
    const AgreementResult agreement = base_agreement(base, target, tie_label);
    std::vector<double> profile(2 * kNumModalities);
    for (std::size_t m = 0; m < kNumModalities; ++m) {
        profile[2 * m] = agreement.posteriors[m].p_private;
        profile[2 * m + 1] = agreement.posteriors[m].p_public;
    }

    FusionDecision decision;
    std::vector<WeightedVote> votes;
    for (std::size_t m = 0; m < kNumModalities; ++m) {
        const double p = predict_logistic(policies.policies[m], profile);
        if (p > 0.5) {
            votes.push_back({agreement.labels[m], 1.0, agreement.posteriors[m]});
            decision.selected.push_back(SelectedVote{kAllModalities[m], p, agreement.labels[m],
                                                     agreement.posteriors[m]});
        }
    }
    bool fell_back = false;
    if (votes.empty()) {
        // No policy fired: plain majority vote over all three.
        fell_back = true;
        for (std::size_t m = 0; m < kNumModalities; ++m) {
            votes.push_back({agreement.labels[m], 1.0, agreement.posteriors[m]});
            decision.selected.push_back(SelectedVote{kAllModalities[m], std::nullopt,
                                                     agreement.labels[m],
                                                     agreement.posteriors[m]});
        }
    }
    const VoteOutcome outcome = weighted_majority_vote(votes);
    decision.label = outcome.label;
    decision.path = fell_back ? DecisionPath::Fallback : outcome.path;
    decision.tally_private = outcome.tally_private;
    decision.tally_public = outcome.tally_public;
    return decision;
}

StackedModel train_stacked(const LabeledDataset& train_set,
                           const std::vector<CalibratedClassifier>& base,
                           const TrainConfig& tcfg, bool out_of_fold) {
    if (!train_set.fully_labeled())
        throw Error("train_stacked: training set must be fully labeled");
    const std::size_t n = train_set.size();
    if (n == 0) throw Error("train_stacked: empty training set");

    std::vector<std::vector<double>> encoded(n);
    std::vector<PrivacyLabel> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = *train_set.records[i].label;

    if (!out_of_fold) {
        const PredictionCache cache = PredictionCache::build(train_set, base);
        for (std::size_t i = 0; i < n; ++i) {
            encoded[i].resize(2 * kNumModalities);
            for (std::size_t m = 0; m < kNumModalities; ++m) {
                const ProbabilityPair& p = cache.at(kAllModalities[m], i);
                encoded[i][2 * m] = p.p_private;
                encoded[i][2 * m + 1] = p.p_public;
            }
        }
    } else {
        // Honest stacking: each fold is encoded by classifiers trained on
        // the remaining folds.
        auto folds = stratified_folds(labels, tcfg.folds, tcfg.seed);
        for (std::size_t f = 0; f < folds.size(); ++f) {
            std::vector<char> held(n, 0);
            for (std::size_t i : folds[f]) held[i] = 1;
            std::vector<std::size_t> rest;
            for (std::size_t i = 0; i < n; ++i)
                if (!held[i]) rest.push_back(i);

            std::vector<CalibratedClassifier> fold_base;
            for (std::size_t m = 0; m < kNumModalities; ++m) {
                std::vector<std::vector<double>> rows;
                std::vector<PrivacyLabel> fold_labels;
                rows.reserve(rest.size());
                for (std::size_t i : rest) {
                    rows.push_back(train_set.records[i].block(kAllModalities[m]));
                    fold_labels.push_back(labels[i]);
                }
                TrainConfig fcfg = tcfg;
                fcfg.seed = tcfg.seed + static_cast<long>(f * kNumModalities + m) + 17;
                fold_base.push_back(train_calibrated(rows, fold_labels, fcfg, kAllModalities[m]));
            }
            for (std::size_t i : folds[f]) {
                PrivacyProfile profile = privacy_profile(train_set.records[i], fold_base);
                encoded[i].assign(profile.values.begin(), profile.values.end());
            }
        }
    }

    StackedModel meta;
    meta.out_of_fold = out_of_fold;
    meta.folds = train_calibrated_folds(encoded, labels, tcfg);
    return meta;
}

PrivacyLabel stacked_predict(const StackedModel& meta,
                             const std::vector<CalibratedClassifier>& base,
                             const FeatureRecord& target, PrivacyLabel tie_label) {
    PrivacyProfile profile = privacy_profile(target, base);
    std::vector<double> encoded(profile.values.begin(), profile.values.end());
    return predict_proba_folds(meta.folds, encoded).argmax(tie_label);
}

ConcatModel train_concat(const LabeledDataset& train_set, const TrainConfig& tcfg) {
    if (!train_set.fully_labeled())
        throw Error("train_concat: training set must be fully labeled");
    std::vector<std::vector<double>> rows;
    std::vector<PrivacyLabel> labels;
    rows.reserve(train_set.size());
    for (const auto& rec : train_set.records) {
        rows.push_back(concat_modalities(rec));
        labels.push_back(*rec.label);
    }
    ConcatModel model;
    model.folds = train_calibrated_folds(rows, labels, tcfg);
    return model;
}

PrivacyLabel concat_predict(const ConcatModel& model, const FeatureRecord& target,
                            PrivacyLabel tie_label) {
    return predict_proba_folds(model.folds, concat_modalities(target)).argmax(tie_label);
}

namespace {

double lance_williams(Linkage linkage, double d_ik, double d_jk, double d_ij, double n_i,
                      double n_j, double n_k) {
    switch (linkage) {
        case Linkage::Ward:
            return ((n_i + n_k) * d_ik + (n_j + n_k) * d_jk - n_k * d_ij) / (n_i + n_j + n_k);
        case Linkage::Single: return std::min(d_ik, d_jk);
        case Linkage::Complete: return std::max(d_ik, d_jk);
        case Linkage::Average: return (n_i * d_ik + n_j * d_jk) / (n_i + n_j);
    }
    return d_ik;
}

struct Merge {
    std::size_t a, b;
    double height;
    std::size_t order;
};

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

}  // namespace

std::vector<int> agglomerative_cluster(const std::vector<std::vector<double>>& dist,
                                       std::size_t n_clusters, Linkage linkage) {
    const std::size_t n = dist.size();
    if (n == 0) throw Error("agglomerative_cluster: empty input");
    if (n_clusters < 1 || n_clusters > n)
        throw Error("agglomerative_cluster: cluster count out of range");
    for (const auto& row : dist)
        if (row.size() != n) throw Error("agglomerative_cluster: distance matrix not square");

    // Nearest-neighbor chain over a mutable copy of the distance matrix.
    std::vector<std::vector<double>> d = dist;
    std::vector<double> size(n, 1.0);
    std::vector<char> active(n, 1);
    std::vector<Merge> merges;
    merges.reserve(n - 1);

    std::vector<std::size_t> chain;
    chain.reserve(n);
    std::size_t remaining = n;
    while (remaining > 1) {
        if (chain.empty()) {
            for (std::size_t i = 0; i < n; ++i)
                if (active[i]) {
                    chain.push_back(i);
                    break;
                }
        }
        while (true) {
            const std::size_t top = chain.back();
            std::size_t nearest = top;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j) {
                if (!active[j] || j == top) continue;
                if (d[top][j] < best || (d[top][j] == best && j < nearest)) {
                    best = d[top][j];
                    nearest = j;
                }
            }
            if (chain.size() >= 2 && nearest == chain[chain.size() - 2]) {
                // Mutual nearest neighbors: merge nearest into top.
                std::size_t a = chain[chain.size() - 2];
                std::size_t b = top;
                chain.pop_back();
                chain.pop_back();
                if (b < a) std::swap(a, b);
                merges.push_back({a, b, d[a][b], merges.size()});
                for (std::size_t k = 0; k < n; ++k) {
                    if (!active[k] || k == a || k == b) continue;
                    d[a][k] = d[k][a] = lance_williams(linkage, d[a][k], d[b][k], d[a][b],
                                                       size[a], size[b], size[k]);
                }
                size[a] += size[b];
                active[b] = 0;
                --remaining;
                break;
            }
            chain.push_back(nearest);
        }
    }

    // Cut: replay the n - n_clusters cheapest merges.
    std::sort(merges.begin(), merges.end(), [](const Merge& x, const Merge& y) {
        if (x.height != y.height) return x.height < y.height;
        return x.order < y.order;
    });
    UnionFind uf(n);
    for (std::size_t i = 0; i + n_clusters < n; ++i) uf.unite(merges[i].a, merges[i].b);

    std::vector<int> labels(n, -1);
    int next = 0;
    std::vector<int> root_label(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t root = uf.find(i);
        if (root_label[root] < 0) root_label[root] = next++;
        labels[i] = root_label[root];
    }
    return labels;
}

ClusterEnsemble train_cluster_ensemble(const LabeledDataset& train_set,
                                       const ClusterEnsembleConfig& ccfg,
                                       const TrainConfig& tcfg) {
    if (!train_set.fully_labeled())
        throw Error("train_cluster_ensemble: training set must be fully labeled");
    const std::size_t n = train_set.size();
    if (n < ccfg.n_clusters)
        throw Error("train_cluster_ensemble: fewer records than clusters");

    ClusterEnsemble ens;
    ens.cfg = ccfg;
    ens.index = VisualIndex::build(train_set);

    // Squared Euclidean distances feed the Ward update; the other linkages
    // take them monotonically, which leaves their merge order unchanged.
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double sq = 0.0;
            const auto& a = ens.index.rows[i];
            const auto& b = ens.index.rows[j];
            for (std::size_t c = 0; c < a.size(); ++c) {
                const double diff = a[c] - b[c];
                sq += diff * diff;
            }
            dist[i][j] = sq;
        }
    });
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) dist[i][j] = dist[j][i];

    ens.assignment = agglomerative_cluster(dist, ccfg.n_clusters, ccfg.linkage);

    ens.models.resize(ccfg.n_clusters);
    std::size_t usable = 0;
    for (std::size_t c = 0; c < ccfg.n_clusters; ++c) {
        std::vector<std::vector<double>> rows;
        std::vector<PrivacyLabel> labels;
        std::size_t n_private = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (ens.assignment[i] != static_cast<int>(c)) continue;
            rows.push_back(ens.index.rows[i]);
            labels.push_back(*train_set.records[i].label);
            if (labels.back() == PrivacyLabel::Private) ++n_private;
        }
        const std::size_t n_public = labels.size() - n_private;
        if (n_private < static_cast<std::size_t>(tcfg.folds) ||
            n_public < static_cast<std::size_t>(tcfg.folds)) {
            const double rate = (static_cast<double>(n_private) + 1.0) /
                                (static_cast<double>(labels.size()) + 2.0);
            ens.models[c].constant = ProbabilityPair{rate, 1.0 - rate};
            ens.warnings.push_back("cluster " + std::to_string(c) +
                                   " lacks class coverage; using a constant predictor");
        } else {
            TrainConfig mcfg = tcfg;
            mcfg.seed = tcfg.seed + static_cast<long>(c) + 101;
            ens.models[c].folds = train_calibrated_folds(rows, labels, mcfg);
            ++usable;
        }
    }
    if (usable == 0)
        throw Error("train_cluster_ensemble: every cluster is single-class or too small");
    return ens;
}

PrivacyLabel cluster_predict(const ClusterEnsemble& ens, const FeatureRecord& target,
                             PrivacyLabel tie_label) {
    const std::vector<double> q = concat_modalities(target);
    const std::size_t n = ens.index.rows.size();
    if (q.size() != ens.index.rows[0].size())
        throw Error("cluster_predict: dimension mismatch");

    struct Scored {
        double sim;
        std::size_t idx;
    };
    std::vector<Scored> scored;
    scored.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sim;
        if (ens.cfg.metric == VisualMetric::Cosine) {
            sim = cosine_similarity(q, ens.index.rows[i]);
        } else {
            double sq = 0.0;
            for (std::size_t c = 0; c < q.size(); ++c) {
                const double diff = q[c] - ens.index.rows[i][c];
                sq += diff * diff;
            }
            sim = -std::sqrt(sq);
        }
        scored.push_back({sim, i});
    }
    const std::size_t take = std::min(ens.cfg.knn, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                      scored.end(), [&](const Scored& a, const Scored& b) {
                          if (a.sim != b.sim) return a.sim > b.sim;
                          return ens.index.ids[a.idx] < ens.index.ids[b.idx];
                      });

    std::vector<int> votes(ens.models.size(), 0);
    for (std::size_t i = 0; i < take; ++i) votes[ens.assignment[scored[i].idx]]++;
    std::size_t winner = 0;
    for (std::size_t c = 1; c < votes.size(); ++c)
        if (votes[c] > votes[winner]) winner = c;

    const ClusterModel& model = ens.models[winner];
    const ProbabilityPair p =
        model.folds.empty() ? model.constant : predict_proba_folds(model.folds, q);
    return p.argmax(tie_label);
}

}  // namespace dmfp
