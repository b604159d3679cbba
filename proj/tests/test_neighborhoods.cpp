#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dmfp/dataset.hpp"
#include "dmfp/neighborhoods.hpp"
#include "helpers.hpp"

using namespace dmfp;
using dmfp::testing::constant_classifier;
using dmfp::testing::record_1d;

namespace {

// Independent oracle: cosine from scratch plus a full stable ranking by
// (similarity desc, id asc).
double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<std::string> oracle_rank(const std::vector<std::vector<double>>& rows,
                                     const std::vector<std::string>& ids,
                                     const std::vector<double>& query, std::size_t k,
                                     const std::string& exclude_id, bool euclidean) {
    std::vector<std::pair<double, std::string>> scored;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (ids[i] == exclude_id) continue;
        double sim;
        if (euclidean) {
            double sq = 0;
            for (std::size_t j = 0; j < query.size(); ++j) {
                const double d = query[j] - rows[i][j];
                sq += d * d;
            }
            sim = -std::sqrt(sq);
        } else {
            sim = oracle_cosine(query, rows[i]);
        }
        scored.emplace_back(sim, ids[i]);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(scored[i].second);
    return out;
}

LabeledDataset random_dataset(std::size_t n, std::size_t dim_each, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<FeatureRecord> records;
    for (std::size_t i = 0; i < n; ++i) {
        FeatureRecord rec;
        rec.id = "n" + std::to_string(1000 + i);
        rec.label = i % 2 == 0 ? PrivacyLabel::Private : PrivacyLabel::Public;
        for (ModalityId m : kAllModalities) {
            rec.block(m).resize(dim_each);
            for (double& v : rec.block(m)) v = g(rng);
        }
        records.push_back(std::move(rec));
    }
    return make_dataset(std::move(records), {dim_each, dim_each, dim_each});
}

}  // namespace

TEST_CASE("cosine_similarity fixtures") {
    CHECK(cosine_similarity(std::vector<double>{2, 3, 4}, std::vector<double>{2, 3, 4}) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
    // Direct evaluation of dot/norms for [1,2,3]·[4,5,6].
    CHECK(cosine_similarity(std::vector<double>{1, 2, 3}, std::vector<double>{4, 5, 6}) ==
          doctest::Approx(0.974631846).epsilon(1e-9));
    CHECK(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 1}) == 0.0);
    CHECK_THROWS_AS(cosine_similarity(std::vector<double>{1}, std::vector<double>{1, 2}), Error);

    // Symmetry and positive scale invariance.
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> unit(-2.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> a(5), b(5);
        for (double& v : a) v = unit(rng);
        for (double& v : b) v = unit(rng);
        const double ab = cosine_similarity(a, b);
        CHECK(cosine_similarity(b, a) == doctest::Approx(ab).epsilon(1e-12));
        std::vector<double> scaled(a);
        for (double& v : scaled) v *= 7.5;
        CHECK(cosine_similarity(scaled, b) == doctest::Approx(ab).epsilon(1e-9));
    }
}

TEST_CASE("privacy_profile layout matches the worked example") {
    const std::vector<CalibratedClassifier> base = {
        constant_classifier(ModalityId::Object, 0.62),
        constant_classifier(ModalityId::Scene, 0.50),
        constant_classifier(ModalityId::Tag, 0.29)};
    const FeatureRecord rec = record_1d("t", 0, 0, 0);
    const PrivacyProfile profile = privacy_profile(rec, base);
    const std::array<double, 6> expected = {0.62, 0.38, 0.5, 0.5, 0.29, 0.71};
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(profile.values[i] == doctest::Approx(expected[i]).epsilon(1e-9));

    SUBCASE("all-indifferent classifiers") {
        const std::vector<CalibratedClassifier> flat = {
            constant_classifier(ModalityId::Object, 0.5),
            constant_classifier(ModalityId::Scene, 0.5),
            constant_classifier(ModalityId::Tag, 0.5)};
        const PrivacyProfile p = privacy_profile(rec, flat);
        for (double v : p.values) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("adjacent pairs sum to one for random classifiers") {
        std::mt19937 rng(5);
        std::uniform_real_distribution<double> unit(0.01, 0.99);
        for (int trial = 0; trial < 50; ++trial) {
            const std::vector<CalibratedClassifier> random_base = {
                constant_classifier(ModalityId::Object, unit(rng)),
                constant_classifier(ModalityId::Scene, unit(rng)),
                constant_classifier(ModalityId::Tag, unit(rng))};
            const PrivacyProfile p = privacy_profile(rec, random_base);
            for (std::size_t m = 0; m < 3; ++m)
                CHECK(p.values[2 * m] + p.values[2 * m + 1] ==
                      doctest::Approx(1.0).epsilon(1e-9));
        }
    }
    SUBCASE("misordered base classifiers are rejected") {
        const std::vector<CalibratedClassifier> shuffled = {
            constant_classifier(ModalityId::Scene, 0.5),
            constant_classifier(ModalityId::Object, 0.5),
            constant_classifier(ModalityId::Tag, 0.5)};
        CHECK_THROWS_AS(privacy_profile(rec, shuffled), Error);
    }
}

TEST_CASE("visual_neighbors basics") {
    const LabeledDataset reference = random_dataset(3, 4, 11);
    NeighborhoodConfig cfg;
    cfg.k_v = 7;

    FeatureRecord query;
    query.id = "query";
    for (ModalityId m : kAllModalities) query.block(m) = reference.records[1].block(m);

    SUBCASE("k larger than the reference clamps") {
        const Neighborhood nb = visual_neighbors(query, reference, cfg);
        CHECK(nb.size() == 3);
        CHECK(nb.requested_k == 7);
    }
    SUBCASE("identical record ranks first with similarity 1") {
        const Neighborhood nb = visual_neighbors(query, reference, cfg);
        CHECK(nb.member_ids[0] == reference.records[1].id);
        CHECK(nb.similarities[0] == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("query id excluded when part of the reference") {
        FeatureRecord self = reference.records[1];
        const Neighborhood nb = visual_neighbors(self, reference, cfg);
        CHECK(nb.size() == 2);
        for (const auto& id : nb.member_ids) CHECK(id != self.id);
    }
    SUBCASE("include_self keeps the query") {
        FeatureRecord self = reference.records[1];
        NeighborhoodConfig keep = cfg;
        keep.include_self = true;
        const Neighborhood nb = visual_neighbors(self, reference, keep);
        CHECK(nb.size() == 3);
    }
    SUBCASE("empty reference errors") {
        const LabeledDataset empty = make_dataset({}, {4, 4, 4});
        CHECK_THROWS_AS(visual_neighbors(query, empty, cfg), Error);
    }
}

TEST_CASE("visual and privacy neighborhoods match the exhaustive oracle") {
    const LabeledDataset reference = random_dataset(200, 8, 23);
    const VisualIndex index = VisualIndex::build(reference);

    std::mt19937 rng(29);
    std::normal_distribution<double> g(0.0, 1.0);

    for (int metric_pass = 0; metric_pass < 2; ++metric_pass) {
        NeighborhoodConfig cfg;
        cfg.k_v = 15;
        cfg.visual_metric = metric_pass == 0 ? VisualMetric::Cosine : VisualMetric::Euclidean;
        for (int q = 0; q < 25; ++q) {
            FeatureRecord query;
            query.id = "q" + std::to_string(q);
            for (ModalityId m : kAllModalities) {
                query.block(m).resize(8);
                for (double& v : query.block(m)) v = g(rng);
            }
            const Neighborhood nb = visual_neighbors(query, index, cfg);
            const auto expected =
                oracle_rank(index.rows, index.ids, concat_modalities(query), cfg.k_v, "",
                            cfg.visual_metric == VisualMetric::Euclidean);
            CHECK(nb.member_ids == expected);
            for (std::size_t i = 1; i < nb.similarities.size(); ++i)
                CHECK(nb.similarities[i] <= nb.similarities[i - 1]);
        }
    }

    // Privacy side: random profiles, cosine oracle.
    ProfileTable table;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::vector<double>> profile_rows;
    for (int i = 0; i < 100; ++i) {
        PrivacyProfile p;
        for (std::size_t m = 0; m < 3; ++m) {
            const double v = unit(rng);
            p.values[2 * m] = v;
            p.values[2 * m + 1] = 1.0 - v;
        }
        table.profiles.push_back(p);
        table.ids.push_back("p" + std::to_string(100 + i));
        profile_rows.emplace_back(p.values.begin(), p.values.end());
    }
    NeighborhoodConfig cfg;
    cfg.k_p = 10;
    for (int q = 0; q < 20; ++q) {
        PrivacyProfile query;
        for (std::size_t m = 0; m < 3; ++m) {
            const double v = unit(rng);
            query.values[2 * m] = v;
            query.values[2 * m + 1] = 1.0 - v;
        }
        const Neighborhood nb = privacy_neighbors(query, table, cfg);
        const std::vector<double> qrow(query.values.begin(), query.values.end());
        CHECK(nb.member_ids == oracle_rank(profile_rows, table.ids, qrow, cfg.k_p, "", false));
    }
}

TEST_CASE("privacy_neighbors fixtures") {
    ProfileTable table;
    PrivacyProfile a;
    a.values = {1, 0, 1, 0, 1, 0};
    PrivacyProfile b;
    b.values = {0, 1, 0, 1, 0, 1};
    PrivacyProfile c;
    c.values = {0.9, 0.1, 0.8, 0.2, 0.9, 0.1};
    table.profiles = {a, b, c};
    table.ids = {"a", "b", "c"};

    NeighborhoodConfig cfg;
    cfg.k_p = 3;
    const Neighborhood nb = privacy_neighbors(a, table, cfg, "");
    CHECK(nb.member_ids[0] == "a");  // identical profile first
    CHECK(nb.similarities[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(nb.member_ids.back() == "b");  // orthogonal profile ranked last
    CHECK(nb.similarities.back() == doctest::Approx(0.0).epsilon(1e-12));

    SUBCASE("self exclusion by id") {
        const Neighborhood excl = privacy_neighbors(a, table, cfg, "a");
        CHECK(excl.size() == 2);
        CHECK(std::find(excl.member_ids.begin(), excl.member_ids.end(), "a") ==
              excl.member_ids.end());
    }
    SUBCASE("serializes to JSON with ids and similarities") {
        const std::string j = nb.to_json();
        CHECK(j.find("member_ids") != std::string::npos);
        CHECK(j.find("similarities") != std::string::npos);
    }
    SUBCASE("empty reference errors") {
        const ProfileTable empty;
        CHECK_THROWS_AS(privacy_neighbors(a, empty, cfg), Error);
    }
}

TEST_CASE("neighborhood similarities recompute pairwise") {
    const LabeledDataset reference = random_dataset(60, 5, 31);
    const VisualIndex index = VisualIndex::build(reference);
    NeighborhoodConfig cfg;
    cfg.k_v = 20;
    const FeatureRecord& query = reference.records[7];
    const Neighborhood nb = visual_neighbors(query, index, cfg);
    const std::vector<double> q = concat_modalities(query);
    for (std::size_t i = 0; i < nb.size(); ++i) {
        const auto& row = index.rows[reference.index_of_id(nb.member_ids[i])];
        CHECK(nb.similarities[i] == doctest::Approx(oracle_cosine(q, row)).epsilon(1e-12));
        CHECK(nb.member_ids[i] != query.id);
    }
    // k >= |reference| returns everything except the query itself.
    cfg.k_v = 1000;
    CHECK(visual_neighbors(query, index, cfg).size() == reference.size() - 1);
}
