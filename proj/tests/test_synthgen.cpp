#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dmfp/dataset.hpp"
#include "dmfp/synthgen.hpp"
#include "helpers.hpp"

using namespace dmfp;
using dmfp::testing::TempDir;

namespace {

SynthConfig small_cfg() {
    SynthConfig cfg;
    cfg.n = 600;
    cfg.dims = {6, 5, 4};
    cfg.n_regions = 3;
    cfg.noise = 0.0;
    cfg.seed = 7;
    return cfg;
}

}  // namespace

TEST_CASE("generate is a pure function of its config") {
    const SynthResult a = generate(small_cfg());
    const SynthResult b = generate(small_cfg());
    REQUIRE(a.dataset.size() == b.dataset.size());
    for (std::size_t i = 0; i < a.dataset.size(); ++i) {
        CHECK(a.dataset.records[i].id == b.dataset.records[i].id);
        CHECK(a.dataset.records[i].label == b.dataset.records[i].label);
        for (ModalityId m : kAllModalities)
            CHECK(a.dataset.records[i].block(m) == b.dataset.records[i].block(m));
    }
    CHECK(a.sidecar.region == b.sidecar.region);
    CHECK(a.sidecar.corrupted == b.sidecar.corrupted);
}

TEST_CASE("generate respects the class ratio and region partition") {
    const SynthResult r = generate(small_cfg());
    std::size_t n_private = 0;
    for (const auto& rec : r.dataset.records)
        if (*rec.label == PrivacyLabel::Private) ++n_private;
    CHECK(n_private == 150);  // exactly a quarter of 600

    std::array<std::size_t, 3> region_counts{};
    for (int reg : r.sidecar.region) region_counts[static_cast<std::size_t>(reg)]++;
    CHECK(region_counts[0] == 200);
    CHECK(region_counts[1] == 200);
    CHECK(region_counts[2] == 200);
}

TEST_CASE("noise=0: a linear probe on the informative modality is perfect per region") {
    const SynthResult r = generate(small_cfg());
    for (std::size_t region = 0; region < 3; ++region) {
        const ModalityId informative = kAllModalities[region % kNumModalities];
        std::vector<std::vector<double>> rows;
        std::vector<int> labels;
        for (std::size_t i = 0; i < r.dataset.size(); ++i) {
            if (r.sidecar.region[i] != static_cast<int>(region)) continue;
            rows.push_back(r.dataset.records[i].block(informative));
            labels.push_back(*r.dataset.records[i].label == PrivacyLabel::Private ? 1 : 0);
        }
        // Sign of coordinate 0 is the label: separable by construction,
        // confirmed by the perceptron oracle.
        CHECK(dmfp::testing::perceptron_separable(rows, labels));
        for (std::size_t i = 0; i < rows.size(); ++i)
            CHECK((rows[i][0] > 0) == (labels[i] == 1));
    }
}

TEST_CASE("at noise=0.1 an in-region probe reaches at least 1 - noise accuracy") {
    SynthConfig cfg = small_cfg();
    cfg.noise = 0.1;
    cfg.n = 1200;
    const SynthResult r = generate(cfg);
    for (std::size_t region = 0; region < cfg.n_regions; ++region) {
        const ModalityId informative = kAllModalities[region % kNumModalities];
        std::size_t correct = 0, total = 0;
        for (std::size_t i = 0; i < r.dataset.size(); ++i) {
            if (r.sidecar.region[i] != static_cast<int>(region)) continue;
            const bool is_private = *r.dataset.records[i].label == PrivacyLabel::Private;
            // The coordinate-0 sign probe is the linear classifier the
            // construction guarantees.
            if ((r.dataset.records[i].block(informative)[0] > 0) == is_private) ++correct;
            ++total;
        }
        CHECK(static_cast<double>(correct) / static_cast<double>(total) >= 1.0 - cfg.noise - 0.03);
    }
}

TEST_CASE("noise=0.5 leaves the informative coordinate near chance") {
    SynthConfig cfg = small_cfg();
    cfg.noise = 0.5;
    cfg.n = 2000;
    const SynthResult r = generate(cfg);
    std::size_t sign_matches = 0, total = 0;
    for (std::size_t i = 0; i < r.dataset.size(); ++i) {
        const std::size_t region = static_cast<std::size_t>(r.sidecar.region[i]);
        const ModalityId informative = kAllModalities[region % kNumModalities];
        const bool is_private = *r.dataset.records[i].label == PrivacyLabel::Private;
        if ((r.dataset.records[i].block(informative)[0] > 0) == is_private) ++sign_matches;
        ++total;
    }
    const double rate = static_cast<double>(sign_matches) / static_cast<double>(total);
    CHECK(rate > 0.40);
    CHECK(rate < 0.60);

    // Sidecar corruption flags record exactly the flipped encodings.
    for (std::size_t i = 0; i < r.dataset.size(); ++i) {
        const std::size_t region = static_cast<std::size_t>(r.sidecar.region[i]);
        const ModalityId informative = kAllModalities[region % kNumModalities];
        const bool is_private = *r.dataset.records[i].label == PrivacyLabel::Private;
        const bool encodes_private = r.dataset.records[i].block(informative)[0] > 0;
        CHECK((encodes_private != is_private) == static_cast<bool>(r.sidecar.corrupted[i]));
    }
}

TEST_CASE("infeasible configs error") {
    SynthConfig cfg = small_cfg();
    SUBCASE("tiny dims") {
        cfg.dims = {1, 5, 4};
        CHECK_THROWS_AS(generate(cfg), Error);
    }
    SUBCASE("too few records") {
        cfg.n = 5;
        CHECK_THROWS_AS(generate(cfg), Error);
    }
    SUBCASE("informative list size mismatch") {
        cfg.informative = {ModalityId::Object};
        CHECK_THROWS_AS(generate(cfg), Error);
    }
    SUBCASE("bad noise") {
        cfg.noise = 1.5;
        CHECK_THROWS_AS(generate(cfg), Error);
    }
}

TEST_CASE("save_synth writes the manifest format plus sidecar") {
    TempDir dir("synthio");
    const SynthResult r = generate(small_cfg());
    save_synth(r, dir.path());

    const LabeledDataset loaded = load_dataset(dir.path() / "manifest.json");
    CHECK(loaded.size() == r.dataset.size());
    // The manifest enables normalization: blocks come back unit length.
    double sq = 0.0;
    for (double v : loaded.records[0].block(ModalityId::Object)) sq += v * v;
    CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-9));

    const SynthSidecar sidecar = load_sidecar(dir.path() / "sidecar.json");
    CHECK(sidecar.ids == r.sidecar.ids);
    CHECK(sidecar.region == r.sidecar.region);
    CHECK(sidecar.cfg.n == r.sidecar.cfg.n);
}

namespace {

// The construction's ideal classifier: reads the label-signal coordinate of
// its block, nothing else.
CalibratedClassifier axis_probe(ModalityId m, std::size_t dim) {
    CalibratedClassifier clf;
    clf.modality = m;
    LinearModel model;
    model.weights.assign(dim, 0.0);
    model.weights[0] = 1.0;
    clf.folds = {FoldModel{model, PlattSigmoid{-1.0, 0.0}}};
    return clf;
}

}  // namespace

TEST_CASE("oracle_report with the construction's probes is exact") {
    SynthConfig cfg = small_cfg();  // noise = 0
    const SynthResult r = generate(cfg);
    const std::vector<CalibratedClassifier> probes = {
        axis_probe(ModalityId::Object, cfg.dims[0]),
        axis_probe(ModalityId::Scene, cfg.dims[1]),
        axis_probe(ModalityId::Tag, cfg.dims[2])};

    SUBCASE("noise=0 ceiling is exactly 100%") {
        const OracleReport report = oracle_report(r.dataset, r.sidecar, probes);
        CHECK(report.ceiling_pct == doctest::Approx(100.0));
        for (double pct : report.region_ceiling_pct) CHECK(pct == doctest::Approx(100.0));
        CHECK(report.table.row("All are wrong").overall_pct == doctest::Approx(0.0));
    }
    SUBCASE("per-region rates match the sidecar corruption counts exactly") {
        SynthConfig noisy = cfg;
        noisy.noise = 0.2;
        const SynthResult rn = generate(noisy);
        const OracleReport report = oracle_report(rn.dataset, rn.sidecar, probes);
        for (std::size_t region = 0; region < noisy.n_regions; ++region) {
            std::size_t clean = 0, total = 0;
            for (std::size_t i = 0; i < rn.sidecar.region.size(); ++i) {
                if (rn.sidecar.region[i] != static_cast<int>(region)) continue;
                ++total;
                if (!rn.sidecar.corrupted[i]) ++clean;
            }
            // Only the informative probe is reliable in a region, and it is
            // right exactly on the uncorrupted records.
            const double expected =
                100.0 * static_cast<double>(clean) / static_cast<double>(total);
            CHECK(report.region_ceiling_pct[region] >= expected);
            CHECK(report.region_best_single_pct[region] >= expected);
        }
    }
}

TEST_CASE("calibration beats min-max scaled raw scores on generator data") {
    // Brier comparison on the generator's noisy-but-separable world.
    SynthConfig cfg;
    cfg.n = 1200;
    cfg.dims = {6, 5, 4};
    cfg.n_regions = 1;
    cfg.informative = {ModalityId::Object};
    cfg.noise = 0.15;
    cfg.seed = 21;
    const SynthResult r = generate(cfg);

    TempDir dir("brier");
    save_synth(r, dir.path());
    const LabeledDataset ds = load_dataset(dir.path() / "manifest.json");
    const SplitResult splits = split_dataset(ds, SplitSpec{21, 0.6, 0.2, 0.2, true});

    std::vector<std::vector<double>> rows;
    std::vector<PrivacyLabel> labels;
    for (const auto& rec : splits.train.records) {
        rows.push_back(rec.block(ModalityId::Object));
        labels.push_back(*rec.label);
    }
    TrainConfig tcfg;
    tcfg.seed = 21;
    const CalibratedClassifier clf = train_calibrated(rows, labels, tcfg, ModalityId::Object);

    std::vector<double> raw;
    std::vector<double> calibrated;
    std::vector<double> truth;
    for (const auto& rec : splits.test.records) {
        const auto& x = rec.block(ModalityId::Object);
        double score = 0.0;
        for (const auto& fold : clf.folds) score += fold.model.score(x);
        raw.push_back(score / static_cast<double>(clf.folds.size()));
        calibrated.push_back(predict_proba(clf, x).p_private);
        truth.push_back(*rec.label == PrivacyLabel::Private ? 1.0 : 0.0);
    }
    const auto [mn_it, mx_it] = std::minmax_element(raw.begin(), raw.end());
    double brier_cal = 0.0, brier_raw = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double scaled = *mx_it > *mn_it ? (raw[i] - *mn_it) / (*mx_it - *mn_it) : 0.5;
        brier_cal += (calibrated[i] - truth[i]) * (calibrated[i] - truth[i]);
        brier_raw += (scaled - truth[i]) * (scaled - truth[i]);
    }
    CHECK(brier_cal <= brier_raw);
}

TEST_CASE("oracle_report exposes the headroom the fusion stage must capture") {
    // Train base classifiers on a split and measure ceiling vs best single.
    SynthConfig cfg;
    cfg.n = 1500;
    cfg.dims = {6, 5, 4};
    cfg.n_regions = 3;
    cfg.noise = 0.1;
    cfg.seed = 11;
    const SynthResult r = generate(cfg);

    TempDir dir("oracle");
    save_synth(r, dir.path());
    const LabeledDataset ds = load_dataset(dir.path() / "manifest.json");

    SplitSpec spec{3, 15.0 / 32.0, 10.0 / 32.0, 7.0 / 32.0, true};
    const SplitResult splits = split_dataset(ds, spec);

    TrainConfig tcfg;
    tcfg.seed = 3;
    std::vector<CalibratedClassifier> base;
    std::vector<PrivacyLabel> labels;
    for (const auto& rec : splits.train.records) labels.push_back(*rec.label);
    for (ModalityId m : kAllModalities) {
        std::vector<std::vector<double>> rows;
        for (const auto& rec : splits.train.records) rows.push_back(rec.block(m));
        base.push_back(train_calibrated(rows, labels, tcfg, m));
    }

    const OracleReport report = oracle_report(splits.test, r.sidecar, base);
    // The construction guarantees material headroom between the best single
    // modality and the at-least-one ceiling.
    CHECK(report.ceiling_pct > report.best_single_pct + 10.0);
    CHECK(report.ceiling_pct > 85.0);
    CHECK(report.table.row("Atleast one modality is correct").overall_pct ==
          doctest::Approx(100.0 - report.table.row("All are wrong").overall_pct));
    CHECK(report.to_text().find("Ceiling") != std::string::npos);
}
