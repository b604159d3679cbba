#include "dmfp/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "dmfp/dataset.hpp"

#include <json.hpp>

namespace dmfp {

namespace {

using nlohmann::json;

std::vector<ModalityId> effective_informative(const SynthConfig& cfg) {
    if (!cfg.informative.empty()) {
        if (cfg.informative.size() != cfg.n_regions)
            throw Error("synth config: informative list must have one modality per region");
        return cfg.informative;
    }
    std::vector<ModalityId> cycle(cfg.n_regions);
    for (std::size_t r = 0; r < cfg.n_regions; ++r)
        cycle[r] = kAllModalities[r % kNumModalities];
    return cycle;
}

}  // namespace

SynthResult generate(const SynthConfig& cfg) {
    if (cfg.n_regions == 0) throw Error("synth config: need at least one region");
    if (cfg.n < 10 * cfg.n_regions)
        throw Error("synth config: need at least 10 records per region");
    for (std::size_t d : cfg.dims)
        if (d < 2) throw Error("synth config: every modality needs dim >= 2");
    if (cfg.noise < 0.0 || cfg.noise > 1.0) throw Error("synth config: noise must be in [0,1]");
    if (cfg.class_ratio <= 0.0 || cfg.class_ratio >= 1.0)
        throw Error("synth config: class_ratio must be in (0,1)");
    const auto informative = effective_informative(cfg);

    std::mt19937_64 rng(static_cast<std::uint64_t>(cfg.seed));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Exact class counts: a seeded shuffle marks the private share.
    std::vector<std::size_t> order(cfg.n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_private =
        static_cast<std::size_t>(std::llround(cfg.class_ratio * static_cast<double>(cfg.n)));
    std::vector<char> is_private(cfg.n, 0);
    for (std::size_t i = 0; i < n_private; ++i) is_private[order[i]] = 1;

    SynthResult result;
    result.sidecar.cfg = cfg;
    std::vector<FeatureRecord> records(cfg.n);

    const int id_width = static_cast<int>(std::to_string(cfg.n).size());
    for (std::size_t i = 0; i < cfg.n; ++i) {
        const std::size_t region = i % cfg.n_regions;
        const PrivacyLabel label = is_private[i] ? PrivacyLabel::Private : PrivacyLabel::Public;
        const bool corrupted = unit(rng) < cfg.noise;

        FeatureRecord& rec = records[i];
        std::ostringstream id;
        id << "s" << std::setw(id_width) << std::setfill('0') << i;
        rec.id = id.str();
        rec.label = label;

        for (std::size_t m = 0; m < kNumModalities; ++m) {
            const std::size_t dim = cfg.dims[m];
            std::vector<double> block(dim);
            for (std::size_t j = 0; j < dim; ++j) block[j] = gauss(rng);

            // Region center: a bump on one non-signal coordinate; regions
            // past the first wrap increase the magnitude so centers stay
            // spacing-separated.
            const std::size_t axis = 1 + (region % (dim - 1));
            const double magnitude =
                cfg.spacing * (1.0 + static_cast<double>(region / (dim - 1)));
            block[axis] += magnitude;

            // Label signal on coordinate 0 of the informative block only:
            // strictly positive for private, strictly negative for public,
            // flipped for corrupted records.
            if (kAllModalities[m] == informative[region]) {
                double sign = label == PrivacyLabel::Private ? 1.0 : -1.0;
                if (corrupted) sign = -sign;
                block[0] = sign * (cfg.margin + std::abs(block[0]));
            }
            rec.block(kAllModalities[m]) = std::move(block);
        }

        result.sidecar.ids.push_back(rec.id);
        result.sidecar.region.push_back(static_cast<int>(region));
        result.sidecar.corrupted.push_back(corrupted);
    }

    result.dataset = make_dataset(std::move(records), cfg.dims);
    return result;
}

std::string SynthSidecar::to_json() const {
    json j;
    json informative = json::array();
    for (ModalityId m : effective_informative(cfg)) informative.push_back(to_string(m));
    j["config"] = {{"n", cfg.n},
                   {"dims", {cfg.dims[0], cfg.dims[1], cfg.dims[2]}},
                   {"n_regions", cfg.n_regions},
                   {"informative", informative},
                   {"noise", cfg.noise},
                   {"class_ratio", cfg.class_ratio},
                   {"seed", cfg.seed},
                   {"spacing", cfg.spacing},
                   {"margin", cfg.margin}};
    json recs = json::array();
    for (std::size_t i = 0; i < ids.size(); ++i)
        recs.push_back({{"id", ids[i]}, {"region", region[i]}, {"corrupted", (bool)corrupted[i]}});
    j["records"] = recs;
    return j.dump();
}

void save_synth(const SynthResult& result, const std::filesystem::path& dir) {
    save_dataset(result.dataset, dir, /*normalize_flag=*/true);
    std::ofstream out(dir / "sidecar.json");
    if (!out) throw Error("cannot write " + (dir / "sidecar.json").string());
    out << result.sidecar.to_json() << "\n";
}

SynthSidecar load_sidecar(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("missing sidecar: " + file.string());
    json j;
    in >> j;
    SynthSidecar sidecar;
    sidecar.cfg.n = j.at("config").at("n").get<std::size_t>();
    sidecar.cfg.n_regions = j.at("config").at("n_regions").get<std::size_t>();
    sidecar.cfg.noise = j.at("config").at("noise").get<double>();
    sidecar.cfg.class_ratio = j.at("config").at("class_ratio").get<double>();
    sidecar.cfg.seed = j.at("config").at("seed").get<long>();
    sidecar.cfg.spacing = j.at("config").at("spacing").get<double>();
    sidecar.cfg.margin = j.at("config").at("margin").get<double>();
    for (std::size_t m = 0; m < kNumModalities; ++m)
        sidecar.cfg.dims[m] = j.at("config").at("dims")[m].get<std::size_t>();
    if (j.at("config").contains("informative"))
        for (const auto& name : j.at("config").at("informative"))
            sidecar.cfg.informative.push_back(parse_modality(name.get<std::string>()));
    for (const auto& rec : j.at("records")) {
        sidecar.ids.push_back(rec.at("id").get<std::string>());
        sidecar.region.push_back(rec.at("region").get<int>());
        sidecar.corrupted.push_back(rec.at("corrupted").get<bool>());
    }
    return sidecar;
}

OracleReport oracle_report(const LabeledDataset& ds, const SynthSidecar& sidecar,
                           const std::vector<CalibratedClassifier>& base) {
    // Region lookup by id, so subsets (a test split) work too.
    std::unordered_map<std::string, std::size_t> sidecar_row;
    sidecar_row.reserve(sidecar.ids.size());
    for (std::size_t i = 0; i < sidecar.ids.size(); ++i) sidecar_row.emplace(sidecar.ids[i], i);

    std::array<std::vector<PrivacyLabel>, kNumModalities> preds;
    std::vector<PrivacyLabel> golds(ds.size());
    std::vector<int> regions(ds.size());
    for (auto& p : preds) p.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto it = sidecar_row.find(ds.records[i].id);
        if (it == sidecar_row.end())
            throw Error("oracle_report: record '" + ds.records[i].id + "' not in sidecar");
        regions[i] = sidecar.region[it->second];
    }
    parallel_for(ds.size(), [&](std::size_t i) {
        golds[i] = *ds.records[i].label;
        for (std::size_t m = 0; m < kNumModalities; ++m)
            preds[m][i] =
                predict_proba(base[m], ds.records[i].block(base[m].modality)).argmax();
    });

    OracleReport report;
    report.table = exploratory_analysis(preds, golds);
    report.ceiling_pct = report.table.row("Atleast one modality is correct").overall_pct;
    report.best_single_pct = 0.0;
    for (const char* name : {"Object is correct", "Scene is correct", "Tag is correct"})
        report.best_single_pct = std::max(report.best_single_pct, report.table.row(name).overall_pct);

    const std::size_t n_regions = sidecar.cfg.n_regions;
    report.region_ceiling_pct.assign(n_regions, 0.0);
    report.region_best_single_pct.assign(n_regions, 0.0);
    for (std::size_t r = 0; r < n_regions; ++r) {
        std::array<std::size_t, kNumModalities> correct{};
        std::size_t any_correct = 0, count = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            if (regions[i] != static_cast<int>(r)) continue;
            ++count;
            bool any = false;
            for (std::size_t m = 0; m < kNumModalities; ++m) {
                if (preds[m][i] == golds[i]) {
                    ++correct[m];
                    any = true;
                }
            }
            if (any) ++any_correct;
        }
        if (count == 0) continue;
        report.region_ceiling_pct[r] =
            100.0 * static_cast<double>(any_correct) / static_cast<double>(count);
        for (std::size_t m = 0; m < kNumModalities; ++m)
            report.region_best_single_pct[r] =
                std::max(report.region_best_single_pct[r],
                         100.0 * static_cast<double>(correct[m]) / static_cast<double>(count));
    }
    return report;
}

std::string OracleReport::to_text() const {
    std::ostringstream os;
    os << table.to_text();
    os << "Ceiling (at least one correct): " << std::fixed << std::setprecision(2) << ceiling_pct
       << "%\n";
    os << "Best single modality:           " << std::fixed << std::setprecision(2)
       << best_single_pct << "%\n";
    for (std::size_t r = 0; r < region_ceiling_pct.size(); ++r)
        os << "Region " << r << ": ceiling " << std::fixed << std::setprecision(2)
           << region_ceiling_pct[r] << "%, best single " << region_best_single_pct[r] << "%\n";
    return os.str();
}

}  // namespace dmfp
