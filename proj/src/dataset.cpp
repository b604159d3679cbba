#include "dmfp/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace dmfp {

namespace {

using nlohmann::json;

struct CsvTable {
    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows;
};

double parse_double(const std::string& cell, const std::filesystem::path& file) {
    double value = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
        throw Error("bad numeric cell '" + cell + "' in " + file.string());
    return value;
}

CsvTable read_feature_csv(const std::filesystem::path& file, std::size_t dim) {
    std::ifstream in(file);
    if (!in) throw Error("missing feature file: " + file.string());
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw Error("empty feature file: " + file.string());
    // Header is "id,f0..f{d-1}"; only the column count is checked.
    if (split(line, ',').size() != dim + 1)
        throw Error("header column count mismatch in " + file.string());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split(line, ',');
        if (cells.size() != dim + 1)
            throw Error("dimension mismatch in " + file.string() + ": row '" + cells[0] +
                        "' has " + std::to_string(cells.size() - 1) + " values, expected " +
                        std::to_string(dim));
        table.ids.push_back(trim(cells[0]));
        std::vector<double> row(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            row[j] = parse_double(trim(cells[j + 1]), file);
            if (!std::isfinite(row[j]))
                throw Error("non-finite value for id '" + table.ids.back() + "' in " +
                            file.string());
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

std::vector<double> l2_normalize(const std::vector<double>& v) {
    double sq = 0.0;
    for (double x : v) {
        if (!std::isfinite(x)) throw Error("l2_normalize: non-finite input");
        sq += x * x;
    }
    if (sq == 0.0) return v;
    const double norm = std::sqrt(sq);
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
    return out;
}

std::vector<double> concat_modalities(const FeatureRecord& rec) {
    for (ModalityId m : kAllModalities)
        if (rec.block(m).empty())
            throw Error("record '" + rec.id + "' is missing the " + std::string(to_string(m)) +
                        " block");
    std::vector<double> out;
    out.reserve(rec.blocks[0].size() + rec.blocks[1].size() + rec.blocks[2].size());
    for (ModalityId m : kAllModalities) {
        const auto& b = rec.block(m);
        out.insert(out.end(), b.begin(), b.end());
    }
    return out;
}

LabeledDataset load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw Error("missing manifest: " + manifest_path.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw Error("bad manifest " + manifest_path.string() + ": " + e.what());
    }
    for (const auto& item : manifest.items()) {
        const std::string& key = item.key();
        if (key != "modalities" && key != "labels_file" && key != "normalize")
            throw Error("unknown manifest key '" + key + "' in " + manifest_path.string());
    }
    if (!manifest.contains("modalities") || !manifest["modalities"].is_array())
        throw Error("manifest missing 'modalities' array: " + manifest_path.string());
    bool normalize = manifest.value("normalize", true);

    const auto base_dir = manifest_path.parent_path();
    std::array<std::filesystem::path, kNumModalities> files;
    std::array<std::size_t, kNumModalities> dims{};
    std::array<bool, kNumModalities> seen{};
    for (const auto& entry : manifest["modalities"]) {
        ModalityId m = parse_modality(entry.at("name").get<std::string>());
        if (seen[index_of(m)])
            throw Error("manifest lists modality '" + std::string(to_string(m)) + "' twice");
        seen[index_of(m)] = true;
        long dim = entry.at("dim").get<long>();
        if (dim <= 0) throw Error("manifest dim must be positive for " + std::string(to_string(m)));
        dims[index_of(m)] = static_cast<std::size_t>(dim);
        files[index_of(m)] = base_dir / entry.at("file").get<std::string>();
    }
    for (ModalityId m : kAllModalities)
        if (!seen[index_of(m)])
            throw Error("manifest missing modality '" + std::string(to_string(m)) + "'");

    std::array<CsvTable, kNumModalities> tables;
    for (ModalityId m : kAllModalities)
        tables[index_of(m)] = read_feature_csv(files[index_of(m)], dims[index_of(m)]);

    const std::size_t n = tables[0].ids.size();
    for (ModalityId m : kAllModalities) {
        const auto& t = tables[index_of(m)];
        if (t.ids.size() != n)
            throw Error("row count mismatch: " + std::string(to_string(m)) + " file has " +
                        std::to_string(t.ids.size()) + " rows, object file has " +
                        std::to_string(n));
        for (std::size_t i = 0; i < n; ++i)
            if (t.ids[i] != tables[0].ids[i])
                throw Error("row id mismatch at row " + std::to_string(i) + ": '" + t.ids[i] +
                            "' vs '" + tables[0].ids[i] + "'");
    }

    std::unordered_map<std::string, PrivacyLabel> labels;
    bool have_labels = manifest.contains("labels_file");
    if (have_labels) {
        auto labels_path = base_dir / manifest["labels_file"].get<std::string>();
        std::ifstream lin(labels_path);
        if (!lin) throw Error("missing labels file: " + labels_path.string());
        std::string line;
        if (!std::getline(lin, line)) throw Error("empty labels file: " + labels_path.string());
        while (std::getline(lin, line)) {
            if (line.empty()) continue;
            auto cells = split(line, ',');
            if (cells.size() != 2) throw Error("bad labels row '" + line + "'");
            labels.emplace(trim(cells[0]), parse_privacy_label(cells[1]));
        }
    }

    std::vector<FeatureRecord> records(n);
    for (std::size_t i = 0; i < n; ++i) {
        FeatureRecord& rec = records[i];
        rec.id = tables[0].ids[i];
        for (ModalityId m : kAllModalities) {
            auto& row = tables[index_of(m)].rows[i];
            rec.block(m) = normalize ? l2_normalize(row) : std::move(row);
        }
        if (have_labels) {
            auto it = labels.find(rec.id);
            if (it == labels.end())
                throw Error("labels file has no entry for id '" + rec.id + "'");
            rec.label = it->second;
        }
    }
    return make_dataset(std::move(records), dims);
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& dir,
                  bool normalize_flag) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["normalize"] = normalize_flag;
    manifest["modalities"] = json::array();
    for (ModalityId m : kAllModalities) {
        std::string name(to_string(m));
        std::string filename = name + ".csv";
        manifest["modalities"].push_back(
            {{"name", name}, {"file", filename}, {"dim", ds.dim(m)}});
        std::ofstream out(dir / filename);
        if (!out) throw Error("cannot write " + (dir / filename).string());
        out << "id";
        for (std::size_t j = 0; j < ds.dim(m); ++j) out << ",f" << j;
        out << "\n";
        for (const auto& rec : ds.records) {
            out << rec.id;
            for (double v : rec.block(m)) out << ',' << format_double(v);
            out << "\n";
        }
    }
    if (ds.fully_labeled() && !ds.records.empty()) {
        manifest["labels_file"] = "labels.csv";
        std::ofstream out(dir / "labels.csv");
        if (!out) throw Error("cannot write " + (dir / "labels.csv").string());
        out << "id,label\n";
        for (const auto& rec : ds.records)
            out << rec.id << ',' << to_string(*rec.label) << "\n";
    }
    std::ofstream mout(dir / "manifest.json");
    if (!mout) throw Error("cannot write " + (dir / "manifest.json").string());
    mout << manifest.dump(2) << "\n";
}

namespace {

// Largest-remainder allocation of n items to the three fractions; ties go
// to the lower split index.
std::array<std::size_t, 3> allocate_counts(std::size_t n, const std::array<double, 3>& fractions) {
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainders{};
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
        double quota = static_cast<double>(n) * fractions[s];
        counts[s] = static_cast<std::size_t>(std::floor(quota + 1e-12));
        remainders[s] = quota - static_cast<double>(counts[s]);
        assigned += counts[s];
    }
    std::array<int, 3> order = {0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (remainders[a] != remainders[b]) return remainders[a] > remainders[b];
        return a < b;
    });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) counts[order[i % 3]]++;
    while (assigned > n) {  // guard against floating accumulation
        for (int s = 2; s >= 0 && assigned > n; --s)
            if (counts[s] > 0) { counts[s]--; assigned--; }
    }
    return counts;
}

LabeledDataset subset_by_indices(const LabeledDataset& ds, std::vector<std::size_t> idx) {
    std::sort(idx.begin(), idx.end());
    std::vector<FeatureRecord> records;
    records.reserve(idx.size());
    for (std::size_t i : idx) records.push_back(ds.records[i]);
    return make_dataset(std::move(records), ds.dims);
}

}  // namespace

SplitResult split_dataset(const LabeledDataset& ds, const SplitSpec& spec) {
    const std::array<double, 3> fractions = {spec.train_fraction, spec.estimate_fraction,
                                             spec.test_fraction};
    double sum = fractions[0] + fractions[1] + fractions[2];
    for (double f : fractions)
        if (f < 0.0 || f > 1.0) throw Error("split fractions must be in [0,1]");
    if (std::abs(sum - 1.0) > 1e-9) throw Error("split fractions must sum to 1");
    if (spec.stratified && !ds.fully_labeled())
        throw Error("stratified split requires a fully labeled dataset");

    std::mt19937_64 rng(static_cast<std::uint64_t>(spec.seed));
    std::array<std::vector<std::size_t>, 3> splits;

    if (spec.stratified) {
        std::array<std::vector<std::size_t>, 2> by_class;
        for (std::size_t i = 0; i < ds.size(); ++i)
            by_class[ds.records[i].label == PrivacyLabel::Private ? 0 : 1].push_back(i);
        for (auto& members : by_class) {
            std::shuffle(members.begin(), members.end(), rng);
            auto counts = allocate_counts(members.size(), fractions);
            std::size_t cursor = 0;
            for (int s = 0; s < 3; ++s)
                for (std::size_t c = 0; c < counts[s]; ++c)
                    splits[s].push_back(members[cursor++]);
        }
    } else {
        std::vector<std::size_t> order(ds.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        auto counts = allocate_counts(order.size(), fractions);
        std::size_t cursor = 0;
        for (int s = 0; s < 3; ++s)
            for (std::size_t c = 0; c < counts[s]; ++c) splits[s].push_back(order[cursor++]);
    }

    static const char* names[3] = {"train", "estimate", "test"};
    for (int s = 0; s < 3; ++s)
        if (splits[s].empty())
            throw Error(std::string("split '") + names[s] +
                        "' is empty for the given fractions and dataset size");

    return SplitResult{subset_by_indices(ds, std::move(splits[0])),
                       subset_by_indices(ds, std::move(splits[1])),
                       subset_by_indices(ds, std::move(splits[2]))};
}

}  // namespace dmfp
