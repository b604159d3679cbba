#include "dmfp/types.hpp"

#include <cmath>

namespace dmfp {

std::string_view to_string(PrivacyLabel label) {
    return label == PrivacyLabel::Private ? "private" : "public";
}

PrivacyLabel parse_privacy_label(std::string_view text) {
    std::string lower = to_lower(trim(text));
    if (lower == "private") return PrivacyLabel::Private;
    if (lower == "public") return PrivacyLabel::Public;
    throw Error("unknown privacy label: '" + std::string(text) + "'");
}

std::string_view to_string(ModalityId m) {
    switch (m) {
        case ModalityId::Object: return "object";
        case ModalityId::Scene: return "scene";
        case ModalityId::Tag: return "tag";
    }
    return "object";
}

ModalityId parse_modality(std::string_view text) {
    std::string lower = to_lower(trim(text));
    if (lower == "object") return ModalityId::Object;
    if (lower == "scene") return ModalityId::Scene;
    if (lower == "tag") return ModalityId::Tag;
    throw Error("unknown modality: '" + std::string(text) + "'");
}

bool LabeledDataset::fully_labeled() const {
    for (const auto& rec : records)
        if (!rec.label) return false;
    return true;
}

std::size_t LabeledDataset::index_of_id(const std::string& id) const {
    auto it = id_index.find(id);
    if (it == id_index.end()) throw Error("record id not found: '" + id + "'");
    return it->second;
}

const FeatureRecord* LabeledDataset::find(const std::string& id) const {
    auto it = id_index.find(id);
    return it == id_index.end() ? nullptr : &records[it->second];
}

LabeledDataset make_dataset(std::vector<FeatureRecord> records,
                            std::array<std::size_t, kNumModalities> dims) {
    LabeledDataset ds;
    ds.dims = dims;
    ds.records = std::move(records);
    ds.id_index.reserve(ds.records.size());
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const FeatureRecord& rec = ds.records[i];
        if (!ds.id_index.emplace(rec.id, i).second)
            throw Error("duplicate record id: '" + rec.id + "'");
        for (ModalityId m : kAllModalities) {
            const auto& block = rec.block(m);
            if (block.size() != dims[index_of(m)])
                throw Error("dimension mismatch for record '" + rec.id + "' modality " +
                            std::string(to_string(m)) + ": got " + std::to_string(block.size()) +
                            ", expected " + std::to_string(dims[index_of(m)]));
            for (double v : block)
                if (!std::isfinite(v))
                    throw Error("non-finite value in record '" + rec.id + "'");
        }
    }
    return ds;
}

}  // namespace dmfp
