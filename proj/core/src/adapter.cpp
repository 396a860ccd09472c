#include "extsub/adapter.hpp"

#include "extsub/errors.hpp"
#include "extsub/parallel.hpp"

#include <algorithm>
#include <vector>

namespace extsub {

static bool strip_suffix(const std::string & name, const std::string & suffix, std::string & prefix) {
    if (name.size() <= suffix.size() || !name.ends_with(suffix)) return false;
    prefix = name.substr(0, name.size() - suffix.size());
    return true;
}

// B is d x r, A is r x k with r strictly smaller than both outer dims in
// any real adapter. Orientation is picked by matching inner dimensions,
// preferring the smallest inner dimension (the rank). A tie between
// distinct orientations (square factors) is undecidable and flagged.
static void orient_factors(const std::string & key, Matrix & b, Matrix & a) {
    struct Candidate { bool tb, ta; std::size_t inner; };
    std::vector<Candidate> valid;
    for (bool tb : {false, true}) {
        for (bool ta : {false, true}) {
            const std::size_t b_inner = tb ? b.rows : b.cols;
            const std::size_t a_inner = ta ? a.cols : a.rows;
            if (b_inner == a_inner) valid.push_back({tb, ta, b_inner});
        }
    }
    if (valid.empty()) {
        throw rank_mismatch("layer '" + key + "': factor shapes " + std::to_string(b.rows) + "x" +
                            std::to_string(b.cols) + " and " + std::to_string(a.rows) + "x" +
                            std::to_string(a.cols) + " share no inner dimension");
    }
    const auto best = std::min_element(valid.begin(), valid.end(),
        [](const Candidate & x, const Candidate & y) { return x.inner < y.inner; });
    const std::size_t ties = (std::size_t)std::count_if(valid.begin(), valid.end(),
        [&](const Candidate & c) { return c.inner == best->inner; });
    if (ties > 1) {
        throw ambiguous_orientation("layer '" + key +
                                    "': square factor makes orientation undecidable");
    }
    if (best->tb) b = transpose(b);
    if (best->ta) a = transpose(a);
}

AdapterModel assemble(const TensorStore & store, const SuffixConvention & convention) {
    AdapterModel model;
    model.convention = convention;
    model.metadata = store.metadata;

    std::map<std::string, const TensorEntry *> b_parts;
    std::map<std::string, const TensorEntry *> a_parts;

    for (const auto & [name, entry] : store.entries) {
        std::string prefix;
        if (strip_suffix(name, convention.b_suffix, prefix)) {
            b_parts[prefix] = &entry;
        } else if (strip_suffix(name, convention.a_suffix, prefix)) {
            a_parts[prefix] = &entry;
        } else {
            model.passthrough[name] = entry;
        }
    }

    for (const auto & [key, b_entry] : b_parts) {
        auto it = a_parts.find(key);
        if (it == a_parts.end()) {
            throw unpaired_factor("layer '" + key + "' has a B factor but no A factor");
        }
        AdapterLayer layer;
        layer.layer_key = key;
        layer.storage_dtype = b_entry->dtype;
        layer.b = to_compute(*b_entry);
        layer.a = to_compute(*it->second);
        orient_factors(key, layer.b, layer.a);
        layer.rank = layer.b.cols;
        model.layers.emplace(key, std::move(layer));
    }
    for (const auto & [key, a_entry] : a_parts) {
        if (!b_parts.contains(key)) {
            throw unpaired_factor("layer '" + key + "' has an A factor but no B factor");
        }
    }

    return model;
}

DeltaModel compose_delta(const AdapterModel & model) {
    DeltaModel out;
    out.passthrough = model.passthrough;
    out.metadata = model.metadata;

    std::vector<const AdapterLayer *> layers;
    layers.reserve(model.layers.size());
    for (const auto & [key, layer] : model.layers) {
        layers.push_back(&layer);
        out.storage_dtypes[key] = layer.storage_dtype;
        out.source_ranks[key] = layer.rank;
        out.deltas[key] = Matrix(); // reserve slot so the map is not mutated in parallel
    }
    parallel_for(layers.size(), [&](std::size_t i) {
        const AdapterLayer & l = *layers[i];
        out.deltas[l.layer_key] = matmul(l.b, l.a);
    });
    return out;
}

void check_compatible(const DeltaModel & a, const DeltaModel & b) {
    for (const auto & [key, m] : a.deltas) {
        auto it = b.deltas.find(key);
        if (it == b.deltas.end()) {
            throw key_set_mismatch("layer '" + key + "' missing from second model");
        }
        if (!m.same_shape(it->second)) {
            throw shape_mismatch("layer '" + key + "' shapes differ: " + std::to_string(m.rows) +
                                 "x" + std::to_string(m.cols) + " vs " +
                                 std::to_string(it->second.rows) + "x" +
                                 std::to_string(it->second.cols));
        }
    }
    for (const auto & [key, m] : b.deltas) {
        if (!a.deltas.contains(key)) {
            throw key_set_mismatch("layer '" + key + "' missing from first model");
        }
    }
}

TensorStore to_store(const DeltaModel & model, DType out_dtype, const std::string & delta_suffix) {
    TensorStore store;
    store.metadata = model.metadata;
    for (const auto & [name, entry] : model.passthrough) {
        store.entries[name] = entry;
    }
    for (const auto & [key, delta] : model.deltas) {
        store.entries[key + delta_suffix] = from_compute(delta, out_dtype);
    }
    return store;
}

DeltaModel delta_from_store(const TensorStore & store, const std::string & delta_suffix) {
    DeltaModel model;
    model.metadata = store.metadata;
    for (const auto & [name, entry] : store.entries) {
        std::string key;
        if (strip_suffix(name, delta_suffix, key)) {
            model.deltas[key] = to_compute(entry);
            model.storage_dtypes[key] = entry.dtype;
        } else {
            model.passthrough[name] = entry;
        }
    }
    return model;
}

DeltaModel load_delta_model(const std::filesystem::path & path,
                            const SuffixConvention & convention,
                            const std::string & delta_suffix) {
    const TensorStore store = load_store(path);
    bool has_factors = false;
    bool has_deltas  = false;
    for (const auto & [name, entry] : store.entries) {
        if (name.ends_with(convention.b_suffix) || name.ends_with(convention.a_suffix)) {
            has_factors = true;
        }
        if (name.ends_with(delta_suffix)) {
            has_deltas = true;
        }
    }
    if (has_factors) {
        DeltaModel model = compose_delta(assemble(store, convention));
        if (has_deltas) {
            // mixed checkpoint: fold full deltas in alongside composed factors
            DeltaModel extra = delta_from_store(store, delta_suffix);
            for (auto & [key, m] : extra.deltas) {
                model.deltas[key] = std::move(m);
                model.storage_dtypes[key] = extra.storage_dtypes[key];
                model.passthrough.erase(key + delta_suffix);
            }
        }
        return model;
    }
    return delta_from_store(store, delta_suffix);
}

} // namespace extsub
