#pragma once

#include "extsub/matrix.hpp"
#include "extsub/tensor_store.hpp"

#include <map>
#include <string>

namespace extsub {

// Tensor-name suffixes that pair the two low-rank factors of a layer.
struct SuffixConvention {
    std::string b_suffix = ".lora_B.weight";
    std::string a_suffix = ".lora_A.weight";
};

struct AdapterLayer {
    std::string layer_key;
    Matrix b; // d x r
    Matrix a; // r x k
    std::size_t rank = 0;
    DType storage_dtype = DType::F32;
};

struct AdapterModel {
    std::map<std::string, AdapterLayer> layers;
    // tensors that matched no suffix; carried through every pipeline verbatim
    std::map<std::string, TensorEntry> passthrough;
    std::map<std::string, std::string> metadata;
    SuffixConvention convention;
};

// Composed per-layer deltas (B*A), plus the passthrough payload so a full
// pipeline can round-trip a checkpoint.
struct DeltaModel {
    std::map<std::string, Matrix> deltas;
    std::map<std::string, DType> storage_dtypes;
    std::map<std::string, std::size_t> source_ranks;
    std::map<std::string, TensorEntry> passthrough;
    std::map<std::string, std::string> metadata;
};

// Pairs factors by shared prefix under the convention. Factor orientation
// is inferred from shapes; square factors whose orientation cannot be
// decided raise AmbiguousOrientation rather than guessing.
AdapterModel assemble(const TensorStore & store, const SuffixConvention & convention = {});

DeltaModel compose_delta(const AdapterModel & model);

// Key sets must be equal and per-key shapes must match; ranks may differ.
void check_compatible(const DeltaModel & a, const DeltaModel & b);

// Serializes deltas as full d x k matrices named "<key><suffix>". The
// inverse of delta_store round-trips through assemble-free loading.
TensorStore to_store(const DeltaModel & model, DType out_dtype,
                     const std::string & delta_suffix = ".delta.weight");

// Rebuilds a DeltaModel from a store of full delta matrices written by
// to_store (used by compositional pipelines to chain steps).
DeltaModel delta_from_store(const TensorStore & store,
                            const std::string & delta_suffix = ".delta.weight");

// Loads a checkpoint as a DeltaModel, accepting either paired low-rank
// factors or full delta matrices.
DeltaModel load_delta_model(const std::filesystem::path & path,
                            const SuffixConvention & convention = {},
                            const std::string & delta_suffix = ".delta.weight");

} // namespace extsub
