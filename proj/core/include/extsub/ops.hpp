#pragma once

#include "extsub/adapter.hpp"
#include "extsub/matrix.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace extsub {

enum class Degenerate { None, ZeroExpert, ZeroAnti, AntiParallel };

enum class Mode { Direct, ExtSub };

struct UnlearnConfig {
    double lambda = 1.0;
    Mode mode = Mode::ExtSub;
    double eps = 1e-12; // degeneracy threshold on norms; 1e-6 for F32 compute
    bool compute_f32 = false;
};

// Per-row split of the anti-expert vector into the component along the
// bisector of the two unit vectors (general_part) and the orthogonal
// residual (deficiency).
struct RowGeometry {
    std::vector<double> general_direction; // unit-sum direction, unnormalized
    std::vector<double> general_part;
    std::vector<double> deficiency;
    Degenerate degenerate = Degenerate::None;
};

struct LayerGeometry {
    std::size_t rows = 0;
    std::array<uint64_t, 16> cos_hist{};    // cosine(v+, v-) over [-1, 1]
    std::array<uint64_t, 16> defrac_hist{}; // |deficiency| / |v-| over [0, 1]
    double mean_norm_plus = 0.0;
    double mean_norm_minus = 0.0;
    uint64_t zero_expert = 0;
    uint64_t zero_anti = 0;
    uint64_t anti_parallel = 0;
};

struct GeometryReport {
    std::map<std::string, LayerGeometry> layers;

    uint64_t total_degenerate() const;
    std::string to_json() const; // stable key order
};

// Bisector direction of the two unit vectors. Returns the degeneracy kind
// instead of a direction when either input norm or the sum norm falls
// below eps.
Degenerate general_direction(std::span<const double> v_plus, std::span<const double> v_minus,
                             double eps, std::span<double> out);

RowGeometry extract_row(std::span<const double> v_plus, std::span<const double> v_minus,
                        double eps);

// v+ - lambda * deficiency(v+, v-)
std::vector<double> ext_sub_row(std::span<const double> v_plus, std::span<const double> v_minus,
                                double lambda, double eps);

DeltaModel direct_subtract(const DeltaModel & base, const DeltaModel & neg, double lambda);

std::pair<DeltaModel, GeometryReport> ext_sub(const DeltaModel & base, const DeltaModel & neg,
                                              const UnlearnConfig & cfg);

// Deficiency matrices only: Ext(neg) per layer, rows stacked in place.
std::pair<DeltaModel, GeometryReport> extract_deficiency(const DeltaModel & base,
                                                         const DeltaModel & neg,
                                                         const UnlearnConfig & cfg);

// base + weight * other, elementwise.
DeltaModel add(const DeltaModel & base, const DeltaModel & other, double weight);

GeometryReport geometry_stats(const DeltaModel & base, const DeltaModel & neg, double eps);

} // namespace extsub
