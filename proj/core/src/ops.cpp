#include "extsub/ops.hpp"

#include "extsub/errors.hpp"
#include "extsub/parallel.hpp"

#include <json.hpp>

#include <cmath>
#include <cstddef>

namespace extsub {

using ordered_json = nlohmann::ordered_json;

namespace {

template <typename T>
T dot(std::span<const T> x, std::span<const T> y) {
    // fixed sequential order, bit-deterministic at any thread count
    T s = 0;
    for (std::size_t i = 0; i < x.size(); i++) s += x[i] * y[i];
    return s;
}

template <typename T>
T norm(std::span<const T> x) {
    return std::sqrt(dot(x, x));
}

template <typename T>
struct RowSplit {
    std::vector<T> general_direction;
    std::vector<T> general_part;
    std::vector<T> deficiency;
    Degenerate degenerate = Degenerate::None;
    T norm_plus = 0;
    T norm_minus = 0;
};

template <typename T>
RowSplit<T> split_row(std::span<const T> vp, std::span<const T> vm, T eps) {
    const std::size_t k = vp.size();
    RowSplit<T> r;
    r.general_part.assign(k, T(0));
    r.deficiency.assign(k, T(0));
    r.norm_plus = norm(vp);
    r.norm_minus = norm(vm);

    if (r.norm_minus < eps) {
        r.degenerate = Degenerate::ZeroAnti; // nothing to remove
        return r;
    }
    if (r.norm_plus < eps) {
        // no expert direction to separate against; subtract nothing
        r.degenerate = Degenerate::ZeroExpert;
        return r;
    }

    r.general_direction.resize(k);
    for (std::size_t i = 0; i < k; i++) {
        r.general_direction[i] = vp[i] / r.norm_plus + vm[i] / r.norm_minus;
    }
    const T g_norm = norm<T>(r.general_direction);
    if (g_norm < eps) {
        // unit vectors cancel: no shared direction, whole row is deficiency
        r.degenerate = Degenerate::AntiParallel;
        r.deficiency.assign(vm.begin(), vm.end());
        return r;
    }

    const T proj = dot<T>(vm, r.general_direction) / g_norm;
    for (std::size_t i = 0; i < k; i++) {
        r.general_part[i] = proj * (r.general_direction[i] / g_norm);
        r.deficiency[i] = vm[i] - r.general_part[i];
    }
    return r;
}

struct RowStats {
    Degenerate degenerate = Degenerate::None;
    double norm_plus = 0;
    double norm_minus = 0;
    double cosine = 0;
    bool cosine_defined = false;
    double defrac = 0;
    bool defrac_defined = false;
};

template <typename T>
RowStats stats_of(std::span<const T> vp, std::span<const T> vm, const RowSplit<T> & split,
                  T eps) {
    RowStats s;
    s.degenerate = split.degenerate;
    s.norm_plus = (double)split.norm_plus;
    s.norm_minus = (double)split.norm_minus;
    if (split.norm_plus >= eps && split.norm_minus >= eps) {
        s.cosine = (double)(dot(vp, vm) / (split.norm_plus * split.norm_minus));
        s.cosine_defined = true;
    }
    if (split.norm_minus >= eps) {
        s.defrac = (double)(norm<T>(split.deficiency) / split.norm_minus);
        s.defrac_defined = true;
    }
    return s;
}

std::size_t bin16(double value, double lo, double hi) {
    const double t = (value - lo) / (hi - lo);
    const auto idx = (std::ptrdiff_t)(t * 16.0);
    return (std::size_t)std::clamp<std::ptrdiff_t>(idx, 0, 15);
}

void accumulate(LayerGeometry & layer, const RowStats & s) {
    layer.rows++;
    layer.mean_norm_plus += s.norm_plus;
    layer.mean_norm_minus += s.norm_minus;
    if (s.cosine_defined) layer.cos_hist[bin16(s.cosine, -1.0, 1.0)]++;
    if (s.defrac_defined) layer.defrac_hist[bin16(s.defrac, 0.0, 1.0)]++;
    switch (s.degenerate) {
        case Degenerate::ZeroExpert:   layer.zero_expert++; break;
        case Degenerate::ZeroAnti:     layer.zero_anti++; break;
        case Degenerate::AntiParallel: layer.anti_parallel++; break;
        case Degenerate::None: break;
    }
}

void finalize(LayerGeometry & layer) {
    if (layer.rows > 0) {
        layer.mean_norm_plus /= (double)layer.rows;
        layer.mean_norm_minus /= (double)layer.rows;
    }
}

enum class RowOp { Extract, ExtSub, StatsOnly };

// Shared per-layer driver: rows run in parallel, statistics are folded in
// sequential row order afterwards so the report is thread-count invariant.
void run_layer(const Matrix & base, const Matrix & neg, const UnlearnConfig & cfg, RowOp op,
               Matrix * out, LayerGeometry & geom) {
    const std::size_t k = base.cols;
    std::vector<RowStats> stats(base.rows);
    parallel_for(base.rows, [&](std::size_t i) {
        std::span<const double> vp = base.row(i);
        std::span<const double> vm = neg.row(i);
        if (cfg.compute_f32) {
            std::vector<float> fp(vp.begin(), vp.end());
            std::vector<float> fm(vm.begin(), vm.end());
            const auto split = split_row<float>(fp, fm, (float)cfg.eps);
            stats[i] = stats_of<float>(fp, fm, split, (float)cfg.eps);
            if (op != RowOp::StatsOnly) {
                for (std::size_t j = 0; j < k; j++) {
                    out->at(i, j) = op == RowOp::Extract
                        ? (double)split.deficiency[j]
                        : (double)(fp[j] - (float)cfg.lambda * split.deficiency[j]);
                }
            }
        } else {
            const auto split = split_row<double>(vp, vm, cfg.eps);
            stats[i] = stats_of<double>(vp, vm, split, cfg.eps);
            if (op != RowOp::StatsOnly) {
                for (std::size_t j = 0; j < k; j++) {
                    out->at(i, j) = op == RowOp::Extract
                        ? split.deficiency[j]
                        : vp[j] - cfg.lambda * split.deficiency[j];
                }
            }
        }
    });
    for (const RowStats & s : stats) accumulate(geom, s);
    finalize(geom);
}

std::pair<DeltaModel, GeometryReport> run_model(const DeltaModel & base, const DeltaModel & neg,
                                                const UnlearnConfig & cfg, RowOp op) {
    check_compatible(base, neg);
    DeltaModel out;
    out.storage_dtypes = base.storage_dtypes;
    out.source_ranks = base.source_ranks;
    out.passthrough = base.passthrough;
    out.metadata = base.metadata;
    GeometryReport report;
    for (const auto & [key, m] : base.deltas) {
        Matrix result(m.rows, m.cols);
        LayerGeometry geom;
        run_layer(m, neg.deltas.at(key), cfg, op, &result, geom);
        out.deltas[key] = std::move(result);
        report.layers[key] = geom;
    }
    return {std::move(out), std::move(report)};
}

DeltaModel elementwise(const DeltaModel & base, const DeltaModel & other, double scale) {
    check_compatible(base, other);
    DeltaModel out;
    out.storage_dtypes = base.storage_dtypes;
    out.source_ranks = base.source_ranks;
    out.passthrough = base.passthrough;
    out.metadata = base.metadata;
    for (const auto & [key, m] : base.deltas) {
        const Matrix & o = other.deltas.at(key);
        Matrix r(m.rows, m.cols);
        for (std::size_t i = 0; i < m.data.size(); i++) {
            r.data[i] = m.data[i] + scale * o.data[i];
        }
        out.deltas[key] = std::move(r);
    }
    return out;
}

} // namespace

uint64_t GeometryReport::total_degenerate() const {
    uint64_t n = 0;
    for (const auto & [key, l] : layers) n += l.zero_expert + l.zero_anti + l.anti_parallel;
    return n;
}

std::string GeometryReport::to_json() const {
    ordered_json root = ordered_json::object();
    ordered_json layer_obj = ordered_json::object();
    for (const auto & [key, l] : layers) {
        ordered_json j = ordered_json::object();
        j["rows"] = l.rows;
        j["cos_hist"] = l.cos_hist;
        j["defrac_hist"] = l.defrac_hist;
        j["mean_norm_plus"] = l.mean_norm_plus;
        j["mean_norm_minus"] = l.mean_norm_minus;
        j["degenerate"] = {
            {"zero_expert", l.zero_expert},
            {"zero_anti", l.zero_anti},
            {"anti_parallel", l.anti_parallel},
        };
        layer_obj[key] = std::move(j);
    }
    root["layers"] = std::move(layer_obj);
    return root.dump();
}

Degenerate general_direction(std::span<const double> v_plus, std::span<const double> v_minus,
                             double eps, std::span<double> out) {
    const auto split = split_row<double>(v_plus, v_minus, eps);
    if (split.degenerate == Degenerate::None) {
        std::copy(split.general_direction.begin(), split.general_direction.end(), out.begin());
    }
    return split.degenerate;
}

RowGeometry extract_row(std::span<const double> v_plus, std::span<const double> v_minus,
                        double eps) {
    auto split = split_row<double>(v_plus, v_minus, eps);
    RowGeometry g;
    g.general_direction = std::move(split.general_direction);
    g.general_part = std::move(split.general_part);
    g.deficiency = std::move(split.deficiency);
    g.degenerate = split.degenerate;
    return g;
}

std::vector<double> ext_sub_row(std::span<const double> v_plus, std::span<const double> v_minus,
                                double lambda, double eps) {
    const auto split = split_row<double>(v_plus, v_minus, eps);
    std::vector<double> out(v_plus.size());
    for (std::size_t i = 0; i < out.size(); i++) {
        out[i] = v_plus[i] - lambda * split.deficiency[i];
    }
    return out;
}

DeltaModel direct_subtract(const DeltaModel & base, const DeltaModel & neg, double lambda) {
    return elementwise(base, neg, -lambda);
}

std::pair<DeltaModel, GeometryReport> ext_sub(const DeltaModel & base, const DeltaModel & neg,
                                              const UnlearnConfig & cfg) {
    return run_model(base, neg, cfg, RowOp::ExtSub);
}

std::pair<DeltaModel, GeometryReport> extract_deficiency(const DeltaModel & base,
                                                         const DeltaModel & neg,
                                                         const UnlearnConfig & cfg) {
    return run_model(base, neg, cfg, RowOp::Extract);
}

DeltaModel add(const DeltaModel & base, const DeltaModel & other, double weight) {
    return elementwise(base, other, weight);
}

GeometryReport geometry_stats(const DeltaModel & base, const DeltaModel & neg, double eps) {
    UnlearnConfig cfg;
    cfg.eps = eps;
    auto [model, report] = run_model(base, neg, cfg, RowOp::StatsOnly);
    return report;
}

} // namespace extsub
