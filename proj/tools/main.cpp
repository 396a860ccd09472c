#include "extsub/adapter.hpp"
#include "extsub/errors.hpp"
#include "extsub/lowrank.hpp"
#include "extsub/ops.hpp"
#include "extsub/parallel.hpp"
#include "extsub/repn.hpp"
#include "extsub/tensor_store.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

using ordered_json = nlohmann::ordered_json;
namespace es = extsub;

namespace {

struct CommonOpts {
    std::string compute_dtype = "f64";
    std::string out_dtype = "same";
    double eps = 0.0; // 0 = dtype default
    std::size_t threads = 0;
    std::string suffix_b = ".lora_B.weight";
    std::string suffix_a = ".lora_A.weight";
};

void add_common(CLI::App * cmd, CommonOpts & o) {
    cmd->add_option("--compute-dtype", o.compute_dtype, "compute precision")
        ->check(CLI::IsMember({"f32", "f64"}));
    cmd->add_option("--out-dtype", o.out_dtype, "output storage dtype")
        ->check(CLI::IsMember({"same", "f64", "f32", "f16", "bf16"}));
    cmd->add_option("--eps", o.eps, "degeneracy threshold (default 1e-12 f64 / 1e-6 f32)");
    cmd->add_option("--threads", o.threads, "worker threads (default: EXTSUB_THREADS or all)");
    cmd->add_option("--suffix-b", o.suffix_b, "tensor name suffix of the B factor");
    cmd->add_option("--suffix-a", o.suffix_a, "tensor name suffix of the A factor");
}

es::UnlearnConfig make_config(const CommonOpts & o, double lambda, es::Mode mode) {
    es::UnlearnConfig cfg;
    cfg.lambda = lambda;
    cfg.mode = mode;
    cfg.compute_f32 = o.compute_dtype == "f32";
    cfg.eps = o.eps > 0.0 ? o.eps : (cfg.compute_f32 ? 1e-6 : 1e-12);
    if (o.threads > 0) es::set_thread_count(o.threads);
    return cfg;
}

es::SuffixConvention convention_of(const CommonOpts & o) {
    return {o.suffix_b, o.suffix_a};
}

std::optional<es::DType> parse_out_dtype(const std::string & name) {
    if (name == "same") return std::nullopt;
    if (name == "f64")  return es::DType::F64;
    if (name == "f32")  return es::DType::F32;
    if (name == "f16")  return es::DType::F16;
    if (name == "bf16") return es::DType::BF16;
    return std::nullopt;
}

ordered_json degeneracy_json(const es::GeometryReport & report) {
    uint64_t ze = 0, za = 0, ap = 0;
    for (const auto & [key, l] : report.layers) {
        ze += l.zero_expert;
        za += l.zero_anti;
        ap += l.anti_parallel;
    }
    return {{"zero_expert", ze}, {"zero_anti", za}, {"anti_parallel", ap}};
}

struct TruncateOpts {
    bool truncate = false;          // refactor to the source rank
    std::size_t truncate_rank = 0;  // explicit rank override
};

// Writes the model either as full delta matrices (default) or as truncated
// low-rank factor pairs. Returns the per-layer truncation report, if any.
ordered_json write_model(const es::DeltaModel & model, const std::string & out_path,
                         const CommonOpts & opts, const TruncateOpts & trunc) {
    const auto forced = parse_out_dtype(opts.out_dtype);
    const auto conv = convention_of(opts);
    ordered_json trunc_report = ordered_json::array();

    es::TensorStore store;
    store.metadata = model.metadata;
    for (const auto & [name, entry] : model.passthrough) {
        store.entries[name] = entry;
    }
    for (const auto & [key, delta] : model.deltas) {
        es::DType dtype = es::DType::F32;
        if (auto it = model.storage_dtypes.find(key); it != model.storage_dtypes.end()) {
            dtype = it->second;
        }
        if (forced) dtype = *forced;

        if (trunc.truncate || trunc.truncate_rank > 0) {
            std::size_t rank = trunc.truncate_rank;
            if (rank == 0) {
                auto it = model.source_ranks.find(key);
                rank = it != model.source_ranks.end() ? it->second
                                                      : std::min(delta.rows, delta.cols);
            }
            const auto result = es::svd_truncate(delta, rank);
            store.entries[key + conv.b_suffix] = es::from_compute(result.b_out, dtype);
            store.entries[key + conv.a_suffix] = es::from_compute(result.a_out, dtype);
            trunc_report.push_back({
                {"layer", key},
                {"target_rank", rank},
                {"rel_frobenius_error", result.rel_frobenius_error},
                {"effective_rank_at_1e-6", es::effective_rank(delta, 1e-6)},
            });
        } else {
            store.entries[key + ".delta.weight"] = es::from_compute(delta, dtype);
        }
    }
    es::save_store(store, out_path);
    return trunc_report;
}

void emit(const ordered_json & j) { std::cout << j.dump() << "\n"; }

// Shared metadata keys with conflicting values (e.g. a LoRA alpha) keep the
// expert's value; the conflict is only warned about.
void warn_metadata_conflicts(const es::DeltaModel & base, const es::DeltaModel & neg) {
    for (const auto & [key, value] : base.metadata) {
        auto it = neg.metadata.find(key);
        if (it != neg.metadata.end() && it->second != value) {
            std::cerr << "warning: metadata '" << key << "' differs ('" << value << "' vs '"
                      << it->second << "'); keeping the expert's value\n";
        }
    }
}

int cmd_subtract(const std::string & expert, const std::string & anti, const std::string & mode,
                 std::optional<double> lambda, const std::string & out, const CommonOpts & opts,
                 const TruncateOpts & trunc) {
    const es::Mode m = mode == "direct" ? es::Mode::Direct : es::Mode::ExtSub;
    const double lam = lambda ? *lambda : (m == es::Mode::Direct ? 0.2 : 1.0);
    const auto cfg = make_config(opts, lam, m);
    const auto conv = convention_of(opts);

    const auto base = es::load_delta_model(expert, conv);
    const auto neg = es::load_delta_model(anti, conv);
    warn_metadata_conflicts(base, neg);

    ordered_json summary;
    summary["mode"] = mode;
    summary["lambda"] = lam;
    summary["layers"] = base.deltas.size();

    es::DeltaModel result;
    if (m == es::Mode::Direct) {
        result = es::direct_subtract(base, neg, lam);
    } else {
        auto [model, report] = es::ext_sub(base, neg, cfg);
        result = std::move(model);
        summary["degenerate"] = degeneracy_json(report);
    }
    const auto trunc_report = write_model(result, out, opts, trunc);
    if (!trunc_report.empty()) summary["truncation"] = trunc_report;
    emit(summary);
    return 0;
}

int cmd_extract(const std::string & expert, const std::string & anti, const std::string & out,
                const CommonOpts & opts, const TruncateOpts & trunc) {
    const auto cfg = make_config(opts, 1.0, es::Mode::ExtSub);
    const auto conv = convention_of(opts);
    const auto base = es::load_delta_model(expert, conv);
    const auto neg = es::load_delta_model(anti, conv);
    warn_metadata_conflicts(base, neg);

    auto [model, report] = es::extract_deficiency(base, neg, cfg);
    // extracted deltas belong to the anti-expert; keep its storage dtypes
    model.storage_dtypes = neg.storage_dtypes;

    ordered_json summary;
    summary["layers"] = model.deltas.size();
    summary["degenerate"] = degeneracy_json(report);
    const auto trunc_report = write_model(model, out, opts, trunc);
    if (!trunc_report.empty()) summary["truncation"] = trunc_report;
    emit(summary);
    return 0;
}

int cmd_compose(const std::string & spec_path, const CommonOpts & cli_opts) {
    std::ifstream file(spec_path);
    if (!file) throw es::io_failure("cannot open pipeline spec " + spec_path);
    nlohmann::json spec;
    try {
        spec = nlohmann::json::parse(file);
    } catch (const nlohmann::json::exception & e) {
        throw es::invalid_argument_error(std::string("pipeline spec is not valid JSON: ") + e.what());
    }

    if (!spec.contains("expert") || !spec.contains("steps") || !spec.contains("output")) {
        throw es::invalid_argument_error("pipeline spec needs expert, steps and output");
    }
    if (!spec["steps"].is_array() || spec["steps"].empty()) {
        throw es::invalid_argument_error("pipeline steps must be a non-empty list");
    }

    CommonOpts opts = cli_opts;
    if (spec.contains("compute_dtype")) opts.compute_dtype = spec["compute_dtype"].get<std::string>();
    if (spec.contains("out_dtype")) opts.out_dtype = spec["out_dtype"].get<std::string>();
    const bool frozen_expert = spec.value("frozen_expert", false);

    TruncateOpts trunc;
    if (spec.contains("truncate")) {
        trunc.truncate = true;
        if (spec["truncate"].contains("rank")) {
            trunc.truncate_rank = spec["truncate"]["rank"].get<std::size_t>();
        }
    }

    struct Step { std::string mode; std::string anti; double lambda; };
    std::vector<Step> steps;
    for (const auto & s : spec["steps"]) {
        Step step;
        step.mode = s.value("mode", "ext");
        if (step.mode != "ext" && step.mode != "direct") {
            throw es::invalid_argument_error("step mode must be 'direct' or 'ext'");
        }
        if (!s.contains("anti")) throw es::invalid_argument_error("step misses 'anti'");
        step.anti = s["anti"].get<std::string>();
        step.lambda = s.value("lambda", step.mode == "direct" ? 0.2 : 1.0);
        if (step.lambda < 0.0) throw es::invalid_argument_error("lambda must be >= 0");
        steps.push_back(step);
    }

    const auto conv = convention_of(opts);
    es::DeltaModel current = es::load_delta_model(spec["expert"].get<std::string>(), conv);
    const es::DeltaModel original = frozen_expert ? current : es::DeltaModel{};

    ordered_json step_reports = ordered_json::array();
    for (const auto & step : steps) {
        const es::Mode m = step.mode == "direct" ? es::Mode::Direct : es::Mode::ExtSub;
        const auto cfg = make_config(opts, step.lambda, m);
        const auto neg = es::load_delta_model(step.anti, conv);
        ordered_json rep;
        rep["mode"] = step.mode;
        rep["anti"] = step.anti;
        rep["lambda"] = step.lambda;
        if (m == es::Mode::Direct) {
            current = es::direct_subtract(current, neg, step.lambda);
        } else {
            // theta+ for extraction is the running expert unless frozen
            const es::DeltaModel & anchor = frozen_expert ? original : current;
            auto [deficiency, report] = es::extract_deficiency(anchor, neg, cfg);
            current = es::add(current, deficiency, -step.lambda);
            rep["degenerate"] = degeneracy_json(report);
        }
        step_reports.push_back(std::move(rep));
    }

    ordered_json summary;
    summary["layers"] = current.deltas.size();
    summary["steps"] = std::move(step_reports);
    const auto trunc_report = write_model(current, spec["output"].get<std::string>(), opts, trunc);
    if (!trunc_report.empty()) summary["truncation"] = trunc_report;
    emit(summary);
    return 0;
}

int cmd_inspect(const std::string & input, const CommonOpts & opts) {
    const auto store = es::load_store(input);
    const auto model = es::assemble(store, convention_of(opts));

    ordered_json tensors = ordered_json::array();
    for (const auto & [name, entry] : store.entries) {
        tensors.push_back({
            {"name", name},
            {"dtype", es::dtype_name(entry.dtype)},
            {"shape", entry.shape},
        });
    }
    ordered_json layers = ordered_json::array();
    for (const auto & [key, layer] : model.layers) {
        layers.push_back({
            {"layer", key},
            {"rank", layer.rank},
            {"rows", layer.b.rows},
            {"cols", layer.a.cols},
        });
    }
    ordered_json passthrough = ordered_json::array();
    for (const auto & [name, entry] : model.passthrough) passthrough.push_back(name);

    ordered_json out;
    out["tensors"] = std::move(tensors);
    out["paired_layers"] = std::move(layers);
    out["passthrough"] = std::move(passthrough);
    out["metadata"] = store.metadata;
    emit(out);
    return 0;
}

int cmd_stats(const std::string & expert, const std::string & anti, const CommonOpts & opts) {
    const auto cfg = make_config(opts, 1.0, es::Mode::ExtSub);
    const auto conv = convention_of(opts);
    const auto base = es::load_delta_model(expert, conv);
    const auto neg = es::load_delta_model(anti, conv);
    warn_metadata_conflicts(base, neg);
    const auto report = es::geometry_stats(base, neg, cfg.eps);
    std::cout << report.to_json() << "\n";
    return 0;
}

int cmd_truncate(const std::string & input, const std::string & out, std::size_t rank,
                 const CommonOpts & opts) {
    make_config(opts, 0.0, es::Mode::Direct); // thread setup
    const auto model = es::load_delta_model(input, convention_of(opts));
    TruncateOpts trunc;
    trunc.truncate = true;
    trunc.truncate_rank = rank;
    ordered_json summary;
    summary["layers"] = model.deltas.size();
    summary["truncation"] = write_model(model, out, opts, trunc);
    emit(summary);
    return 0;
}

int cmd_repn(const std::string & input, std::size_t n, double threshold) {
    const auto score = es::score_file(input, n);
    double max_score = 0.0;
    std::size_t over = 0;
    for (double v : score.per_text) {
        max_score = std::max(max_score, v);
        if (v > threshold) over++;
    }
    ordered_json out;
    out["n"] = n;
    out["count"] = score.per_text.size();
    out["mean"] = score.mean;
    out["max"] = max_score;
    out["over_threshold_count"] = over;
    out["threshold"] = threshold;
    emit(out);
    return 0;
}

} // namespace

int main(int argc, char ** argv) {
    CLI::App app{"arithmetic on low-rank adapter checkpoints"};
    app.require_subcommand(1);

    CommonOpts opts;
    TruncateOpts trunc;
    std::string expert, anti, input, output, mode = "ext", spec_path;
    std::optional<double> lambda;
    double lambda_raw = -1.0;
    std::size_t rank = 0;
    std::size_t ngram = 4;
    double threshold = 20.0;

    auto add_trunc = [&](CLI::App * cmd) {
        cmd->add_flag("--truncate", trunc.truncate,
                      "re-factorize output to the source rank instead of storing full deltas");
        cmd->add_option("--truncate-rank", trunc.truncate_rank, "explicit truncation rank");
    };

    auto * sub = app.add_subcommand("subtract", "unlearn an anti-expert from an expert");
    sub->add_option("--expert", expert)->required();
    sub->add_option("--anti", anti)->required();
    sub->add_option("--mode", mode)->check(CLI::IsMember({"direct", "ext"}));
    sub->add_option("--lambda", lambda_raw, "subtraction weight (default 1.0 ext / 0.2 direct)");
    sub->add_option("-o,--output", output)->required();
    add_common(sub, opts);
    add_trunc(sub);

    auto * ext = app.add_subcommand("extract", "extract the deficiency component");
    ext->add_option("--expert", expert)->required();
    ext->add_option("--anti", anti)->required();
    ext->add_option("-o,--output", output)->required();
    add_common(ext, opts);
    add_trunc(ext);

    auto * comp = app.add_subcommand("compose", "run an ordered pipeline from a JSON spec");
    comp->add_option("--spec", spec_path)->required();
    add_common(comp, opts);

    auto * insp = app.add_subcommand("inspect", "list tensors and paired layers");
    insp->add_option("--input", input)->required();
    add_common(insp, opts);

    auto * st = app.add_subcommand("stats", "geometry diagnostics between two checkpoints");
    st->add_option("--expert", expert)->required();
    st->add_option("--anti", anti)->required();
    add_common(st, opts);

    auto * tr = app.add_subcommand("truncate", "re-factorize a checkpoint at a given rank");
    tr->add_option("--input", input)->required();
    tr->add_option("-o,--output", output)->required();
    tr->add_option("--rank", rank)->required();
    add_common(tr, opts);

    auto * rp = app.add_subcommand("repn", "n-gram repetition score of a generations file");
    rp->add_option("--input", input)->required();
    rp->add_option("--n", ngram);
    rp->add_option("--threshold", threshold);

    CLI11_PARSE(app, argc, argv);

    try {
        if (sub->count("--lambda") > 0) {
            if (lambda_raw < 0.0) throw es::invalid_argument_error("lambda must be >= 0");
            lambda = lambda_raw;
        }
        if (sub->parsed())  return cmd_subtract(expert, anti, mode, lambda, output, opts, trunc);
        if (ext->parsed())  return cmd_extract(expert, anti, output, opts, trunc);
        if (comp->parsed()) return cmd_compose(spec_path, opts);
        if (insp->parsed()) return cmd_inspect(input, opts);
        if (st->parsed())   return cmd_stats(expert, anti, opts);
        if (tr->parsed())   return cmd_truncate(input, output, rank, opts);
        if (rp->parsed())   return cmd_repn(input, ngram, threshold);
    } catch (const es::Error & e) {
        ordered_json err = {{"code", e.code()}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    } catch (const std::exception & e) {
        ordered_json err = {{"code", "Internal"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
