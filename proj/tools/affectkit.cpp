// affectkit command-line front end.

#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "affectkit/checkpoint.hpp"
#include "affectkit/curation.hpp"
#include "affectkit/errors.hpp"
#include "affectkit/evaluation.hpp"
#include "affectkit/fixtures.hpp"
#include "affectkit/harness.hpp"
#include "affectkit/run_config.hpp"

namespace fs = std::filesystem;
using namespace affectkit;

namespace {

curation::SplitIndices read_index(const fs::path& path, Task task) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read index " + path.string());
    return curation::read_index_jsonl(in, task);
}

const curation::CuratedIndex& split_of(const curation::SplitIndices& indices, const std::string& split,
                                       const fs::path& path) {
    const auto it = indices.find(split);
    if (it == indices.end()) throw DataError(fmt::format("split '{}' not found in {}", split, path.string()));
    return it->second;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

// The index named by a checkpoint's own config, with its task.
struct CheckpointContext {
    checkpoint::CheckpointManifest manifest;
    RunConfig config;
};

CheckpointContext open_checkpoint(const fs::path& path) {
    CheckpointContext ctx{checkpoint::load(path), {}};
    ctx.config = ctx.manifest.config.get<RunConfig>();
    return ctx;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Affect recognition toolkit: curation, training, evaluation and reporting"};
    app.require_subcommand(1);

    // fixtures
    auto* fx = app.add_subcommand("fixtures", "Generate a synthetic dataset");
    std::string fx_spec, fx_out;
    std::uint64_t fx_seed = 0;
    fx->add_option("--spec", fx_spec, "Fixture spec (JSON); defaults apply when omitted")->check(CLI::ExistingFile);
    fx->add_option("--seed", fx_seed, "Generator seed");
    fx->add_option("--out", fx_out, "Output directory")->required();

    // curate
    auto* cu = app.add_subcommand("curate", "Parse annotation files and drop sentinel frames");
    std::string cu_task, cu_ann, cu_out, cu_report;
    double cu_va_min = -1.0, cu_va_max = 1.0;
    cu->add_option("--task", cu_task, "va | expr | au")->required();
    cu->add_option("--annotations", cu_ann, "Directory of <split>/<video>.txt files")->required()->check(
        CLI::ExistingDirectory);
    cu->add_option("--out", cu_out, "Curated index (JSON Lines)")->required();
    cu->add_option("--report", cu_report, "Also write the summary table here");
    cu->add_option("--va-min", cu_va_min, "Lowest valid VA value");
    cu->add_option("--va-max", cu_va_max, "Highest valid VA value");

    // train
    auto* tr = app.add_subcommand("train", "Train one task head");
    std::string tr_config, tr_task, tr_head, tr_out;
    bool tr_clip = false, tr_verbose = false;
    std::optional<std::size_t> tr_steps;
    std::optional<std::uint64_t> tr_seed;
    tr->add_option("--config", tr_config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    tr->add_option("--task", tr_task, "Override task: va | expr | au");
    tr->add_option("--head", tr_head, "Override head: fc | lstm");
    tr->add_flag("--clip", tr_clip, "Use the contrastive image/text path");
    tr->add_option("--out", tr_out, "Checkpoint path");
    tr->add_option("--steps", tr_steps, "Override optimizer steps");
    tr->add_option("--seed", tr_seed, "Override seed");
    tr->add_flag("-v,--verbose", tr_verbose, "Print validation progress");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on a split");
    std::string ev_ckpt, ev_split = "val", ev_index, ev_out;
    ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
    ev->add_option("--split", ev_split, "Split name");
    ev->add_option("--index", ev_index, "Curated index (defaults to the checkpoint's config)");
    ev->add_option("--out", ev_out, "Report path (default <checkpoint>.<split>.report.json)");

    // optimize-thresholds
    auto* ot = app.add_subcommand("optimize-thresholds", "Sweep per-AU thresholds and store them in the checkpoint");
    std::string ot_ckpt, ot_split = "val", ot_index;
    ot->add_option("--checkpoint", ot_ckpt, "AU checkpoint")->required()->check(CLI::ExistingFile);
    ot->add_option("--split", ot_split, "Split to sweep on");
    ot->add_option("--index", ot_index, "Curated index (defaults to the checkpoint's config)");

    // predict
    auto* pr = app.add_subcommand("predict", "Write per-frame predictions in annotation format");
    std::string pr_ckpt, pr_images, pr_out;
    pr->add_option("--checkpoint", pr_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
    pr->add_option("--images", pr_images, "Directory of <video>/*.ppm")->required()->check(CLI::ExistingDirectory);
    pr->add_option("--out", pr_out, "Output directory")->required();

    // report
    auto* re = app.add_subcommand("report", "Tabulate evaluation reports");
    std::string re_runs, re_out;
    re->add_option("--runs", re_runs, "Directory searched for *.report.json")->required()->check(
        CLI::ExistingDirectory);
    re->add_option("--out", re_out, "Also write the table here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*fx) {
            const auto spec = fx_spec.empty() ? fixtures::FixtureSpec{} : fixtures::load_fixture_spec(fx_spec);
            const auto manifest = fixtures::generate_fixtures(fx_seed, spec, fx_out);
            fmt::print("wrote fixtures for {} task(s) to {}\n", manifest.at("tasks").size(), fx_out);
        } else if (*cu) {
            const Task task = parse_task(cu_task);
            const auto indices = curation::curate_directory(cu_ann, task, {cu_va_min, cu_va_max});
            if (fs::path(cu_out).has_parent_path()) fs::create_directories(fs::path(cu_out).parent_path());
            std::ofstream out(cu_out);
            if (!out) throw DataError("cannot write " + cu_out);
            curation::write_index_jsonl(out, indices);
            const std::string table = curation::render_summary(curation::summarize(indices));
            std::cout << table;
            if (!cu_report.empty()) {
                std::ofstream rep(cu_report);
                if (!rep) throw DataError("cannot write " + cu_report);
                rep << table;
            }
        } else if (*tr) {
            RunConfig config = load_run_config(tr_config);
            if (!tr_task.empty()) config.task = parse_task(tr_task);
            if (!tr_head.empty()) config.head = parse_head(tr_head);
            if (tr_clip) config.clip = true;
            if (tr_steps) config.optimizer.steps = *tr_steps;
            if (tr_seed) config.seed = *tr_seed;
            if (!tr_out.empty()) config.out = tr_out;
            if (config.out.empty()) throw ContractViolation("train: no checkpoint path (--out or config.out)");
            if (config.clip && config.task != Task::EXPR) throw ContractViolation("--clip supports --task expr only");

            const auto indices = read_index(config.index_path(), config.task);
            const auto& train = split_of(indices, config.data.train_split, config.index_path());
            const auto& val = split_of(indices, config.data.val_split, config.index_path());
            const auto started = std::chrono::steady_clock::now();
            const auto manifest = harness::train_task(config, train, val, {{}, tr_verbose});
            const double seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
            checkpoint::save(config.out, manifest);
            fmt::print("{} {}: best val {:.4f} at step {} ({:.1f}s) -> {}\n", architecture_name(config),
                       task_name(config.task), manifest.best_metric, manifest.step, seconds, config.out);
        } else if (*ev) {
            auto ctx = open_checkpoint(ev_ckpt);
            const fs::path index_path = ev_index.empty() ? ctx.config.index_path() : fs::path(ev_index);
            const auto indices = read_index(index_path, ctx.config.task);
            const auto report = harness::evaluate_task(ctx.manifest, split_of(indices, ev_split, index_path));
            const fs::path out = ev_out.empty() ? fs::path(ev_ckpt + "." + ev_split + ".report.json") : fs::path(ev_out);
            write_json(out, harness::report_document(ctx.manifest, report, ev_split,
                                                     fs::path(ev_ckpt).filename().string()));
            fmt::print("{} {} on {}: {:.4f}", architecture_name(ctx.config), task_name(report.task), ev_split,
                       report.score);
            if (report.optimized_score) fmt::print(" (optimized thresholds {:.4f})", *report.optimized_score);
            fmt::print(" -> {}\n", out.string());
        } else if (*ot) {
            auto ctx = open_checkpoint(ot_ckpt);
            const fs::path index_path = ot_index.empty() ? ctx.config.index_path() : fs::path(ot_index);
            const auto indices = read_index(index_path, ctx.config.task);
            const auto t = harness::optimize_checkpoint_thresholds(ctx.manifest, split_of(indices, ot_split, index_path));
            checkpoint::save(ot_ckpt, ctx.manifest);
            fmt::print("thresholds: {}\n", nlohmann::json(t.values).dump());
        } else if (*pr) {
            const auto manifest = checkpoint::load(pr_ckpt);
            const std::size_t n = harness::predict_directory(manifest, pr_images, pr_out);
            fmt::print("wrote {} prediction file(s) to {}\n", n, pr_out);
        } else if (*re) {
            const auto rows = harness::collect_results(re_runs);
            const std::string table = evaluation::render_results_table(rows);
            std::cout << table;
            if (!re_out.empty()) {
                std::ofstream out(re_out);
                if (!out) throw DataError("cannot write " + re_out);
                out << table;
            }
        }
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 0;
}
