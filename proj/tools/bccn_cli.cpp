// Command-line front end: dataset generation, training, evaluation, the
// three report harnesses, Grad-CAM export, and standalone keyframe selection.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "bccn/activation_maps.hpp"
#include "bccn/experiments.hpp"

namespace fs = std::filesystem;

namespace {

nlohmann::json read_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw bccn::ConfigError("cannot open config file " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw bccn::ConfigError("config file " + path.string() + " is not valid JSON: " +
                                e.what());
    }
}

bccn::GenConfig parse_gen_config(const nlohmann::json& j) {
    bccn::GenConfig cfg;
    if (!j.is_object()) throw bccn::ConfigError("gen-data config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "num_classes") cfg.num_classes = bccn::detail::json_index(value, key);
        else if (key == "clips_per_class") cfg.clips_per_class = bccn::detail::json_index(value, key);
        else if (key == "frames") cfg.frames = bccn::detail::json_index(value, key);
        else if (key == "joints") cfg.joints = bccn::detail::json_index(value, key);
        else if (key == "height") cfg.height = bccn::detail::json_index(value, key);
        else if (key == "width") cfg.width = bccn::detail::json_index(value, key);
        else if (key == "seed") cfg.seed = bccn::detail::json_index(value, key);
        else if (key == "noise_std") cfg.noise_std = bccn::detail::json_number(value, key);
        else throw bccn::ConfigError("unknown gen-data config key '" + key + "'");
    }
    return cfg;
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string variant;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* variant_opt = nullptr;
    CLI::Option* out_opt = nullptr;
    CLI::Option* config_opt = nullptr;

    void attach(CLI::App* sub) {
        config_opt = sub->add_option("--config", config_path, "JSON config file");
        seed_opt = sub->add_option("--seed", seed, "RNG seed override");
        out_opt = sub->add_option("--out-dir", out_dir, "output directory");
        variant_opt = sub->add_option("--variant", variant, "model variant override");
    }

    nlohmann::json config_json() const {
        return config_opt->count() ? read_json_file(config_path) : nlohmann::json::object();
    }

    fs::path require_out_dir() const {
        if (!out_opt->count()) throw bccn::ConfigError("--out-dir is required");
        return fs::path(out_dir);
    }

    bccn::TrainConfig train_config() const {
        bccn::TrainConfig cfg = bccn::parse_train_config(config_json());
        if (seed_opt->count()) cfg.seed = seed;
        if (variant_opt->count()) cfg.variant = variant;
        if (cfg.manifest.empty()) {
            throw bccn::ConfigError("config must name a dataset manifest (key \"manifest\")");
        }
        return cfg;
    }
};

int cmd_gen_data(const CommonArgs& args) {
    bccn::GenConfig cfg = parse_gen_config(args.config_json());
    if (args.seed_opt->count()) cfg.seed = args.seed;
    const fs::path out = args.require_out_dir();
    bccn::ClipManifest manifest = bccn::generate_dataset(cfg, out);
    nlohmann::ordered_json summary;
    summary["out_dir"] = out.string();
    summary["clips"] = manifest.clips.size();
    summary["classes"] = cfg.num_classes;
    std::cout << summary.dump() << '\n';
    return 0;
}

int cmd_train(const CommonArgs& args) {
    bccn::TrainConfig cfg = args.train_config();
    const fs::path out = args.require_out_dir();
    bccn::Dataset ds = bccn::load_dataset(cfg.manifest);
    bccn::RunResult res = bccn::run_training(cfg, ds);
    bccn::save_run(res, out);

    nlohmann::ordered_json summary;
    summary["variant"] = cfg.variant;
    summary["seed"] = cfg.seed;
    summary["steps"] = res.outcome.log.empty() ? 0 : res.outcome.log.back().step;
    summary["best_val_top1"] = res.outcome.best_val_top1;
    summary["best_epoch"] = res.outcome.best_epoch;
    if (res.test_top1 >= 0.0) summary["test_top1"] = res.test_top1;
    if (res.selector) {
        try {
            summary["selector_val_hit_rate"] = bccn::selector_hit_rate(ds, "val");
        } catch (const bccn::ValueError&) {
            // no keyframe-critical val clips; nothing to report
        }
    }
    summary["out_dir"] = out.string();
    std::cout << summary.dump() << '\n';
    return 0;
}

int cmd_eval(const CommonArgs& args) {
    const nlohmann::json j = args.config_json();
    if (!j.contains("checkpoint")) {
        throw bccn::ConfigError("eval config needs a \"checkpoint\" directory");
    }
    fs::path ck_dir = j["checkpoint"].get<std::string>();
    bccn::Checkpoint ck = bccn::load_checkpoint(ck_dir);
    bccn::TrainConfig cfg = bccn::parse_train_config(ck.config);
    if (j.contains("manifest")) cfg.manifest = j["manifest"].get<std::string>();
    std::string split = cfg.eval_split;
    if (j.contains("split")) split = j["split"].get<std::string>();
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (key != "checkpoint" && key != "manifest" && key != "split") {
            throw bccn::ConfigError("unknown eval config key '" + key + "'");
        }
    }

    bccn::Dataset ds = bccn::load_dataset(cfg.manifest);
    bccn::apply_dataset_geometry(cfg, ds);
    cfg.validate();
    if (bccn::variant_needs_selection(cfg.variant)) {
        if (!bccn::checkpoint_has_selector(ck)) {
            throw bccn::ConfigError("checkpoint has no selector parameters, but variant '" +
                                    cfg.variant + "' needs keyframe selection");
        }
        bccn::SelectorParams sel = bccn::restore_selector(ck, cfg.selector);
        bccn::apply_selector(ds, sel);
    }
    bccn::Rng rng = bccn::Rng::child(0, 0);  // values are overwritten by the checkpoint
    std::unique_ptr<bccn::Model> model = bccn::build_variant(cfg, rng);
    bccn::restore_model(*model, ck);
    bccn::EvalResult ev = bccn::evaluate(*model, ds, split);

    nlohmann::ordered_json out;
    out["variant"] = cfg.variant;
    out["split"] = split;
    out["count"] = ev.count;
    out["top1_accuracy"] = ev.top1;
    out["mean_loss"] = ev.mean_loss;
    out["per_class_accuracy"] = ev.per_class;
    out["class_counts"] = ev.class_counts;
    std::cout << out.dump() << '\n';
    if (args.out_opt->count()) {
        fs::create_directories(args.out_dir);
        std::ofstream f(fs::path(args.out_dir) / "eval.json", std::ios::binary | std::ios::trunc);
        f << out.dump(2) << '\n';
    }
    return 0;
}

bccn::TrainConfig report_config(const CommonArgs& args) {
    bccn::TrainConfig cfg = args.train_config();
    if (args.seed_opt->count()) cfg.report_seeds = {args.seed};  // single-seed quick run
    return cfg;
}

int run_report(const CommonArgs& args, const std::string& basename,
               bccn::Report (*runner)(const bccn::TrainConfig&)) {
    bccn::TrainConfig cfg = report_config(args);
    const fs::path out = args.require_out_dir();
    bccn::Report report = runner(cfg);
    bccn::write_report(report, out, basename);
    std::cout << bccn::report_text(report);
    return 0;
}

int cmd_cam(const CommonArgs& args) {
    const nlohmann::json j = args.config_json();
    for (const char* key : {"checkpoint", "clip_id"}) {
        if (!j.contains(key)) throw bccn::ConfigError(std::string("cam config needs \"") + key + "\"");
    }
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (key != "checkpoint" && key != "manifest" && key != "clip_id" && key != "pathway" &&
            key != "target_class" && key != "stage") {
            throw bccn::ConfigError("unknown cam config key '" + key + "'");
        }
    }
    bccn::Checkpoint ck = bccn::load_checkpoint(fs::path(j["checkpoint"].get<std::string>()));
    bccn::TrainConfig cfg = bccn::parse_train_config(ck.config);
    if (j.contains("manifest")) cfg.manifest = j["manifest"].get<std::string>();

    bccn::Dataset ds = bccn::load_dataset(cfg.manifest);
    bccn::apply_dataset_geometry(cfg, ds);
    cfg.validate();
    if (bccn::variant_needs_selection(cfg.variant)) {
        bccn::SelectorParams sel = bccn::restore_selector(ck, cfg.selector);
        bccn::apply_selector(ds, sel);
    }
    bccn::Rng rng = bccn::Rng::child(0, 0);
    std::unique_ptr<bccn::Model> model = bccn::build_variant(cfg, rng);
    bccn::restore_model(*model, ck);
    auto* two_pathway = dynamic_cast<bccn::TwoPathwayVariant*>(model.get());
    if (!two_pathway) {
        throw bccn::ConfigError("variant '" + cfg.variant +
                                "' has no pathway feature maps to explain");
    }

    const std::string clip_id = j["clip_id"].get<std::string>();
    const bccn::ClipSample* sample = nullptr;
    for (const bccn::ClipSample& s : ds.samples)
        if (s.clip_id == clip_id) sample = &s;
    if (!sample) throw bccn::ConfigError("clip '" + clip_id + "' is not in the dataset");

    bccn::PathwaySelector pathway = bccn::PathwaySelector::Keyframe;
    if (j.contains("pathway")) {
        const std::string p = j["pathway"].get<std::string>();
        if (p == "keyframe") pathway = bccn::PathwaySelector::Keyframe;
        else if (p == "temporal") pathway = bccn::PathwaySelector::Temporal;
        else throw bccn::ConfigError("pathway must be \"keyframe\" or \"temporal\"");
    }
    std::size_t stage = bccn::kLastStage;
    if (j.contains("stage")) stage = bccn::detail::json_index(j["stage"], "stage");

    std::size_t target;
    if (j.contains("target_class")) {
        target = bccn::detail::json_index(j["target_class"], "target_class");
    } else {
        target = bccn::argmax_logit(model->forward(*sample).data());
    }

    bccn::Heatmap hm = bccn::gradcam(sample->video, sample->selected, two_pathway->model(),
                                     target, pathway, stage, clip_id);
    const fs::path out = args.require_out_dir();
    fs::create_directories(out);
    const fs::path base = out / (clip_id + "_" + bccn::pathway_name(pathway));
    bccn::write_heatmap(hm, base);

    nlohmann::ordered_json summary;
    summary["clip_id"] = clip_id;
    summary["target_class"] = target;
    summary["pathway"] = bccn::pathway_name(pathway);
    summary["frames"] = hm.frames;
    summary["height"] = hm.height;
    summary["width"] = hm.width;
    summary["base"] = base.string();
    std::cout << summary.dump() << '\n';
    return 0;
}

int cmd_select_keyframes(const CommonArgs& args) {
    const nlohmann::json j = args.config_json();
    if (!j.contains("manifest") && !args.config_opt->count()) {
        throw bccn::ConfigError("select-keyframes needs a config with a \"manifest\" key");
    }
    bccn::SelectorConfig scfg;
    std::optional<fs::path> ck_dir;
    fs::path manifest;
    std::size_t epochs = 12;
    double lr = 0.005;
    for (const auto& [key, value] : j.items()) {
        if (key == "manifest") manifest = fs::path(value.get<std::string>());
        else if (key == "checkpoint") ck_dir = fs::path(value.get<std::string>());
        else if (key == "selector") scfg = bccn::parse_selector_config(value, scfg);
        else if (key == "selector_epochs") epochs = bccn::detail::json_index(value, key);
        else if (key == "selector_lr") lr = bccn::detail::json_number(value, key);
        else throw bccn::ConfigError("unknown select-keyframes config key '" + key + "'");
    }
    if (manifest.empty()) throw bccn::ConfigError("select-keyframes config needs \"manifest\"");

    bccn::Dataset ds = bccn::load_dataset(manifest);
    scfg.joint_count = ds.manifest.config.joints;
    const std::uint64_t seed = args.seed_opt->count() ? args.seed : 1;

    bccn::SelectorParams params = [&] {
        if (ck_dir) {
            bccn::Checkpoint ck = bccn::load_checkpoint(*ck_dir);
            bccn::TrainConfig ck_cfg = bccn::parse_train_config(ck.config);
            return bccn::restore_selector(ck, ck_cfg.selector);
        }
        return std::move(bccn::train_selector(ds, scfg, epochs, lr, seed).params);
    }();

    const fs::path out = args.require_out_dir();
    fs::create_directories(out);
    std::ofstream rows(out / "selections.jsonl", std::ios::binary | std::ios::trunc);
    if (!rows) throw bccn::FormatError("cannot write selections.jsonl");
    for (bccn::ClipSample& s : ds.samples) {
        bccn::AttentionResult att =
            bccn::run_selector(s.skel_rows, params, params.config.num_keyframes);
        s.selected = att.selected;
        nlohmann::ordered_json row;
        row["clip_id"] = s.clip_id;
        row["frame_probs"] = att.frame_probs.data();
        row["selected"] = att.selected;
        rows << row.dump() << '\n';
    }

    nlohmann::ordered_json summary;
    summary["clips"] = ds.samples.size();
    summary["out_dir"] = out.string();
    try {
        summary["test_hit_rate"] = bccn::selector_hit_rate(ds, "test");
    } catch (const bccn::ValueError&) {
        // dataset has no keyframe-critical test clips
    }
    std::cout << summary.dump() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-pathway keyframe video classifier"};
    app.require_subcommand(1);

    CommonArgs gen, train, eval_args, prereq, fusion, ablate, cam, select;
    gen.attach(app.add_subcommand("gen-data", "generate a synthetic stick-figure dataset"));
    train.attach(app.add_subcommand("train", "train one model variant"));
    eval_args.attach(app.add_subcommand("eval", "evaluate a checkpoint on a dataset split"));
    prereq.attach(app.add_subcommand("prereq", "frame-fusion prerequisite report"));
    fusion.attach(app.add_subcommand("fusion", "fusion method comparison report"));
    ablate.attach(app.add_subcommand("ablate", "lateral-unit ablation report"));
    cam.attach(app.add_subcommand("cam", "export Grad-CAM heatmaps for one clip"));
    select.attach(app.add_subcommand("select-keyframes", "emit per-clip keyframe selections"));

    try {
        app.parse(argc, argv);
        if (app.get_subcommand("gen-data")->parsed()) return cmd_gen_data(gen);
        if (app.get_subcommand("train")->parsed()) return cmd_train(train);
        if (app.get_subcommand("eval")->parsed()) return cmd_eval(eval_args);
        if (app.get_subcommand("prereq")->parsed())
            return run_report(prereq, "prerequisite", bccn::run_prerequisite);
        if (app.get_subcommand("fusion")->parsed())
            return run_report(fusion, "fusion", bccn::run_fusion_comparison);
        if (app.get_subcommand("ablate")->parsed())
            return run_report(ablate, "ablation", bccn::run_ablation);
        if (app.get_subcommand("cam")->parsed()) return cmd_cam(cam);
        if (app.get_subcommand("select-keyframes")->parsed())
            return cmd_select_keyframes(select);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const bccn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const bccn::FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return 2;
    } catch (const bccn::NumericError& e) {
        std::cerr << "numeric abort: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
