// Command-line front end: dataset generation, training, evaluation, glyph
// synthesis, the ablation sweep, and gradient verification.

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mxpp/ablate.hpp"
#include "mxpp/dataset.hpp"
#include "mxpp/eval.hpp"
#include "mxpp/gradsuite.hpp"
#include "mxpp/trainer.hpp"

namespace fs = std::filesystem;
using namespace mxpp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

std::vector<int> parse_id_list(const std::string& csv) {
    std::vector<int> ids;
    std::istringstream in(csv);
    std::string tok;
    while (std::getline(in, tok, ','))
        if (!tok.empty()) ids.push_back(std::stoi(tok));
    if (ids.empty()) throw config_error("expected a comma-separated id list");
    return ids;
}

void require_fresh_or_force(const fs::path& path, bool force) {
    if (!force && fs::exists(path))
        throw config_error(path.string() + " already exists (pass --force to overwrite)");
}

int run_gen_data(const DatasetSpec& spec, const std::string& out, bool force) {
    if (fs::exists(fs::path(out) / "manifest.tsv") && !force)
        throw config_error(out + " already contains a dataset (pass --force to overwrite)");
    spec.validate();
    const auto manifest = make_dataset(spec, out);
    std::cout << "wrote " << manifest.size() << " glyphs to " << out << "\n";
    return kExitOk;
}

int run_train(const std::string& config_path, bool resume, bool force, const CLI::App* cmd) {
    TrainConfig cfg = load_train_config(config_path);
    // Flag overrides beat config-file keys.
    if (cmd->count("--steps")) cfg.steps = cmd->get_option("--steps")->as<int>();
    if (cmd->count("--seed")) cfg.seed = cmd->get_option("--seed")->as<uint64_t>();
    if (cmd->count("--data")) cfg.data_dir = cmd->get_option("--data")->as<std::string>();
    if (cmd->count("--out")) cfg.out_dir = cmd->get_option("--out")->as<std::string>();
    if (cmd->count("--variant"))
        cfg.variant = variant_from_name(cmd->get_option("--variant")->as<std::string>());
    cfg.validate();
    TrainResult r = train(cfg, resume, force);
    std::cout << "final checkpoint: " << r.final_checkpoint << "\n";
    std::cout << "loss log: " << r.loss_log << "\n";
    return kExitOk;
}

int run_eval(const std::string& ckpt, const std::string& data, const std::string& split_s,
             const std::string& out, int refs, uint64_t seed, bool force) {
    const EvalSplit split = split_from_name(split_s);
    require_fresh_or_force(fs::path(out) / (split_s + "_pairs.tsv"), force);
    Dataset ds = Dataset::open(data);
    Checkpoint loaded = Checkpoint::load(ckpt);
    ModelParams<float> model = model_from_checkpoint(loaded);
    RestoredState st = restore_checkpoint(loaded);
    const int n_refs = refs > 0 ? refs : st.config.n_style_refs;
    EvalReport report = evaluate(model, ds, split, n_refs, seed, out);
    if (!audit_no_train_reads(ds)) throw config_error("evaluation touched a train-split pair");
    std::cout << "split=" << report.split << " pairs=" << report.pairs.size()
              << " mean_l1=" << report.mean_l1 << " mean_rmse=" << report.mean_rmse
              << " mean_ssim=" << report.mean_ssim << "\n";
    return kExitOk;
}

int run_generate(const std::string& ckpt, const std::string& data, int font_id,
                 const std::string& chars_csv, const std::string& out, int refs, uint64_t seed,
                 bool force) {
    Dataset ds = Dataset::open(data);
    Checkpoint loaded = Checkpoint::load(ckpt);
    ModelParams<float> model = model_from_checkpoint(loaded);
    RestoredState st = restore_checkpoint(loaded);
    const int n_refs = refs > 0 ? refs : st.config.n_style_refs;

    const std::vector<int> chars = parse_id_list(chars_csv);
    if (font_id < 0 || font_id >= ds.spec().n_fonts) throw config_error("font id out of range");
    fs::create_directories(out);
    const FontParams base_font = make_font(ds.spec().seed, 0);

    for (int c : chars) {
        if (c < 0 || c >= ds.spec().n_chars) throw config_error("char id out of range: " + std::to_string(c));
        std::vector<int> cand;
        for (int rc = 0; rc < ds.spec().n_chars; ++rc)
            if (rc != c) cand.push_back(rc);
        if (static_cast<int>(cand.size()) < n_refs)
            throw config_error("not enough reference characters in dataset");
        Rng rng(Rng::mix(seed, (static_cast<uint64_t>(font_id) << 32) | static_cast<uint64_t>(c)));
        std::vector<std::vector<float>> ref_imgs;
        for (int j = 0; j < n_refs; ++j) {
            const size_t pick = j + rng.below(cand.size() - j);
            std::swap(cand[j], cand[pick]);
            ref_imgs.push_back(ds.load_image(font_id, cand[j]));
        }
        const std::vector<float> content = render_glyph(ds.charset()[c], base_font).image;
        const std::vector<float> image = synthesize(model, content, ref_imgs);
        char name[64];
        std::snprintf(name, sizeof(name), "gen_f%03d_c%03d.pgm", font_id, c);
        const fs::path path = fs::path(out) / name;
        require_fresh_or_force(path, force);
        write_pgm(path.string(), image);
        std::cout << "wrote " << path.string() << "\n";
    }
    return kExitOk;
}

int run_ablate_cmd(const std::string& config_path, int seeds, int jobs) {
    TrainConfig base = load_train_config(config_path);
    base.validate();
    AblationResult result = run_ablation(base, seeds, jobs);
    std::cout << "ablation table: " << result.table_path << "\n";
    for (Variant v : {Variant::Full, Variant::NoHae, Variant::NoCsh})
        std::cout << variant_name(v) << ": mean UFUC l1=" << result.mean_ufuc_l1(v)
                  << " ssim=" << result.mean_ufuc_ssim(v) << "\n";
    return kExitOk;
}

int run_gradcheck(bool sabotage) {
    GradSuiteResult r = run_gradcheck_suite(sabotage);
    std::cout << r.report.summary();
    std::cout << "negative control " << (r.negative_control_detected ? "detected" : "MISSED") << "\n";
    if (!r.ok()) {
        std::cout << "gradient check FAILED (worst rel-err " << r.report.worst() << ")\n";
        return kExitValidation;
    }
    std::cout << "gradient check passed (worst rel-err " << r.report.worst() << ")\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot glyph style transfer: mixture-of-experts encoder with dual-branch attention"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate the procedural glyph dataset");
    DatasetSpec spec;
    std::string gen_out;
    bool gen_force = false;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--seed", spec.seed, "Dataset seed")->default_val(0);
    gen->add_option("--fonts", spec.n_fonts, "Total font count")->default_val(16);
    gen->add_option("--unseen-fonts", spec.n_unseen_fonts, "Fonts held out for evaluation")->default_val(4);
    gen->add_option("--chars", spec.n_chars, "Total character count")->default_val(80);
    gen->add_option("--unseen-chars", spec.n_unseen_chars, "Characters held out for evaluation")->default_val(20);
    gen->add_flag("--force", gen_force, "Overwrite an existing dataset");

    // train
    auto* tr = app.add_subcommand("train", "Train a model from a config file");
    std::string train_config;
    bool train_resume = false, train_force = false;
    tr->add_option("--config", train_config, "Config file (key = value lines)")->required();
    tr->add_flag("--resume", train_resume, "Continue from the newest checkpoint in out_dir");
    tr->add_flag("--force", train_force, "Overwrite existing training outputs");
    tr->add_option("--steps", "Override steps from the config");
    tr->add_option("--seed", "Override seed from the config");
    tr->add_option("--data", "Override data_dir from the config");
    tr->add_option("--out", "Override out_dir from the config");
    tr->add_option("--variant", "Override variant from the config (full|no_hae|no_csh)");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on an unseen-font split");
    std::string eval_ckpt, eval_data, eval_split, eval_out;
    int eval_refs = 0;
    uint64_t eval_seed = 0;
    bool eval_force = false;
    ev->add_option("--ckpt", eval_ckpt, "Checkpoint file")->required();
    ev->add_option("--data", eval_data, "Dataset directory")->required();
    ev->add_option("--split", eval_split, "ufsc or ufuc")->required();
    ev->add_option("--out", eval_out, "Report output directory")->required();
    ev->add_option("--refs", eval_refs, "Reference glyphs per style (default: from checkpoint)")->default_val(0);
    ev->add_option("--seed", eval_seed, "Reference selection seed")->default_val(0);
    ev->add_flag("--force", eval_force, "Overwrite existing report files");

    // generate
    auto* gn = app.add_subcommand("generate", "Synthesize glyphs for one font");
    std::string g_ckpt, g_data, g_chars, g_out;
    int g_font = 0, g_refs = 0;
    uint64_t g_seed = 0;
    bool g_force = false;
    gn->add_option("--ckpt", g_ckpt, "Checkpoint file")->required();
    gn->add_option("--data", g_data, "Dataset directory")->required();
    gn->add_option("--font-id", g_font, "Style font id")->required();
    gn->add_option("--chars", g_chars, "Comma-separated char ids")->required();
    gn->add_option("--out", g_out, "Output directory")->required();
    gn->add_option("--refs", g_refs, "Reference glyphs per style (default: from checkpoint)")->default_val(0);
    gn->add_option("--seed", g_seed, "Reference selection seed")->default_val(0);
    gn->add_flag("--force", g_force, "Overwrite existing images");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Train and evaluate full/no_hae/no_csh across seeds");
    std::string ab_config;
    int ab_seeds = 3, ab_jobs = 1;
    ab->add_option("--config", ab_config, "Base config file")->required();
    ab->add_option("--seeds", ab_seeds, "Number of seeds per variant")->default_val(3);
    ab->add_option("--jobs", ab_jobs, "Concurrent runs (each run stays single-threaded)")->default_val(1);

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Verify tape gradients against central differences");
    bool gc_sabotage = false;
    gc->add_flag("--sabotage", gc_sabotage, "Corrupt one gradient to exercise the failure path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (gen->parsed()) return run_gen_data(spec, gen_out, gen_force);
        if (tr->parsed()) return run_train(train_config, train_resume, train_force, tr);
        if (ev->parsed()) return run_eval(eval_ckpt, eval_data, eval_split, eval_out, eval_refs, eval_seed, eval_force);
        if (gn->parsed()) return run_generate(g_ckpt, g_data, g_font, g_chars, g_out, g_refs, g_seed, g_force);
        if (ab->parsed()) return run_ablate_cmd(ab_config, ab_seeds, ab_jobs);
        if (gc->parsed()) return run_gradcheck(gc_sabotage);
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitValidation;
}
