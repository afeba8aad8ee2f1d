#include "mxpp/trainer.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;

namespace mxpp {

// ---------------------------------------------------------------------------
// config file

namespace {

bool parse_bool_like_int(const std::string& v, int& out) {
    try {
        size_t pos = 0;
        out = std::stoi(v, &pos);
        return pos == v.size();
    } catch (...) {
        return false;
    }
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

} // namespace

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file " + path);
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error(path + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        try {
            if (key == "steps") cfg.steps = std::stoi(val);
            else if (key == "batch_size") cfg.batch_size = std::stoi(val);
            else if (key == "lr") cfg.lr = std::stod(val);
            else if (key == "adam_beta1") cfg.adam_beta1 = std::stod(val);
            else if (key == "adam_beta2") cfg.adam_beta2 = std::stod(val);
            else if (key == "adam_eps") cfg.adam_eps = std::stod(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "n_style_refs") cfg.n_style_refs = std::stoi(val);
            else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(val);
            else if (key == "variant") cfg.variant = variant_from_name(val);
            else if (key == "data_dir") cfg.data_dir = val;
            else if (key == "out_dir") cfg.out_dir = val;
            else if (key == "lambda_adv") cfg.weights.adv = std::stod(val);
            else if (key == "lambda_l1") cfg.weights.l1 = std::stod(val);
            else if (key == "lambda_s") cfg.weights.style = std::stod(val);
            else if (key == "lambda_c") cfg.weights.content = std::stod(val);
            else if (key == "lambda_csh") cfg.weights.csh = std::stod(val);
            else throw config_error(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        } catch (const config_error&) {
            throw;
        } catch (...) {
            throw config_error(path + ":" + std::to_string(lineno) + ": bad value for '" + key + "'");
        }
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// batches

TrainData TrainData::load(const Dataset& ds) {
    TrainData d;
    d.fonts = ds.split().train_fonts;
    d.chars = ds.split().train_chars;
    d.images.resize(d.fonts.size());
    for (size_t fi = 0; fi < d.fonts.size(); ++fi) {
        d.images[fi].reserve(d.chars.size());
        for (int c : d.chars) d.images[fi].push_back(ds.load_image(d.fonts[fi], c));
    }
    d.comp.reserve(d.chars.size());
    for (int c : d.chars) d.comp.push_back(ds.comp_gt(c));
    return d;
}

std::vector<int> epoch_permutation(uint64_t seed, int epoch, int n) {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    Rng rng(Rng::mix(seed, 0xE70C000000ULL + static_cast<uint64_t>(epoch)));
    rng.shuffle(p);
    return p;
}

Batch make_batch(const TrainData& data, const TrainConfig& cfg, int step) {
    const int nf = static_cast<int>(data.fonts.size());
    const int nc = static_cast<int>(data.chars.size());
    const int npairs = nf * nc;
    if (cfg.n_style_refs > nc - 1)
        throw config_error("make_batch: n_style_refs = " + std::to_string(cfg.n_style_refs) +
                           " needs at least " + std::to_string(cfg.n_style_refs + 1) + " train chars");

    Batch b;
    int cached_epoch = -1;
    std::vector<int> perm;
    for (int i = 0; i < cfg.batch_size; ++i) {
        const long long gidx = static_cast<long long>(step) * cfg.batch_size + i;
        const int epoch = static_cast<int>(gidx / npairs);
        const int pos = static_cast<int>(gidx % npairs);
        if (epoch != cached_epoch) {
            perm = epoch_permutation(cfg.seed, epoch, npairs);
            cached_epoch = epoch;
        }
        const int pair = perm[pos];
        const int fi = pair / nc;
        const int ci = pair % nc;

        b.content_images.push_back(data.images[0][ci]); // base font renders content
        b.char_ids.push_back(data.chars[ci]);
        b.font_ids.push_back(data.fonts[fi]);
        b.target_images.push_back(data.images[fi][ci]);
        b.comp_gt.push_back(data.comp[ci]);

        // Reference glyphs: distinct train chars of the same font, excluding
        // the target character.
        Rng rng(Rng::mix(cfg.seed, 0xBA7C000000ULL + static_cast<uint64_t>(gidx)));
        std::vector<int> cand;
        cand.reserve(nc - 1);
        for (int j = 0; j < nc; ++j)
            if (j != ci) cand.push_back(j);
        std::vector<std::vector<float>> refs;
        for (int j = 0; j < cfg.n_style_refs; ++j) {
            const size_t pick = j + rng.below(cand.size() - j);
            std::swap(cand[j], cand[pick]);
            refs.push_back(data.images[fi][cand[j]]);
        }
        b.style_refs.push_back(std::move(refs));
    }
    return b;
}

// ---------------------------------------------------------------------------
// train step

namespace {

Tensor<float> image_tensor(const std::vector<float>& image) {
    return Tensor<float>::from_data({1, kImageSize, kImageSize}, image);
}

} // namespace

LossReport train_step(const Batch& batch, ModelParams<float>& params, AdamOpt<float>& opt_g,
                      AdamOpt<float>& opt_d, const TrainConfig& cfg) {
    const int batch_n = static_cast<int>(batch.content_images.size());
    if (batch_n == 0) throw config_error("train_step: empty batch");
    const int k = params.enc_cfg.k;

    Tape<float> tape_g;
    Tape<float> tape_d;

    std::vector<Tensor<float>> fakes, targets;
    std::vector<Tensor<float>> recon_terms, style_ce_terms, content_terms, csh_terms;

    // Generator-side graph: every encode, the fusion/decoding, the
    // classifier and homogeneity terms.
    {
        TapeScope<float> scope(tape_g);
        for (int i = 0; i < batch_n; ++i) {
            Tensor<float> content = image_tensor(batch.content_images[i]);
            auto content_bundles = encode(content, params.enc, params.enc_cfg);

            std::vector<Tensor<float>> comp_logits;
            for (int e = 0; e < k; ++e)
                comp_logits.push_back(
                    content_classify(ops::spatial_mean(content_bundles[e].f_c), params.cls));
            content_terms.push_back(match_components(comp_logits, batch.comp_gt[i]).loss);
            csh_terms.push_back(csh_loss(pool_style(content_bundles), pool_content(content_bundles)));

            std::vector<std::vector<Tensor<float>>> per_expert_styles(k);
            for (const auto& ref_image : batch.style_refs[i]) {
                Tensor<float> ref = image_tensor(ref_image);
                auto ref_bundles = encode(ref, params.enc, params.enc_cfg);
                style_ce_terms.push_back(
                    ops::cross_entropy(style_classify(pool_style(ref_bundles), params.cls),
                                       batch.font_ids[i]));
                csh_terms.push_back(csh_loss(pool_style(ref_bundles), pool_content(ref_bundles)));
                for (int e = 0; e < k; ++e) per_expert_styles[e].push_back(ref_bundles[e].f_s);
            }
            // Few-shot style maps: order-invariant mean over the references.
            std::vector<Tensor<float>> style_maps;
            for (int e = 0; e < k; ++e)
                style_maps.push_back(ops::mul_scalar(
                    ops::add_n(per_expert_styles[e]),
                    1.0f / static_cast<float>(per_expert_styles[e].size())));

            fakes.push_back(generate(content_bundles, style_maps, params.gen));
            targets.push_back(image_tensor(batch.target_images[i]));
            recon_terms.push_back(ops::mean_abs_error(fakes.back(), targets.back()));
        }
    }

    // Discriminator update on real targets vs detached fakes.
    Tensor<float> adv_d;
    {
        TapeScope<float> scope(tape_d);
        std::vector<Tensor<float>> real_scores, fake_scores;
        for (int i = 0; i < batch_n; ++i)
            real_scores.push_back(discriminate(targets[i], batch.font_ids[i], params.disc));
        for (int i = 0; i < batch_n; ++i)
            fake_scores.push_back(discriminate(fakes[i].detach(), batch.font_ids[i], params.disc));
        adv_d = hinge_d_loss(real_scores, fake_scores);
        tape_d.backward(adv_d);
    }
    opt_d.step(params.named_discriminator_side());
    for (auto& [name, t] : params.named_discriminator_side()) const_cast<Tensor<float>&>(t).zero_grad();

    // Generator-side update against the freshly updated discriminator.
    LossReport report;
    {
        TapeScope<float> scope(tape_g);
        std::vector<Tensor<float>> fake_scores;
        for (int i = 0; i < batch_n; ++i)
            fake_scores.push_back(discriminate(fakes[i], batch.font_ids[i], params.disc));
        LossTerms<float> terms;
        terms.adv_g = hinge_g_loss(fake_scores);
        terms.adv_d = adv_d;
        terms.recon_l1 = ops::mean_of(recon_terms);
        terms.style_ce = ops::mean_of(style_ce_terms);
        terms.content_ce = ops::mean_of(content_terms);
        terms.csh = ops::mean_of(csh_terms);
        auto [total, rep] = total_loss(terms, cfg.weights, params.variant != Variant::NoCsh);
        report = rep;
        tape_g.backward(total);
    }
    opt_g.step(params.named_generator_side());
    params.zero_all_grads();
    return report;
}

// ---------------------------------------------------------------------------
// checkpoint assembly

namespace {

std::vector<float> to_floats(const std::vector<float>& v) { return v; }

void put_scalar(Checkpoint& ckpt, const std::string& name, double v) {
    ckpt.put(name, {1}, {static_cast<float>(v)});
}

double get_scalar(const Checkpoint& ckpt, const std::string& name) {
    const CkptTensor& t = ckpt.require(name);
    if (t.data.size() != 1) throw format_error("Checkpoint: " + name + " is not scalar");
    return static_cast<double>(t.data[0]);
}

void put_seed(Checkpoint& ckpt, uint64_t seed) {
    put_scalar(ckpt, "config.seed_lo", static_cast<double>(seed & 0xFFFFFFULL));
    put_scalar(ckpt, "config.seed_mid", static_cast<double>((seed >> 24) & 0xFFFFFFULL));
    put_scalar(ckpt, "config.seed_hi", static_cast<double>(seed >> 48));
}

uint64_t get_seed(const Checkpoint& ckpt) {
    const uint64_t lo = static_cast<uint64_t>(get_scalar(ckpt, "config.seed_lo"));
    const uint64_t mid = static_cast<uint64_t>(get_scalar(ckpt, "config.seed_mid"));
    const uint64_t hi = static_cast<uint64_t>(get_scalar(ckpt, "config.seed_hi"));
    return lo | (mid << 24) | (hi << 48);
}

void put_moments(Checkpoint& ckpt, const std::string& prefix, const AdamOpt<float>& opt,
                 const std::vector<std::pair<std::string, Tensor<float>>>& params) {
    for (const auto& [name, t] : params) {
        auto it = opt.moments.find(name);
        std::vector<float> m(t.numel(), 0.0f), v(t.numel(), 0.0f);
        if (it != opt.moments.end()) {
            m = it->second.first;
            v = it->second.second;
        }
        ckpt.put(prefix + ".m." + name, t.shape(), to_floats(m));
        ckpt.put(prefix + ".v." + name, t.shape(), to_floats(v));
    }
}

void load_moments(const Checkpoint& ckpt, const std::string& prefix, AdamOpt<float>& opt,
                  const std::vector<std::pair<std::string, Tensor<float>>>& params) {
    for (const auto& [name, t] : params) {
        const CkptTensor& m = ckpt.require(prefix + ".m." + name);
        const CkptTensor& v = ckpt.require(prefix + ".v." + name);
        if (m.data.size() != t.numel() || v.data.size() != t.numel())
            throw format_error("Checkpoint: moment size mismatch for " + name);
        opt.moments[name] = {m.data, v.data};
    }
}

} // namespace

Checkpoint make_checkpoint(const ModelParams<float>& params, const AdamOpt<float>& opt_g,
                           const AdamOpt<float>& opt_d, const TrainConfig& cfg, int step) {
    Checkpoint ckpt;
    for (const auto& [name, t] : params.named()) ckpt.put(name, t.shape(), t.values());
    put_moments(ckpt, "opt.g", opt_g, params.named_generator_side());
    put_moments(ckpt, "opt.d", opt_d, params.named_discriminator_side());
    put_scalar(ckpt, "meta.step", step);
    put_scalar(ckpt, "meta.t_g", static_cast<double>(opt_g.t));
    put_scalar(ckpt, "meta.t_d", static_cast<double>(opt_d.t));
    put_scalar(ckpt, "config.steps", cfg.steps);
    put_scalar(ckpt, "config.batch_size", cfg.batch_size);
    put_scalar(ckpt, "config.lr", cfg.lr);
    put_scalar(ckpt, "config.adam_beta1", cfg.adam_beta1);
    put_scalar(ckpt, "config.adam_beta2", cfg.adam_beta2);
    put_scalar(ckpt, "config.adam_eps", cfg.adam_eps);
    put_seed(ckpt, cfg.seed);
    put_scalar(ckpt, "config.n_style_refs", cfg.n_style_refs);
    put_scalar(ckpt, "config.checkpoint_every", cfg.checkpoint_every);
    put_scalar(ckpt, "config.variant", static_cast<double>(static_cast<int>(cfg.variant)));
    put_scalar(ckpt, "config.lambda_adv", cfg.weights.adv);
    put_scalar(ckpt, "config.lambda_l1", cfg.weights.l1);
    put_scalar(ckpt, "config.lambda_s", cfg.weights.style);
    put_scalar(ckpt, "config.lambda_c", cfg.weights.content);
    put_scalar(ckpt, "config.lambda_csh", cfg.weights.csh);
    put_scalar(ckpt, "config.k", params.enc_cfg.k);
    put_scalar(ckpt, "config.c_bar", params.enc_cfg.haa.c_bar);
    put_scalar(ckpt, "config.blocks_per_expert", params.enc_cfg.blocks_per_expert);
    put_scalar(ckpt, "config.s", params.enc_cfg.haa.s);
    put_scalar(ckpt, "config.ffn_mult", params.enc_cfg.haa.ffn_mult);
    put_scalar(ckpt, "config.n_train_fonts", params.n_train_fonts);
    return ckpt;
}

ModelParams<float> model_from_checkpoint(const Checkpoint& ckpt) {
    EncoderConfig enc_cfg;
    enc_cfg.k = static_cast<int>(get_scalar(ckpt, "config.k"));
    enc_cfg.blocks_per_expert = static_cast<int>(get_scalar(ckpt, "config.blocks_per_expert"));
    enc_cfg.haa.c_bar = static_cast<int>(get_scalar(ckpt, "config.c_bar"));
    enc_cfg.haa.s = static_cast<int>(get_scalar(ckpt, "config.s"));
    enc_cfg.haa.ffn_mult = static_cast<int>(get_scalar(ckpt, "config.ffn_mult"));
    const Variant variant = static_cast<Variant>(static_cast<int>(get_scalar(ckpt, "config.variant")));
    const int n_train_fonts = static_cast<int>(get_scalar(ckpt, "config.n_train_fonts"));

    ModelParams<float> params = build_variant<float>(variant, n_train_fonts, 0, enc_cfg);
    for (auto& [name, t] : params.named()) {
        const CkptTensor& src = ckpt.require(name);
        if (src.shape != t.shape())
            throw format_error("Checkpoint: shape mismatch for tensor " + name);
        auto& dst = const_cast<Tensor<float>&>(t);
        std::copy(src.data.begin(), src.data.end(), dst.data());
    }
    return params;
}

RestoredState restore_checkpoint(const Checkpoint& ckpt) {
    RestoredState st;
    st.params = model_from_checkpoint(ckpt);
    st.step = static_cast<int>(get_scalar(ckpt, "meta.step"));

    st.config.steps = static_cast<int>(get_scalar(ckpt, "config.steps"));
    st.config.batch_size = static_cast<int>(get_scalar(ckpt, "config.batch_size"));
    st.config.lr = get_scalar(ckpt, "config.lr");
    st.config.adam_beta1 = get_scalar(ckpt, "config.adam_beta1");
    st.config.adam_beta2 = get_scalar(ckpt, "config.adam_beta2");
    st.config.adam_eps = get_scalar(ckpt, "config.adam_eps");
    st.config.seed = get_seed(ckpt);
    st.config.n_style_refs = static_cast<int>(get_scalar(ckpt, "config.n_style_refs"));
    st.config.checkpoint_every = static_cast<int>(get_scalar(ckpt, "config.checkpoint_every"));
    st.config.variant = st.params.variant;
    st.config.weights.adv = get_scalar(ckpt, "config.lambda_adv");
    st.config.weights.l1 = get_scalar(ckpt, "config.lambda_l1");
    st.config.weights.style = get_scalar(ckpt, "config.lambda_s");
    st.config.weights.content = get_scalar(ckpt, "config.lambda_c");
    st.config.weights.csh = get_scalar(ckpt, "config.lambda_csh");

    st.opt_g = AdamOpt<float>(st.config.lr, st.config.adam_beta1, st.config.adam_beta2, st.config.adam_eps);
    st.opt_d = AdamOpt<float>(st.config.lr, st.config.adam_beta1, st.config.adam_beta2, st.config.adam_eps);
    st.opt_g.t = static_cast<int64_t>(get_scalar(ckpt, "meta.t_g"));
    st.opt_d.t = static_cast<int64_t>(get_scalar(ckpt, "meta.t_d"));
    load_moments(ckpt, "opt.g", st.opt_g, st.params.named_generator_side());
    load_moments(ckpt, "opt.d", st.opt_d, st.params.named_discriminator_side());
    return st;
}

// ---------------------------------------------------------------------------
// training loop

namespace {

std::string ckpt_path(const std::string& out_dir, int step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ckpt_%06d.mxpp", step);
    return (fs::path(out_dir) / buf).string();
}

// Newest checkpoint in a directory, by embedded step number; empty if none.
std::string find_latest_checkpoint(const std::string& out_dir, int* step_out) {
    int best = -1;
    std::string best_path;
    if (!fs::exists(out_dir)) return "";
    for (const auto& entry : fs::directory_iterator(out_dir)) {
        const std::string name = entry.path().filename().string();
        int step = 0;
        if (std::sscanf(name.c_str(), "ckpt_%d.mxpp", &step) == 1 && name.size() == 16) {
            if (step > best) {
                best = step;
                best_path = entry.path().string();
            }
        }
    }
    if (step_out) *step_out = best;
    return best_path;
}

void check_resume_compatible(const TrainConfig& want, const TrainConfig& have) {
    auto fail = [](const std::string& what) {
        throw config_error("resume: checkpoint config mismatch on " + what);
    };
    // Scalars echo through float32 tensors; compare at that precision.
    auto f32eq = [](double a, double b) { return static_cast<float>(a) == static_cast<float>(b); };
    if (want.batch_size != have.batch_size) fail("batch_size");
    if (!f32eq(want.lr, have.lr)) fail("lr");
    if (!f32eq(want.adam_beta1, have.adam_beta1)) fail("adam_beta1");
    if (!f32eq(want.adam_beta2, have.adam_beta2)) fail("adam_beta2");
    if (!f32eq(want.adam_eps, have.adam_eps)) fail("adam_eps");
    if (want.seed != have.seed) fail("seed");
    if (want.n_style_refs != have.n_style_refs) fail("n_style_refs");
    if (want.variant != have.variant) fail("variant");
    if (!f32eq(want.weights.adv, have.weights.adv) || !f32eq(want.weights.l1, have.weights.l1) ||
        !f32eq(want.weights.style, have.weights.style) ||
        !f32eq(want.weights.content, have.weights.content) || !f32eq(want.weights.csh, have.weights.csh))
        fail("loss weights");
}

} // namespace

TrainResult train(const TrainConfig& cfg, bool resume, bool force) {
    cfg.validate();
    Dataset ds = Dataset::open(cfg.data_dir);
    TrainData data = TrainData::load(ds);
    fs::create_directories(cfg.out_dir);

    const std::string log_path = (fs::path(cfg.out_dir) / "loss_log.tsv").string();

    ModelParams<float> params;
    AdamOpt<float> opt_g(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    AdamOpt<float> opt_d(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    int start_step = 0;

    int latest_step = -1;
    const std::string latest = find_latest_checkpoint(cfg.out_dir, &latest_step);
    if (resume) {
        if (latest.empty()) throw config_error("resume requested but no checkpoint found in " + cfg.out_dir);
        RestoredState st = restore_checkpoint(Checkpoint::load(latest));
        check_resume_compatible(cfg, st.config);
        if (st.step >= cfg.steps)
            throw config_error("resume: checkpoint step " + std::to_string(st.step) +
                               " already reaches steps = " + std::to_string(cfg.steps));
        params = std::move(st.params);
        opt_g = std::move(st.opt_g);
        opt_d = std::move(st.opt_d);
        // The echo is float32-rounded; carry on with the exact configured
        // hyperparameters so a resumed run is bitwise equal to an
        // uninterrupted one.
        opt_g.lr = opt_d.lr = cfg.lr;
        opt_g.beta1 = opt_d.beta1 = cfg.adam_beta1;
        opt_g.beta2 = opt_d.beta2 = cfg.adam_beta2;
        opt_g.eps = opt_d.eps = cfg.adam_eps;
        start_step = st.step;
    } else {
        if (!force && (!latest.empty() || fs::exists(log_path)))
            throw config_error("out_dir " + cfg.out_dir +
                               " already contains training outputs (resume, --force, or a fresh directory)");
        params = build_variant<float>(cfg.variant, ds.spec().n_train_fonts(), cfg.seed);
    }
    if (cfg.n_style_refs > ds.spec().n_train_chars() - 1)
        throw config_error("train: n_style_refs exceeds available reference characters");

    std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
    if (!log) throw format_error("train: cannot open loss log " + log_path);
    if (!resume)
        log << "step\tadv_g\tadv_d\trecon_l1\tstyle_ce\tcontent_ce\tcsh\ttotal\n";

    TrainResult result;
    for (int step = start_step; step < cfg.steps; ++step) {
        Batch batch = make_batch(data, cfg, step);
        LossReport r;
        try {
            r = train_step(batch, params, opt_g, opt_d, cfg);
        } catch (const numeric_error& e) {
            throw numeric_error("training aborted at step " + std::to_string(step) + ": " + e.what());
        }
        log << step << "\t" << r.adv_g << "\t" << r.adv_d << "\t" << r.recon_l1 << "\t" << r.style_ce
            << "\t" << r.content_ce << "\t" << r.csh << "\t" << r.total << "\n";
        result.last_report = r;
        const int done = step + 1;
        if (done % cfg.checkpoint_every == 0 || done == cfg.steps) {
            make_checkpoint(params, opt_g, opt_d, cfg, done).save(ckpt_path(cfg.out_dir, done));
        }
    }
    log.flush();
    result.final_checkpoint = ckpt_path(cfg.out_dir, cfg.steps);
    result.loss_log = log_path;
    return result;
}

} // namespace mxpp
