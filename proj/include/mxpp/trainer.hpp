#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mxpp/checkpoint.hpp"
#include "mxpp/dataset.hpp"
#include "mxpp/model.hpp"

namespace mxpp {

enum class Variant { Full, NoHae, NoCsh };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::NoHae: return "no_hae";
        case Variant::NoCsh: return "no_csh";
    }
    throw config_error("variant_name: unknown variant");
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "full") return Variant::Full;
    if (s == "no_hae") return Variant::NoHae;
    if (s == "no_csh") return Variant::NoCsh;
    throw config_error("unknown variant '" + s + "' (expected full|no_hae|no_csh)");
}

struct TrainConfig {
    int steps = 5000;
    int batch_size = 8;
    double lr = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 0;
    LossWeights weights;
    Variant variant = Variant::Full;
    std::string data_dir;
    std::string out_dir;
    int n_style_refs = 4;
    int checkpoint_every = 500;

    void validate() const {
        if (steps <= 0) throw config_error("TrainConfig: steps must be > 0");
        if (batch_size <= 0) throw config_error("TrainConfig: batch_size must be > 0");
        if (n_style_refs < 1) throw config_error("TrainConfig: n_style_refs must be >= 1");
        if (checkpoint_every < 1) throw config_error("TrainConfig: checkpoint_every must be >= 1");
        if (!(lr > 0)) throw config_error("TrainConfig: lr must be > 0");
        if (data_dir.empty()) throw config_error("TrainConfig: data_dir is required");
        if (out_dir.empty()) throw config_error("TrainConfig: out_dir is required");
    }
};

// key = value file, '#' comments, unknown keys rejected.
TrainConfig load_train_config(const std::string& path);

// ---------------------------------------------------------------------------
// model parameter bundle

template <typename S>
struct ModelParams {
    EncoderConfig enc_cfg;
    int n_train_fonts = 0;
    Variant variant = Variant::Full;
    EncoderParams<S> enc;
    ClassifierParams<S> cls;
    GeneratorParams<S> gen;
    DiscriminatorParams<S> disc;

    using Named = std::vector<std::pair<std::string, Tensor<S>>>;

    Named named() const {
        Named out;
        enc.named(out);
        cls.named(out);
        gen.named(out);
        disc.named(out);
        return out;
    }

    Named named_generator_side() const {
        Named out;
        enc.named(out);
        cls.named(out);
        gen.named(out);
        return out;
    }

    Named named_discriminator_side() const {
        Named out;
        disc.named(out);
        return out;
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& [name, t] : named()) n += t.numel();
        return n;
    }

    void zero_all_grads() const {
        for (auto& [name, t] : named()) const_cast<Tensor<S>&>(t).zero_grad();
    }
};

// Instantiates the model for one ablation variant: `full` and `no_csh` share
// the attention-expert architecture, `no_hae` swaps every expert block for a
// 3x3 conv of equal width.
template <typename S>
ModelParams<S> build_variant(Variant variant, int n_train_fonts, uint64_t seed,
                             const EncoderConfig& enc_cfg = {}) {
    enc_cfg.validate();
    if (n_train_fonts < 1) throw config_error("build_variant: need at least one training font");
    ModelParams<S> p;
    p.enc_cfg = enc_cfg;
    p.n_train_fonts = n_train_fonts;
    p.variant = variant;
    Rng rng(Rng::mix(seed, 0x30DE1));
    p.enc = EncoderParams<S>::init(enc_cfg, rng, variant != Variant::NoHae);
    p.cls = ClassifierParams<S>::init(enc_cfg.k, enc_cfg.haa.c_bar, n_train_fonts, rng);
    p.gen = GeneratorParams<S>::init(enc_cfg.k, enc_cfg.haa.c_bar, rng);
    p.disc = DiscriminatorParams<S>::init(n_train_fonts, rng);
    return p;
}

// ---------------------------------------------------------------------------
// optimizer

// Standard bias-corrected Adam step on one tensor; t is the 1-based step
// count after this update.
template <typename S>
void adam_update(Tensor<S>& param, const std::vector<S>& grad, std::vector<S>& m, std::vector<S>& v,
                 double lr, double beta1, double beta2, double eps, int64_t t) {
    if (grad.size() != param.numel()) throw shape_error("adam_update: grad size mismatch");
    if (m.size() != param.numel() || v.size() != param.numel())
        throw shape_error("adam_update: moment size mismatch");
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < param.numel(); ++i) {
        const double g = static_cast<double>(grad[i]);
        const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * g;
        const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * g * g;
        m[i] = static_cast<S>(mi);
        v[i] = static_cast<S>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        param.data()[i] = static_cast<S>(static_cast<double>(param.data()[i]) -
                                         lr * mhat / (std::sqrt(vhat) + eps));
    }
    param.check_finite("adam_update");
}

template <typename S>
struct AdamOpt {
    double lr, beta1, beta2, eps;
    int64_t t = 0;
    std::map<std::string, std::pair<std::vector<S>, std::vector<S>>> moments;

    AdamOpt(double lr_, double b1, double b2, double eps_) : lr(lr_), beta1(b1), beta2(b2), eps(eps_) {}

    void step(const std::vector<std::pair<std::string, Tensor<S>>>& params) {
        ++t;
        for (auto& [name, tensor] : params) {
            auto& tn = const_cast<Tensor<S>&>(tensor);
            auto it = moments.find(name);
            if (it == moments.end()) {
                it = moments.emplace(name, std::make_pair(std::vector<S>(tn.numel(), S(0)),
                                                          std::vector<S>(tn.numel(), S(0)))).first;
            }
            // Untouched grads are zeros; the moments still decay.
            static const std::vector<S> no_grad;
            const std::vector<S>& g = tn.has_grad() ? tn.grad() : no_grad;
            if (g.empty()) {
                std::vector<S> zeros(tn.numel(), S(0));
                adam_update(tn, zeros, it->second.first, it->second.second, lr, beta1, beta2, eps, t);
            } else {
                adam_update(tn, g, it->second.first, it->second.second, lr, beta1, beta2, eps, t);
            }
        }
    }
};

// ---------------------------------------------------------------------------
// batches

struct Batch {
    std::vector<std::vector<float>> content_images;          // base-font renders
    std::vector<int> char_ids;
    std::vector<std::vector<std::vector<float>>> style_refs; // n_style_refs per item
    std::vector<int> font_ids;
    std::vector<std::vector<float>> target_images;
    std::vector<std::vector<int>> comp_gt;
};

// In-memory train-split images indexed by [font][char] position.
struct TrainData {
    std::vector<int> fonts; // train font ids
    std::vector<int> chars; // train char ids
    std::vector<std::vector<std::vector<float>>> images;
    std::vector<std::vector<int>> comp;

    static TrainData load(const Dataset& ds);
};

std::vector<int> epoch_permutation(uint64_t seed, int epoch, int n);
Batch make_batch(const TrainData& data, const TrainConfig& cfg, int step);

// ---------------------------------------------------------------------------
// the step and the loop

// One discriminator update (hinge, fake detached) followed by one update of
// encoder+heads+generator+classifiers on the weighted objective.
LossReport train_step(const Batch& batch, ModelParams<float>& params, AdamOpt<float>& opt_g,
                      AdamOpt<float>& opt_d, const TrainConfig& cfg);

struct TrainResult {
    std::string final_checkpoint;
    std::string loss_log;
    LossReport last_report;
};

// Full training run: seeded shuffling, periodic checkpoints, TSV loss log.
// With resume = true, continues from the newest checkpoint in out_dir.
// Existing outputs are never overwritten unless force is set.
TrainResult train(const TrainConfig& cfg, bool resume = false, bool force = false);

// ---------------------------------------------------------------------------
// checkpoint assembly

Checkpoint make_checkpoint(const ModelParams<float>& params, const AdamOpt<float>& opt_g,
                           const AdamOpt<float>& opt_d, const TrainConfig& cfg, int step);

struct RestoredState {
    ModelParams<float> params;
    AdamOpt<float> opt_g{2e-4, 0.5, 0.999, 1e-8};
    AdamOpt<float> opt_d{2e-4, 0.5, 0.999, 1e-8};
    TrainConfig config; // echoed numeric fields only; paths left empty
    int step = 0;
};

RestoredState restore_checkpoint(const Checkpoint& ckpt);

// Model-only restore for evaluation/generation.
ModelParams<float> model_from_checkpoint(const Checkpoint& ckpt);

} // namespace mxpp
