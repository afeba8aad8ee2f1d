#pragma once

#include <string>
#include <vector>

#include "mxpp/dataset.hpp"
#include "mxpp/trainer.hpp"

namespace mxpp {

enum class EvalSplit { UFSC, UFUC };

inline const char* split_name(EvalSplit s) { return s == EvalSplit::UFSC ? "ufsc" : "ufuc"; }

inline EvalSplit split_from_name(const std::string& s) {
    if (s == "ufsc") return EvalSplit::UFSC;
    if (s == "ufuc") return EvalSplit::UFUC;
    throw config_error("unknown split '" + s + "' (expected ufsc|ufuc)");
}

struct EvalPair {
    int font_id = -1;
    int char_id = -1;
    double l1 = 0.0, rmse = 0.0, ssim = 0.0;
};

struct EvalReport {
    std::string split;
    std::vector<EvalPair> pairs;
    double mean_l1 = 0.0, mean_rmse = 0.0, mean_ssim = 0.0;
    int n_style_refs = 0;
    uint64_t seed = 0;
    std::string grid_path;
};

// Inference-mode synthesis: content encoded from one image, style from the
// mean of the reference bundles.
std::vector<float> synthesize(const ModelParams<float>& params, const std::vector<float>& content_image,
                              const std::vector<std::vector<float>>& ref_images);

// Runs the unseen-font protocol: for each (unseen font, allowed char) pair,
// style references come from the same font's other allowed characters, the
// content glyph is re-rendered in the canonical base font, and the result is
// scored against the ground-truth render. The dataset read log is cleared at
// entry so the train-split audit below covers exactly this call.
EvalReport evaluate(const ModelParams<float>& params, const Dataset& ds, EvalSplit split,
                    int n_style_refs, uint64_t seed, const std::string& out_dir = "");

// True when no logged read touched a train-split (font, char) pair.
bool audit_no_train_reads(const Dataset& ds);

} // namespace mxpp
