#pragma once

#include <string>
#include <vector>

#include "mxpp/eval.hpp"
#include "mxpp/trainer.hpp"

namespace mxpp {

struct AblationRun {
    Variant variant = Variant::Full;
    uint64_t seed = 0;
    std::string out_dir;
    double ufsc_l1 = 0, ufsc_rmse = 0, ufsc_ssim = 0;
    double ufuc_l1 = 0, ufuc_rmse = 0, ufuc_ssim = 0;
};

struct AblationResult {
    std::vector<AblationRun> runs;
    std::string table_path;

    double mean_ufuc_l1(Variant v) const;
    double mean_ufuc_ssim(Variant v) const;
    double mean_ufsc_l1(Variant v) const;
    double mean_ufsc_ssim(Variant v) const;
};

// Trains full / no_hae / no_csh for each seed in [0, n_seeds) from the base
// config, evaluates both unseen-font splits, and writes a comparison TSV to
// <out_dir>/ablation.tsv. Runs are independent and may execute on `jobs`
// worker threads; each run's training loop stays single-threaded, so results
// are identical to a sequential execution.
AblationResult run_ablation(const TrainConfig& base, int n_seeds, int jobs, uint64_t eval_seed = 0);

} // namespace mxpp
