#include "mxpp/ablate.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace fs = std::filesystem;

namespace mxpp {

namespace {

double mean_over(const std::vector<AblationRun>& runs, Variant v, double AblationRun::*field) {
    double acc = 0.0;
    int n = 0;
    for (const auto& r : runs) {
        if (r.variant != v) continue;
        acc += r.*field;
        ++n;
    }
    if (n == 0) throw config_error("ablation: no runs for variant");
    return acc / n;
}

} // namespace

double AblationResult::mean_ufuc_l1(Variant v) const { return mean_over(runs, v, &AblationRun::ufuc_l1); }
double AblationResult::mean_ufuc_ssim(Variant v) const { return mean_over(runs, v, &AblationRun::ufuc_ssim); }
double AblationResult::mean_ufsc_l1(Variant v) const { return mean_over(runs, v, &AblationRun::ufsc_l1); }
double AblationResult::mean_ufsc_ssim(Variant v) const { return mean_over(runs, v, &AblationRun::ufsc_ssim); }

AblationResult run_ablation(const TrainConfig& base, int n_seeds, int jobs, uint64_t eval_seed) {
    if (n_seeds < 1) throw config_error("run_ablation: n_seeds must be >= 1");
    if (jobs < 1) jobs = 1;

    const Variant variants[] = {Variant::Full, Variant::NoHae, Variant::NoCsh};
    std::vector<AblationRun> plan;
    for (Variant v : variants)
        for (int s = 0; s < n_seeds; ++s) {
            AblationRun r;
            r.variant = v;
            r.seed = static_cast<uint64_t>(s);
            r.out_dir = (fs::path(base.out_dir) / (std::string(variant_name(v)) + "_s" + std::to_string(s))).string();
            plan.push_back(std::move(r));
        }

    std::atomic<size_t> next{0};
    std::vector<std::string> errors(plan.size());
    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= plan.size()) return;
            AblationRun& run = plan[i];
            try {
                TrainConfig cfg = base;
                cfg.variant = run.variant;
                cfg.seed = run.seed;
                cfg.out_dir = run.out_dir;
                TrainResult tr = train(cfg);
                // Fresh dataset handle per run keeps read logs isolated.
                Dataset ds = Dataset::open(cfg.data_dir);
                ModelParams<float> model = model_from_checkpoint(Checkpoint::load(tr.final_checkpoint));
                EvalReport ufsc = evaluate(model, ds, EvalSplit::UFSC, cfg.n_style_refs, eval_seed, run.out_dir);
                EvalReport ufuc = evaluate(model, ds, EvalSplit::UFUC, cfg.n_style_refs, eval_seed, run.out_dir);
                run.ufsc_l1 = ufsc.mean_l1;
                run.ufsc_rmse = ufsc.mean_rmse;
                run.ufsc_ssim = ufsc.mean_ssim;
                run.ufuc_l1 = ufuc.mean_l1;
                run.ufuc_rmse = ufuc.mean_rmse;
                run.ufuc_ssim = ufuc.mean_ssim;
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };

    const int n_workers = std::min<int>(jobs, static_cast<int>(plan.size()));
    std::vector<std::thread> threads;
    for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    for (size_t i = 0; i < plan.size(); ++i)
        if (!errors[i].empty())
            throw std::runtime_error("ablation run " + plan[i].out_dir + " failed: " + errors[i]);

    AblationResult result;
    result.runs = std::move(plan);

    fs::create_directories(base.out_dir);
    result.table_path = (fs::path(base.out_dir) / "ablation.tsv").string();
    std::ofstream out(result.table_path);
    if (!out) throw format_error("run_ablation: cannot write " + result.table_path);
    out << "variant\tseed\tufsc_l1\tufsc_rmse\tufsc_ssim\tufuc_l1\tufuc_rmse\tufuc_ssim\n";
    for (const auto& r : result.runs)
        out << variant_name(r.variant) << "\t" << r.seed << "\t" << r.ufsc_l1 << "\t" << r.ufsc_rmse
            << "\t" << r.ufsc_ssim << "\t" << r.ufuc_l1 << "\t" << r.ufuc_rmse << "\t" << r.ufuc_ssim
            << "\n";
    for (Variant v : variants)
        out << variant_name(v) << "\tmean\t" << result.mean_ufsc_l1(v) << "\t-\t" << result.mean_ufsc_ssim(v)
            << "\t" << result.mean_ufuc_l1(v) << "\t-\t" << result.mean_ufuc_ssim(v) << "\n";
    return result;
}

} // namespace mxpp
