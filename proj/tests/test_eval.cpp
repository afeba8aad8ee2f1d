#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mxpp/ablate.hpp"
#include "mxpp/eval.hpp"
#include "mxpp/metrics.hpp"

namespace fs = std::filesystem;
using namespace mxpp;

namespace {

std::string temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("mxpp_eval_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

const std::string& small_data() {
    static std::string dir = [] {
        const std::string d = temp_dir("data");
        DatasetSpec spec;
        spec.n_fonts = 6;
        spec.n_unseen_fonts = 2;
        spec.n_chars = 16;
        spec.n_unseen_chars = 4;
        spec.seed = 21;
        make_dataset(spec, d);
        return d;
    }();
    return dir;
}

} // namespace

TEST_CASE("evaluate: row counts, aggregates, determinism, leakage audit") {
    Dataset ds = Dataset::open(small_data());
    ModelParams<float> model = build_variant<float>(Variant::Full, ds.spec().n_train_fonts(), 77);

    const std::string out = temp_dir("rep");
    EvalReport ufuc = evaluate(model, ds, EvalSplit::UFUC, 3, 5, out);
    CHECK(ufuc.pairs.size() == 2 * 4); // unseen fonts x unseen chars
    CHECK(audit_no_train_reads(ds));

    EvalReport ufsc = evaluate(model, ds, EvalSplit::UFSC, 3, 5);
    CHECK(ufsc.pairs.size() == 2 * 12); // unseen fonts x train chars
    CHECK(audit_no_train_reads(ds));

    // Aggregates are exact means of the per-pair table.
    double l1 = 0, rmse = 0, ssim = 0;
    for (const auto& p : ufuc.pairs) {
        l1 += p.l1;
        rmse += p.rmse;
        ssim += p.ssim;
        CHECK(p.l1 >= 0.0);
        CHECK(p.rmse >= 0.0);
        CHECK(p.ssim >= -1.0);
        CHECK(p.ssim <= 1.0);
    }
    const double n = static_cast<double>(ufuc.pairs.size());
    CHECK(std::abs(ufuc.mean_l1 - l1 / n) < 1e-9);
    CHECK(std::abs(ufuc.mean_rmse - rmse / n) < 1e-9);
    CHECK(std::abs(ufuc.mean_ssim - ssim / n) < 1e-9);

    // Determinism given (model, dataset, split, seed).
    EvalReport again = evaluate(model, ds, EvalSplit::UFUC, 3, 5);
    REQUIRE(again.pairs.size() == ufuc.pairs.size());
    for (size_t i = 0; i < again.pairs.size(); ++i) {
        CHECK(again.pairs[i].l1 == ufuc.pairs[i].l1);
        CHECK(again.pairs[i].ssim == ufuc.pairs[i].ssim);
    }

    // Report files exist and the pair table row count matches.
    std::ifstream tsv(out + "/ufuc_pairs.tsv");
    REQUIRE(tsv.good());
    std::string line;
    int rows = -1; // header
    while (std::getline(tsv, line))
        if (!line.empty()) ++rows;
    CHECK(rows == static_cast<int>(ufuc.pairs.size()));
    CHECK(fs::exists(out + "/ufuc_grid.pgm"));
    CHECK(fs::exists(out + "/ufuc_summary.txt"));
}

TEST_CASE("a perfect generator scores the oracle identity values") {
    // Feeding ground-truth targets through the metric path: the per-pair
    // scores collapse to L1=0, RMSE=0, SSIM=1.
    Dataset ds = Dataset::open(small_data());
    for (int f : ds.split().unseen_fonts)
        for (int c : ds.split().unseen_chars) {
            auto target = ds.load_image(f, c);
            CHECK(l1_metric(target, target) == 0.0);
            CHECK(rmse_metric(target, target) == 0.0);
            CHECK(ssim_metric(target, target) == doctest::Approx(1.0).epsilon(1e-12));
        }
}

TEST_CASE("the audit flags train-split reads") {
    Dataset ds = Dataset::open(small_data());
    ds.clear_read_log();
    ds.load_image(0, 0); // train font, train char
    CHECK_FALSE(audit_no_train_reads(ds));
}

TEST_CASE("evaluate validates its reference budget") {
    Dataset ds = Dataset::open(small_data());
    ModelParams<float> model = build_variant<float>(Variant::Full, ds.spec().n_train_fonts(), 1);
    CHECK_THROWS_AS(evaluate(model, ds, EvalSplit::UFUC, 4, 0), config_error); // only 3 other chars
    CHECK_THROWS_AS(evaluate(model, ds, EvalSplit::UFUC, 0, 0), config_error);
}

TEST_CASE("synthesize produces an in-range image sensitive to style refs") {
    Dataset ds = Dataset::open(small_data());
    ModelParams<float> model = build_variant<float>(Variant::Full, ds.spec().n_train_fonts(), 3);
    const auto content = ds.load_image(0, 1);
    const auto r1 = ds.load_image(4, 2);
    const auto r2 = ds.load_image(5, 3);
    auto img_a = synthesize(model, content, {r1});
    auto img_b = synthesize(model, content, {r2});
    CHECK(img_a.size() == 1024);
    for (float v : img_a) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    CHECK(img_a != img_b);
}

TEST_CASE("micro ablation sweep writes the comparison table") {
    TrainConfig base;
    base.steps = 2;
    base.batch_size = 2;
    base.n_style_refs = 2;
    base.data_dir = small_data();
    base.out_dir = temp_dir("ablate");

    AblationResult result = run_ablation(base, 1, 2);
    CHECK(result.runs.size() == 3);
    CHECK(fs::exists(result.table_path));
    for (Variant v : {Variant::Full, Variant::NoHae, Variant::NoCsh}) {
        CHECK(result.mean_ufuc_l1(v) > 0.0);
        CHECK(result.mean_ufuc_ssim(v) <= 1.0);
    }

    std::ifstream tsv(result.table_path);
    std::string line;
    int rows = 0;
    while (std::getline(tsv, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 1 + 3 + 3); // header + per-run rows + mean rows
}
