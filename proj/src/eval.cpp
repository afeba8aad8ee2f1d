#include "mxpp/eval.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "mxpp/metrics.hpp"

namespace fs = std::filesystem;

namespace mxpp {

std::vector<float> synthesize(const ModelParams<float>& params, const std::vector<float>& content_image,
                              const std::vector<std::vector<float>>& ref_images) {
    if (ref_images.empty()) throw config_error("synthesize: need at least one reference glyph");
    NoTapeScope<float> inference;
    Tensor<float> content = Tensor<float>::from_data({1, kImageSize, kImageSize}, content_image);
    auto content_bundles = encode(content, params.enc, params.enc_cfg);

    const int k = params.enc_cfg.k;
    std::vector<std::vector<Tensor<float>>> per_expert(k);
    for (const auto& img : ref_images) {
        Tensor<float> ref = Tensor<float>::from_data({1, kImageSize, kImageSize}, img);
        auto bundles = encode(ref, params.enc, params.enc_cfg);
        for (int e = 0; e < k; ++e) per_expert[e].push_back(bundles[e].f_s);
    }
    std::vector<Tensor<float>> style_maps;
    for (int e = 0; e < k; ++e)
        style_maps.push_back(ops::mul_scalar(ops::add_n(per_expert[e]),
                                             1.0f / static_cast<float>(per_expert[e].size())));
    Tensor<float> out = generate(content_bundles, style_maps, params.gen);
    return out.values();
}

namespace {

void write_grid(const std::string& path, const std::vector<std::vector<std::vector<float>>>& rows) {
    // Each row: content | first reference | generated | target.
    const int tiles = 4;
    const int h = static_cast<int>(rows.size()) * kGlyphSize;
    const int w = tiles * kGlyphSize;
    std::vector<float> grid(static_cast<size_t>(h) * w, 1.0f);
    for (size_t r = 0; r < rows.size(); ++r) {
        for (int t = 0; t < tiles; ++t) {
            const auto& tile = rows[r][t];
            for (int y = 0; y < kGlyphSize; ++y)
                for (int x = 0; x < kGlyphSize; ++x)
                    grid[(r * kGlyphSize + y) * static_cast<size_t>(w) + t * kGlyphSize + x] =
                        tile[static_cast<size_t>(y) * kGlyphSize + x];
        }
    }
    write_pgm(path, grid, w, h);
}

} // namespace

EvalReport evaluate(const ModelParams<float>& params, const Dataset& ds, EvalSplit split,
                    int n_style_refs, uint64_t seed, const std::string& out_dir) {
    const DatasetSpec& spec = ds.spec();
    const std::vector<int>& fonts = ds.split().unseen_fonts;
    const std::vector<int>& chars =
        split == EvalSplit::UFSC ? ds.split().train_chars : ds.split().unseen_chars;
    if (fonts.empty() || chars.empty()) throw config_error("evaluate: empty split");
    if (n_style_refs < 1 || n_style_refs > static_cast<int>(chars.size()) - 1)
        throw config_error("evaluate: n_style_refs must be in [1, " +
                           std::to_string(chars.size() - 1) + "]");

    ds.clear_read_log();

    const FontParams base_font = make_font(spec.seed, 0);
    EvalReport report;
    report.split = split_name(split);
    report.n_style_refs = n_style_refs;
    report.seed = seed;

    std::vector<std::vector<std::vector<float>>> grid_rows;
    for (int f : fonts) {
        for (int c : chars) {
            // References: other allowed chars of this font, seeded choice.
            std::vector<int> cand;
            cand.reserve(chars.size() - 1);
            for (int rc : chars)
                if (rc != c) cand.push_back(rc);
            Rng rng(Rng::mix(seed, (static_cast<uint64_t>(f) << 32) | static_cast<uint64_t>(c)));
            std::vector<std::vector<float>> refs;
            for (int j = 0; j < n_style_refs; ++j) {
                const size_t pick = j + rng.below(cand.size() - j);
                std::swap(cand[j], cand[pick]);
                refs.push_back(ds.load_image(f, cand[j]));
            }
            // Content re-rendered in the base font, never read from disk.
            const std::vector<float> content = render_glyph(ds.charset()[c], base_font).image;
            const std::vector<float> target = ds.load_image(f, c);
            const std::vector<float> generated = synthesize(params, content, refs);

            EvalPair pair;
            pair.font_id = f;
            pair.char_id = c;
            pair.l1 = l1_metric(generated, target);
            pair.rmse = rmse_metric(generated, target);
            pair.ssim = ssim_metric(generated, target);
            report.pairs.push_back(pair);
            if (grid_rows.size() < 8) grid_rows.push_back({content, refs[0], generated, target});
        }
    }

    for (const auto& p : report.pairs) {
        report.mean_l1 += p.l1;
        report.mean_rmse += p.rmse;
        report.mean_ssim += p.ssim;
    }
    const double n = static_cast<double>(report.pairs.size());
    report.mean_l1 /= n;
    report.mean_rmse /= n;
    report.mean_ssim /= n;

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        const std::string tsv = (fs::path(out_dir) / (report.split + "_pairs.tsv")).string();
        std::ofstream out(tsv);
        if (!out) throw format_error("evaluate: cannot write " + tsv);
        out << "font_id\tchar_id\tl1\trmse\tssim\n";
        for (const auto& p : report.pairs)
            out << p.font_id << "\t" << p.char_id << "\t" << p.l1 << "\t" << p.rmse << "\t" << p.ssim
                << "\n";

        const std::string summary = (fs::path(out_dir) / (report.split + "_summary.txt")).string();
        std::ofstream sum(summary);
        sum << "split=" << report.split << "\n";
        sum << "pairs=" << report.pairs.size() << "\n";
        sum << "mean_l1=" << report.mean_l1 << "\n";
        sum << "mean_rmse=" << report.mean_rmse << "\n";
        sum << "mean_ssim=" << report.mean_ssim << "\n";
        sum << "n_style_refs=" << report.n_style_refs << "\n";
        sum << "seed=" << report.seed << "\n";

        report.grid_path = (fs::path(out_dir) / (report.split + "_grid.pgm")).string();
        write_grid(report.grid_path, grid_rows);
    }
    return report;
}

bool audit_no_train_reads(const Dataset& ds) {
    for (const auto& [f, c] : ds.reads())
        if (ds.pair_in_train(f, c)) return false;
    return true;
}

} // namespace mxpp
