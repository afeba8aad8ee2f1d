#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "mxpp/dataset.hpp"
#include "mxpp/glyph.hpp"
#include "mxpp/rng.hpp"

namespace fs = std::filesystem;
using namespace mxpp;

namespace {

std::string temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("mxpp_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("rendering is deterministic and stays in [0,1]") {
    auto charset = build_charset(40, 7);
    FontParams font = make_font(3, 5);
    GlyphSample a = render_glyph(charset[10], font);
    GlyphSample b = render_glyph(charset[10], font);
    CHECK(a.image == b.image); // bitwise
    for (float v : a.image) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    CHECK(a.comp_gt == charset[10].components);
}

TEST_CASE("horizontal bar renders as one dark band, background exactly 1.0") {
    CharDef ch;
    ch.char_id = 0;
    ch.components = {static_cast<int>(Component::HBar)};
    ch.layout = Layout::Full;
    FontParams font; // neutral: width 2 default; use width 1 per the oracle
    font.font_id = 0;
    font.stroke_width = 1;
    GlyphSample s = render_glyph(ch, font);

    // Band rows: any row containing ink.
    std::set<int> band;
    for (int y = 0; y < kGlyphSize; ++y)
        for (int x = 0; x < kGlyphSize; ++x)
            if (s.image[y * kGlyphSize + x] < 0.9f) band.insert(y);
    REQUIRE_FALSE(band.empty());
    CHECK(band.size() <= 4);
    // Contiguous, centered near the slot middle.
    CHECK(*band.rbegin() - *band.begin() + 1 == static_cast<int>(band.size()));
    CHECK(*band.begin() >= 13);
    CHECK(*band.rbegin() <= 18);

    // Pixels outside the band rows: all exactly background.
    int other = 0, exact = 0;
    for (int y = 0; y < kGlyphSize; ++y) {
        if (band.count(y)) continue;
        for (int x = 0; x < kGlyphSize; ++x) {
            ++other;
            if (s.image[y * kGlyphSize + x] == 1.0f) ++exact;
        }
    }
    CHECK(static_cast<double>(exact) >= 0.95 * other);
}

TEST_CASE("shear shifts the vertical-bar centroid monotonically down the rows") {
    CharDef ch;
    ch.char_id = 0;
    ch.components = {static_cast<int>(Component::VBar)};
    ch.layout = Layout::Full;
    FontParams upright;
    upright.font_id = 0;
    FontParams slanted = upright;
    slanted.shear = 0.4;

    auto centroids = [](const GlyphSample& s) {
        std::vector<std::pair<int, double>> rows;
        for (int y = 0; y < kGlyphSize; ++y) {
            double mass = 0.0, cx = 0.0;
            for (int x = 0; x < kGlyphSize; ++x) {
                const double ink = 1.0 - s.image[y * kGlyphSize + x];
                mass += ink;
                cx += ink * x;
            }
            if (mass > 0.5) rows.emplace_back(y, cx / mass);
        }
        return rows;
    };

    auto straight = centroids(render_glyph(ch, upright));
    for (size_t i = 1; i < straight.size(); ++i)
        CHECK(straight[i].second == doctest::Approx(straight[0].second).epsilon(1e-9));

    auto sheared = centroids(render_glyph(ch, slanted));
    REQUIRE(sheared.size() >= 8);
    for (size_t i = 1; i < sheared.size(); ++i) CHECK(sheared[i].second > sheared[i - 1].second);
}

TEST_CASE("charset sampling: determinism, coverage, and capacity") {
    auto a = build_charset(60, 7);
    auto b = build_charset(60, 7);
    REQUIRE(a.size() == 60);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].components == b[i].components);
        CHECK(a[i].layout == b[i].layout);
    }

    std::set<int> seen;
    for (const auto& c : a) seen.insert(c.components.begin(), c.components.end());
    CHECK(seen.size() == 10);

    // Coverage prefix: all ten components inside the first 12 characters.
    auto pref = build_charset(80, 3, 12);
    std::set<int> prefix_comps;
    for (int i = 0; i < 12; ++i)
        prefix_comps.insert(pref[i].components.begin(), pref[i].components.end());
    CHECK(prefix_comps.size() == 10);

    CHECK(charset_capacity() == 220);
    CHECK_THROWS_AS(build_charset(221, 0), config_error);
    CHECK_THROWS_AS(build_charset(0, 0), config_error);
}

TEST_CASE("component_set returns ground truth and rejects unknown ids") {
    auto charset = build_charset(30, 11);
    for (const auto& c : charset) CHECK(component_set(c.char_id, charset) == c.components);
    CHECK_THROWS_AS(component_set(999, charset), config_error);
}

TEST_CASE("font parameters honor their ranges; font 0 is neutral") {
    FontParams base = make_font(9, 0);
    CHECK(base.shear == 0.0);
    CHECK(base.scale == 1.0);
    CHECK(base.contrast == 1.0);
    for (int f = 1; f < 20; ++f) {
        FontParams p = make_font(9, f);
        CHECK(p.stroke_width >= 1);
        CHECK(p.stroke_width <= 3);
        CHECK(p.shear >= -0.4);
        CHECK(p.shear <= 0.4);
        CHECK(p.scale >= 0.8);
        CHECK(p.scale <= 1.0);
        CHECK(p.contrast >= 0.7);
        CHECK(p.contrast <= 1.0);
    }
}

TEST_CASE("pgm round trip and header layout") {
    const std::string dir = temp_dir("pgm");
    std::vector<float> img(32 * 32);
    Rng rng(5);
    for (auto& v : img) v = static_cast<float>(rng.uniform());
    const std::string path = dir + "/x.pgm";
    write_pgm(path, img);

    const std::string raw = slurp(path);
    CHECK(raw.substr(0, 3) == "P5\n");
    CHECK(raw.find("32 32\n255\n") != std::string::npos);
    CHECK(raw.size() == raw.find("255\n") + 4 + 1024);

    auto back = read_pgm(path);
    for (size_t i = 0; i < img.size(); ++i)
        CHECK(back[i] == doctest::Approx(img[i]).epsilon(0.5 / 255.0 + 1e-6));

    CHECK_THROWS_AS(read_pgm(dir + "/missing.pgm"), format_error);
}

TEST_CASE("make_dataset writes the full grid with disjoint splits") {
    const std::string dir = temp_dir("ds");
    DatasetSpec spec;
    spec.n_fonts = 6;
    spec.n_unseen_fonts = 2;
    spec.n_chars = 20;
    spec.n_unseen_chars = 5;
    spec.seed = 13;
    auto manifest = make_dataset(spec, dir);
    CHECK(manifest.size() == 120);

    Dataset ds = Dataset::open(dir);
    CHECK(ds.split().train_fonts.size() == 4);
    CHECK(ds.split().unseen_fonts.size() == 2);
    CHECK(ds.split().train_chars.size() == 15);
    CHECK(ds.split().unseen_chars.size() == 5);

    // Disjointness.
    std::set<int> tf(ds.split().train_fonts.begin(), ds.split().train_fonts.end());
    for (int f : ds.split().unseen_fonts) CHECK_FALSE(tf.count(f));
    std::set<int> tc(ds.split().train_chars.begin(), ds.split().train_chars.end());
    for (int c : ds.split().unseen_chars) CHECK_FALSE(tc.count(c));

    // UFSC / UFUC sizes follow the split definition.
    CHECK(ds.split().unseen_fonts.size() * ds.split().train_chars.size() == 30);
    CHECK(ds.split().unseen_fonts.size() * ds.split().unseen_chars.size() == 10);

    // Manifest comp_gt equals the re-derived CharDef components everywhere.
    for (const auto& e : ds.manifest()) CHECK(e.comp_ids == ds.comp_gt(e.char_id));

    // Images on disk decode and match a fresh render.
    auto img = ds.load_image(3, 7);
    GlyphSample fresh = render_glyph(ds.charset()[7], make_font(spec.seed, 3));
    for (size_t i = 0; i < img.size(); ++i)
        CHECK(img[i] == doctest::Approx(fresh.image[i]).epsilon(0.5 / 255.0 + 1e-6));
}

TEST_CASE("same seed produces byte-identical dataset files") {
    const std::string d1 = temp_dir("det1");
    const std::string d2 = temp_dir("det2");
    DatasetSpec spec;
    spec.n_fonts = 4;
    spec.n_unseen_fonts = 1;
    spec.n_chars = 12;
    spec.n_unseen_chars = 3;
    spec.seed = 77;
    make_dataset(spec, d1);
    make_dataset(spec, d2);
    CHECK(slurp(d1 + "/manifest.tsv") == slurp(d2 + "/manifest.tsv"));
    CHECK(slurp(d1 + "/split.txt") == slurp(d2 + "/split.txt"));
    CHECK(slurp(d1 + "/img/f001_c003.pgm") == slurp(d2 + "/img/f001_c003.pgm"));
}

TEST_CASE("dataset spec validation") {
    DatasetSpec bad;
    bad.n_unseen_fonts = bad.n_fonts;
    CHECK_THROWS_AS(bad.validate(), config_error);
    DatasetSpec bad2;
    bad2.n_chars = 0;
    CHECK_THROWS_AS(bad2.validate(), config_error);
}
