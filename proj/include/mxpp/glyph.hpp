#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mxpp/error.hpp"

namespace mxpp {

// Primitive stroke alphabet. Ground-truth component labels for every
// generated character come straight from this enumeration.
enum class Component : int {
    HBar = 0,
    VBar = 1,
    DiagMain = 2,
    DiagAnti = 3,
    Cross = 4,
    Box = 5,
    HookLeft = 6,
    Arc = 7,
    Dot = 8,
    TJunction = 9,
};

enum class Layout : int {
    Full = 0,      // one slot covering the glyph box
    LeftRight = 1, // two side-by-side slots
    TopBottom = 2, // two stacked slots
    Triple = 3,    // left half + right-top + right-bottom
};

struct CharDef {
    int char_id = -1;
    std::vector<int> components; // sorted, distinct, 1..3 entries
    Layout layout = Layout::Full;
};

struct FontParams {
    int font_id = -1;
    int stroke_width = 2;    // pixels, in {1,2,3}
    double shear = 0.0;      // in [-0.4, 0.4]
    double scale = 1.0;      // in [0.8, 1.0]
    uint64_t jitter_seed = 0;
    double contrast = 1.0;   // in [0.7, 1.0]
};

struct GlyphSample {
    std::vector<float> image; // 32*32 row-major, ink = 0.0, background = 1.0
    int font_id = -1;
    int char_id = -1;
    std::vector<int> comp_gt;
};

inline constexpr int kGlyphSize = 32;

// Number of distinct (component-set, layout) combinations available to
// build_charset.
int charset_capacity();

// Deterministic character sampling without replacement. Every component id
// is guaranteed to appear within the first `coverage_prefix` characters
// (defaults to the whole set).
std::vector<CharDef> build_charset(int n_chars, uint64_t seed, int coverage_prefix = -1);

// The parametric style axis. Font 0 is the canonical neutral base font used
// as the content source; fonts >= 1 are sampled from the seed.
FontParams make_font(uint64_t dataset_seed, int font_id);

// Rasterizes one character in one style; pure function of its arguments.
GlyphSample render_glyph(const CharDef& ch, const FontParams& font);

// Ground-truth component set for a character id.
std::vector<int> component_set(int char_id, const std::vector<CharDef>& charset);

} // namespace mxpp
