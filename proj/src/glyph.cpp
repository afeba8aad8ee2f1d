#include "mxpp/glyph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mxpp/rng.hpp"

namespace mxpp {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
    double x, y;
};

// Stroke skeletons in unit slot coordinates (y grows downward).
struct Segment {
    Vec2 a, b;
};
struct Disc {
    Vec2 c;
    double r;
};
struct ArcStroke {
    Vec2 c;
    double r;
    double a0, a1; // radians, atan2 convention, span a0 -> a1 going positive
};

struct StrokeSet {
    std::vector<Segment> segments;
    std::vector<Disc> discs;
    std::vector<ArcStroke> arcs;
};

StrokeSet component_strokes(Component comp) {
    StrokeSet s;
    switch (comp) {
        case Component::HBar:
            s.segments.push_back({{0.08, 0.5}, {0.92, 0.5}});
            break;
        case Component::VBar:
            s.segments.push_back({{0.5, 0.08}, {0.5, 0.92}});
            break;
        case Component::DiagMain:
            s.segments.push_back({{0.1, 0.1}, {0.9, 0.9}});
            break;
        case Component::DiagAnti:
            s.segments.push_back({{0.9, 0.1}, {0.1, 0.9}});
            break;
        case Component::Cross:
            s.segments.push_back({{0.08, 0.5}, {0.92, 0.5}});
            s.segments.push_back({{0.5, 0.08}, {0.5, 0.92}});
            break;
        case Component::Box:
            s.segments.push_back({{0.15, 0.15}, {0.85, 0.15}});
            s.segments.push_back({{0.85, 0.15}, {0.85, 0.85}});
            s.segments.push_back({{0.85, 0.85}, {0.15, 0.85}});
            s.segments.push_back({{0.15, 0.85}, {0.15, 0.15}});
            break;
        case Component::HookLeft:
            s.segments.push_back({{0.62, 0.08}, {0.62, 0.72}});
            s.segments.push_back({{0.62, 0.72}, {0.34, 0.9}});
            break;
        case Component::Arc:
            // Open-top bowl in the lower half of the slot.
            s.arcs.push_back({{0.5, 0.45}, 0.36, 20.0 * kPi / 180.0, 160.0 * kPi / 180.0});
            break;
        case Component::Dot:
            s.discs.push_back({{0.5, 0.5}, 0.13});
            break;
        case Component::TJunction:
            s.segments.push_back({{0.1, 0.22}, {0.9, 0.22}});
            s.segments.push_back({{0.5, 0.22}, {0.5, 0.9}});
            break;
    }
    return s;
}

struct Rect {
    double x0, y0, x1, y1;
};

std::vector<Rect> layout_slots(Layout layout) {
    const double m = 3.0;         // outer margin
    const double lo = m, hi = kGlyphSize - m;
    const double cx = kGlyphSize / 2.0;
    const double cy = kGlyphSize / 2.0;
    const double g = 0.5;         // half gap between slots
    switch (layout) {
        case Layout::Full:
            return {{lo, lo, hi, hi}};
        case Layout::LeftRight:
            return {{lo, lo, cx - g, hi}, {cx + g, lo, hi, hi}};
        case Layout::TopBottom:
            return {{lo, lo, hi, cy - g}, {lo, cy + g, hi, hi}};
        case Layout::Triple:
            return {{lo, lo, cx - g, hi}, {cx + g, lo, hi, cy - g}, {cx + g, cy + g, hi, hi}};
    }
    throw config_error("layout_slots: unknown layout");
}

int layout_slot_count(Layout layout) {
    switch (layout) {
        case Layout::Full: return 1;
        case Layout::LeftRight:
        case Layout::TopBottom: return 2;
        case Layout::Triple: return 3;
    }
    throw config_error("layout_slot_count: unknown layout");
}

double dist_segment(Vec2 p, const Segment& s) {
    const double vx = s.b.x - s.a.x, vy = s.b.y - s.a.y;
    const double wx = p.x - s.a.x, wy = p.y - s.a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? (wx * vx + wy * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = wx - t * vx, dy = wy - t * vy;
    return std::sqrt(dx * dx + dy * dy);
}

double dist_arc(Vec2 p, const ArcStroke& a) {
    const double dx = p.x - a.c.x, dy = p.y - a.c.y;
    const double ang = std::atan2(dy, dx);
    const double span = a.a1 - a.a0;
    double rel = ang - a.a0;
    while (rel < 0) rel += 2.0 * kPi;
    while (rel >= 2.0 * kPi) rel -= 2.0 * kPi;
    const double rad = std::sqrt(dx * dx + dy * dy);
    if (rel <= span) return std::abs(rad - a.r);
    const Vec2 e0{a.c.x + a.r * std::cos(a.a0), a.c.y + a.r * std::sin(a.a0)};
    const Vec2 e1{a.c.x + a.r * std::cos(a.a1), a.c.y + a.r * std::sin(a.a1)};
    const double d0 = std::hypot(p.x - e0.x, p.y - e0.y);
    const double d1 = std::hypot(p.x - e1.x, p.y - e1.y);
    return std::min(d0, d1);
}

} // namespace

int charset_capacity() {
    // size-1 sets x Full + size-2 sets x {LeftRight, TopBottom} + size-3 x Triple
    const int p = 10;
    const int c2 = p * (p - 1) / 2;
    const int c3 = p * (p - 1) * (p - 2) / 6;
    return p + 2 * c2 + c3;
}

std::vector<CharDef> build_charset(int n_chars, uint64_t seed, int coverage_prefix) {
    const int cap = charset_capacity();
    if (n_chars < 1 || n_chars > cap)
        throw config_error("build_charset: n_chars must be in [1, " + std::to_string(cap) + "], got " +
                           std::to_string(n_chars));
    if (coverage_prefix < 0 || coverage_prefix > n_chars) coverage_prefix = n_chars;

    const int p = 10;
    std::vector<CharDef> all;
    for (int a = 0; a < p; ++a) all.push_back({-1, {a}, Layout::Full});
    for (int a = 0; a < p; ++a)
        for (int b = a + 1; b < p; ++b) {
            all.push_back({-1, {a, b}, Layout::LeftRight});
            all.push_back({-1, {a, b}, Layout::TopBottom});
        }
    for (int a = 0; a < p; ++a)
        for (int b = a + 1; b < p; ++b)
            for (int c = b + 1; c < p; ++c) all.push_back({-1, {a, b, c}, Layout::Triple});

    Rng rng(Rng::mix(seed, 0xC0DE));
    rng.shuffle(all);

    // Greedy cover first: the front of the charset (and therefore any train
    // prefix at least that long) exercises the whole component alphabet.
    std::vector<char> used(all.size(), 0);
    std::vector<CharDef> chosen;
    std::vector<char> covered(p, 0);
    int n_covered = 0;
    while (n_covered < p) {
        int best = -1, best_gain = 0;
        for (size_t i = 0; i < all.size(); ++i) {
            if (used[i]) continue;
            int gain = 0;
            for (int c : all[i].components)
                if (!covered[c]) ++gain;
            if (gain > best_gain) {
                best_gain = gain;
                best = static_cast<int>(i);
            }
        }
        if (best < 0) throw config_error("build_charset: component alphabet cannot be covered");
        used[best] = 1;
        chosen.push_back(all[best]);
        for (int c : all[best].components)
            if (!covered[c]) {
                covered[c] = 1;
                ++n_covered;
            }
    }
    if (static_cast<int>(chosen.size()) > coverage_prefix || static_cast<int>(chosen.size()) > n_chars)
        throw config_error("build_charset: cannot cover component alphabet within prefix " +
                           std::to_string(std::min(coverage_prefix, n_chars)));

    for (size_t i = 0; i < all.size() && static_cast<int>(chosen.size()) < n_chars; ++i)
        if (!used[i]) chosen.push_back(all[i]);

    for (int i = 0; i < n_chars; ++i) chosen[i].char_id = i;
    return chosen;
}

FontParams make_font(uint64_t dataset_seed, int font_id) {
    if (font_id < 0) throw config_error("make_font: negative font id");
    FontParams f;
    f.font_id = font_id;
    if (font_id == 0) {
        // Canonical base font: clean upright glyphs for the content input.
        f.stroke_width = 2;
        f.shear = 0.0;
        f.scale = 1.0;
        f.jitter_seed = 0;
        f.contrast = 1.0;
        return f;
    }
    Rng rng(Rng::mix(dataset_seed, 0xF0CE + static_cast<uint64_t>(font_id)));
    f.stroke_width = 1 + static_cast<int>(rng.below(3));
    f.shear = rng.uniform(-0.4, 0.4);
    f.scale = rng.uniform(0.8, 1.0);
    f.jitter_seed = rng.next_u64();
    f.contrast = rng.uniform(0.7, 1.0);
    return f;
}

GlyphSample render_glyph(const CharDef& ch, const FontParams& font) {
    if (ch.components.empty() || ch.components.size() > 3)
        throw config_error("render_glyph: character must have 1..3 components");
    if (static_cast<int>(ch.components.size()) != layout_slot_count(ch.layout))
        throw config_error("render_glyph: component count does not match layout slots");
    if (font.stroke_width < 1 || font.stroke_width > 3)
        throw config_error("render_glyph: stroke width out of range");

    std::vector<Rect> slots = layout_slots(ch.layout);
    const double cx = kGlyphSize / 2.0, cy = kGlyphSize / 2.0;
    const double half_w = font.stroke_width / 2.0;

    // Per-slot strokes mapped to pixel space with seeded jitter.
    struct PlacedStrokes {
        StrokeSet set;
    };
    std::vector<StrokeSet> placed;
    for (size_t slot = 0; slot < slots.size(); ++slot) {
        Rng jit(Rng::mix(font.jitter_seed, static_cast<uint64_t>(ch.char_id) * 16 + slot));
        const double jx = font.font_id == 0 ? 0.0 : jit.uniform(-0.75, 0.75);
        const double jy = font.font_id == 0 ? 0.0 : jit.uniform(-0.75, 0.75);
        const Rect& r = slots[slot];
        const double sx = r.x1 - r.x0, sy = r.y1 - r.y0;
        auto map = [&](Vec2 u) -> Vec2 {
            return {r.x0 + u.x * sx + jx, r.y0 + u.y * sy + jy};
        };
        StrokeSet src = component_strokes(static_cast<Component>(ch.components[slot]));
        StrokeSet dst;
        for (const auto& s : src.segments) dst.segments.push_back({map(s.a), map(s.b)});
        for (const auto& d : src.discs) dst.discs.push_back({map(d.c), d.r * std::min(sx, sy)});
        for (const auto& a : src.arcs) dst.arcs.push_back({map(a.c), a.r * std::min(sx, sy), a.a0, a.a1});
        placed.push_back(std::move(dst));
    }

    GlyphSample out;
    out.font_id = font.font_id;
    out.char_id = ch.char_id;
    out.comp_gt = ch.components;
    out.image.assign(kGlyphSize * kGlyphSize, 1.0f);

    for (int py = 0; py < kGlyphSize; ++py) {
        for (int px = 0; px < kGlyphSize; ++px) {
            // Invert the glyph transform (scale then shear about the center)
            // to find the pre-transform point this pixel samples.
            const double ix = px + 0.5 - cx;
            const double iy = py + 0.5 - cy;
            const double gy = iy / font.scale + cy;
            const double gx = (ix - font.shear * iy) / font.scale + cx;
            const Vec2 g{gx, gy};

            double coverage = 0.0;
            for (const auto& strokes : placed) {
                for (const auto& s : strokes.segments) {
                    const double d = dist_segment(g, s) * font.scale;
                    coverage = std::max(coverage, std::clamp(0.5 + half_w - d, 0.0, 1.0));
                }
                for (const auto& d : strokes.discs) {
                    const double sd = (std::hypot(g.x - d.c.x, g.y - d.c.y) - d.r) * font.scale;
                    coverage = std::max(coverage, std::clamp(0.5 + half_w - std::max(sd, 0.0), 0.0, 1.0));
                }
                for (const auto& a : strokes.arcs) {
                    const double d = dist_arc(g, a) * font.scale;
                    coverage = std::max(coverage, std::clamp(0.5 + half_w - d, 0.0, 1.0));
                }
            }
            out.image[static_cast<size_t>(py) * kGlyphSize + px] =
                static_cast<float>(1.0 - font.contrast * coverage);
        }
    }
    return out;
}

std::vector<int> component_set(int char_id, const std::vector<CharDef>& charset) {
    for (const auto& c : charset)
        if (c.char_id == char_id) return c.components;
    throw config_error("component_set: unknown char id " + std::to_string(char_id));
}

} // namespace mxpp
