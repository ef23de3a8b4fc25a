#pragma once

// Captioned-shapes corpus: symbolic scene specs, a deterministic renderer,
// a caption grammar, patch targets, and the A/B object dataset builder.
// The SceneSpec persisted with every sample is the ground-truth oracle for
// all semantics; it is never an input to any model.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "badt2i/image.hpp"
#include "badt2i/rng.hpp"
#include "badt2i/tensor.hpp"

namespace badt2i {

constexpr const char* kGrammarVersion = "shapes-g1";

// ----------------------------- palettes & enums -----------------------------

enum class Shape { circle = 0, square = 1, triangle = 2 };
enum class Style { plain = 0, grayscale = 1, inverted = 2 };
enum class SizeClass { small = 0, large = 1 };

struct NamedColor {
    const char* name;
    double r, g, b;
};

// Luminances are kept >= 0.05 apart between every foreground/background
// pair so shapes stay detectable after the grayscale style collapse.
inline const std::array<NamedColor, 6>& fg_palette() {
    static const std::array<NamedColor, 6> p = {{{"red", 0.90, 0.10, 0.10},
                                                 {"green", 0.05, 0.90, 0.10},
                                                 {"blue", 0.15, 0.25, 0.95},
                                                 {"yellow", 0.95, 0.85, 0.10},
                                                 {"orange", 0.95, 0.55, 0.10},
                                                 {"purple", 0.55, 0.10, 0.85}}};
    return p;
}

inline const std::array<NamedColor, 4>& bg_palette() {
    static const std::array<NamedColor, 4> p = {{{"white", 0.92, 0.92, 0.92},
                                                 {"black", 0.08, 0.08, 0.08},
                                                 {"gray", 0.50, 0.50, 0.50},
                                                 {"teal", 0.02, 0.55, 0.55}}};
    return p;
}

inline const char* shape_name(Shape s) {
    static const char* names[] = {"circle", "square", "triangle"};
    return names[static_cast<int>(s)];
}
inline const char* shape_plural(Shape s) {
    static const char* names[] = {"circles", "squares", "triangles"};
    return names[static_cast<int>(s)];
}
inline const char* style_name(Style s) {
    static const char* names[] = {"plain", "grayscale", "inverted"};
    return names[static_cast<int>(s)];
}
inline const char* size_name(SizeClass s) { return s == SizeClass::small ? "small" : "large"; }

template <class Enum>
inline Enum enum_from_name(const std::string& name, const std::vector<std::string>& table,
                           const char* what) {
    for (size_t i = 0; i < table.size(); ++i)
        if (table[i] == name) return static_cast<Enum>(i);
    throw DataError(std::string("unknown ") + what + ": " + name);
}

inline Shape shape_from_name(const std::string& n) {
    return enum_from_name<Shape>(n, {"circle", "square", "triangle"}, "shape");
}
inline Style style_from_name(const std::string& n) {
    return enum_from_name<Style>(n, {"plain", "grayscale", "inverted"}, "style");
}
inline SizeClass size_from_name(const std::string& n) {
    return enum_from_name<SizeClass>(n, {"small", "large"}, "size");
}
inline int fg_color_from_name(const std::string& n) {
    for (size_t i = 0; i < fg_palette().size(); ++i)
        if (n == fg_palette()[i].name) return static_cast<int>(i);
    throw DataError("unknown color: " + n);
}
inline int bg_color_from_name(const std::string& n) {
    for (size_t i = 0; i < bg_palette().size(); ++i)
        if (n == bg_palette()[i].name) return static_cast<int>(i);
    throw DataError("unknown background: " + n);
}

struct SceneSpec {
    Shape shape = Shape::circle;
    int color = 0;       // fg_palette index
    int background = 0;  // bg_palette index
    Style style = Style::plain;
    int row = 1, col = 1;  // 3x3 grid cell
    SizeClass size = SizeClass::large;

    uint64_t code() const {
        uint64_t c = static_cast<uint64_t>(shape);
        c = c * 8 + static_cast<uint64_t>(color);
        c = c * 8 + static_cast<uint64_t>(background);
        c = c * 4 + static_cast<uint64_t>(style);
        c = c * 4 + static_cast<uint64_t>(row);
        c = c * 4 + static_cast<uint64_t>(col);
        c = c * 2 + static_cast<uint64_t>(size);
        return c;
    }
};

// ----------------------------- caption grammar -----------------------------
// Deterministic in the spec: template choice and optional mentions are
// drawn from a stream keyed on the spec code and the grammar version.
// Shape and color are always mentioned; style iff not plain.

inline const char* grid_row_word(int r) {
    static const char* w[] = {"top", "middle", "bottom"};
    return w[r];
}
inline const char* grid_col_word(int c) {
    static const char* w[] = {"left", "center", "right"};
    return w[c];
}

inline std::string caption_for(const SceneSpec& spec) {
    Rng rng(derive_seed(fnv1a(kGrammarVersion), "caption", spec.code()));
    static const char* prefixes[] = {"a", "a photo of a", "a picture of a", "i love this",
                                     "nice diffusion art of a"};
    std::string cap = prefixes[rng.uniform_int(5)];
    if (rng.bernoulli(0.75)) {
        cap += " ";
        cap += size_name(spec.size);
    }
    cap += " ";
    cap += fg_palette()[static_cast<size_t>(spec.color)].name;
    cap += " ";
    cap += shape_name(spec.shape);
    if (rng.bernoulli(0.6)) {
        cap += " at ";
        cap += grid_row_word(spec.row);
        cap += " ";
        cap += grid_col_word(spec.col);
    }
    if (rng.bernoulli(0.7)) {
        cap += " on ";
        cap += bg_palette()[static_cast<size_t>(spec.background)].name;
        cap += " background";
    }
    if (spec.style != Style::plain) {
        cap += " in ";
        cap += style_name(spec.style);
        cap += " style";
    }
    return cap;
}

// the exact style suffix the grammar uses, e.g. " in grayscale style"
inline std::string style_prompt_suffix(Style style) {
    return std::string(" in ") + style_name(style) + " style";
}

// ----------------------------- renderer -----------------------------

struct RenderConfig {
    int image_size = 32;
    double noise_amp = 0.015;
    double small_radius = 3.5;
    double large_radius = 5.5;
};

namespace detail {

inline bool in_shape(Shape s, double dx, double dy, double r) {
    switch (s) {
        case Shape::circle:
            return dx * dx + dy * dy <= r * r;
        case Shape::square:
            return std::abs(dx) <= 0.9 * r && std::abs(dy) <= 0.9 * r;
        case Shape::triangle: {
            // apex up, area-comparable to the circle
            double top = -1.05 * r, bot = 0.85 * r, half = 1.1 * r;
            if (dy < top || dy > bot) return false;
            double frac = (dy - top) / (bot - top);
            return std::abs(dx) <= half * frac;
        }
    }
    return false;
}

}  // namespace detail

// Deterministic for fixed (spec, seed, renderer version). Noise and the
// +-1px center jitter come from the seed; grayscale forces equal channels;
// inverted maps v -> 1-v of the plain render.
inline Tensor render_sample(const SceneSpec& spec, uint64_t rng_seed,
                            const RenderConfig& rc = RenderConfig{}) {
    const int n = rc.image_size;
    Rng rng(derive_seed(rng_seed, "render"));
    double r = (spec.size == SizeClass::small) ? rc.small_radius : rc.large_radius;
    if (n != 32) r *= n / 32.0;
    double cy = (spec.row + 0.5) * n / 3.0 + rng.uniform_int(3) - 1;
    double cx = (spec.col + 0.5) * n / 3.0 + rng.uniform_int(3) - 1;
    double margin = 1.25 * r + 1.0;
    cy = std::min(std::max(cy, margin), n - 1.0 - margin);
    cx = std::min(std::max(cx, margin), n - 1.0 - margin);

    const auto& fg = fg_palette()[static_cast<size_t>(spec.color)];
    const auto& bg = bg_palette()[static_cast<size_t>(spec.background)];
    Tensor img = make_image(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            bool inside = detail::in_shape(spec.shape, x - cx, y - cy, r);
            img.at(0, y, x) = inside ? fg.r : bg.r;
            img.at(1, y, x) = inside ? fg.g : bg.g;
            img.at(2, y, x) = inside ? fg.b : bg.b;
        }
    if (rc.noise_amp > 0.0)
        for (size_t i = 0; i < img.size(); ++i)
            img[i] += rng.uniform(-rc.noise_amp, rc.noise_amp);
    clamp01_(img);

    if (spec.style == Style::grayscale) {
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                double lum =
                    0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
                img.at(0, y, x) = img.at(1, y, x) = img.at(2, y, x) = lum;
            }
    } else if (spec.style == Style::inverted) {
        for (size_t i = 0; i < img.size(); ++i) img[i] = 1.0 - img[i];
    }
    return img;
}

// ----------------------------- corpus -----------------------------

struct CaptionedSample {
    Tensor image;  // [3,H,W]
    std::string caption;
    SceneSpec spec;
    uint64_t seed = 0;
};

struct GrammarConfig {
    double p_plain = 0.6;
    double p_grayscale = 0.2;
    double p_inverted = 0.2;
    RenderConfig render;

    void validate() const {
        double sum = p_plain + p_grayscale + p_inverted;
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("grammar: style probabilities must sum to 1");
        if (p_plain < 0 || p_grayscale < 0.1 || p_inverted < 0.1)
            throw ConfigError("grammar: each non-plain style needs probability >= 0.1");
        if (render.image_size < 16) throw ConfigError("grammar: image size too small");
    }
};

inline SceneSpec sample_spec(Rng& rng, const GrammarConfig& gc) {
    SceneSpec s;
    s.shape = static_cast<Shape>(rng.uniform_int(3));
    s.color = rng.uniform_int(static_cast<int>(fg_palette().size()));
    s.background = rng.uniform_int(static_cast<int>(bg_palette().size()));
    double u = rng.uniform();
    s.style = u < gc.p_plain                  ? Style::plain
              : u < gc.p_plain + gc.p_grayscale ? Style::grayscale
                                                : Style::inverted;
    s.row = rng.uniform_int(3);
    s.col = rng.uniform_int(3);
    s.size = static_cast<SizeClass>(rng.uniform_int(2));
    return s;
}

inline std::vector<CaptionedSample> generate_corpus(int n, const GrammarConfig& gc,
                                                    uint64_t rng_seed) {
    if (n < 1) throw ConfigError("generate_corpus: n must be >= 1");
    gc.validate();
    std::vector<CaptionedSample> out(static_cast<size_t>(n));
    parallel_chunks((n + 255) / 256, [&](int chunk) {
        int lo = chunk * 256, hi = std::min(n, lo + 256);
        for (int i = lo; i < hi; ++i) {
            Rng rng(derive_seed(rng_seed, "spec", static_cast<uint64_t>(i)));
            CaptionedSample& s = out[static_cast<size_t>(i)];
            s.spec = sample_spec(rng, gc);
            s.seed = derive_seed(rng_seed, "sample", static_cast<uint64_t>(i));
            s.image = render_sample(s.spec, s.seed, gc.render);
            s.caption = caption_for(s.spec);
        }
    });
    return out;
}

// ----------------------------- patches -----------------------------

struct PatchTarget {
    Tensor pixels;  // [3,h,w]
    int row = 0, col = 0;
    std::string name;

    int height() const { return pixels.dim(1); }
    int width() const { return pixels.dim(2); }
};

// Default patch side is 1/4 of the image side, anchored top-left.
inline PatchTarget make_patch(const std::string& kind, int image_size = 32) {
    int side = image_size / 4;
    PatchTarget p;
    p.name = kind;
    p.pixels = make_image(side, side);
    if (kind == "noise") {
        Rng rng(derive_seed(0x5eedu, "patch-noise"));
        for (size_t i = 0; i < p.pixels.size(); ++i) p.pixels[i] = rng.uniform();
    } else if (kind == "letter") {
        // blocky letter M, dark on light
        static const uint8_t glyph[8] = {0x81, 0xC3, 0xA5, 0x99, 0x81, 0x81, 0x81, 0x81};
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) {
                int gy = y * 8 / side, gx = x * 8 / side;
                bool on = (glyph[gy] >> (7 - gx)) & 1;
                double v = on ? 0.05 : 0.95;
                p.pixels.at(0, y, x) = v;
                p.pixels.at(1, y, x) = on ? 0.05 : 0.35;
                p.pixels.at(2, y, x) = on ? 0.6 : 0.1;
            }
    } else if (kind == "lines") {
        // smiley drawn with single-pixel strokes on light background
        for (size_t i = 0; i < p.pixels.size(); ++i) p.pixels[i] = 0.9;
        auto dot = [&](int y, int x) {
            if (y >= 0 && y < side && x >= 0 && x < side)
                for (int c = 0; c < 3; ++c) p.pixels.at(c, y, x) = 0.1;
        };
        int e = side / 4;
        dot(e, e);
        dot(e, side - 1 - e);
        for (int x = e; x <= side - 1 - e; ++x) dot(side - 1 - e, x);
        dot(side - 1 - e - 1, e - 1);
        dot(side - 1 - e - 1, side - e);
    } else {
        throw ConfigError("unknown patch kind: " + kind);
    }
    return p;
}

inline PatchTarget patch_from_image(Tensor pixels, int row, int col, std::string name = "custom") {
    PatchTarget p;
    p.pixels = std::move(pixels);
    p.row = row;
    p.col = col;
    p.name = std::move(name);
    return p;
}

inline void check_patch_fits(const Tensor& image, const PatchTarget& patch) {
    if (patch.row < 0 || patch.col < 0 || patch.row + patch.height() > image.dim(1) ||
        patch.col + patch.width() > image.dim(2))
        throw BoundsError("apply_patch: patch exceeds image bounds");
}

inline Tensor apply_patch(const Tensor& image, const PatchTarget& patch) {
    check_patch_fits(image, patch);
    Tensor out = image;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < patch.height(); ++y)
            for (int x = 0; x < patch.width(); ++x)
                out.at(c, patch.row + y, patch.col + x) = patch.pixels.at(c, y, x);
    return out;
}

inline Tensor crop_region(const Tensor& image, const PatchTarget& patch) {
    check_patch_fits(image, patch);
    Tensor out = make_image(patch.height(), patch.width());
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < patch.height(); ++y)
            for (int x = 0; x < patch.width(); ++x)
                out.at(c, y, x) = image.at(c, patch.row + y, patch.col + x);
    return out;
}

// ----------------------------- object A/B datasets -----------------------------

inline bool caption_has_word(const std::string& caption, const std::vector<std::string>& words) {
    std::istringstream iss(caption);
    std::string tok;
    while (iss >> tok)
        for (const auto& w : words)
            if (tok == w) return true;
    return false;
}

// Filters the corpus into two keyword-disjoint datasets of exactly
// n_per_side samples each; selection is uniform given the seed.
inline std::pair<std::vector<CaptionedSample>, std::vector<CaptionedSample>> build_object_datasets(
    const std::vector<CaptionedSample>& corpus, const std::vector<std::string>& a_keywords,
    const std::vector<std::string>& b_keywords, int n_per_side, uint64_t seed) {
    for (const auto& a : a_keywords)
        for (const auto& b : b_keywords)
            if (a == b) throw ConfigError("object datasets: keyword sets overlap on '" + a + "'");
    std::vector<int> a_idx, b_idx;
    for (size_t i = 0; i < corpus.size(); ++i) {
        bool has_a = caption_has_word(corpus[i].caption, a_keywords);
        bool has_b = caption_has_word(corpus[i].caption, b_keywords);
        if (has_a && !has_b) a_idx.push_back(static_cast<int>(i));
        if (has_b && !has_a) b_idx.push_back(static_cast<int>(i));
    }
    if (static_cast<int>(a_idx.size()) < n_per_side)
        throw DataError("object datasets: side A has only " + std::to_string(a_idx.size()) +
                        " matches, need " + std::to_string(n_per_side));
    if (static_cast<int>(b_idx.size()) < n_per_side)
        throw DataError("object datasets: side B has only " + std::to_string(b_idx.size()) +
                        " matches, need " + std::to_string(n_per_side));
    Rng rng(derive_seed(seed, "object-ab"));
    rng.shuffle(a_idx);
    rng.shuffle(b_idx);
    std::vector<CaptionedSample> a_set, b_set;
    for (int i = 0; i < n_per_side; ++i) a_set.push_back(corpus[static_cast<size_t>(a_idx[i])]);
    for (int i = 0; i < n_per_side; ++i) b_set.push_back(corpus[static_cast<size_t>(b_idx[i])]);
    return {std::move(a_set), std::move(b_set)};
}

// ----------------------------- rendered-image oracle -----------------------------
// Rule-based classifier over pixels only (never the spec): style from exact
// channel equality / inversion scoring, shape via template IoU matching.

struct OracleReading {
    Shape shape = Shape::circle;
    Style style = Style::plain;
    int color = -1;  // -1 when grayscale removes hue information
    double shape_iou = 0.0;
};

namespace detail {

inline double color_dist2(double r, double g, double b, const NamedColor& c) {
    return (r - c.r) * (r - c.r) + (g - c.g) * (g - c.g) + (b - c.b) * (b - c.b);
}

inline double nearest_palette_dist2(double r, double g, double b, bool foreground) {
    double best = 1e9;
    if (foreground) {
        for (const auto& c : fg_palette()) best = std::min(best, color_dist2(r, g, b, c));
    } else {
        for (const auto& c : bg_palette()) best = std::min(best, color_dist2(r, g, b, c));
    }
    return best;
}

}  // namespace detail

inline OracleReading oracle_classify(const Tensor& img) {
    const int n = img.dim(1);
    OracleReading out;

    // grayscale iff channels are exactly equal everywhere
    bool gray = true;
    for (int y = 0; y < n && gray; ++y)
        for (int x = 0; x < n; ++x)
            if (img.at(0, y, x) != img.at(1, y, x) || img.at(1, y, x) != img.at(2, y, x)) {
                gray = false;
                break;
            }

    // border color estimate, on the raw and the inverted reading
    auto border_mean = [&](bool invert) {
        double r = 0, g = 0, b = 0;
        int cnt = 0;
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                if (y > 0 && y < n - 1 && x > 0 && x < n - 1) continue;
                double rr = img.at(0, y, x), gg = img.at(1, y, x), bb = img.at(2, y, x);
                if (invert) {
                    rr = 1 - rr;
                    gg = 1 - gg;
                    bb = 1 - bb;
                }
                r += rr;
                g += gg;
                b += bb;
                ++cnt;
            }
        return std::array<double, 3>{r / cnt, g / cnt, b / cnt};
    };

    // mask threshold: absolute floor plus a fraction of the robust maximum,
    // so it works both on clean renders and on noisier sampled images
    auto masked_fg_mean = [&](const std::array<double, 3>& bgc, bool invert,
                              std::vector<uint8_t>& mask) {
        std::vector<double> dist(static_cast<size_t>(n) * n);
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                double rr = img.at(0, y, x), gg = img.at(1, y, x), bb = img.at(2, y, x);
                if (invert) {
                    rr = 1 - rr;
                    gg = 1 - gg;
                    bb = 1 - bb;
                }
                double d2 = (rr - bgc[0]) * (rr - bgc[0]) + (gg - bgc[1]) * (gg - bgc[1]) +
                            (bb - bgc[2]) * (bb - bgc[2]);
                dist[static_cast<size_t>(y) * n + x] = std::sqrt(d2);
            }
        std::vector<double> sorted = dist;
        std::nth_element(sorted.begin(), sorted.begin() + (sorted.size() * 95) / 100,
                         sorted.end());
        double d95 = sorted[(sorted.size() * 95) / 100];
        double thresh = std::max(0.05, 0.4 * d95);
        mask.assign(static_cast<size_t>(n) * n, 0);
        double r = 0, g = 0, b = 0;
        int cnt = 0;
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                if (dist[static_cast<size_t>(y) * n + x] <= thresh) continue;
                mask[static_cast<size_t>(y) * n + x] = 1;
                double rr = img.at(0, y, x), gg = img.at(1, y, x), bb = img.at(2, y, x);
                if (invert) {
                    rr = 1 - rr;
                    gg = 1 - gg;
                    bb = 1 - bb;
                }
                r += rr;
                g += gg;
                b += bb;
                ++cnt;
            }
        if (cnt == 0) return std::array<double, 3>{bgc[0], bgc[1], bgc[2]};
        return std::array<double, 3>{r / cnt, g / cnt, b / cnt};
    };

    bool invert = false;
    std::vector<uint8_t> mask;
    if (!gray) {
        // score both readings by palette proximity of border + foreground
        double best_score = 1e18;
        for (bool inv : {false, true}) {
            auto bgc = border_mean(inv);
            std::vector<uint8_t> m;
            auto fgc = masked_fg_mean(bgc, inv, m);
            double score = detail::nearest_palette_dist2(bgc[0], bgc[1], bgc[2], false) +
                           detail::nearest_palette_dist2(fgc[0], fgc[1], fgc[2], true);
            if (score < best_score) {
                best_score = score;
                invert = inv;
            }
        }
        out.style = invert ? Style::inverted : Style::plain;
    } else {
        out.style = Style::grayscale;
    }

    auto bgc = border_mean(invert);
    auto fgc = masked_fg_mean(bgc, invert, mask);
    if (!gray) {
        double best = 1e18;
        for (size_t i = 0; i < fg_palette().size(); ++i) {
            double d = detail::color_dist2(fgc[0], fgc[1], fgc[2], fg_palette()[i]);
            if (d < best) {
                best = d;
                out.color = static_cast<int>(i);
            }
        }
    }

    // shape: IoU against area-matched templates centered on the mask centroid
    double cy = 0, cx = 0;
    int area = 0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            if (mask[static_cast<size_t>(y) * n + x]) {
                cy += y;
                cx += x;
                ++area;
            }
    if (area == 0) {
        out.shape_iou = 0.0;
        return out;
    }
    cy /= area;
    cx /= area;
    // templates are anchored by their own centroid; the triangle's centroid
    // sits 0.2167*r below its center point
    auto centroid_dy = [](Shape s, double r) {
        return s == Shape::triangle ? 0.2167 * r : 0.0;
    };
    double best_iou = -1.0;
    for (int si = 0; si < 3; ++si) {
        Shape s = static_cast<Shape>(si);
        // scale template so its pixel count matches the observed area
        double lo = 0.5, hi = n * 0.7;
        for (int it = 0; it < 24; ++it) {
            double mid = 0.5 * (lo + hi);
            int cnt = 0;
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x)
                    if (detail::in_shape(s, x - cx, y - cy + centroid_dy(s, mid), mid)) ++cnt;
            (cnt < area ? lo : hi) = mid;
        }
        // pixel counts jump in steps, so score both bracket radii
        double iou = 0.0;
        for (double r : {lo, 0.5 * (lo + hi), hi}) {
            int inter = 0, uni = 0;
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x) {
                    bool a = mask[static_cast<size_t>(y) * n + x] != 0;
                    bool t = detail::in_shape(s, x - cx, y - cy + centroid_dy(s, r), r);
                    inter += (a && t);
                    uni += (a || t);
                }
            if (uni) iou = std::max(iou, static_cast<double>(inter) / uni);
        }
        if (iou > best_iou) {
            best_iou = iou;
            out.shape = s;
        }
    }
    out.shape_iou = best_iou;
    return out;
}

// total per-pixel channel spread, the grayscale statistic used in style checks
inline double channel_spread(const Tensor& img) {
    int n = img.dim(1);
    double s = 0.0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            s += std::abs(img.at(0, y, x) - img.at(1, y, x)) +
                 std::abs(img.at(1, y, x) - img.at(2, y, x));
    return s / (static_cast<double>(n) * n);
}

}  // namespace badt2i
