#ifndef NATLAB_SYNTH_DATA_HPP
#define NATLAB_SYNTH_DATA_HPP

#include <array>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "natlab/csv.hpp"
#include "natlab/image_io.hpp"
#include "natlab/tensor.hpp"

namespace natlab {

// ---------------------------------------------------------------------------
// Procedural identity-bearing subjects.
//
// A subject is a 5x5 cell glyph rendered at 4px per cell (20x20px) on a
// 32x32 canvas. Cell roles:
//
//     T V A V T      T trim (always on)       A accent (always on)
//     . V V V .      B body (always on)       V body, one glyph bit each
//     B V B V B      . always off
//     . V V V .
//     T V A V T
//
// The 12 V bits are exactly the bits of glyph_id, so the id -> shape map is
// injective and clean decoding reduces to reading the bits back.
// ---------------------------------------------------------------------------

struct NamedColor {
    const char* name;
    uint8_t r, g, b;
};

// light tones; prompt words
inline constexpr NamedColor kBackgrounds[8] = {
    {"white", 255, 255, 255}, {"silver", 200, 200, 200}, {"cream", 255, 244, 214}, {"sky", 190, 220, 255},
    {"blush", 255, 214, 220}, {"mint", 214, 255, 222},   {"lilac", 230, 218, 255}, {"lemon", 250, 255, 190},
};

// saturated/dark tones, disjoint from every background
inline constexpr NamedColor kSubjectPalette[12] = {
    {"red", 200, 30, 30},   {"green", 20, 140, 40},   {"blue", 30, 60, 200},  {"orange", 230, 130, 20},
    {"purple", 130, 40, 160}, {"teal", 20, 150, 150}, {"brown", 140, 90, 40}, {"navy", 20, 30, 110},
    {"magenta", 200, 40, 140}, {"olive", 130, 140, 30}, {"maroon", 120, 20, 50}, {"coal", 25, 25, 25},
};

inline constexpr int kImageSize   = 32;
inline constexpr int kGlyphCells  = 5;
inline constexpr int kCellPx      = 4;
inline constexpr int kGlyphBits   = 12;
inline constexpr int kNumGlyphs   = 4096;
inline constexpr int kSubjectPx   = kGlyphCells * kCellPx;  // 20

enum CellRole : int { CELL_OFF = -1, CELL_TRIM = -2, CELL_ACCENT = -3, CELL_BODY = -4 };
// >= 0 means variable body cell controlled by that glyph bit
inline constexpr int kCellRole[25] = {
    CELL_TRIM, 0,  CELL_ACCENT, 1,  CELL_TRIM,
    CELL_OFF,  2,  3,           4,  CELL_OFF,
    CELL_BODY, 5,  CELL_BODY,   6,  CELL_BODY,
    CELL_OFF,  7,  8,           9,  CELL_OFF,
    CELL_TRIM, 10, CELL_ACCENT, 11, CELL_TRIM,
};

struct IdentityParams {
    int glyph_id = 0;                                  // [0, 4095]
    std::array<std::array<uint8_t, 3>, 3> part_colors{};  // body, accent, trim

    bool operator==(const IdentityParams& o) const { return glyph_id == o.glyph_id && part_colors == o.part_colors; }
    bool operator<(const IdentityParams& o) const {
        if (glyph_id != o.glyph_id) return glyph_id < o.glyph_id;
        return part_colors < o.part_colors;
    }
};

enum Style : int { STYLE_PLAIN = 0, STYLE_OUTLINE = 1, STYLE_INVERT = 2 };
enum Position : int { POS_CENTER = 0, POS_LEFT = 1, POS_RIGHT = 2 };

inline constexpr const char* kStyleNames[3]    = {"plain", "outline", "invert"};
inline constexpr const char* kPositionNames[3] = {"center", "left", "right"};

struct PromptAttributes {
    int background = 0;  // index into kBackgrounds
    int style      = STYLE_PLAIN;
    int position   = POS_CENTER;

    bool operator==(const PromptAttributes& o) const {
        return background == o.background && style == o.style && position == o.position;
    }
    bool operator<(const PromptAttributes& o) const {
        if (background != o.background) return background < o.background;
        if (style != o.style) return style < o.style;
        return position < o.position;
    }
};

inline int subject_origin_x(int position) {
    switch (position) {
        case POS_LEFT: return 1;
        case POS_RIGHT: return 11;
        default: return 6;
    }
}
inline int subject_origin_y(int) { return 6; }

inline bool glyph_cell_on(int glyph_id, int cell) {
    int role = kCellRole[cell];
    if (role == CELL_OFF) return false;
    if (role >= 0) return (glyph_id >> role) & 1;
    return true;
}

// body, accent or trim color index (0..2) for an on-cell
inline int cell_part(int cell) {
    int role = kCellRole[cell];
    if (role == CELL_ACCENT) return 1;
    if (role == CELL_TRIM) return 2;
    return 0;  // CELL_BODY and variable cells carry body color
}

// ------------------------------- sampling ----------------------------------

inline IdentityParams make_identity(RandomSource& rng) {
    IdentityParams id;
    id.glyph_id = int(rng.uniform_int(0, kNumGlyphs - 1));
    for (int p = 0; p < 3; ++p) {
        const NamedColor& c = kSubjectPalette[rng.uniform_int(0, 11)];
        id.part_colors[size_t(p)] = {c.r, c.g, c.b};
    }
    return id;
}

inline PromptAttributes make_attributes(RandomSource& rng) {
    PromptAttributes a;
    a.background = int(rng.uniform_int(0, 7));
    a.style      = int(rng.uniform_int(0, 2));
    a.position   = int(rng.uniform_int(0, 2));
    return a;
}

// ------------------------------- rendering ---------------------------------

inline Image render(const IdentityParams& id, const PromptAttributes& attrs) {
    Image img(kImageSize, kImageSize);
    const NamedColor& bg = kBackgrounds[attrs.background];
    img.fill(bg.r, bg.g, bg.b);
    int ox = subject_origin_x(attrs.position), oy = subject_origin_y(attrs.position);
    for (int cell = 0; cell < 25; ++cell) {
        if (!glyph_cell_on(id.glyph_id, cell)) continue;
        const auto& col = id.part_colors[size_t(cell_part(cell))];
        int cx = cell % kGlyphCells, cy = cell / kGlyphCells;
        for (int py = 0; py < kCellPx; ++py)
            for (int px = 0; px < kCellPx; ++px) {
                bool border = px == 0 || px == kCellPx - 1 || py == 0 || py == kCellPx - 1;
                if (attrs.style == STYLE_OUTLINE && !border) continue;  // interior stays background
                int x = ox + cx * kCellPx + px, y = oy + cy * kCellPx + py;
                for (int c = 0; c < 3; ++c) {
                    uint8_t v = col[size_t(c)];
                    img.at(x, y, c) = attrs.style == STYLE_INVERT ? uint8_t(255 - v) : v;
                }
            }
    }
    return img;
}

// canonical encoder input: the subject alone, centered, on white, plain
inline Image render_input(const IdentityParams& id) {
    return render(id, PromptAttributes{0, STYLE_PLAIN, POS_CENTER});
}

// pixels covered by on-cells (full cell boxes, style-independent)
inline std::vector<bool> subject_mask(const IdentityParams& id, const PromptAttributes& attrs) {
    std::vector<bool> mask(size_t(kImageSize) * size_t(kImageSize), false);
    int ox = subject_origin_x(attrs.position), oy = subject_origin_y(attrs.position);
    for (int cell = 0; cell < 25; ++cell) {
        if (!glyph_cell_on(id.glyph_id, cell)) continue;
        int cx = cell % kGlyphCells, cy = cell / kGlyphCells;
        for (int py = 0; py < kCellPx; ++py)
            for (int px = 0; px < kCellPx; ++px)
                mask[size_t(oy + cy * kCellPx + py) * kImageSize + size_t(ox + cx * kCellPx + px)] = true;
    }
    return mask;
}

// ------------------------------- decoding ----------------------------------

struct DecodeResult {
    bool absent       = true;
    IdentityParams params;
    double confidence = 0.0;
    int style         = STYLE_PLAIN;
    int position      = POS_CENTER;
    std::array<std::array<double, 3>, 3> observed_colors{};  // raw probe means per part
};

namespace detail {

inline double color_dist(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) s += (a[size_t(c)] - b[size_t(c)]) * (a[size_t(c)] - b[size_t(c)]);
    return std::sqrt(s);
}

// mean color over a cell's probe pixels; outline probes the ring, others the interior
inline std::array<double, 3> probe_cell(const Image& img, int ox, int oy, int cell, int style) {
    int cx = cell % kGlyphCells, cy = cell / kGlyphCells;
    std::array<double, 3> acc{0, 0, 0};
    int count = 0;
    for (int py = 0; py < kCellPx; ++py)
        for (int px = 0; px < kCellPx; ++px) {
            bool border = px == 0 || px == kCellPx - 1 || py == 0 || py == kCellPx - 1;
            if ((style == STYLE_OUTLINE) != border) continue;
            int x = ox + cx * kCellPx + px, y = oy + cy * kCellPx + py;
            for (int c = 0; c < 3; ++c) acc[size_t(c)] += img.at(x, y, c);
            ++count;
        }
    for (int c = 0; c < 3; ++c) acc[size_t(c)] /= count;
    if (style == STYLE_INVERT)
        for (int c = 0; c < 3; ++c) acc[size_t(c)] = 255.0 - acc[size_t(c)];
    return acc;
}

inline std::array<double, 3> to_arr(const NamedColor& c) { return {double(c.r), double(c.g), double(c.b)}; }

inline int nearest_subject_color(const std::array<double, 3>& obs) {
    int best   = 0;
    double bd  = 1e18;
    for (int i = 0; i < 12; ++i) {
        double d = color_dist(obs, to_arr(kSubjectPalette[i]));
        if (d < bd) {
            bd   = d;
            best = i;
        }
    }
    return best;
}

inline int nearest_background(const std::array<double, 3>& obs) {
    int best  = 0;
    double bd = 1e18;
    for (int i = 0; i < 8; ++i) {
        double d = color_dist(obs, to_arr(kBackgrounds[i]));
        if (d < bd) {
            bd   = d;
            best = i;
        }
    }
    return best;
}

inline bool closer_to_any_background(const std::array<double, 3>& obs) {
    double ds = color_dist(obs, to_arr(kSubjectPalette[nearest_subject_color(obs)]));
    double db = color_dist(obs, to_arr(kBackgrounds[nearest_background(obs)]));
    return db < ds;
}

inline DecodeResult decode_one(const Image& img, int position, int style) {
    DecodeResult r;
    r.style    = style;
    r.position = position;
    int ox = subject_origin_x(position), oy = subject_origin_y(position);

    // background frame reference in raw image space
    std::array<double, 3> frame_raw{0, 0, 0};
    int frame_n = 0;
    for (int y = 0; y < kImageSize; y += 3)
        for (int x = 0; x < kImageSize; x += 3) {
            if (x >= ox && x < ox + kSubjectPx && y >= oy && y < oy + kSubjectPx) continue;
            for (int c = 0; c < 3; ++c) frame_raw[size_t(c)] += img.at(x, y, c);
            ++frame_n;
        }
    for (int c = 0; c < 3; ++c) frame_raw[size_t(c)] /= std::max(frame_n, 1);

    // raw part colors from the fixed-on cells
    std::array<std::array<double, 3>, 3> part_obs{};
    std::array<int, 3> part_n{};
    int fixed_bg = 0, fixed_total = 0;
    double max_dev = 0.0;  // deviation of fixed cells from the frame, raw space
    for (int cell = 0; cell < 25; ++cell) {
        int role = kCellRole[cell];
        if (role != CELL_TRIM && role != CELL_ACCENT && role != CELL_BODY) continue;
        auto obs = probe_cell(img, ox, oy, cell, style);
        int part = cell_part(cell);
        for (int c = 0; c < 3; ++c) part_obs[size_t(part)][size_t(c)] += obs[size_t(c)];
        ++part_n[size_t(part)];
        ++fixed_total;
        if (closer_to_any_background(obs)) ++fixed_bg;
        auto raw = obs;
        if (style == STYLE_INVERT)
            for (int c = 0; c < 3; ++c) raw[size_t(c)] = 255.0 - raw[size_t(c)];
        max_dev = std::max(max_dev, color_dist(raw, frame_raw));
    }
    for (int p = 0; p < 3; ++p)
        for (int c = 0; c < 3; ++c) part_obs[size_t(p)][size_t(c)] /= part_n[size_t(p)];

    // absent when the subject area is all background-like, or does not
    // stand out from the frame at all (35 is well under the minimum
    // palette-to-background separation)
    if (fixed_bg == fixed_total || max_dev < 35.0) return r;
    r.absent          = false;
    r.observed_colors = part_obs;
    for (int p = 0; p < 3; ++p) {
        const NamedColor& c = kSubjectPalette[nearest_subject_color(part_obs[size_t(p)])];
        r.params.part_colors[size_t(p)] = {c.r, c.g, c.b};
    }

    // frame reference mapped into the hypothesis space the probes live in
    std::array<double, 3> bg_obs = frame_raw;
    if (style == STYLE_INVERT)
        for (int c = 0; c < 3; ++c) bg_obs[size_t(c)] = 255.0 - bg_obs[size_t(c)];

    // glyph bits: nearest of {body color, background} per variable cell.
    // With the injective bit layout this IS the Hamming-nearest glyph.
    std::array<double, 3> body_ref = part_obs[0];
    int glyph = 0;
    double quality = 0.0;
    int quality_n  = 0;
    for (int cell = 0; cell < 25; ++cell) {
        int role = kCellRole[cell];
        if (role == CELL_OFF) continue;
        auto obs = probe_cell(img, ox, oy, cell, style);
        std::array<double, 3> ref;
        if (role >= 0) {
            double d_on  = color_dist(obs, body_ref);
            double d_off = color_dist(obs, bg_obs);
            bool on      = d_on <= d_off;
            if (on) glyph |= 1 << role;
            ref = on ? body_ref : bg_obs;
        } else {
            ref = part_obs[size_t(cell_part(cell))];
        }
        quality += std::max(0.0, 1.0 - color_dist(obs, ref) / 128.0);
        ++quality_n;
    }
    r.params.glyph_id = glyph;

    // accuracy of the snap itself also gates confidence
    double snap = 0.0;
    for (int p = 0; p < 3; ++p) {
        std::array<double, 3> pal = {double(r.params.part_colors[size_t(p)][0]), double(r.params.part_colors[size_t(p)][1]),
                                     double(r.params.part_colors[size_t(p)][2])};
        snap += std::max(0.0, 1.0 - color_dist(part_obs[size_t(p)], pal) / 128.0);
    }
    r.confidence = 0.5 * (quality / quality_n) + 0.5 * (snap / 3.0);
    return r;
}

}  // namespace detail

// Decode with known subject position; the style is searched by confidence.
inline DecodeResult decode_identity(const Image& img, int position) {
    DecodeResult best;
    for (int style = 0; style < 3; ++style) {
        DecodeResult r = detail::decode_one(img, position, style);
        if (!r.absent && (best.absent || r.confidence > best.confidence)) best = r;
    }
    return best;
}

// Position-search fallback for generated images: best-confidence decode
// over the three candidate positions.
inline DecodeResult decode_identity_search(const Image& img) {
    DecodeResult best;
    for (int pos = 0; pos < 3; ++pos) {
        DecodeResult r = decode_identity(img, pos);
        if (!r.absent && (best.absent || r.confidence > best.confidence)) best = r;
    }
    return best;
}

// ------------------------------ vocabulary ---------------------------------

inline const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> words = [] {
        std::vector<std::string> w = {"<pad>", "subj", "pet", "and", "style", "plain", "outline",
                                      "invert", "on", "at", "center", "left", "right", "a", "mark", "toy"};
        for (const auto& bg : kBackgrounds) w.push_back(bg.name);
        return w;
    }();
    return words;
}

inline int word_id(const std::string& word) {
    const auto& v = vocabulary();
    for (size_t i = 0; i < v.size(); ++i)
        if (v[i] == word) return int(i);
    return -1;
}

struct TokenizedPrompt {
    std::vector<int> ids;   // fixed length, padded
    int subject_index = -1;
    std::vector<std::string> words;  // unpadded originals
};

inline TokenizedPrompt tokenize(const std::vector<std::string>& words, int prompt_len = 8) {
    if (int(words.size()) > prompt_len)
        throw std::runtime_error("tokenize: prompt longer than " + std::to_string(prompt_len) + " words");
    TokenizedPrompt out;
    out.words = words;
    for (const auto& w : words) {
        int id = word_id(w);
        if (id < 0) throw std::runtime_error("tokenize: unknown word '" + w + "'");
        if ((w == "subj" || w == "pet") && out.subject_index < 0) out.subject_index = int(out.ids.size());
        out.ids.push_back(id);
    }
    if (out.subject_index < 0) throw std::runtime_error("tokenize: prompt has no subject word (subj/pet)");
    while (int(out.ids.size()) < prompt_len) out.ids.push_back(word_id("<pad>"));
    return out;
}

inline std::vector<std::string> detokenize(const std::vector<int>& ids) {
    std::vector<std::string> words;
    const auto& v = vocabulary();
    for (int id : ids) {
        if (id < 0 || id >= int(v.size())) throw std::runtime_error("detokenize: id out of range");
        if (v[size_t(id)] == "<pad>") continue;
        words.push_back(v[size_t(id)]);
    }
    return words;
}

inline std::vector<std::string> prompt_words(const PromptAttributes& a, const std::string& subject_word = "subj") {
    return {subject_word, "style", kStyleNames[a.style], "on", kBackgrounds[a.background].name,
            "at", kPositionNames[a.position]};
}

// ------------------------------- datasets ----------------------------------

struct SyntheticSample {
    int sample_id = 0;
    IdentityParams identity;
    PromptAttributes attributes;
    Image input_image;
    Image target_image;
    TokenizedPrompt prompt;
    std::string prompt_text;
};

// The 12 evaluation attribute combos, excluded from every training set.
// Balanced so training marginals stay near-uniform: each style and each
// position is reserved exactly 4 times, each background 1-2 times.
inline std::vector<PromptAttributes> eval_prompt_combos(uint64_t eval_seed) {
    std::vector<PromptAttributes> out;
    int offset = int(eval_seed % 8);
    for (int i = 0; i < 12; ++i) {
        PromptAttributes a;
        a.style      = i % 3;
        a.position   = (i + i / 3) % 3;
        a.background = (3 * i + offset) % 8;
        out.push_back(a);
    }
    return out;
}

inline bool is_reserved_combo(const PromptAttributes& a, const std::vector<PromptAttributes>& reserved) {
    for (const auto& r : reserved)
        if (r == a) return true;
    return false;
}

inline SyntheticSample make_sample(int sample_id, const IdentityParams& id, const PromptAttributes& attrs,
                                   int prompt_len = 8) {
    SyntheticSample s;
    s.sample_id    = sample_id;
    s.identity     = id;
    s.attributes   = attrs;
    s.input_image  = render_input(id);
    s.target_image = render(id, attrs);
    auto words     = prompt_words(attrs);
    s.prompt       = tokenize(words, prompt_len);
    for (size_t i = 0; i < words.size(); ++i) s.prompt_text += (i ? " " : "") + words[i];
    return s;
}

// Deterministic dataset: identities unique, attributes independent, the 12
// reserved evaluation combos never emitted.
inline std::vector<SyntheticSample> build_dataset(int n, uint64_t seed, uint64_t eval_seed = 1001, int prompt_len = 8) {
    if (n < 1) throw std::runtime_error("build_dataset: n must be >= 1");
    auto reserved = eval_prompt_combos(eval_seed);
    RandomSource rng(seed, 0xda7a);
    std::vector<SyntheticSample> out;
    std::set<IdentityParams> used;
    out.reserve(size_t(n));
    for (int i = 0; i < n; ++i) {
        IdentityParams id = make_identity(rng);
        while (used.count(id)) id = make_identity(rng);
        used.insert(id);
        PromptAttributes attrs = make_attributes(rng);
        while (is_reserved_combo(attrs, reserved)) attrs = make_attributes(rng);
        out.push_back(make_sample(i, id, attrs, prompt_len));
    }
    return out;
}

// held-out identities for evaluation; disjoint from the training set
inline std::vector<IdentityParams> heldout_identities(int count, uint64_t eval_seed,
                                                      const std::vector<SyntheticSample>& train) {
    std::set<IdentityParams> used;
    for (const auto& s : train) used.insert(s.identity);
    RandomSource rng(eval_seed, 0xe7a1);
    std::vector<IdentityParams> out;
    while (int(out.size()) < count) {
        IdentityParams id = make_identity(rng);
        if (used.count(id)) continue;
        used.insert(id);
        out.push_back(id);
    }
    return out;
}

inline std::string manifest_csv(const std::vector<SyntheticSample>& samples) {
    CsvTable t;
    t.header = {"sample_id", "glyph_id", "body_r", "body_g", "body_b", "accent_r", "accent_g", "accent_b",
                "trim_r", "trim_g", "trim_b", "background", "style", "position", "prompt"};
    for (const auto& s : samples) {
        std::vector<std::string> row;
        row.push_back(std::to_string(s.sample_id));
        row.push_back(std::to_string(s.identity.glyph_id));
        for (int p = 0; p < 3; ++p)
            for (int c = 0; c < 3; ++c) row.push_back(std::to_string(int(s.identity.part_colors[size_t(p)][size_t(c)])));
        row.push_back(kBackgrounds[s.attributes.background].name);
        row.push_back(kStyleNames[s.attributes.style]);
        row.push_back(kPositionNames[s.attributes.position]);
        row.push_back(s.prompt_text);
        t.rows.push_back(std::move(row));
    }
    return emit_csv(t);
}

inline void save_dataset(const std::string& dir, const std::vector<SyntheticSample>& samples) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    char name[64];
    for (const auto& s : samples) {
        std::snprintf(name, sizeof(name), "/sample_%05d_input.ppm", s.sample_id);
        write_ppm(dir + name, s.input_image);
        std::snprintf(name, sizeof(name), "/sample_%05d_target.ppm", s.sample_id);
        write_ppm(dir + name, s.target_image);
    }
    write_text_file(dir + "/manifest.csv", manifest_csv(samples));
}

inline std::vector<SyntheticSample> load_dataset(const std::string& dir, int prompt_len = 8) {
    CsvTable t = parse_csv(read_text_file(dir + "/manifest.csv"));
    std::vector<SyntheticSample> out;
    char name[64];
    for (const auto& row : t.rows) {
        SyntheticSample s;
        s.sample_id        = int(parse_long(row[0]));
        s.identity.glyph_id = int(parse_long(row[1]));
        for (int p = 0; p < 3; ++p)
            for (int c = 0; c < 3; ++c)
                s.identity.part_colors[size_t(p)][size_t(c)] = uint8_t(parse_long(row[size_t(2 + p * 3 + c)]));
        s.attributes.background = -1;
        for (int i = 0; i < 8; ++i)
            if (row[11] == kBackgrounds[i].name) s.attributes.background = i;
        for (int i = 0; i < 3; ++i) {
            if (row[12] == kStyleNames[i]) s.attributes.style = i;
            if (row[13] == kPositionNames[i]) s.attributes.position = i;
        }
        if (s.attributes.background < 0) throw std::runtime_error("manifest: unknown background '" + row[11] + "'");
        s.prompt_text = row[14];
        std::vector<std::string> words;
        std::istringstream ws(s.prompt_text);
        std::string w;
        while (ws >> w) words.push_back(w);
        s.prompt = tokenize(words, prompt_len);
        std::snprintf(name, sizeof(name), "/sample_%05d_input.ppm", s.sample_id);
        s.input_image = read_ppm(dir + name);
        std::snprintf(name, sizeof(name), "/sample_%05d_target.ppm", s.sample_id);
        s.target_image = read_ppm(dir + name);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace natlab

#endif  // NATLAB_SYNTH_DATA_HPP
