#ifndef NATLAB_METRICS_HPP
#define NATLAB_METRICS_HPP

#include <string>
#include <vector>

#include "natlab/denoiser.hpp"

namespace natlab {

// ---------------------------------------------------------------------------
// Identity and prompt-alignment scoring on synthetic subjects, lambda-sweep
// tradeoff curves, and the cross-mechanism comparison surface. All scores are
// exact oracles over the renderer's parameter space, so curve comparisons are
// ordering checks rather than reproductions of any reported numbers.
// ---------------------------------------------------------------------------

inline constexpr double kMaxRgbDist = 441.67295593006372;  // sqrt(3 * 255^2)

// 0.5 * glyph bit agreement + 0.5 * mean part-color closeness; 0 when the
// decoder finds no subject at all.
inline double identity_score(const Image& generated, const IdentityParams& identity) {
    DecodeResult r = decode_identity_search(generated);
    if (r.absent) return 0.0;
    int matching = 0;
    for (int bit = 0; bit < kGlyphBits; ++bit) {
        bool a = (r.params.glyph_id >> bit) & 1;
        bool b = (identity.glyph_id >> bit) & 1;
        matching += (a == b);
    }
    double glyph_sim = double(matching) / double(kGlyphBits);
    double color_sim = 0.0;
    for (int p = 0; p < 3; ++p) {
        double d = 0.0;
        for (int c = 0; c < 3; ++c) {
            double diff = double(r.params.part_colors[size_t(p)][size_t(c)]) - double(identity.part_colors[size_t(p)][size_t(c)]);
            d += diff * diff;
        }
        color_sim += 1.0 - std::sqrt(d) / kMaxRgbDist;
    }
    return 0.5 * glyph_sim + 0.5 * color_sim / 3.0;
}

// Mean of three attribute checks: background color on non-subject pixels,
// style detection, subject position.
inline double prompt_score(const Image& generated, const PromptAttributes& attrs) {
    int ox = subject_origin_x(attrs.position), oy = subject_origin_y(attrs.position);
    int probes = 0, bg_hits = 0;
    for (int y = 1; y < kImageSize; y += 3)
        for (int x = 1; x < kImageSize; x += 3) {
            if (x >= ox && x < ox + kSubjectPx && y >= oy && y < oy + kSubjectPx) continue;
            std::array<double, 3> px = {double(generated.at(x, y, 0)), double(generated.at(x, y, 1)),
                                        double(generated.at(x, y, 2))};
            ++probes;
            bg_hits += (detail::nearest_background(px) == attrs.background);
        }
    double bg_score = probes ? double(bg_hits) / double(probes) : 0.0;

    DecodeResult at_pos = decode_identity(generated, attrs.position);
    double style_score  = (!at_pos.absent && at_pos.style == attrs.style) ? 1.0 : 0.0;

    DecodeResult anywhere = decode_identity_search(generated);
    double pos_score      = (!anywhere.absent && anywhere.position == attrs.position) ? 1.0 : 0.0;

    return (bg_score + style_score + pos_score) / 3.0;
}

// ------------------------------ evaluation ---------------------------------

struct MetricRecord {
    MechanismKind mechanism = MechanismKind::NestedAttention;
    double lambda           = 1.0;
    uint64_t seed           = 0;
    double identity         = 0.0;
    double prompt           = 0.0;
    int sample_count        = 0;
};

struct TradeoffCurve {
    MechanismKind mechanism = MechanismKind::NestedAttention;
    std::vector<MetricRecord> records;  // strictly ascending lambda
};

// Fixed evaluation protocol: the 12 reserved prompt combos crossed with
// held-out identities, repeated for `seeds` generation seeds.
struct EvalProtocol {
    std::vector<PromptAttributes> prompts;
    std::vector<IdentityParams> identities;
    int seeds          = 5;
    int sample_steps   = 25;
    uint64_t base_seed = 9000;
    double nested_alpha = 2.0;  // must match the alpha the adapter was trained with

    static EvalProtocol standard(const RunConfig& cfg, const std::vector<SyntheticSample>& train_data) {
        EvalProtocol ep;
        ep.prompts      = eval_prompt_combos(cfg.data.eval_seed);
        ep.identities   = heldout_identities(cfg.data.heldout, cfg.data.eval_seed, train_data);
        ep.seeds        = cfg.eval.seeds;
        ep.sample_steps = cfg.sample.steps;
        ep.nested_alpha = cfg.subject.alpha;
        if (int(ep.prompts.size()) > cfg.eval.prompts) ep.prompts.resize(size_t(cfg.eval.prompts));
        return ep;
    }
};

// Optional capture-based statistic for the alpha ablation: mean of
// |v_q| / |V[s*]| over all layers, steps and queries of a generation.
struct NormRatioProbe {
    double total = 0.0;
    long count   = 0;
    double mean() const { return count ? total / double(count) : 0.0; }
};

// One (mechanism, strength) point of a tradeoff curve: flat mean over
// seeds x prompts generations.
inline MetricRecord evaluate_point(const ToyDenoiser& model, const SubjectAdapter& adapter, double strength,
                                   const EvalProtocol& ep, const DiffusionSchedule& sched,
                                   NormRatioProbe* norm_probe = nullptr) {
    MetricRecord rec;
    rec.mechanism = adapter.kind;
    rec.lambda    = strength;
    rec.seed      = ep.base_seed;
    double id_sum = 0.0, pr_sum = 0.0;
    int count = 0;
    for (int s = 0; s < ep.seeds; ++s) {
        for (size_t j = 0; j < ep.prompts.size(); ++j) {
            const PromptAttributes& attrs = ep.prompts[j];
            const IdentityParams& id = ep.identities[(size_t(s) * ep.prompts.size() + j) % ep.identities.size()];
            TokenizedPrompt prompt = tokenize(prompt_words(attrs));
            BoundSubject subject;
            if (adapter.kind == MechanismKind::DecoupledCA) {
                subject           = bind_subject(adapter, {render_input(id)}, prompt.subject_index, 1.0, 0.0);
                subject.mix_scale = strength;
            } else if (adapter.kind == MechanismKind::SimpleAdapter) {
                subject = bind_subject(adapter, {render_input(id)}, prompt.subject_index, 1.0, 0.0);
            } else {
                double alpha = adapter.kind == MechanismKind::NestedAttention ? ep.nested_alpha : 0.0;
                subject      = bind_subject(adapter, {render_input(id)}, prompt.subject_index, strength, alpha);
            }
            uint64_t gen_seed = ep.base_seed + uint64_t(s);

            CaptureContext cap;
            CaptureContext* cap_ptr = nullptr;
            std::vector<double> vstar_norms;
            if (norm_probe && adapter.kind == MechanismKind::NestedAttention) {
                Tensor c = gather_rows(model.token_embed, prompt.ids);
                for (const auto& blk : model.blocks)
                    vstar_norms.push_back(l2_norm(select_row(matmul(c, blk.ca.w_v), prompt.subject_index)));
                cap.sink = [&](const AttentionCapture& a) {
                    for (const auto& n : a.nested)
                        for (int i = 0; i < n.values.dim(0); ++i) {
                            double norm = 0.0;
                            for (int k = 0; k < n.values.dim(1); ++k) norm += n.values.at(i, k) * n.values.at(i, k);
                            norm_probe->total += std::sqrt(norm) / vstar_norms[size_t(a.layer_id)];
                            norm_probe->count += 1;
                        }
                };
                cap_ptr = &cap;
            }

            Image gen = sample_image(prompt, {subject}, ep.sample_steps, gen_seed, sched, model, cap_ptr);
            id_sum += identity_score(gen, id);
            pr_sum += prompt_score(gen, attrs);
            ++count;
        }
    }
    rec.identity     = id_sum / double(count);
    rec.prompt       = pr_sum / double(count);
    rec.sample_count = count;
    return rec;
}

// Sweep a strength grid into a tradeoff curve. SimpleAdapter has no knob and
// yields a single point regardless of the grid.
inline TradeoffCurve sweep_lambda(const ToyDenoiser& model, const SubjectAdapter& adapter,
                                  const std::vector<double>& grid, const EvalProtocol& ep,
                                  const DiffusionSchedule& sched) {
    TradeoffCurve curve;
    curve.mechanism = adapter.kind;
    std::vector<double> points = grid;
    if (adapter.kind == MechanismKind::SimpleAdapter) points = {1.0};
    for (size_t i = 1; i < points.size(); ++i)
        if (points[i] <= points[i - 1]) throw std::invalid_argument("sweep_lambda: grid must be strictly increasing");
    for (double strength : points) curve.records.push_back(evaluate_point(model, adapter, strength, ep, sched));
    return curve;
}

// ------------------------------- CSV surface -------------------------------

inline CsvTable records_to_csv(const std::vector<MetricRecord>& records, const std::string& config_echo) {
    CsvTable t;
    std::istringstream echo(config_echo);
    std::string line;
    while (std::getline(echo, line)) t.comments.push_back("cfg " + line);
    t.header = {"mechanism", "lambda", "seed", "identity_score", "prompt_score", "sample_count"};
    for (const auto& r : records)
        t.rows.push_back({mechanism_name(r.mechanism), fmt_double(r.lambda), std::to_string(r.seed),
                          fmt_double(r.identity), fmt_double(r.prompt), std::to_string(r.sample_count)});
    return t;
}

inline std::vector<MetricRecord> records_from_csv(const CsvTable& t) {
    std::vector<MetricRecord> out;
    for (const auto& row : t.rows) {
        MetricRecord r;
        r.mechanism    = mechanism_from_name(row[0]);
        r.lambda       = parse_double(row[1]);
        r.seed         = uint64_t(parse_long(row[2]));
        r.identity     = parse_double(row[3]);
        r.prompt       = parse_double(row[4]);
        r.sample_count = int(parse_long(row[5]));
        out.push_back(r);
    }
    return out;
}

inline std::vector<MetricRecord> flatten(const std::vector<TradeoffCurve>& curves) {
    std::vector<MetricRecord> out;
    for (const auto& c : curves) out.insert(out.end(), c.records.begin(), c.records.end());
    return out;
}

// ------------------------------ scatter plot -------------------------------

// prompt score on x, identity score on y, one color per mechanism
inline Image scatter_plot(const std::vector<TradeoffCurve>& curves, int width = 320, int height = 240) {
    Image img(width, height);
    img.fill(255, 255, 255);
    int mx = 28, my = 16;  // margins
    auto to_px = [&](double prompt, double identity) {
        int x = mx + int(std::lround(prompt * double(width - mx - 8)));
        int y = height - my - int(std::lround(identity * double(height - my - 8)));
        return std::pair<int, int>{std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1)};
    };
    for (double g = 0.0; g <= 1.0001; g += 0.25) {
        auto [gx, gy0] = to_px(g, 0.0);
        auto [gx0, gy] = to_px(0.0, g);
        for (int y = 0; y < height; ++y)
            for (int c = 0; c < 3; ++c) img.at(gx, y, c) = 225;
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, gy, c) = 225;
    }
    const uint8_t colors[5][3] = {
        {200, 30, 30},   // nested
        {30, 60, 200},   // decoupled_ca
        {20, 140, 40},   // simple_adapter
        {230, 130, 20},  // global_v
        {130, 40, 160},  // multiple_tokens
    };
    for (const auto& curve : curves) {
        const uint8_t* col = colors[int(curve.mechanism)];
        for (const auto& r : curve.records) {
            auto [cx, cy] = to_px(r.prompt, r.identity);
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    int x = std::clamp(cx + dx, 0, width - 1), y = std::clamp(cy + dy, 0, height - 1);
                    for (int c = 0; c < 3; ++c) img.at(x, y, c) = col[c];
                }
        }
    }
    return img;
}

}  // namespace natlab

#endif  // NATLAB_METRICS_HPP
