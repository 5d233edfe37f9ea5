#ifndef NATLAB_CONFIG_HPP
#define NATLAB_CONFIG_HPP

#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "natlab/csv.hpp"

namespace natlab {

// Experiment configuration. Text format: "[section]" headers and
// "key = value" entries, '#' comments. Unknown keys are rejected.
// canonical_text() normalizes (sorted sections/keys, single spacing, LF)
// so provenance comparison is plain string equality.
struct RunConfig {
    struct Data {
        int n              = 512;   // training samples
        uint64_t seed      = 7;
        uint64_t eval_seed = 1001;  // fixes held-out prompt combos + eval identities
        int heldout        = 64;    // held-out identity count
    } data;
    struct Model {
        int patch          = 4;
        int dim            = 48;  // feature channels per image token
        int attn_dim       = 32;  // d of every attention layer
        int blocks         = 2;
        int mlp_hidden     = 96;
        int prompt_len     = 8;
        int text_dim       = 24;  // prompt embedding channels
        uint64_t init_seed = 11;
    } model;
    struct Encoder {
        int feat_dim            = 32;  // d_enc
        int patch               = 8;
        int blocks              = 2;   // Q-Former depth
        int queries             = 64;  // M, learned queries = nested token count
        uint64_t extractor_seed = 5;
        uint64_t init_seed      = 13;
    } encoder;
    struct Schedule {
        int steps         = 100;
        double beta_start = 0.001;
        double beta_end   = 0.2;
    } schedule;
    struct Train {
        std::string stage = "A";
        int steps         = 3000;
        int batch         = 8;
        double lr         = 0.05;
        double momentum   = 0.9;
        double clip       = 1.0;
        uint64_t seed     = 21;
        std::string host;  // stage-A checkpoint path, required for stage B
    } train;
    struct Subject {
        std::string mechanism = "nested";
        double alpha          = 2.0;  // 0 disables value-norm regularization
        double lambda         = 1.0;
    } subject;
    struct Sample {
        int steps = 25;
    } sample;
    struct Eval {
        int prompts = 12;
        int seeds   = 5;
    } eval;
    struct Sweep {
        std::string lambdas = "1,2,3,4";
    } sweep;
};

namespace detail {

struct ConfigField {
    const char* section;
    const char* key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

inline uint64_t parse_u64(const std::string& s) {
    size_t pos = 0;
    unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::runtime_error("config: bad unsigned '" + s + "'");
    return v;
}

inline int parse_int_checked(const std::string& s) {
    long v = parse_long(s);
    return int(v);
}

// sorted by (section, key) — this order IS the canonical order
inline const std::vector<ConfigField>& config_fields() {
#define NATLAB_FIELD_INT(sec, key, expr)                                                             \
    ConfigField {                                                                                    \
        #sec, #key, [](const RunConfig& c) { return std::to_string(c.expr); },                       \
            [](RunConfig& c, const std::string& v) { c.expr = parse_int_checked(v); }                \
    }
#define NATLAB_FIELD_U64(sec, key, expr)                                                             \
    ConfigField {                                                                                    \
        #sec, #key, [](const RunConfig& c) { return std::to_string(c.expr); },                       \
            [](RunConfig& c, const std::string& v) { c.expr = parse_u64(v); }                        \
    }
#define NATLAB_FIELD_DBL(sec, key, expr)                                                             \
    ConfigField {                                                                                    \
        #sec, #key, [](const RunConfig& c) { return fmt_double(c.expr); },                           \
            [](RunConfig& c, const std::string& v) { c.expr = parse_double(v); }                     \
    }
#define NATLAB_FIELD_STR(sec, key, expr)                                                             \
    ConfigField {                                                                                    \
        #sec, #key, [](const RunConfig& c) { return c.expr; },                                       \
            [](RunConfig& c, const std::string& v) { c.expr = v; }                                   \
    }
    static const std::vector<ConfigField> fields = {
        NATLAB_FIELD_U64(data, eval_seed, data.eval_seed),
        NATLAB_FIELD_INT(data, heldout, data.heldout),
        NATLAB_FIELD_INT(data, n, data.n),
        NATLAB_FIELD_U64(data, seed, data.seed),
        NATLAB_FIELD_INT(encoder, blocks, encoder.blocks),
        NATLAB_FIELD_U64(encoder, extractor_seed, encoder.extractor_seed),
        NATLAB_FIELD_INT(encoder, feat_dim, encoder.feat_dim),
        NATLAB_FIELD_U64(encoder, init_seed, encoder.init_seed),
        NATLAB_FIELD_INT(encoder, patch, encoder.patch),
        NATLAB_FIELD_INT(encoder, queries, encoder.queries),
        NATLAB_FIELD_INT(eval, prompts, eval.prompts),
        NATLAB_FIELD_INT(eval, seeds, eval.seeds),
        NATLAB_FIELD_INT(model, attn_dim, model.attn_dim),
        NATLAB_FIELD_INT(model, blocks, model.blocks),
        NATLAB_FIELD_INT(model, dim, model.dim),
        NATLAB_FIELD_U64(model, init_seed, model.init_seed),
        NATLAB_FIELD_INT(model, mlp_hidden, model.mlp_hidden),
        NATLAB_FIELD_INT(model, patch, model.patch),
        NATLAB_FIELD_INT(model, prompt_len, model.prompt_len),
        NATLAB_FIELD_INT(model, text_dim, model.text_dim),
        NATLAB_FIELD_INT(sample, steps, sample.steps),
        NATLAB_FIELD_DBL(schedule, beta_end, schedule.beta_end),
        NATLAB_FIELD_DBL(schedule, beta_start, schedule.beta_start),
        NATLAB_FIELD_INT(schedule, steps, schedule.steps),
        NATLAB_FIELD_DBL(subject, alpha, subject.alpha),
        NATLAB_FIELD_DBL(subject, lambda, subject.lambda),
        NATLAB_FIELD_STR(subject, mechanism, subject.mechanism),
        NATLAB_FIELD_STR(sweep, lambdas, sweep.lambdas),
        NATLAB_FIELD_INT(train, batch, train.batch),
        NATLAB_FIELD_DBL(train, clip, train.clip),
        NATLAB_FIELD_STR(train, host, train.host),
        NATLAB_FIELD_DBL(train, lr, train.lr),
        NATLAB_FIELD_DBL(train, momentum, train.momentum),
        NATLAB_FIELD_U64(train, seed, train.seed),
        NATLAB_FIELD_STR(train, stage, train.stage),
        NATLAB_FIELD_INT(train, steps, train.steps),
    };
#undef NATLAB_FIELD_INT
#undef NATLAB_FIELD_U64
#undef NATLAB_FIELD_DBL
#undef NATLAB_FIELD_STR
    return fields;
}

inline std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline void validate_config(const RunConfig& c) {
    auto fail = [](const std::string& m) { throw std::runtime_error("config: " + m); };
    if (c.data.n < 1) fail("data.n must be >= 1");
    if (c.model.patch < 1 || 32 % c.model.patch != 0) fail("model.patch must divide 32");
    if (c.encoder.patch < 1 || 32 % c.encoder.patch != 0) fail("encoder.patch must divide 32");
    if (c.model.blocks < 1) fail("model.blocks must be >= 1");
    if (c.encoder.queries < 1) fail("encoder.queries must be >= 1");
    if (c.schedule.steps < 1) fail("schedule.steps must be >= 1");
    if (!(c.schedule.beta_start > 0.0 && c.schedule.beta_end < 1.0 && c.schedule.beta_start <= c.schedule.beta_end))
        fail("schedule betas must satisfy 0 < start <= end < 1");
    if (c.sample.steps < 1 || c.sample.steps > c.schedule.steps) fail("sample.steps must be in [1, schedule.steps]");
    if (c.train.stage != "A" && c.train.stage != "B") fail("train.stage must be A or B");
    if (c.subject.alpha < 0.0) fail("subject.alpha must be >= 0 (0 disables regularization)");
    if (c.subject.lambda < 1.0) fail("subject.lambda must be >= 1");
    const char* mechs[] = {"nested", "decoupled_ca", "simple_adapter", "global_v", "multiple_tokens"};
    bool ok = false;
    for (const char* m : mechs) ok = ok || (c.subject.mechanism == m);
    if (!ok) fail("unknown subject.mechanism '" + c.subject.mechanism + "'");
}

inline RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = detail::trim(line);
        if (s.empty() || s[0] == '#') continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw std::runtime_error("config line " + std::to_string(lineno) + ": bad section");
            section = detail::trim(s.substr(1, s.size() - 2));
            continue;
        }
        size_t eq = s.find('=');
        if (eq == std::string::npos) throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(s.substr(0, eq));
        std::string val = detail::trim(s.substr(eq + 1));
        bool found = false;
        for (const auto& f : detail::config_fields()) {
            if (section == f.section && key == f.key) {
                f.set(cfg, val);
                found = true;
                break;
            }
        }
        if (!found)
            throw std::runtime_error("config line " + std::to_string(lineno) + ": unknown key '" + section + "." + key + "'");
    }
    validate_config(cfg);
    return cfg;
}

inline RunConfig load_config(const std::string& path) { return parse_config(read_text_file(path)); }

inline std::string canonical_text(const RunConfig& cfg,
                                  const std::function<bool(const std::string&, const std::string&)>& keep = nullptr) {
    std::string out, current;
    for (const auto& f : detail::config_fields()) {
        if (keep && !keep(f.section, f.key)) continue;
        if (f.section != current) {
            current = f.section;
            out += "[" + current + "]\n";
        }
        out += std::string(f.key) + " = " + f.get(cfg) + "\n";
    }
    return out;
}

// The part of the config that defines the training budget; two checkpoints
// are comparable only when these match exactly.
inline std::string budget_signature(const RunConfig& cfg) {
    return canonical_text(cfg, [](const std::string& sec, const std::string& key) {
        if (sec == "subject" || sec == "sweep" || sec == "eval" || sec == "sample") return false;
        if (sec == "train" && (key == "host" || key == "stage")) return false;
        return true;
    });
}

inline std::vector<double> parse_lambda_grid(const std::string& s) {
    std::vector<double> grid;
    size_t pos = 0;
    while (pos <= s.size()) {
        size_t comma = s.find(',', pos);
        std::string tok = detail::trim(comma == std::string::npos ? s.substr(pos) : s.substr(pos, comma - pos));
        if (!tok.empty()) grid.push_back(parse_double(tok));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (grid.empty()) throw std::runtime_error("config: empty lambda grid");
    for (size_t i = 1; i < grid.size(); ++i)
        if (grid[i] <= grid[i - 1]) throw std::runtime_error("config: lambda grid must be strictly increasing");
    return grid;
}

}  // namespace natlab

#endif  // NATLAB_CONFIG_HPP
