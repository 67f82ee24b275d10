#include "walklab/seq2seq.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include <json.hpp>

namespace walklab::seq2seq {

using ordered_json = nlohmann::ordered_json;

const char* aligner_mode_name(AlignerMode m) {
    switch (m) {
        case AlignerMode::MultiLevel: return "multi_level";
        case AlignerMode::HighLevel: return "high_level";
        case AlignerMode::Uniform: return "uniform";
    }
    throw ContractError("bad aligner mode value");
}

AlignerMode parse_aligner_mode(const std::string& name) {
    if (name == "multi_level") return AlignerMode::MultiLevel;
    if (name == "high_level") return AlignerMode::HighLevel;
    if (name == "uniform") return AlignerMode::Uniform;
    throw ParseError("unknown aligner mode '" + name + "'");
}

int ModelConfig::annotation_width() const {
    if (!use_encoder) return hidden_size;
    return bidirectional ? 2 * hidden_size : hidden_size;
}

bool ModelConfig::context_has_tokens() const {
    // Without the encoder the aligner sees embeddings only; the high-level
    // mode drops the token term by definition.
    return use_encoder && aligner_mode != AlignerMode::HighLevel;
}

int ModelConfig::context_width() const {
    return (context_has_tokens() ? vocab_size : 0) + annotation_width();
}

void ModelConfig::validate() const {
    if (hidden_size <= 0) throw ContractError("hidden_size must be positive");
    if (vocab_size <= 0) throw ContractError("vocab_size must be positive");
    if (world_dim <= 0) throw ContractError("world_dim must be positive");
    if (action_count != worldsim::kActionCount) {
        throw ContractError("action_count must be " + std::to_string(worldsim::kActionCount));
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
        throw ContractError("dropout_rate must be in [0,1)");
    }
    if (beam_width < 1) throw ContractError("beam_width must be >= 1");
    if (max_actions_per_sentence < 1 || max_actions_per_paragraph < 1) {
        throw ContractError("action caps must be >= 1");
    }
}

std::string ModelConfig::canonical_json() const {
    ordered_json j;
    j["hidden_size"] = hidden_size;
    j["vocab_size"] = vocab_size;
    j["world_dim"] = world_dim;
    j["action_count"] = action_count;
    j["bidirectional"] = bidirectional;
    j["use_encoder"] = use_encoder;
    j["aligner_mode"] = aligner_mode_name(aligner_mode);
    j["dropout_rate"] = dropout_rate;
    j["beam_width"] = beam_width;
    j["max_actions_per_sentence"] = max_actions_per_sentence;
    j["max_actions_per_paragraph"] = max_actions_per_paragraph;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    static const std::set<std::string> known = {
        "hidden_size", "vocab_size", "world_dim", "action_count", "bidirectional",
        "use_encoder", "aligner_mode", "dropout_rate", "beam_width",
        "max_actions_per_sentence", "max_actions_per_paragraph"};
    ModelConfig c;
    try {
        nlohmann::json j = nlohmann::json::parse(text);
        for (const auto& item : j.items()) {
            if (!known.count(item.key())) {
                throw ParseError("unknown model config key '" + item.key() + "'");
            }
        }
        c.hidden_size = j.at("hidden_size").get<int>();
        c.vocab_size = j.at("vocab_size").get<int>();
        c.world_dim = j.at("world_dim").get<int>();
        c.action_count = j.at("action_count").get<int>();
        c.bidirectional = j.at("bidirectional").get<bool>();
        c.use_encoder = j.at("use_encoder").get<bool>();
        c.aligner_mode = parse_aligner_mode(j.at("aligner_mode").get<std::string>());
        c.dropout_rate = j.at("dropout_rate").get<double>();
        c.beam_width = j.at("beam_width").get<int>();
        c.max_actions_per_sentence = j.at("max_actions_per_sentence").get<int>();
        c.max_actions_per_paragraph = j.at("max_actions_per_paragraph").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

std::uint64_t ModelConfig::fingerprint() const { return fnv1a64(canonical_json()); }

Array& ModelParams::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ContractError("missing parameter tensor '" + name + "'");
    return it->second;
}

const Array& ModelParams::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ContractError("missing parameter tensor '" + name + "'");
    return it->second;
}

std::vector<ndiff::NamedParam> ModelParams::enumerate() {
    std::vector<ndiff::NamedParam> out;
    for (auto& [name, array] : tensors) out.push_back({name, &array});
    return out;
}

std::size_t ModelParams::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, array] : tensors) n += array.size();
    return n;
}

std::uint64_t ModelParams::fingerprint() const {
    std::uint64_t h = fnv1a64("model-params");
    for (const auto& [name, array] : tensors) {
        h = fnv1a64(name, h);
        for (std::size_t dim : array.shape) {
            std::uint64_t d = dim;
            h = fnv1a64(&d, sizeof d, h);
        }
        for (real v : array.data) {
            double dv = static_cast<double>(v);
            h = fnv1a64(&dv, sizeof dv, h);
        }
    }
    return h;
}

namespace {

using Shape = std::vector<std::size_t>;

std::map<std::string, Shape> expected_shapes(const ModelConfig& c) {
    const auto n = static_cast<std::size_t>(c.hidden_size);
    const auto K = static_cast<std::size_t>(c.vocab_size);
    const auto H = static_cast<std::size_t>(c.annotation_width());
    const auto C = static_cast<std::size_t>(c.context_width());
    const auto W = static_cast<std::size_t>(c.world_dim);
    const auto A = static_cast<std::size_t>(c.action_count);
    std::map<std::string, Shape> s;
    if (c.use_encoder) {
        s["enc_fw_wx"] = {4 * n, K};
        s["enc_fw_wh"] = {4 * n, n};
        s["enc_fw_b"] = {4 * n};
        if (c.bidirectional) {
            s["enc_bw_wx"] = {4 * n, K};
            s["enc_bw_wh"] = {4 * n, n};
            s["enc_bw_b"] = {4 * n};
        }
    } else {
        s["tok_embed"] = {n, K};
    }
    if (c.aligner_mode != AlignerMode::Uniform) {
        s["align_v"] = {n};
        s["align_w"] = {n, n};
        s["align_vh"] = {n, H};
        if (c.aligner_mode == AlignerMode::MultiLevel && c.use_encoder) {
            s["align_u"] = {n, K};
        }
    }
    s["world_embed"] = {n, W};
    s["dec_w"] = {4 * n, n + C + n};
    s["dec_b"] = {4 * n};
    s["out_ls"] = {n, n};
    s["out_lz"] = {n, C};
    s["out_l0"] = {A, n};
    s["out_b"] = {A};
    return s;
}

bool is_bias(const std::string& name) {
    return name.size() >= 2 && name.compare(name.size() - 2, 2, "_b") == 0;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, const Rng& rng) {
    config.validate();
    ModelParams p;
    const auto n = static_cast<std::size_t>(config.hidden_size);
    for (const auto& [name, shape] : expected_shapes(config)) {
        if (is_bias(name)) {
            Array b = Array::zeros(shape);
            if (name == "enc_fw_b" || name == "enc_bw_b" || name == "dec_b") {
                // Forget-gate bias starts at 1 so early training does not
                // flush the cell. Slice order is i, f, o, g.
                for (std::size_t i = n; i < 2 * n; ++i) b.data[i] = real(1);
            }
            p.tensors.emplace(name, std::move(b));
        } else {
            Rng stream = rng.derive(name);
            p.tensors.emplace(name, ndiff::init_uniform(shape, stream));
        }
    }
    return p;
}

void validate_params(const ModelParams& params, const ModelConfig& config) {
    auto expected = expected_shapes(config);
    for (const auto& [name, shape] : expected) {
        auto it = params.tensors.find(name);
        if (it == params.tensors.end()) {
            throw IntegrityError("checkpoint lacks tensor '" + name + "'");
        }
        if (it->second.shape != shape) {
            throw IntegrityError("tensor '" + name + "' has shape " + it->second.shape_str() +
                                 ", config requires " + Array::zeros(shape).shape_str());
        }
    }
    for (const auto& [name, array] : params.tensors) {
        if (!expected.count(name)) {
            throw IntegrityError("checkpoint carries unexpected tensor '" + name + "'");
        }
    }
}

Var ParamVars::at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw ContractError("missing bound parameter '" + name + "'");
    return it->second;
}

ParamVars bind_params(Tape& tape, const ModelParams& params) {
    ParamVars pv;
    for (const auto& [name, array] : params.tensors) {
        pv.vars.emplace(name, tape.leaf(array));
    }
    return pv;
}

LstmStateVars lstm_from_pre(Tape& tape, Var pre, LstmStateVars prev) {
    std::size_t width = tape.value(pre).size();
    if (width % 4 != 0) throw ShapeError("gate pre-activation width not divisible by 4");
    std::size_t n = width / 4;
    Var i = tape.sigmoid(tape.slice(pre, 0, n));
    Var f = tape.sigmoid(tape.slice(pre, n, n));
    Var o = tape.sigmoid(tape.slice(pre, 2 * n, n));
    Var g = tape.tanh(tape.slice(pre, 3 * n, n));
    Var c = tape.add(tape.mul(f, prev.c), tape.mul(i, g));
    Var h = tape.mul(o, tape.tanh(c));
    return {h, c};
}

LstmStateVars lstm_step(Tape& tape, Var w, Var b, Var input, LstmStateVars prev) {
    Var joint = tape.concat({input, prev.h});
    return lstm_from_pre(tape, tape.affine(w, joint, b), prev);
}

namespace {

void check_tokens(const ModelConfig& config, const std::vector<int>& token_ids) {
    if (token_ids.empty()) throw ContractError("instruction has no tokens");
    for (int id : token_ids) {
        if (id < 0 || id >= config.vocab_size) {
            throw ContractError("token id " + std::to_string(id) + " outside vocabulary of " +
                                std::to_string(config.vocab_size));
        }
    }
}

Var maybe_dropout(Tape& tape, Var v, const ModelConfig& config, bool train, Rng* rng) {
    if (!train || config.dropout_rate == 0.0) return v;
    if (rng == nullptr) throw ContractError("train-time dropout needs an rng");
    return tape.dropout(v, config.dropout_rate, true, *rng);
}

}  // namespace

EncoderOutput encode(Tape& tape, const ParamVars& pv, const ModelConfig& config,
                     const std::vector<int>& token_ids, bool train, Rng* rng) {
    if (!config.use_encoder) throw ContractError("encode called with use_encoder = false");
    check_tokens(config, token_ids);
    const std::size_t N = token_ids.size();
    const auto n = static_cast<std::size_t>(config.hidden_size);

    auto run_direction = [&](const char* wx, const char* wh, const char* b, bool reverse) {
        std::vector<Var> states(N);
        LstmStateVars s{tape.leaf(Array::zeros({n})), tape.leaf(Array::zeros({n}))};
        for (std::size_t step = 0; step < N; ++step) {
            std::size_t j = reverse ? N - 1 - step : step;
            Var pre = tape.add(
                tape.add(tape.col(pv.at(wx), static_cast<std::size_t>(token_ids[j])),
                         tape.matvec(pv.at(wh), s.h)),
                pv.at(b));
            s = lstm_from_pre(tape, pre, s);
            states[j] = s.h;
        }
        return states;
    };

    std::vector<Var> fw = run_direction("enc_fw_wx", "enc_fw_wh", "enc_fw_b", false);
    EncoderOutput out;
    out.token_ids = token_ids;
    out.annotations.reserve(N);
    if (config.bidirectional) {
        std::vector<Var> bw = run_direction("enc_bw_wx", "enc_bw_wh", "enc_bw_b", true);
        for (std::size_t j = 0; j < N; ++j) {
            out.annotations.push_back(
                maybe_dropout(tape, tape.concat({fw[j], bw[j]}), config, train, rng));
        }
    } else {
        for (std::size_t j = 0; j < N; ++j) {
            out.annotations.push_back(maybe_dropout(tape, fw[j], config, train, rng));
        }
    }
    return out;
}

EncoderOutput embed_tokens(Tape& tape, const ParamVars& pv, const ModelConfig& config,
                           const std::vector<int>& token_ids, bool train, Rng* rng) {
    if (config.use_encoder) throw ContractError("embed_tokens called with use_encoder = true");
    check_tokens(config, token_ids);
    EncoderOutput out;
    out.token_ids = token_ids;
    for (int id : token_ids) {
        out.annotations.push_back(maybe_dropout(
            tape, tape.col(pv.at("tok_embed"), static_cast<std::size_t>(id)), config, train, rng));
    }
    return out;
}

EncoderOutput encode_instruction(Tape& tape, const ParamVars& pv, const ModelConfig& config,
                                 const std::vector<int>& token_ids, bool train, Rng* rng) {
    return config.use_encoder ? encode(tape, pv, config, token_ids, train, rng)
                              : embed_tokens(tape, pv, config, token_ids, train, rng);
}

AlignCache build_align_cache(Tape& tape, const ParamVars& pv, const ModelConfig& config,
                             const EncoderOutput& enc) {
    if (enc.annotations.empty()) throw ContractError("alignment needs at least one annotation");
    AlignCache cache;
    const std::size_t N = enc.annotations.size();
    const auto K = static_cast<std::size_t>(config.vocab_size);
    for (std::size_t j = 0; j < N; ++j) {
        if (config.context_has_tokens()) {
            Array onehot = Array::zeros({K});
            onehot.data[static_cast<std::size_t>(enc.token_ids[j])] = real(1);
            cache.contexts.push_back(tape.concat({tape.leaf(std::move(onehot)),
                                                  enc.annotations[j]}));
        } else {
            cache.contexts.push_back(enc.annotations[j]);
        }
    }
    if (config.aligner_mode != AlignerMode::Uniform) {
        bool with_tokens = config.aligner_mode == AlignerMode::MultiLevel && config.use_encoder;
        for (std::size_t j = 0; j < N; ++j) {
            Var base = tape.matvec(pv.at("align_vh"), enc.annotations[j]);
            if (with_tokens) {
                base = tape.add(
                    tape.col(pv.at("align_u"), static_cast<std::size_t>(enc.token_ids[j])), base);
            }
            cache.score_base.push_back(base);
        }
    }
    return cache;
}

std::pair<Var, Var> align_step(Tape& tape, const ParamVars& pv, const ModelConfig& config,
                               Var s_prev, const AlignCache& cache) {
    const std::size_t N = cache.contexts.size();
    Var alpha;
    if (config.aligner_mode == AlignerMode::Uniform) {
        alpha = tape.leaf(Array({N}, std::vector<real>(N, real(1) / static_cast<real>(N))));
    } else {
        Var ws = tape.matvec(pv.at("align_w"), s_prev);
        std::vector<Var> scores;
        scores.reserve(N);
        for (std::size_t j = 0; j < N; ++j) {
            scores.push_back(
                tape.dot(pv.at("align_v"), tape.tanh(tape.add(ws, cache.score_base[j]))));
        }
        alpha = tape.softmax(tape.stack(scores));
    }
    Var z = tape.weighted_sum(alpha, cache.contexts);
    return {z, alpha};
}

std::pair<Var, Var> align(Tape& tape, const ParamVars& pv, const ModelConfig& config, Var s_prev,
                          const EncoderOutput& enc) {
    return align_step(tape, pv, config, s_prev, build_align_cache(tape, pv, config, enc));
}

DecodeStepOut decode_step(Tape& tape, const ParamVars& pv, const ModelConfig& config, Var obs,
                          LstmStateVars prev, Var z, bool train, Rng* rng) {
    Var ey = tape.matvec(pv.at("world_embed"), obs);
    LstmStateVars state = lstm_step(tape, pv.at("dec_w"), pv.at("dec_b"),
                                    tape.concat({ey, z}), prev);
    Var inner = tape.add(tape.add(ey, tape.matvec(pv.at("out_ls"), state.h)),
                         tape.matvec(pv.at("out_lz"), z));
    inner = maybe_dropout(tape, inner, config, train, rng);
    Var q = tape.affine(pv.at("out_l0"), inner, pv.at("out_b"));
    return {tape.softmax(q), state};
}

RolloutResult model_rollout(Tape& tape, const ParamVars& pv, const ModelConfig& config,
                            const std::vector<int>& token_ids, const worldsim::WorldMap& map,
                            worldsim::AgentPose start,
                            const std::vector<worldsim::Action>& teacher, bool train, Rng* rng) {
    using worldsim::Action;
    if (teacher.empty() || teacher.back() != Action::Stop) {
        throw ContractError("teacher actions must end with stop");
    }
    for (std::size_t t = 0; t + 1 < teacher.size(); ++t) {
        if (teacher[t] == Action::Stop) throw ContractError("teacher stop before the last step");
    }
    if (!worldsim::pose_valid(map, start)) throw ContractError("rollout start pose invalid");

    EncoderOutput enc = encode_instruction(tape, pv, config, token_ids, train, rng);
    AlignCache cache = build_align_cache(tape, pv, config, enc);

    const auto n = static_cast<std::size_t>(config.hidden_size);
    LstmStateVars state{tape.leaf(Array::zeros({n})), tape.leaf(Array::zeros({n}))};

    RolloutResult out;
    out.trace.steps = teacher.size();
    out.trace.tokens = token_ids.size();
    out.trace.alpha.reserve(teacher.size() * token_ids.size());

    worldsim::AgentPose pose = start;
    for (std::size_t t = 0; t < teacher.size(); ++t) {
        worldsim::Observation obs = worldsim::observe(map, pose);
        std::vector<double> bits = obs.as_doubles();
        Var obs_leaf = tape.leaf(std::vector<real>(bits.begin(), bits.end()));
        auto [z, alpha] = align_step(tape, pv, config, state.h, cache);
        DecodeStepOut step = decode_step(tape, pv, config, obs_leaf, state, z, train, rng);
        state = step.state;
        out.distributions.push_back(step.probs);
        for (real a : tape.value(alpha).data) out.trace.alpha.push_back(static_cast<double>(a));
        try {
            pose = worldsim::apply_action(map, pose, teacher[t]);
        } catch (const worldsim::BlockedMoveError& e) {
            throw worldsim::BlockedMoveError(
                std::string(e.what()) + " (teacher step " + std::to_string(t) + ")",
                static_cast<int>(t));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Value path. Loops mirror the tape ops' accumulation order so both paths
// agree to rounding error.

namespace {

std::vector<real> matvec_val(const Array& w, const std::vector<real>& x) {
    std::size_t m = w.rows(), k = w.cols();
    if (k != x.size()) {
        throw ShapeError("matvec: weight " + w.shape_str() + " vs input length " +
                         std::to_string(x.size()));
    }
    std::vector<real> out(m);
    for (std::size_t r = 0; r < m; ++r) {
        real acc = 0;
        const real* wr = w.data.data() + r * k;
        for (std::size_t c = 0; c < k; ++c) acc += wr[c] * x[c];
        out[r] = acc;
    }
    return out;
}

std::vector<real> col_val(const Array& w, std::size_t j) {
    std::size_t m = w.rows(), k = w.cols();
    std::vector<real> out(m);
    for (std::size_t r = 0; r < m; ++r) out[r] = w.data[r * k + j];
    return out;
}

void add_in_place(std::vector<real>& a, const std::vector<real>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void softmax_in_place(std::vector<real>& v) {
    real mx = *std::max_element(v.begin(), v.end());
    real sum = 0;
    for (real& x : v) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (real& x : v) x /= sum;
}

struct LstmVal {
    std::vector<real> h, c;
};

void lstm_from_pre_val(const std::vector<real>& pre, LstmVal& s) {
    std::size_t n = pre.size() / 4;
    for (std::size_t k = 0; k < n; ++k) {
        real i = real(1) / (real(1) + std::exp(-pre[k]));
        real f = real(1) / (real(1) + std::exp(-pre[n + k]));
        real o = real(1) / (real(1) + std::exp(-pre[2 * n + k]));
        real g = std::tanh(pre[3 * n + k]);
        real c = f * s.c[k] + i * g;
        s.c[k] = c;
        s.h[k] = o * std::tanh(c);
    }
}

}  // namespace

EncodedInstruction encode_values(const ModelParams& params, const ModelConfig& config,
                                 const std::vector<int>& token_ids) {
    check_tokens(config, token_ids);
    const std::size_t N = token_ids.size();
    const auto n = static_cast<std::size_t>(config.hidden_size);
    const auto K = static_cast<std::size_t>(config.vocab_size);

    std::vector<std::vector<real>> annotations(N);
    if (config.use_encoder) {
        auto run_direction = [&](const char* wx, const char* wh, const char* b, bool reverse,
                                 std::vector<std::vector<real>>& states) {
            const Array& awx = params.at(wx);
            const Array& awh = params.at(wh);
            const Array& ab = params.at(b);
            LstmVal s{std::vector<real>(n, 0), std::vector<real>(n, 0)};
            for (std::size_t step = 0; step < N; ++step) {
                std::size_t j = reverse ? N - 1 - step : step;
                std::vector<real> pre = col_val(awx, static_cast<std::size_t>(token_ids[j]));
                add_in_place(pre, matvec_val(awh, s.h));
                for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += ab.data[i];
                lstm_from_pre_val(pre, s);
                states[j] = s.h;
            }
        };
        std::vector<std::vector<real>> fw(N);
        run_direction("enc_fw_wx", "enc_fw_wh", "enc_fw_b", false, fw);
        if (config.bidirectional) {
            std::vector<std::vector<real>> bw(N);
            run_direction("enc_bw_wx", "enc_bw_wh", "enc_bw_b", true, bw);
            for (std::size_t j = 0; j < N; ++j) {
                annotations[j] = fw[j];
                annotations[j].insert(annotations[j].end(), bw[j].begin(), bw[j].end());
            }
        } else {
            annotations = std::move(fw);
        }
    } else {
        const Array& emb = params.at("tok_embed");
        for (std::size_t j = 0; j < N; ++j) {
            annotations[j] = col_val(emb, static_cast<std::size_t>(token_ids[j]));
        }
    }

    EncodedInstruction out;
    out.tokens = N;
    for (std::size_t j = 0; j < N; ++j) {
        if (config.context_has_tokens()) {
            std::vector<real> ctx(K, 0);
            ctx[static_cast<std::size_t>(token_ids[j])] = real(1);
            ctx.insert(ctx.end(), annotations[j].begin(), annotations[j].end());
            out.contexts.push_back(std::move(ctx));
        } else {
            out.contexts.push_back(annotations[j]);
        }
    }
    if (config.aligner_mode != AlignerMode::Uniform) {
        bool with_tokens = config.aligner_mode == AlignerMode::MultiLevel && config.use_encoder;
        for (std::size_t j = 0; j < N; ++j) {
            std::vector<real> base = matvec_val(params.at("align_vh"), annotations[j]);
            if (with_tokens) {
                std::vector<real> u =
                    col_val(params.at("align_u"), static_cast<std::size_t>(token_ids[j]));
                add_in_place(u, base);
                base = std::move(u);
            }
            out.score_base.push_back(std::move(base));
        }
    }
    return out;
}

DecoderValueState initial_state(const ModelConfig& config) {
    const auto n = static_cast<std::size_t>(config.hidden_size);
    return {std::vector<real>(n, 0), std::vector<real>(n, 0)};
}

ValueStep decode_values(const ModelParams& params, const ModelConfig& config,
                        const EncodedInstruction& enc, DecoderValueState& state,
                        const worldsim::Observation& obs) {
    const std::size_t N = enc.contexts.size();
    if (N == 0) throw ContractError("decode_values: empty encoding");

    ValueStep out;
    out.alpha.assign(N, real(1) / static_cast<real>(N));
    if (config.aligner_mode != AlignerMode::Uniform) {
        const Array& av = params.at("align_v");
        std::vector<real> ws = matvec_val(params.at("align_w"), state.h);
        for (std::size_t j = 0; j < N; ++j) {
            real acc = 0;
            for (std::size_t i = 0; i < ws.size(); ++i) {
                acc += av.data[i] * std::tanh(ws[i] + enc.score_base[j][i]);
            }
            out.alpha[j] = acc;
        }
        softmax_in_place(out.alpha);
    }

    std::size_t cw = enc.contexts[0].size();
    std::vector<real> z(cw, 0);
    for (std::size_t j = 0; j < N; ++j) {
        for (std::size_t i = 0; i < cw; ++i) z[i] += out.alpha[j] * enc.contexts[j][i];
    }

    std::vector<real> y(obs.bits.begin(), obs.bits.end());
    std::vector<real> ey = matvec_val(params.at("world_embed"), y);

    const Array& dw = params.at("dec_w");
    const Array& db = params.at("dec_b");
    std::vector<real> joint;
    joint.reserve(ey.size() + z.size() + state.h.size());
    joint.insert(joint.end(), ey.begin(), ey.end());
    joint.insert(joint.end(), z.begin(), z.end());
    joint.insert(joint.end(), state.h.begin(), state.h.end());
    std::vector<real> pre = matvec_val(dw, joint);
    for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += db.data[i];
    LstmVal s{std::move(state.h), std::move(state.c)};
    lstm_from_pre_val(pre, s);
    state.h = std::move(s.h);
    state.c = std::move(s.c);

    std::vector<real> inner = ey;
    add_in_place(inner, matvec_val(params.at("out_ls"), state.h));
    add_in_place(inner, matvec_val(params.at("out_lz"), z));
    std::vector<real> q = matvec_val(params.at("out_l0"), inner);
    const Array& ob = params.at("out_b");
    for (std::size_t i = 0; i < q.size(); ++i) q[i] += ob.data[i];
    softmax_in_place(q);
    for (std::size_t i = 0; i < out.probs.size(); ++i) out.probs[i] = q[i];
    return out;
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const ModelConfig& config) {
    validate_params(params, config);
    std::vector<ndiff::ArchiveEntry> entries;
    for (const auto& [name, array] : params.tensors) entries.push_back({name, array});
    ndiff::save_archive(path, config.fingerprint(), config.canonical_json(), entries);
}

Checkpoint load_checkpoint(const std::string& path) {
    ndiff::LoadedArchive raw = ndiff::load_archive(path);
    Checkpoint ck;
    ck.config = ModelConfig::from_json(raw.config_json);
    if (ck.config.fingerprint() != raw.config_fingerprint) {
        throw IntegrityError("checkpoint '" + path + "': config fingerprint mismatch");
    }
    ck.params.tensors = std::move(raw.entries);
    validate_params(ck.params, ck.config);
    return ck;
}

}  // namespace walklab::seq2seq
