#pragma once

#include <array>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "walklab/common.hpp"
#include "walklab/ndiff.hpp"
#include "walklab/worldsim.hpp"

namespace walklab::seq2seq {

using ndiff::Array;
using ndiff::Tape;
using ndiff::Var;
using ndiff::real;

enum class AlignerMode { MultiLevel, HighLevel, Uniform };
const char* aligner_mode_name(AlignerMode m);
AlignerMode parse_aligner_mode(const std::string& name);

// Architecture switches. Every field participates in the canonical JSON and
// therefore in the fingerprint.
struct ModelConfig {
    int hidden_size = 100;
    int vocab_size = 0;
    int world_dim = worldsim::kObservationDim;
    int action_count = worldsim::kActionCount;
    bool bidirectional = true;
    bool use_encoder = true;
    AlignerMode aligner_mode = AlignerMode::MultiLevel;
    double dropout_rate = 0.5;
    int beam_width = 10;
    int max_actions_per_sentence = 40;
    int max_actions_per_paragraph = 200;

    // Width of one instruction annotation: concatenated forward+backward
    // encoder states, a single direction, or (without the encoder) a learned
    // token embedding.
    int annotation_width() const;
    // Width of the context vector the decoder consumes. Token one-hots come
    // first, annotations second, when both are present.
    int context_width() const;
    bool context_has_tokens() const;

    void validate() const;
    std::string canonical_json() const;
    static ModelConfig from_json(const std::string& text);
    std::uint64_t fingerprint() const;
    bool operator==(const ModelConfig&) const = default;
};

// Learned tensors, keyed by stable names (map order is the enumeration
// order). Which names exist depends on ModelConfig:
//   enc_fw_wx, enc_fw_wh, enc_fw_b    encoder transform, forward direction,
//                                     split into token and recurrent blocks
//   enc_bw_wx, enc_bw_wh, enc_bw_b    backward direction (bidirectional only)
//   tok_embed                         token embedding (encoder disabled only)
//   align_v, align_w, align_vh        scorer v, decoder-state map W,
//                                     annotation map (non-uniform aligner)
//   align_u                           token map U (multi-level + encoder)
//   world_embed                       E, world observation embedding
//   dec_w, dec_b                      decoder transform
//   out_ls, out_lz, out_l0, out_b     deep output layer
struct ModelParams {
    std::map<std::string, Array> tensors;

    Array& at(const std::string& name);
    const Array& at(const std::string& name) const;
    bool has(const std::string& name) const { return tensors.count(name) != 0; }
    std::vector<ndiff::NamedParam> enumerate();
    std::size_t scalar_count() const;
    std::uint64_t fingerprint() const;  // over names, shapes and values
};

ModelParams init_params(const ModelConfig& config, const Rng& rng);
// Checks that exactly the expected tensors exist with the expected shapes.
void validate_params(const ModelParams& params, const ModelConfig& config);

// Tape-side handles for one rollout.
struct ParamVars {
    std::map<std::string, Var> vars;
    Var at(const std::string& name) const;
};
ParamVars bind_params(Tape& tape, const ModelParams& params);

struct LstmStateVars {
    Var h, c;
};
// One LSTM cell update: gates from an affine over (input; prev hidden), cell
// and hidden per the standard i/f/o/g equations. Slice order i, f, o, g.
LstmStateVars lstm_step(Tape& tape, Var w, Var b, Var input, LstmStateVars prev);
// Same cell update from a precomputed gate pre-activation.
LstmStateVars lstm_from_pre(Tape& tape, Var pre, LstmStateVars prev);

struct EncoderOutput {
    std::vector<Var> annotations;  // length N
    std::vector<int> token_ids;
};

// Runs the instruction encoder. Dropout hits the annotations at train time;
// pass rng = nullptr when train is false.
EncoderOutput encode(Tape& tape, const ParamVars& pv, const ModelConfig& config,
                     const std::vector<int>& token_ids, bool train, Rng* rng);
// Encoder-free variant: annotations are learned token embeddings.
EncoderOutput embed_tokens(Tape& tape, const ParamVars& pv, const ModelConfig& config,
                           const std::vector<int>& token_ids, bool train, Rng* rng);
// Dispatches on config.use_encoder.
EncoderOutput encode_instruction(Tape& tape, const ParamVars& pv, const ModelConfig& config,
                                 const std::vector<int>& token_ids, bool train, Rng* rng);

// Position-independent alignment work, shared across decoder steps: context
// vectors (token one-hot; annotation) and the score term that does not
// depend on the decoder state.
struct AlignCache {
    std::vector<Var> contexts;
    std::vector<Var> score_base;  // empty in uniform mode
};
AlignCache build_align_cache(Tape& tape, const ParamVars& pv, const ModelConfig& config,
                             const EncoderOutput& enc);
// Returns (context z, weights alpha).
std::pair<Var, Var> align_step(Tape& tape, const ParamVars& pv, const ModelConfig& config,
                               Var s_prev, const AlignCache& cache);
std::pair<Var, Var> align(Tape& tape, const ParamVars& pv, const ModelConfig& config, Var s_prev,
                          const EncoderOutput& enc);

struct DecodeStepOut {
    Var probs;  // action distribution
    LstmStateVars state;
};
// One decoder step: LSTM over (E·y; z) with recurrent state, then the deep
// output layer E·y + L_s·s + L_z·z through L_0 and a softmax. Dropout hits
// the deep-output vector at train time.
DecodeStepOut decode_step(Tape& tape, const ParamVars& pv, const ModelConfig& config, Var obs,
                          LstmStateVars prev, Var z, bool train, Rng* rng);

// Row-stochastic decoder-step × token attention record.
struct AlignmentTrace {
    std::size_t steps = 0;
    std::size_t tokens = 0;
    std::vector<double> alpha;  // row-major
    double at(std::size_t t, std::size_t j) const { return alpha[t * tokens + j]; }
};

struct RolloutResult {
    std::vector<Var> distributions;  // one per teacher action
    AlignmentTrace trace;
};

// Teacher-forced rollout: encode once, then per step observe the world,
// align, decode, and advance the agent with the teacher action. A teacher
// FORWARD into a wall raises BlockedMoveError naming the step.
RolloutResult model_rollout(Tape& tape, const ParamVars& pv, const ModelConfig& config,
                            const std::vector<int>& token_ids, const worldsim::WorldMap& map,
                            worldsim::AgentPose start,
                            const std::vector<worldsim::Action>& teacher, bool train, Rng* rng);

// ---------------------------------------------------------------------------
// Value path: the same arithmetic without a tape, for inference. Matches the
// tape path to rounding error (never stochastic — dropout is train-only).

struct EncodedInstruction {
    std::vector<std::vector<real>> contexts;
    std::vector<std::vector<real>> score_base;  // empty in uniform mode
    std::size_t tokens = 0;
};
EncodedInstruction encode_values(const ModelParams& params, const ModelConfig& config,
                                 const std::vector<int>& token_ids);

struct DecoderValueState {
    std::vector<real> h, c;
};
DecoderValueState initial_state(const ModelConfig& config);

struct ValueStep {
    std::array<real, 4> probs{};
    std::vector<real> alpha;
};
// Advances state in place and returns the action distribution plus the
// attention row for this step.
ValueStep decode_values(const ModelParams& params, const ModelConfig& config,
                        const EncodedInstruction& enc, DecoderValueState& state,
                        const worldsim::Observation& obs);

// ---------------------------------------------------------------------------
// Checkpoints: ndiff archive + canonical config JSON, fingerprint in the
// header. Tensor payloads are 64-bit regardless of the arithmetic type.

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
};
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const ModelConfig& config);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace walklab::seq2seq
