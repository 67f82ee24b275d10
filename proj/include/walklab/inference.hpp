#pragma once

#include <array>
#include <string>
#include <vector>

#include "walklab/common.hpp"
#include "walklab/seq2seq.hpp"
#include "walklab/worldsim.hpp"

namespace walklab::inference {

// Read-only view of an ensemble: one shared architecture, one parameter set
// per member. Posteriors are averaged arithmetically across members.
struct Ensemble {
    const seq2seq::ModelConfig* config = nullptr;
    std::vector<const seq2seq::ModelParams*> members;
    void validate() const;
};

// Per-member encodings of one sentence.
struct SentenceEncoding {
    std::vector<seq2seq::EncodedInstruction> per_member;
};
SentenceEncoding encode_sentence(const Ensemble& ensemble, const std::vector<int>& token_ids);

// One search hypothesis. The decoder never sees the chosen action directly —
// actions influence later steps only through the agent's pose — so sibling
// expansions share the post-step decoder states.
struct Hypothesis {
    std::vector<worldsim::Action> actions;
    double log_prob = 0.0;
    worldsim::AgentPose pose;
    std::vector<seq2seq::DecoderValueState> states;  // one per member
    bool terminated = false;
};

// Mean posterior over members at the hypothesis's current pose; advances
// every member's decoder state in place.
std::array<double, 4> step_distribution(const Ensemble& ensemble, const SentenceEncoding& enc,
                                        const worldsim::WorldMap& map, Hypothesis& hyp);

struct SearchResult {
    std::vector<worldsim::Action> actions;  // stop-terminated
    double log_prob = 0.0;
    worldsim::AgentPose end;
    bool flagged = false;  // search had to force a bare stop
};

// Beam entry point for one sentence from one pose. Greedy decoding is
// beam_search with width 1. Hypotheses whose forward step hits a wall are
// pruned; terminated hypotheses compete on total log-probability with
// deterministic lexicographic tie-breaking.
SearchResult beam_search(const Ensemble& ensemble, const std::vector<int>& token_ids,
                         const worldsim::WorldMap& map, worldsim::AgentPose start, int width,
                         int max_len);

// Seeded variant used for sentence chaining: starts from several prior
// hypotheses and returns up to `width` best terminated hypotheses.
struct BeamSeed {
    std::vector<worldsim::Action> actions;  // already-executed prefix
    double log_prob = 0.0;
    worldsim::AgentPose pose;
};
std::vector<SearchResult> beam_pass(const Ensemble& ensemble, const SentenceEncoding& enc,
                                    const worldsim::WorldMap& map,
                                    const std::vector<BeamSeed>& seeds, int width, int max_len,
                                    int total_cap);

struct ParagraphResult {
    worldsim::AgentPose end;
    std::vector<worldsim::Action> actions;  // concatenation over sentences
    double log_prob = 0.0;
    bool flagged = false;
};

// Sentence-by-sentence chaining: each sentence is re-encoded, the beam of a
// sentence is seeded with the previous sentence's surviving hypotheses, and
// scores accumulate across the whole paragraph. Decoder states restart per
// sentence. An empty paragraph returns the start pose.
ParagraphResult follow_paragraph(const Ensemble& ensemble,
                                 const std::vector<std::vector<int>>& sentences,
                                 const worldsim::WorldMap& map, worldsim::AgentPose start,
                                 int width);

}  // namespace walklab::inference
