#include "walklab/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace walklab::inference {

using worldsim::Action;
using worldsim::AgentPose;

void Ensemble::validate() const {
    if (config == nullptr) throw ContractError("ensemble has no config");
    if (members.empty()) throw ContractError("ensemble has no members");
    config->validate();
    for (const auto* m : members) {
        if (m == nullptr) throw ContractError("ensemble member is null");
        seq2seq::validate_params(*m, *config);
    }
}

SentenceEncoding encode_sentence(const Ensemble& ensemble, const std::vector<int>& token_ids) {
    SentenceEncoding enc;
    enc.per_member.reserve(ensemble.members.size());
    for (const auto* m : ensemble.members) {
        enc.per_member.push_back(seq2seq::encode_values(*m, *ensemble.config, token_ids));
    }
    return enc;
}

std::array<double, 4> step_distribution(const Ensemble& ensemble, const SentenceEncoding& enc,
                                        const worldsim::WorldMap& map, Hypothesis& hyp) {
    if (enc.per_member.size() != ensemble.members.size() ||
        hyp.states.size() != ensemble.members.size()) {
        throw ContractError("step_distribution: member count mismatch");
    }
    worldsim::Observation obs = worldsim::observe(map, hyp.pose);
    std::array<double, 4> mean{};
    for (std::size_t m = 0; m < ensemble.members.size(); ++m) {
        seq2seq::ValueStep step = seq2seq::decode_values(*ensemble.members[m], *ensemble.config,
                                                         enc.per_member[m], hyp.states[m], obs);
        for (std::size_t a = 0; a < 4; ++a) mean[a] += static_cast<double>(step.probs[a]);
    }
    for (double& v : mean) v /= static_cast<double>(ensemble.members.size());
    return mean;
}

namespace {

// Deterministic ordering: higher score first, then lexicographically smaller
// action sequence (which also realizes action-enum-order tie-breaking).
bool better(double score_a, const std::vector<Action>& a, double score_b,
            const std::vector<Action>& b) {
    if (score_a != score_b) return score_a > score_b;
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

struct Live {
    std::vector<Action> actions;
    double log_prob = 0.0;
    AgentPose pose;
    std::vector<seq2seq::DecoderValueState> states;
};

}  // namespace

std::vector<SearchResult> beam_pass(const Ensemble& ensemble, const SentenceEncoding& enc,
                                    const worldsim::WorldMap& map,
                                    const std::vector<BeamSeed>& seeds, int width, int max_len,
                                    int total_cap) {
    if (width < 1) throw ContractError("beam width must be >= 1");
    if (max_len < 1) throw ContractError("beam max length must be >= 1");
    if (seeds.empty()) throw ContractError("beam_pass: no seeds");
    const std::size_t M = ensemble.members.size();

    std::vector<Live> beam;
    for (const BeamSeed& s : seeds) {
        if (!worldsim::pose_valid(map, s.pose)) throw ContractError("beam seed pose invalid");
        Live l;
        l.actions = s.actions;
        l.log_prob = s.log_prob;
        l.pose = s.pose;
        l.states.assign(M, seq2seq::initial_state(*ensemble.config));
        beam.push_back(std::move(l));
    }

    std::vector<SearchResult> done;
    auto keep_top = [&](std::vector<SearchResult>& v) {
        std::sort(v.begin(), v.end(), [](const SearchResult& a, const SearchResult& b) {
            return better(a.log_prob, a.actions, b.log_prob, b.actions);
        });
        if (v.size() > static_cast<std::size_t>(width)) v.resize(static_cast<std::size_t>(width));
    };

    const std::size_t prefix_len = seeds[0].actions.size();
    for (int depth = 0; depth < max_len && !beam.empty(); ++depth) {
        std::vector<Live> next;
        for (Live& hyp : beam) {
            Hypothesis probe;
            probe.pose = hyp.pose;
            probe.states = std::move(hyp.states);
            std::array<double, 4> dist = step_distribution(ensemble, enc, map, probe);
            // Non-stop continuations are cut off by the per-sentence and
            // per-paragraph caps; stop is always available.
            bool allow_continue = depth + 1 < max_len &&
                                  static_cast<int>(hyp.actions.size()) + 1 < total_cap;
            for (int ai = 0; ai < 4; ++ai) {
                auto a = static_cast<Action>(ai);
                double step_score = std::log(dist[static_cast<std::size_t>(ai)]);
                if (a == Action::Stop) {
                    SearchResult r;
                    r.actions = hyp.actions;
                    r.actions.push_back(a);
                    r.log_prob = hyp.log_prob + step_score;
                    r.end = hyp.pose;
                    done.push_back(std::move(r));
                    continue;
                }
                if (!allow_continue) continue;
                AgentPose moved;
                try {
                    moved = worldsim::apply_action(map, hyp.pose, a);
                } catch (const worldsim::BlockedMoveError&) {
                    continue;  // forward into a wall: prune
                }
                Live child;
                child.actions = hyp.actions;
                child.actions.push_back(a);
                child.log_prob = hyp.log_prob + step_score;
                child.pose = moved;
                child.states = probe.states;
                next.push_back(std::move(child));
            }
        }
        std::sort(next.begin(), next.end(), [](const Live& a, const Live& b) {
            return better(a.log_prob, a.actions, b.log_prob, b.actions);
        });
        if (next.size() > static_cast<std::size_t>(width)) {
            next.resize(static_cast<std::size_t>(width));
        }
        keep_top(done);
        // Extensions never raise a score, so once the k-th best finished
        // hypothesis strictly beats every live one the finished set is final.
        // (Strictly: a zero-cost extension could still tie and win on the
        // lexicographic order.)
        if (done.size() >= static_cast<std::size_t>(width) && !next.empty() &&
            next.front().log_prob < done.back().log_prob) {
            next.clear();
        }
        beam = std::move(next);
    }

    keep_top(done);
    if (done.empty()) {
        // Unreachable with the action set as designed (stop is always legal);
        // kept so a degenerate caller still gets an executable answer.
        SearchResult r;
        r.actions = seeds[0].actions;
        r.actions.push_back(Action::Stop);
        r.log_prob = -std::numeric_limits<double>::infinity();
        r.end = seeds[0].pose;
        r.flagged = true;
        done.push_back(std::move(r));
    }
    (void)prefix_len;
    return done;
}

SearchResult beam_search(const Ensemble& ensemble, const std::vector<int>& token_ids,
                         const worldsim::WorldMap& map, AgentPose start, int width, int max_len) {
    ensemble.validate();
    SentenceEncoding enc = encode_sentence(ensemble, token_ids);
    std::vector<BeamSeed> seeds{BeamSeed{{}, 0.0, start}};
    std::vector<SearchResult> done =
        beam_pass(ensemble, enc, map, seeds, width, max_len, max_len);
    return done.front();
}

ParagraphResult follow_paragraph(const Ensemble& ensemble,
                                 const std::vector<std::vector<int>>& sentences,
                                 const worldsim::WorldMap& map, AgentPose start, int width) {
    ensemble.validate();
    if (!worldsim::pose_valid(map, start)) throw ContractError("paragraph start pose invalid");
    ParagraphResult out;
    out.end = start;
    if (sentences.empty()) return out;

    const int sentence_cap = ensemble.config->max_actions_per_sentence;
    const int paragraph_cap = ensemble.config->max_actions_per_paragraph;
    std::vector<BeamSeed> seeds{BeamSeed{{}, 0.0, start}};
    std::vector<SearchResult> survivors;
    bool flagged = false;
    for (const std::vector<int>& tokens : sentences) {
        SentenceEncoding enc = encode_sentence(ensemble, tokens);
        survivors = beam_pass(ensemble, enc, map, seeds, width, sentence_cap, paragraph_cap);
        for (const SearchResult& r : survivors) flagged = flagged || r.flagged;
        seeds.clear();
        for (const SearchResult& r : survivors) {
            seeds.push_back(BeamSeed{r.actions, r.log_prob, r.end});
        }
    }
    const SearchResult& best = survivors.front();
    out.end = best.end;
    out.actions = best.actions;
    out.log_prob = best.log_prob;
    out.flagged = flagged;
    return out;
}

}  // namespace walklab::inference
