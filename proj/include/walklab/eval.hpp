#pragma once

#include <string>
#include <vector>

#include "walklab/common.hpp"
#include "walklab/corpus.hpp"
#include "walklab/inference.hpp"
#include "walklab/trainer.hpp"

namespace walklab::eval {

struct ItemRecord {
    std::string map_name;
    std::string paragraph_id;
    int sentence_index = -1;  // -1 for whole-paragraph records
    std::vector<worldsim::Action> predicted;
    std::string end_node;
    int end_orientation = 0;
    bool success = false;
    int distance = 0;  // node distance to the gold end node; -1 = unreachable
    bool flagged = false;
    double log_prob = 0.0;
};

struct FoldResult {
    std::string test_map;
    int items = 0;
    int successes = 0;
    double accuracy = 0.0;
    std::vector<ItemRecord> records;
};

struct EvalReport {
    std::string task;      // "single" | "multi"
    std::string protocol;  // "vdev" | "vtest"
    int beam_width = 0;
    std::uint64_t config_fingerprint = 0;
    std::vector<FoldResult> folds;
    int total_items = 0;
    int total_successes = 0;
    double weighted_accuracy = 0.0;  // sum successes / sum items
    bool accuracy_defined = true;    // false when no items at all

    std::string to_json() const;  // deterministic; carries no timestamps
};

// One trained ensemble per fold, keyed by the held-out map.
struct FoldModels {
    std::string test_map;
    inference::Ensemble ensemble;
};

// Single-sentence protocol: every test item decoded independently from its
// gold start pose; success needs the exact end node and orientation.
EvalReport eval_single(const std::vector<FoldModels>& models, const corpus::Dataset& data,
                       const corpus::Vocabulary& vocab, corpus::Protocol protocol, int beam_width,
                       int jobs = 1);

// Multi-sentence protocol: paragraphs decoded with sentence chaining from the
// paragraph start; success needs the end node only.
EvalReport eval_multi(const std::vector<FoldModels>& models, const corpus::Dataset& data,
                      const corpus::Vocabulary& vocab, corpus::Protocol protocol, int beam_width,
                      int jobs = 1);

// Fraction of items whose end node lies within d hops of the goal, for each
// threshold; non-decreasing, and anchored at position accuracy for d = 0.
std::vector<double> distance_curve(const EvalReport& report,
                                   const std::vector<int>& thresholds = {0, 1, 2, 3});

// The five architecture variants compared in the component study, derived
// from a full-model base config.
struct AblationVariant {
    std::string name;
    seq2seq::ModelConfig config;
};
std::vector<AblationVariant> ablation_variants(const seq2seq::ModelConfig& base);

struct AblationRow {
    std::string variant;
    double single_accuracy = 0.0;
    double multi_accuracy = 0.0;
};
struct AblationReport {
    std::string protocol;
    std::uint64_t base_config_fingerprint = 0;
    std::uint64_t fold_fingerprint = 0;  // identical partitions across variants
    std::uint64_t base_seed = 0;
    int ensemble_size = 0;
    int beam_width = 0;
    std::vector<AblationRow> rows;
    std::string to_json() const;
};

// Trains and evaluates every variant under identical folds and seeds.
AblationReport ablation_sweep(const corpus::Dataset& data, const corpus::Vocabulary& vocab,
                              const seq2seq::ModelConfig& base,
                              const trainer::TrainRunConfig& run);

// Stable digest of a fold partition (which items landed where).
std::uint64_t fold_fingerprint(const std::vector<corpus::FoldSpec>& folds);

// Attention heatmap as SVG: one row per action step, one column per token,
// cell gray level linear in the weight (8-bit quantization).
std::string render_alignment(const seq2seq::AlignmentTrace& trace,
                             const std::vector<std::string>& tokens,
                             const std::vector<worldsim::Action>& actions);

// Map drawing as SVG: hallways colored by floor pattern, dashed by painting,
// object initials at nodes, and the walked path with start/end markers. The
// end marker carries data-end-* attributes for downstream checks. Interior
// stop actions (paragraph concatenations) are legal no-ops here.
std::string render_path(const worldsim::WorldMap& map, worldsim::AgentPose start,
                        const std::vector<worldsim::Action>& actions);

// Teacher-forces `actions` through every member and averages: per-step mean
// action distributions plus the mean attention trace, for trace files.
struct TraceResult {
    seq2seq::AlignmentTrace trace;
    std::vector<std::array<double, 4>> distributions;
};
TraceResult trace_actions(const inference::Ensemble& ensemble, const std::vector<int>& token_ids,
                          const worldsim::WorldMap& map, worldsim::AgentPose start,
                          const std::vector<worldsim::Action>& actions);

}  // namespace walklab::eval
