#pragma once

#include <optional>
#include <string>
#include <vector>

#include "walklab/common.hpp"
#include "walklab/corpus.hpp"
#include "walklab/inference.hpp"
#include "walklab/ndiff.hpp"
#include "walklab/seq2seq.hpp"

namespace walklab::trainer {

struct TrainRunConfig {
    corpus::Protocol protocol = corpus::Protocol::VDev;
    int max_epochs = 50;
    int batch_size = 1;  // per-sequence updates; larger batches average grads
    std::uint64_t seed = 1;
    int ensemble_size = 10;
    ndiff::AdamConfig adam;
    int eval_every = 1;      // epochs between stopping-metric evaluations
    double clip_norm = 5.0;  // gradient-norm ceiling
    bool use_sgd = false;    // plain gradient descent (gradient sanity mode)
    double sgd_step = 0.5;
    int jobs = 1;  // ensemble-level parallelism
};

// Negative log-likelihood of the gold actions under the rolled-out
// distributions. Probabilities below eps are clamped and counted.
struct SequenceLoss {
    ndiff::Var loss;
    int clamped = 0;
};
SequenceLoss sequence_loss(ndiff::Tape& tape, const std::vector<ndiff::Var>& distributions,
                           const std::vector<worldsim::Action>& gold);
inline constexpr double kLossClampEps = 1e-12;

struct EpochRecord {
    int epoch = 0;          // 1-based
    double train_loss = 0;  // mean per-item loss over the epoch
    double metric = 0;      // stopping metric (greedy single-sentence success)
    double seconds = 0;     // wall time; excluded from determinism contracts
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    int stopping_epoch = 0;  // 1-based epoch whose checkpoint was kept
    double best_metric = 0;
    int skipped_items = 0;  // teacher walks into a wall
    int clamped_steps = 0;
};
std::string history_csv(const TrainHistory& history);

struct TrainResult {
    seq2seq::ModelParams params;  // best-metric checkpoint
    TrainHistory history;
};

// Optional per-epoch observer (progress printing); must not mutate anything
// the run depends on.
using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains one model on one fold: Adam over shuffled items, one update per
// sequence, stopping metric evaluated per epoch on the validation slice
// (vDev) or the held-out map (vTest); the best-metric checkpoint wins.
TrainResult train_fold(const corpus::FoldSpec& fold,
                       const std::map<std::string, worldsim::WorldMap>& maps,
                       const corpus::Vocabulary& vocab, const seq2seq::ModelConfig& model_config,
                       const TrainRunConfig& run, std::uint64_t seed,
                       const EpochCallback& on_epoch = {});

struct EnsembleTrainResult {
    std::vector<std::optional<TrainResult>> members;  // index = seed offset
    std::vector<std::string> errors;                  // one entry per failure
    bool complete() const { return errors.empty(); }
};

// ensemble_size independent train_fold runs with seeds run.seed + 0..size-1,
// run on up to run.jobs threads. Failures are collected, never hidden.
EnsembleTrainResult train_ensemble(const corpus::FoldSpec& fold,
                                   const std::map<std::string, worldsim::WorldMap>& maps,
                                   const corpus::Vocabulary& vocab,
                                   const seq2seq::ModelConfig& model_config,
                                   const TrainRunConfig& run);

// Greedy (width-1) single-sentence success rate; the early-stopping metric.
double stopping_metric(const inference::Ensemble& ensemble,
                       const std::vector<corpus::SampleItem>& items,
                       const std::map<std::string, worldsim::WorldMap>& maps,
                       const corpus::Vocabulary& vocab);

}  // namespace walklab::trainer
