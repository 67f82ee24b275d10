#include "walklab/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <thread>

namespace walklab::trainer {

using worldsim::Action;

SequenceLoss sequence_loss(ndiff::Tape& tape, const std::vector<ndiff::Var>& distributions,
                           const std::vector<Action>& gold) {
    if (distributions.size() != gold.size()) {
        throw ContractError("sequence_loss: " + std::to_string(distributions.size()) +
                            " distributions vs " + std::to_string(gold.size()) + " gold actions");
    }
    if (gold.empty()) throw ContractError("sequence_loss: empty sequence");
    SequenceLoss out;
    std::vector<ndiff::Var> logs;
    logs.reserve(gold.size());
    for (std::size_t t = 0; t < gold.size(); ++t) {
        ndiff::Var p = tape.pick(distributions[t], static_cast<std::size_t>(gold[t]));
        if (static_cast<double>(tape.value(p).data[0]) < kLossClampEps) ++out.clamped;
        logs.push_back(tape.clamped_log(p, ndiff::real(kLossClampEps)));
    }
    out.loss = tape.neg(tape.sum(logs));
    return out;
}

std::string history_csv(const TrainHistory& history) {
    std::string out = "epoch,train_loss,metric,seconds\n";
    char buf[128];
    for (const EpochRecord& r : history.epochs) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.3f\n", r.epoch, r.train_loss, r.metric,
                      r.seconds);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "# stopping_epoch=%d best_metric=%.17g skipped=%d clamped=%d\n",
                  history.stopping_epoch, history.best_metric, history.skipped_items,
                  history.clamped_steps);
    out += buf;
    return out;
}

double stopping_metric(const inference::Ensemble& ensemble,
                       const std::vector<corpus::SampleItem>& items,
                       const std::map<std::string, worldsim::WorldMap>& maps,
                       const corpus::Vocabulary& vocab) {
    if (items.empty()) return 0.0;
    int successes = 0;
    for (const corpus::SampleItem& item : items) {
        auto mi = maps.find(item.map_name);
        if (mi == maps.end()) {
            throw IntegrityError("stopping metric: item references missing map '" +
                                 item.map_name + "'");
        }
        const worldsim::WorldMap& map = mi->second;
        int start = map.node_index(item.start.node);
        if (start < 0) continue;  // unreachable start counts as a failure
        std::vector<int> ids;
        ids.reserve(item.tokens.size());
        for (const std::string& t : item.tokens) ids.push_back(vocab.index_of(t));
        inference::SearchResult r =
            beam_search(ensemble, ids, map, worldsim::AgentPose{start, item.start.orientation}, 1,
                        ensemble.config->max_actions_per_sentence);
        if (!r.flagged && map.node(r.end.node).id == item.end.node &&
            r.end.orientation == item.end.orientation) {
            ++successes;
        }
    }
    return static_cast<double>(successes) / static_cast<double>(items.size());
}

namespace {

struct PreparedItem {
    const corpus::SampleItem* item = nullptr;
    const worldsim::WorldMap* map = nullptr;
    std::vector<int> token_ids;
    worldsim::AgentPose start;
};

std::string item_label(const corpus::SampleItem& item) {
    return item.map_name + "/" + item.paragraph_id + "#" +
           std::to_string(item.sentence_index);
}

}  // namespace

TrainResult train_fold(const corpus::FoldSpec& fold,
                       const std::map<std::string, worldsim::WorldMap>& maps,
                       const corpus::Vocabulary& vocab, const seq2seq::ModelConfig& model_config,
                       const TrainRunConfig& run, std::uint64_t seed,
                       const EpochCallback& on_epoch) {
    model_config.validate();
    if (model_config.vocab_size != vocab.size()) {
        throw ContractError("model vocab_size " + std::to_string(model_config.vocab_size) +
                            " does not match vocabulary of " + std::to_string(vocab.size()));
    }
    if (run.max_epochs < 1) throw ContractError("max_epochs must be >= 1");
    if (run.batch_size < 1) throw ContractError("batch_size must be >= 1");
    if (run.eval_every < 1) throw ContractError("eval_every must be >= 1");

    TrainResult result;
    TrainHistory& history = result.history;

    // Items whose teacher path walks into a wall cannot be rolled out; they
    // are counted and skipped, everything else trains (including items whose
    // demonstrated endpoint disagrees with the label).
    std::vector<PreparedItem> items;
    for (const corpus::SampleItem& item : fold.train_items) {
        auto mi = maps.find(item.map_name);
        if (mi == maps.end()) {
            throw IntegrityError("train item " + item_label(item) + " references missing map");
        }
        PreparedItem p;
        p.item = &item;
        p.map = &mi->second;
        int start = p.map->node_index(item.start.node);
        if (start < 0) {
            ++history.skipped_items;
            continue;
        }
        p.start = worldsim::AgentPose{start, item.start.orientation};
        try {
            worldsim::execute_sequence(*p.map, p.start, item.actions);
        } catch (const worldsim::BlockedMoveError&) {
            ++history.skipped_items;
            continue;
        }
        for (const std::string& t : item.tokens) p.token_ids.push_back(vocab.index_of(t));
        items.push_back(std::move(p));
    }
    if (items.empty()) throw IntegrityError("fold has no trainable items");

    const std::vector<corpus::SampleItem>& stop_items =
        fold.stop_on_test_map() ? fold.test_items : fold.validation_items;

    Rng rng(seed);
    Rng init_rng = rng.derive("init");
    seq2seq::ModelParams params = seq2seq::init_params(model_config, init_rng);
    std::vector<ndiff::NamedParam> named = params.enumerate();
    ndiff::AdamState adam(named, run.adam);

    seq2seq::ModelParams best_params = params;
    history.best_metric = -1.0;
    history.stopping_epoch = 0;

    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<ndiff::Array> batch_grads;
    for (const auto& np : named) batch_grads.push_back(ndiff::Array::zeros(np.array->shape));

    for (int epoch = 1; epoch <= run.max_epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        Rng shuffle_rng = rng.derive("shuffle", static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);
        Rng drop_rng = rng.derive("dropout", static_cast<std::uint64_t>(epoch));

        double epoch_loss = 0.0;
        int in_batch = 0;
        auto flush = [&](int count) {
            if (count == 0) return;
            if (count > 1) {
                for (ndiff::Array& g : batch_grads) {
                    for (ndiff::real& v : g.data) v /= static_cast<ndiff::real>(count);
                }
            }
            ndiff::clip_grads(batch_grads, run.clip_norm);
            if (run.use_sgd) {
                ndiff::sgd_step(named, batch_grads, run.sgd_step);
            } else {
                adam.step(named, batch_grads);
            }
            for (ndiff::Array& g : batch_grads) {
                std::fill(g.data.begin(), g.data.end(), ndiff::real(0));
            }
        };

        for (std::size_t oi = 0; oi < order.size(); ++oi) {
            const PreparedItem& p = items[order[oi]];
            ndiff::Tape tape;
            seq2seq::ParamVars pv = seq2seq::bind_params(tape, params);
            seq2seq::RolloutResult roll =
                seq2seq::model_rollout(tape, pv, model_config, p.token_ids, *p.map, p.start,
                                       p.item->actions, true, &drop_rng);
            SequenceLoss l = sequence_loss(tape, roll.distributions, p.item->actions);
            history.clamped_steps += l.clamped;
            double loss_value = static_cast<double>(tape.value(l.loss).data[0]);
            if (!std::isfinite(loss_value)) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                                   ", item " + item_label(*p.item));
            }
            epoch_loss += loss_value;
            tape.backward(l.loss);
            for (std::size_t k = 0; k < named.size(); ++k) {
                const ndiff::Array& g = tape.grad(pv.at(named[k].name));
                for (std::size_t i = 0; i < g.size(); ++i) batch_grads[k].data[i] += g.data[i];
            }
            if (++in_batch == run.batch_size) {
                flush(in_batch);
                in_batch = 0;
            }
        }
        flush(in_batch);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(items.size());
        if (epoch % run.eval_every == 0 || epoch == run.max_epochs) {
            inference::Ensemble view{&model_config, {&params}};
            rec.metric = stopping_metric(view, stop_items, maps, vocab);
            if (rec.metric > history.best_metric) {
                history.best_metric = rec.metric;
                history.stopping_epoch = epoch;
                best_params = params;
            }
        } else {
            rec.metric = -1.0;  // not evaluated this epoch
        }
        rec.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        history.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }

    result.params = std::move(best_params);
    return result;
}

EnsembleTrainResult train_ensemble(const corpus::FoldSpec& fold,
                                   const std::map<std::string, worldsim::WorldMap>& maps,
                                   const corpus::Vocabulary& vocab,
                                   const seq2seq::ModelConfig& model_config,
                                   const TrainRunConfig& run) {
    if (run.ensemble_size < 1) throw ContractError("ensemble_size must be >= 1");
    EnsembleTrainResult out;
    out.members.resize(static_cast<std::size_t>(run.ensemble_size));
    std::vector<std::string> member_errors(out.members.size());

    int jobs = std::max(1, std::min(run.jobs, run.ensemble_size));
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= out.members.size()) return;
            std::uint64_t seed = run.seed + i;
            try {
                out.members[i] = train_fold(fold, maps, vocab, model_config, run, seed);
            } catch (const std::exception& e) {
                member_errors[i] = "member " + std::to_string(i) + " (seed " +
                                   std::to_string(seed) + "): " + e.what();
            }
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    for (const std::string& e : member_errors) {
        if (!e.empty()) out.errors.push_back(e);
    }
    return out;
}

}  // namespace walklab::trainer
