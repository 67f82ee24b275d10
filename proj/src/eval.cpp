#include "walklab/eval.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <cmath>
#include <functional>
#include <mutex>
#include <thread>

#include <json.hpp>

namespace walklab::eval {

using ordered_json = nlohmann::ordered_json;
using worldsim::Action;
using worldsim::AgentPose;

namespace {

std::vector<int> token_ids_of(const corpus::Vocabulary& vocab,
                              const std::vector<std::string>& tokens) {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const std::string& t : tokens) ids.push_back(vocab.index_of(t));
    return ids;
}

int goal_distance(const worldsim::WorldMap& map, const std::string& from_id,
                  const std::string& goal_id) {
    int a = map.node_index(from_id);
    int b = map.node_index(goal_id);
    if (a < 0 || b < 0) return -1;
    try {
        return worldsim::path_distance(map, a, b);
    } catch (const worldsim::UnreachableError&) {
        return -1;
    }
}

void run_parallel(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max(1, jobs);
    if (jobs == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(count);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t n_threads = std::min(static_cast<std::size_t>(jobs), count);
    for (std::size_t j = 0; j < n_threads; ++j) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

void finalize(EvalReport& report) {
    report.total_items = 0;
    report.total_successes = 0;
    for (FoldResult& fold : report.folds) {
        fold.items = static_cast<int>(fold.records.size());
        fold.successes = 0;
        for (const ItemRecord& r : fold.records) fold.successes += r.success ? 1 : 0;
        fold.accuracy = fold.items > 0
                            ? static_cast<double>(fold.successes) / static_cast<double>(fold.items)
                            : 0.0;
        report.total_items += fold.items;
        report.total_successes += fold.successes;
    }
    report.accuracy_defined = report.total_items > 0;
    report.weighted_accuracy =
        report.accuracy_defined
            ? static_cast<double>(report.total_successes) / static_cast<double>(report.total_items)
            : 0.0;
}

const worldsim::WorldMap& map_of(const corpus::Dataset& data, const std::string& name) {
    auto it = data.maps.find(name);
    if (it == data.maps.end()) throw IntegrityError("evaluation references missing map '" + name + "'");
    return it->second;
}

std::uint64_t shared_fingerprint(const std::vector<FoldModels>& models) {
    if (models.empty()) throw ContractError("evaluation needs at least one fold's models");
    std::uint64_t fp = 0;
    for (const FoldModels& fm : models) {
        fm.ensemble.validate();
        std::uint64_t f = fm.ensemble.config->fingerprint();
        if (fp == 0) {
            fp = f;
        } else if (f != fp) {
            throw IntegrityError("fold ensembles disagree on model config");
        }
    }
    return fp;
}

}  // namespace

EvalReport eval_single(const std::vector<FoldModels>& models, const corpus::Dataset& data,
                       const corpus::Vocabulary& vocab, corpus::Protocol protocol, int beam_width,
                       int jobs) {
    EvalReport report;
    report.task = "single";
    report.protocol = corpus::protocol_name(protocol);
    report.beam_width = beam_width;
    report.config_fingerprint = shared_fingerprint(models);

    for (const FoldModels& fm : models) {
        const worldsim::WorldMap& map = map_of(data, fm.test_map);
        std::vector<const corpus::SampleItem*> items;
        for (const corpus::SampleItem& it : data.items) {
            if (it.map_name == fm.test_map) items.push_back(&it);
        }
        FoldResult fold;
        fold.test_map = fm.test_map;
        fold.records.resize(items.size());
        const int cap = fm.ensemble.config->max_actions_per_sentence;
        run_parallel(items.size(), jobs, [&](std::size_t i) {
            const corpus::SampleItem& item = *items[i];
            ItemRecord rec;
            rec.map_name = item.map_name;
            rec.paragraph_id = item.paragraph_id;
            rec.sentence_index = item.sentence_index;
            int start = map.node_index(item.start.node);
            if (start < 0) throw IntegrityError("item start node missing from map");
            inference::SearchResult r =
                inference::beam_search(fm.ensemble, token_ids_of(vocab, item.tokens), map,
                                       AgentPose{start, item.start.orientation}, beam_width, cap);
            rec.predicted = r.actions;
            rec.end_node = map.node(r.end.node).id;
            rec.end_orientation = r.end.orientation;
            rec.flagged = r.flagged;
            rec.log_prob = r.log_prob;
            rec.success = !r.flagged && rec.end_node == item.end.node &&
                          rec.end_orientation == item.end.orientation;
            rec.distance = goal_distance(map, rec.end_node, item.end.node);
            fold.records[i] = std::move(rec);
        });
        report.folds.push_back(std::move(fold));
    }
    finalize(report);
    return report;
}

EvalReport eval_multi(const std::vector<FoldModels>& models, const corpus::Dataset& data,
                      const corpus::Vocabulary& vocab, corpus::Protocol protocol, int beam_width,
                      int jobs) {
    EvalReport report;
    report.task = "multi";
    report.protocol = corpus::protocol_name(protocol);
    report.beam_width = beam_width;
    report.config_fingerprint = shared_fingerprint(models);

    for (const FoldModels& fm : models) {
        const worldsim::WorldMap& map = map_of(data, fm.test_map);
        std::vector<corpus::SampleItem> fold_items;
        for (const corpus::SampleItem& it : data.items) {
            if (it.map_name == fm.test_map) fold_items.push_back(it);
        }
        std::vector<corpus::Paragraph> paragraphs = corpus::group_paragraphs(fold_items);
        FoldResult fold;
        fold.test_map = fm.test_map;
        fold.records.resize(paragraphs.size());
        run_parallel(paragraphs.size(), jobs, [&](std::size_t i) {
            const corpus::Paragraph& para = paragraphs[i];
            ItemRecord rec;
            rec.map_name = para.map_name;
            rec.paragraph_id = para.paragraph_id;
            rec.sentence_index = -1;
            int start = map.node_index(para.start.node);
            if (start < 0) throw IntegrityError("paragraph start node missing from map");
            std::vector<std::vector<int>> sentences;
            for (const corpus::SampleItem& s : para.sentences) {
                sentences.push_back(token_ids_of(vocab, s.tokens));
            }
            inference::ParagraphResult r =
                inference::follow_paragraph(fm.ensemble, sentences, map,
                                            AgentPose{start, para.start.orientation}, beam_width);
            rec.predicted = r.actions;
            rec.end_node = map.node(r.end.node).id;
            rec.end_orientation = r.end.orientation;
            rec.flagged = r.flagged;
            rec.log_prob = r.log_prob;
            rec.success = !r.flagged && rec.end_node == para.end_node;
            rec.distance = goal_distance(map, rec.end_node, para.end_node);
            fold.records[i] = std::move(rec);
        });
        report.folds.push_back(std::move(fold));
    }
    finalize(report);
    return report;
}

std::vector<double> distance_curve(const EvalReport& report, const std::vector<int>& thresholds) {
    std::vector<double> curve;
    int total = 0;
    std::vector<int> distances;
    for (const FoldResult& fold : report.folds) {
        for (const ItemRecord& r : fold.records) {
            distances.push_back(r.distance);
            ++total;
        }
    }
    for (int d : thresholds) {
        if (d < 0) throw ContractError("distance thresholds must be non-negative");
        int within = 0;
        for (int dist : distances) {
            if (dist >= 0 && dist <= d) ++within;
        }
        curve.push_back(total > 0 ? static_cast<double>(within) / static_cast<double>(total)
                                  : 0.0);
    }
    return curve;
}

std::string EvalReport::to_json() const {
    ordered_json j;
    j["task"] = task;
    j["protocol"] = protocol;
    j["beam_width"] = beam_width;
    j["config_fingerprint"] = to_hex(config_fingerprint);
    j["total_items"] = total_items;
    j["total_successes"] = total_successes;
    j["weighted_accuracy"] = weighted_accuracy;
    j["accuracy_defined"] = accuracy_defined;
    std::vector<double> curve = distance_curve(*this);
    j["distance_curve"] = curve;
    ordered_json folds_json = ordered_json::array();
    for (const FoldResult& fold : folds) {
        ordered_json fj;
        fj["test_map"] = fold.test_map;
        fj["items"] = fold.items;
        fj["successes"] = fold.successes;
        fj["accuracy"] = fold.accuracy;
        ordered_json records = ordered_json::array();
        for (const ItemRecord& r : fold.records) {
            ordered_json rj;
            rj["paragraph_id"] = r.paragraph_id;
            rj["sentence_index"] = r.sentence_index;
            std::vector<std::string> acts;
            for (Action a : r.predicted) acts.push_back(worldsim::action_name(a));
            rj["predicted"] = acts;
            rj["end_node"] = r.end_node;
            rj["end_orientation"] = r.end_orientation;
            rj["success"] = r.success;
            rj["distance"] = r.distance;
            rj["flagged"] = r.flagged;
            rj["log_prob"] = r.log_prob;
            records.push_back(std::move(rj));
        }
        fj["records"] = std::move(records);
        folds_json.push_back(std::move(fj));
    }
    j["folds"] = std::move(folds_json);
    return j.dump(2) + "\n";
}

std::vector<AblationVariant> ablation_variants(const seq2seq::ModelConfig& base) {
    seq2seq::ModelConfig full = base;
    full.bidirectional = true;
    full.use_encoder = true;
    full.aligner_mode = seq2seq::AlignerMode::MultiLevel;

    std::vector<AblationVariant> out;
    out.push_back({"full", full});
    seq2seq::ModelConfig high = full;
    high.aligner_mode = seq2seq::AlignerMode::HighLevel;
    out.push_back({"high_level", high});
    seq2seq::ModelConfig uniform = full;
    uniform.aligner_mode = seq2seq::AlignerMode::Uniform;
    out.push_back({"uniform", uniform});
    seq2seq::ModelConfig uni = full;
    uni.bidirectional = false;
    out.push_back({"unidirectional", uni});
    seq2seq::ModelConfig noenc = full;
    noenc.use_encoder = false;
    out.push_back({"no_encoder", noenc});
    return out;
}

std::uint64_t fold_fingerprint(const std::vector<corpus::FoldSpec>& folds) {
    std::uint64_t h = fnv1a64("fold-partition");
    // string_view keeps the call on the text overload; a bare pointer would
    // resolve against (bytes, len) with the running hash as the length.
    auto mix_items = [&h](std::string_view tag, const std::vector<corpus::SampleItem>& items) {
        h = fnv1a64(tag, h);
        for (const corpus::SampleItem& it : items) {
            h = fnv1a64(it.map_name, h);
            h = fnv1a64(it.paragraph_id, h);
            std::uint64_t s = static_cast<std::uint64_t>(it.sentence_index);
            h = fnv1a64(&s, sizeof s, h);
        }
    };
    for (const corpus::FoldSpec& fold : folds) {
        h = fnv1a64(fold.test_map, h);
        mix_items("train", fold.train_items);
        mix_items("validation", fold.validation_items);
        mix_items("test", fold.test_items);
    }
    return h;
}

std::string AblationReport::to_json() const {
    ordered_json j;
    j["protocol"] = protocol;
    j["base_config_fingerprint"] = to_hex(base_config_fingerprint);
    j["fold_fingerprint"] = to_hex(fold_fingerprint);
    j["base_seed"] = base_seed;
    j["ensemble_size"] = ensemble_size;
    j["beam_width"] = beam_width;
    ordered_json rows_json = ordered_json::array();
    for (const AblationRow& r : rows) {
        ordered_json rj;
        rj["variant"] = r.variant;
        rj["single_accuracy"] = r.single_accuracy;
        rj["multi_accuracy"] = r.multi_accuracy;
        rows_json.push_back(std::move(rj));
    }
    j["rows"] = std::move(rows_json);
    return j.dump(2) + "\n";
}

AblationReport ablation_sweep(const corpus::Dataset& data, const corpus::Vocabulary& vocab,
                              const seq2seq::ModelConfig& base,
                              const trainer::TrainRunConfig& run) {
    std::vector<corpus::FoldSpec> folds = corpus::make_folds(data.items, run.protocol, run.seed);
    AblationReport report;
    report.protocol = corpus::protocol_name(run.protocol);
    report.base_config_fingerprint = base.fingerprint();
    report.fold_fingerprint = fold_fingerprint(folds);
    report.base_seed = run.seed;
    report.ensemble_size = run.ensemble_size;
    report.beam_width = base.beam_width;

    for (const AblationVariant& variant : ablation_variants(base)) {
        std::vector<std::vector<trainer::TrainResult>> trained(folds.size());
        std::vector<FoldModels> models;
        for (std::size_t f = 0; f < folds.size(); ++f) {
            trainer::EnsembleTrainResult ens =
                trainer::train_ensemble(folds[f], data.maps, vocab, variant.config, run);
            if (!ens.complete()) {
                std::string msg = "ablation variant '" + variant.name + "', fold '" +
                                  folds[f].test_map + "' incomplete:";
                for (const std::string& e : ens.errors) msg += "\n  " + e;
                throw NumericError(msg);
            }
            for (auto& m : ens.members) trained[f].push_back(std::move(*m));
            FoldModels fm;
            fm.test_map = folds[f].test_map;
            fm.ensemble.config = &variant.config;
            for (const trainer::TrainResult& t : trained[f]) {
                fm.ensemble.members.push_back(&t.params);
            }
            models.push_back(std::move(fm));
        }
        EvalReport single =
            eval_single(models, data, vocab, run.protocol, variant.config.beam_width, run.jobs);
        EvalReport multi =
            eval_multi(models, data, vocab, run.protocol, variant.config.beam_width, run.jobs);
        report.rows.push_back(
            {variant.name, single.weighted_accuracy, multi.weighted_accuracy});
    }
    return report;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

constexpr std::array<const char*, 7> kFloorColors = {
    "#58a042",  // grass
    "#b04a32",  // brick
    "#c29a5c",  // wood
    "#8c8c8c",  // gravel
    "#3a6fd8",  // blue
    "#d977cc",  // flower
    "#e8c93c",  // yellow-octagon
};

constexpr std::array<const char*, 3> kPaintingDashes = {"", "14,7", "4,5"};

}  // namespace

std::string render_alignment(const seq2seq::AlignmentTrace& trace,
                             const std::vector<std::string>& tokens,
                             const std::vector<Action>& actions) {
    if (trace.tokens != tokens.size() || trace.steps != actions.size()) {
        throw ContractError("alignment trace is " + std::to_string(trace.steps) + "x" +
                            std::to_string(trace.tokens) + " but labels are " +
                            std::to_string(actions.size()) + " actions x " +
                            std::to_string(tokens.size()) + " tokens");
    }
    const int cell = 26;
    const int left = 110, top = 120, pad = 10;
    const int width = left + cell * static_cast<int>(trace.tokens) + pad;
    const int height = top + cell * static_cast<int>(trace.steps) + pad + 20;
    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
           "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) +
           " " + std::to_string(height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t j = 0; j < tokens.size(); ++j) {
        int x = left + static_cast<int>(j) * cell + cell / 2;
        svg += "<text x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(top - 6) +
               "\" font-size=\"11\" font-family=\"monospace\" text-anchor=\"start\" transform=\"rotate(-60 " +
               std::to_string(x) + " " + std::to_string(top - 6) + ")\">" +
               xml_escape(tokens[j]) + "</text>\n";
    }
    for (std::size_t t = 0; t < trace.steps; ++t) {
        int y = top + static_cast<int>(t) * cell;
        svg += "<text x=\"" + std::to_string(left - 8) + "\" y=\"" +
               std::to_string(y + cell / 2 + 4) +
               "\" font-size=\"11\" font-family=\"monospace\" text-anchor=\"end\">" +
               worldsim::action_name(actions[t]) + "</text>\n";
        for (std::size_t j = 0; j < trace.tokens; ++j) {
            double a = trace.at(t, j);
            if (a < 0.0 || a > 1.0 + 1e-9) throw ContractError("alignment weight outside [0,1]");
            int q = static_cast<int>(std::lround(std::clamp(a, 0.0, 1.0) * 255.0));
            int v = 255 - q;  // weight 1 = black
            int x = left + static_cast<int>(j) * cell;
            svg += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) +
                   "\" width=\"" + std::to_string(cell) + "\" height=\"" + std::to_string(cell) +
                   "\" fill=\"rgb(" + std::to_string(v) + "," + std::to_string(v) + "," +
                   std::to_string(v) + ")\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
        }
    }
    svg += "</svg>\n";
    return svg;
}

std::string render_path(const worldsim::WorldMap& map, AgentPose start,
                        const std::vector<Action>& actions) {
    if (!worldsim::pose_valid(map, start)) throw ContractError("render_path: invalid start pose");
    std::vector<AgentPose> poses{start};
    for (std::size_t t = 0; t < actions.size(); ++t) {
        try {
            poses.push_back(worldsim::apply_action(map, poses.back(), actions[t]));
        } catch (const worldsim::BlockedMoveError& e) {
            throw worldsim::BlockedMoveError(
                std::string(e.what()) + " (render step " + std::to_string(t) + ")",
                static_cast<int>(t));
        }
    }

    int min_x = map.nodes().front().x, max_x = min_x;
    int min_y = map.nodes().front().y, max_y = min_y;
    for (const auto& n : map.nodes()) {
        min_x = std::min(min_x, n.x);
        max_x = std::max(max_x, n.x);
        min_y = std::min(min_y, n.y);
        max_y = std::max(max_y, n.y);
    }
    const int scale = 80, margin = 60;
    auto px = [&](int x) { return margin + (x - min_x) * scale; };
    auto py = [&](int y) { return margin + (max_y - y) * scale; };
    const int width = px(max_x) + margin;
    const int height = py(min_y) + margin + 30;

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
           "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) +
           " " + std::to_string(height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (const auto& e : map.edges()) {
        const auto& a = map.node(e.a);
        const auto& b = map.node(e.b);
        svg += "<line x1=\"" + std::to_string(px(a.x)) + "\" y1=\"" + std::to_string(py(a.y)) +
               "\" x2=\"" + std::to_string(px(b.x)) + "\" y2=\"" + std::to_string(py(b.y)) +
               "\" stroke=\"" + kFloorColors[static_cast<std::size_t>(e.floor)] +
               "\" stroke-width=\"10\"";
        const char* dash = kPaintingDashes[static_cast<std::size_t>(e.painting)];
        if (dash[0]) svg += " stroke-dasharray=\"" + std::string(dash) + "\"";
        svg += "/>\n";
    }
    for (const auto& n : map.nodes()) {
        svg += "<circle cx=\"" + std::to_string(px(n.x)) + "\" cy=\"" + std::to_string(py(n.y)) +
               "\" r=\"9\" fill=\"white\" stroke=\"#555555\"/>\n";
        if (n.object >= 0) {
            char initial =
                static_cast<char>(std::toupper(worldsim::kObjects[static_cast<std::size_t>(n.object)][0]));
            svg += "<text x=\"" + std::to_string(px(n.x)) + "\" y=\"" +
                   std::to_string(py(n.y) + 4) +
                   "\" font-size=\"11\" font-family=\"monospace\" text-anchor=\"middle\">" +
                   std::string(1, initial) + "</text>\n";
        }
    }
    std::string points;
    int last_node = -1;
    for (const AgentPose& p : poses) {
        if (p.node == last_node) continue;
        last_node = p.node;
        const auto& n = map.node(p.node);
        if (!points.empty()) points += " ";
        points += std::to_string(px(n.x)) + "," + std::to_string(py(n.y));
    }
    svg += "<polyline points=\"" + points +
           "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"3\"/>\n";
    const auto& sn = map.node(start.node);
    svg += "<circle cx=\"" + std::to_string(px(sn.x)) + "\" cy=\"" + std::to_string(py(sn.y)) +
           "\" r=\"6\" fill=\"#2ca02c\"/>\n";
    const AgentPose& end = poses.back();
    const auto& en = map.node(end.node);
    svg += "<rect x=\"" + std::to_string(px(en.x) - 6) + "\" y=\"" + std::to_string(py(en.y) - 6) +
           "\" width=\"12\" height=\"12\" fill=\"#d62728\" data-end-node=\"" +
           xml_escape(en.id) + "\" data-end-x=\"" + std::to_string(en.x) + "\" data-end-y=\"" +
           std::to_string(en.y) + "\" data-end-orientation=\"" +
           std::to_string(end.orientation) + "\"/>\n";
    svg += "</svg>\n";
    return svg;
}

TraceResult trace_actions(const inference::Ensemble& ensemble, const std::vector<int>& token_ids,
                          const worldsim::WorldMap& map, AgentPose start,
                          const std::vector<Action>& actions) {
    ensemble.validate();
    if (actions.empty()) throw ContractError("trace_actions: no actions");
    const std::size_t M = ensemble.members.size();
    inference::SentenceEncoding enc = inference::encode_sentence(ensemble, token_ids);
    std::vector<seq2seq::DecoderValueState> states(M, seq2seq::initial_state(*ensemble.config));

    TraceResult out;
    out.trace.steps = actions.size();
    out.trace.tokens = token_ids.size();
    out.trace.alpha.assign(actions.size() * token_ids.size(), 0.0);

    AgentPose pose = start;
    for (std::size_t t = 0; t < actions.size(); ++t) {
        worldsim::Observation obs = worldsim::observe(map, pose);
        std::array<double, 4> mean{};
        for (std::size_t m = 0; m < M; ++m) {
            seq2seq::ValueStep step = seq2seq::decode_values(
                *ensemble.members[m], *ensemble.config, enc.per_member[m], states[m], obs);
            for (std::size_t a = 0; a < 4; ++a) mean[a] += static_cast<double>(step.probs[a]);
            for (std::size_t j = 0; j < token_ids.size(); ++j) {
                out.trace.alpha[t * token_ids.size() + j] +=
                    static_cast<double>(step.alpha[j]) / static_cast<double>(M);
            }
        }
        for (double& v : mean) v /= static_cast<double>(M);
        out.distributions.push_back(mean);
        try {
            pose = worldsim::apply_action(map, pose, actions[t]);
        } catch (const worldsim::BlockedMoveError& e) {
            throw worldsim::BlockedMoveError(
                std::string(e.what()) + " (trace step " + std::to_string(t) + ")",
                static_cast<int>(t));
        }
    }
    return out;
}

}  // namespace walklab::eval
