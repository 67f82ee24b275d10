#include "walklab/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "walklab/eval.hpp"
#include "walklab/trainer.hpp"
#include "walklab/worldsim.hpp"

namespace walklab::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

int default_jobs() {
    unsigned n = std::thread::hardware_concurrency();
    return n > 0 ? static_cast<int>(n) : 1;
}

std::string digest_of(std::string_view bytes) { return to_hex(fnv1a64(bytes)); }

std::string data_root(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("WALKLAB_DATA"); env != nullptr && *env != '\0') {
        return env;
    }
    throw UsageError("no data directory given: pass --data or set WALKLAB_DATA");
}

struct Stopwatch {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

std::string corpus_checksum_of(const std::string& data_dir) {
    return digest_of(read_file((fs::path(data_dir) / "corpus.jsonl").string()));
}

worldsim::WorldMap load_named_map(const std::string& data_dir, const std::string& name) {
    fs::path p = fs::path(data_dir) / "maps" / (name + ".map");
    if (!fs::exists(p)) throw UsageError("map file not found: " + p.string());
    return worldsim::load_map(read_file(p.string()));
}

worldsim::AgentPose parse_pose_flag(const worldsim::WorldMap& map, const std::string& text) {
    std::size_t comma = text.rfind(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 >= text.size()) {
        throw UsageError("--start wants NODE,ORIENT (for example 3_4,90)");
    }
    std::string node = text.substr(0, comma);
    int orientation = worldsim::parse_orientation(text.substr(comma + 1));
    int idx = map.node_index(node);
    if (idx < 0) throw IntegrityError("start node '" + node + "' is not on the map");
    return worldsim::AgentPose{idx, orientation};
}

std::vector<worldsim::Action> parse_action_list(const std::string& text) {
    std::vector<worldsim::Action> actions;
    std::string cur;
    std::stringstream ss(text);
    while (std::getline(ss, cur, ',')) {
        std::size_t a = cur.find_first_not_of(" \t");
        std::size_t b = cur.find_last_not_of(" \t");
        if (a == std::string::npos) continue;
        actions.push_back(worldsim::parse_action(cur.substr(a, b - a + 1)));
    }
    return actions;
}

std::vector<int> to_token_ids(const corpus::Vocabulary& vocab,
                              const std::vector<std::string>& tokens) {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const std::string& t : tokens) ids.push_back(vocab.index_of(t));
    return ids;
}

// Writes `contents` and records its digest under `key`.
void write_output(RunManifest& manifest, const fs::path& path, std::string_view contents,
                  const std::string& key) {
    write_file(path.string(), contents);
    manifest.output_digests[key] = digest_of(contents);
}

void write_manifest(const RunManifest& manifest, const fs::path& path) {
    write_file(path.string(), manifest.to_json());
}

// ---------------------------------------------------------------------------
// Flag bundles shared between subcommands.

struct ModelFlags {
    std::string config_file;
    int hidden = 100;
    double dropout = 0.5;
    std::string aligner = "multi_level";
    bool unidirectional = false;
    bool no_encoder = false;
    int beam = 10;
};

void add_model_flags(CLI::App* sub, ModelFlags& f) {
    sub->add_option("--config", f.config_file,
                    "model config file (canonical JSON); explicit flags override its fields");
    sub->add_option("--hidden", f.hidden, "LSTM hidden width");
    sub->add_option("--dropout", f.dropout, "dropout rate on annotations and the pre-softmax vector");
    sub->add_option("--aligner", f.aligner, "attention flavor: multi_level|high_level|uniform")
        ->check(CLI::IsMember({"multi_level", "high_level", "uniform"}));
    sub->add_flag("--unidirectional", f.unidirectional, "forward-only instruction encoder");
    sub->add_flag("--no-encoder", f.no_encoder, "attend over token embeddings instead of encodings");
    sub->add_option("--beam", f.beam, "beam width stored as the config default");
}

// Flags win over the config file; the merged result is what gets
// fingerprinted and persisted.
seq2seq::ModelConfig resolve_model_config(const CLI::App* sub, const ModelFlags& f,
                                          int vocab_size) {
    seq2seq::ModelConfig config;
    if (!f.config_file.empty()) config = seq2seq::ModelConfig::from_json(read_file(f.config_file));
    if (sub->count("--hidden") > 0) config.hidden_size = f.hidden;
    if (sub->count("--dropout") > 0) config.dropout_rate = f.dropout;
    if (sub->count("--aligner") > 0) config.aligner_mode = seq2seq::parse_aligner_mode(f.aligner);
    if (sub->count("--unidirectional") > 0) config.bidirectional = false;
    if (sub->count("--no-encoder") > 0) config.use_encoder = false;
    if (sub->count("--beam") > 0) config.beam_width = f.beam;
    config.vocab_size = vocab_size;
    try {
        config.validate();
    } catch (const ContractError& e) {
        // Out-of-range flag or config-file values are the caller's mistake.
        throw UsageError(e.what());
    }
    return config;
}

std::string member_file(int k) { return "member_" + std::to_string(k) + ".ckpt"; }
std::string history_file(int k) { return "history_" + std::to_string(k) + ".csv"; }

// Refuses to silently repoint an existing model directory at different
// architecture or vocabulary.
void write_shared_model_file(RunManifest& manifest, const fs::path& path,
                             const std::string& contents, const std::string& what) {
    if (fs::exists(path) && read_file(path.string()) != contents) {
        throw IntegrityError("model directory already holds a different " + what + ": " +
                             path.string());
    }
    write_output(manifest, path, contents, path.filename().string());
}

}  // namespace

std::string RunManifest::to_json() const {
    ordered_json j;
    j["command_line"] = command_line;
    j["tool_version"] = tool_version;
    j["config_fingerprint"] = config_fingerprint;
    j["corpus_checksum"] = corpus_checksum;
    j["seeds"] = seeds;
    j["wall_clock_seconds"] = wall_clock_seconds;
    ordered_json digests = ordered_json::object();
    for (const auto& [k, v] : output_digests) digests[k] = v;
    j["output_digests"] = std::move(digests);
    return j.dump(2) + "\n";
}

inference::Ensemble LoadedEnsemble::view() const {
    inference::Ensemble e;
    e.config = &config;
    for (const seq2seq::ModelParams& p : members) e.members.push_back(&p);
    return e;
}

corpus::Vocabulary load_model_vocab(const std::string& model_dir) {
    fs::path p = fs::path(model_dir) / "vocab.txt";
    if (!fs::exists(p)) throw UsageError("no vocab.txt under model directory " + model_dir);
    return corpus::Vocabulary::from_text(read_file(p.string()));
}

LoadedEnsemble load_fold_models(const std::string& model_dir, const std::string& fold) {
    fs::path root(model_dir);
    fs::path config_path = root / "config.json";
    if (!fs::exists(config_path)) {
        throw UsageError("no config.json under model directory " + model_dir);
    }
    LoadedEnsemble loaded;
    loaded.fold = fold;
    loaded.config = seq2seq::ModelConfig::from_json(read_file(config_path.string()));

    fs::path fold_dir = root / fold;
    if (!fs::is_directory(fold_dir)) {
        throw IntegrityError("model directory has no fold '" + fold + "' (expected " +
                             fold_dir.string() + "; folds are named for the held-out map)");
    }
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(fold_dir)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("member_", 0) == 0 && entry.path().extension() == ".ckpt") {
            files.push_back(entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IntegrityError("no member_*.ckpt files in " + fold_dir.string());
    for (const std::string& file : files) {
        seq2seq::Checkpoint ckpt = seq2seq::load_checkpoint(file);
        if (!(ckpt.config == loaded.config)) {
            throw IntegrityError("checkpoint " + file + " disagrees with config.json");
        }
        loaded.members.push_back(std::move(ckpt.params));
    }
    return loaded;
}

namespace {

// ---------------------------------------------------------------------------
// Subcommand bodies. Each returns the process exit status.

struct CommonArgs {
    std::vector<std::string> raw_args;  // for the manifest
};

RunManifest start_manifest(const CommonArgs& common) {
    RunManifest m;
    m.command_line.push_back("walklab");
    m.command_line.insert(m.command_line.end(), common.raw_args.begin(), common.raw_args.end());
    m.tool_version = kVersion;
    return m;
}

int cmd_ingest(const CommonArgs& common, const std::string& raw_dir, const std::string& out_dir,
               std::ostream& out) {
    Stopwatch watch;
    corpus::IngestStats stats = corpus::convert_raw(raw_dir, out_dir);

    RunManifest manifest = start_manifest(common);
    std::string corpus_bytes = read_file((fs::path(out_dir) / "corpus.jsonl").string());
    manifest.corpus_checksum = digest_of(corpus_bytes);
    manifest.output_digests["corpus.jsonl"] = manifest.corpus_checksum;
    std::vector<fs::path> map_files;
    for (const auto& entry : fs::directory_iterator(fs::path(out_dir) / "maps")) {
        map_files.push_back(entry.path());
    }
    std::sort(map_files.begin(), map_files.end());
    for (const fs::path& p : map_files) {
        manifest.output_digests["maps/" + p.filename().string()] = digest_of(read_file(p.string()));
    }
    manifest.wall_clock_seconds = watch.seconds();
    write_manifest(manifest, fs::path(out_dir) / "manifest.json");

    out << "ingested " << stats.items << " items in " << stats.paragraphs << " paragraphs over "
        << stats.maps << " maps (" << stats.infeasible_items << " infeasible, "
        << stats.start_end_pairs << " distinct start/end pairs)\n";
    return 0;
}

int cmd_train(const CommonArgs& common, const CLI::App* sub, const ModelFlags& model_flags,
              const std::string& data_flag, const std::string& out_dir,
              const std::string& protocol_name, const std::string& fold_name, int epochs,
              int ensemble, std::uint64_t seed, int jobs, int batch, std::ostream& out,
              std::ostream& err) {
    Stopwatch watch;
    std::string data_dir = data_root(data_flag);
    corpus::Dataset data = corpus::load_dataset(data_dir);
    corpus::Vocabulary vocab = corpus::build_vocab(data.items);
    seq2seq::ModelConfig config = resolve_model_config(sub, model_flags, vocab.size());

    trainer::TrainRunConfig run;
    run.protocol = corpus::parse_protocol(protocol_name);
    run.max_epochs = epochs;
    run.ensemble_size = ensemble;
    run.seed = seed;
    run.jobs = jobs;
    run.batch_size = batch;

    std::vector<corpus::FoldSpec> folds = corpus::make_folds(data.items, run.protocol, run.seed);
    if (!fold_name.empty()) {
        std::vector<corpus::FoldSpec> selected;
        for (corpus::FoldSpec& f : folds) {
            if (f.test_map == fold_name) selected.push_back(std::move(f));
        }
        if (selected.empty()) {
            std::string names;
            for (const auto& kv : data.maps) names += names.empty() ? kv.first : ", " + kv.first;
            throw UsageError("--fold '" + fold_name + "' is not a corpus map (have: " + names + ")");
        }
        folds = std::move(selected);
    }

    fs::create_directories(out_dir);
    RunManifest manifest = start_manifest(common);
    manifest.config_fingerprint = to_hex(config.fingerprint());
    manifest.corpus_checksum = corpus_checksum_of(data_dir);
    for (int k = 0; k < run.ensemble_size; ++k) manifest.seeds.push_back(run.seed + k);

    write_shared_model_file(manifest, fs::path(out_dir) / "config.json", config.canonical_json(),
                            "config");
    write_shared_model_file(manifest, fs::path(out_dir) / "vocab.txt", vocab.to_text(),
                            "vocabulary");

    int failures = 0;
    for (const corpus::FoldSpec& fold : folds) {
        out << "training fold '" << fold.test_map << "' (" << fold.train_items.size()
            << " train items, ensemble of " << run.ensemble_size << ")\n"
            << std::flush;
        trainer::EnsembleTrainResult ens =
            trainer::train_ensemble(fold, data.maps, vocab, config, run);
        fs::path fold_dir = fs::path(out_dir) / fold.test_map;
        fs::create_directories(fold_dir);
        for (int k = 0; k < static_cast<int>(ens.members.size()); ++k) {
            if (!ens.members[k].has_value()) continue;
            const trainer::TrainResult& r = *ens.members[k];
            fs::path ckpt = fold_dir / member_file(k);
            seq2seq::save_checkpoint(ckpt.string(), r.params, config);
            manifest.output_digests[fold.test_map + "/" + member_file(k)] =
                digest_of(read_file(ckpt.string()));
            write_output(manifest, fold_dir / history_file(k), trainer::history_csv(r.history),
                         fold.test_map + "/" + history_file(k));
            out << "  member " << k << " (seed " << (run.seed + k)
                << "): stopped at epoch " << r.history.stopping_epoch << ", metric "
                << r.history.best_metric << "\n";
        }
        for (const std::string& e : ens.errors) {
            err << "fold '" << fold.test_map << "': " << e << "\n";
            ++failures;
        }
    }

    manifest.wall_clock_seconds = watch.seconds();
    fs::path manifest_path = fold_name.empty() ? fs::path(out_dir) / "manifest.json"
                                               : fs::path(out_dir) / fold_name / "manifest.json";
    write_manifest(manifest, manifest_path);

    if (failures > 0) {
        err << failures << " ensemble member(s) failed; the partial ensemble on disk is usable "
               "but was NOT what was asked for\n";
        return 3;
    }
    return 0;
}

int cmd_eval(const CommonArgs& common, const CLI::App* sub, const std::string& model_dir,
             const std::string& data_flag, const std::string& protocol_name,
             const std::string& task, int beam_flag, const std::string& report_path, int jobs,
             std::ostream& out) {
    Stopwatch watch;
    std::string data_dir = data_root(data_flag);
    corpus::Dataset data = corpus::load_dataset(data_dir);
    corpus::Vocabulary vocab = load_model_vocab(model_dir);

    std::deque<LoadedEnsemble> storage;
    std::vector<eval::FoldModels> models;
    for (const auto& kv : data.maps) {
        storage.push_back(load_fold_models(model_dir, kv.first));
        models.push_back({kv.first, storage.back().view()});
    }
    if (storage.front().config.vocab_size != vocab.size()) {
        throw IntegrityError("model vocab.txt size does not match config vocab_size");
    }
    int beam = sub->count("--beam") > 0 ? beam_flag : storage.front().config.beam_width;
    corpus::Protocol protocol = corpus::parse_protocol(protocol_name);

    eval::EvalReport report = task == "single"
                                  ? eval::eval_single(models, data, vocab, protocol, beam, jobs)
                                  : eval::eval_multi(models, data, vocab, protocol, beam, jobs);

    RunManifest manifest = start_manifest(common);
    manifest.config_fingerprint = to_hex(storage.front().config.fingerprint());
    manifest.corpus_checksum = corpus_checksum_of(data_dir);
    write_output(manifest, report_path, report.to_json(),
                 fs::path(report_path).filename().string());
    manifest.wall_clock_seconds = watch.seconds();
    write_manifest(manifest, report_path + ".manifest.json");

    std::ostringstream line;
    line << task << " " << report.protocol << " beam=" << beam << ": " << report.total_successes
         << "/" << report.total_items << " = " << std::fixed << std::setprecision(2)
         << report.weighted_accuracy * 100.0 << "%";
    out << line.str() << "\n";
    return 0;
}

int cmd_follow(const CommonArgs& common, const std::string& model_dir,
               const std::string& data_flag, const std::string& map_name,
               const std::string& start_text, const std::vector<std::string>& instructions,
               int beam_flag, const CLI::App* sub, const std::string& trace_path,
               std::ostream& out) {
    Stopwatch watch;
    worldsim::WorldMap map = load_named_map(data_root(data_flag), map_name);
    worldsim::AgentPose start = parse_pose_flag(map, start_text);
    corpus::Vocabulary vocab = load_model_vocab(model_dir);
    LoadedEnsemble loaded = load_fold_models(model_dir, map_name);
    inference::Ensemble ensemble = loaded.view();
    if (!trace_path.empty() && instructions.size() != 1) {
        throw UsageError("--trace needs exactly one --instruction (traces are per sentence)");
    }
    int beam = sub->count("--beam") > 0 ? beam_flag : loaded.config.beam_width;

    std::vector<std::vector<std::string>> token_texts;
    std::vector<std::vector<int>> sentences;
    for (const std::string& text : instructions) {
        token_texts.push_back(corpus::tokenize(text));
        sentences.push_back(to_token_ids(vocab, token_texts.back()));
    }

    std::vector<worldsim::Action> actions;
    worldsim::AgentPose end = start;
    double log_prob = 0.0;
    bool flagged = false;
    if (sentences.size() == 1) {
        inference::SearchResult r =
            inference::beam_search(ensemble, sentences[0], map, start, beam,
                                   loaded.config.max_actions_per_sentence);
        actions = r.actions;
        end = r.end;
        log_prob = r.log_prob;
        flagged = r.flagged;
    } else {
        inference::ParagraphResult r =
            inference::follow_paragraph(ensemble, sentences, map, start, beam);
        actions = r.actions;
        end = r.end;
        log_prob = r.log_prob;
        flagged = r.flagged;
    }

    ordered_json j;
    std::vector<std::string> names;
    for (worldsim::Action a : actions) names.push_back(worldsim::action_name(a));
    j["actions"] = names;
    j["end"] = {{"node", map.node(end.node).id}, {"orientation", end.orientation}};
    j["log_prob"] = log_prob;
    j["flagged"] = flagged;
    out << j.dump(2) << "\n";

    if (!trace_path.empty()) {
        eval::TraceResult traced =
            eval::trace_actions(ensemble, sentences[0], map, start, actions);
        ordered_json t;
        t["map"] = map_name;
        t["start"] = {{"node", map.node(start.node).id}, {"orientation", start.orientation}};
        t["tokens"] = token_texts[0];
        t["actions"] = names;
        ordered_json alpha = ordered_json::array();
        for (std::size_t s = 0; s < traced.trace.steps; ++s) {
            ordered_json row = ordered_json::array();
            for (std::size_t c = 0; c < traced.trace.tokens; ++c) {
                row.push_back(traced.trace.at(s, c));
            }
            alpha.push_back(std::move(row));
        }
        t["alpha"] = std::move(alpha);
        ordered_json dists = ordered_json::array();
        for (const std::array<double, 4>& d : traced.distributions) {
            dists.push_back(std::vector<double>(d.begin(), d.end()));
        }
        t["distributions"] = std::move(dists);

        RunManifest manifest = start_manifest(common);
        manifest.config_fingerprint = to_hex(loaded.config.fingerprint());
        write_output(manifest, trace_path, t.dump(2) + "\n",
                     fs::path(trace_path).filename().string());
        manifest.wall_clock_seconds = watch.seconds();
        write_manifest(manifest, trace_path + ".manifest.json");
    }
    return 0;
}

int cmd_ablate(const CommonArgs& common, const CLI::App* sub, const ModelFlags& model_flags,
               const std::string& data_flag, const std::string& protocol_name, int epochs,
               int ensemble, std::uint64_t seed, int jobs, const std::string& report_path,
               std::ostream& out) {
    Stopwatch watch;
    std::string data_dir = data_root(data_flag);
    corpus::Dataset data = corpus::load_dataset(data_dir);
    corpus::Vocabulary vocab = corpus::build_vocab(data.items);
    seq2seq::ModelConfig base = resolve_model_config(sub, model_flags, vocab.size());

    trainer::TrainRunConfig run;
    run.protocol = corpus::parse_protocol(protocol_name);
    run.max_epochs = epochs;
    run.ensemble_size = ensemble;
    run.seed = seed;
    run.jobs = jobs;

    eval::AblationReport report = eval::ablation_sweep(data, vocab, base, run);

    RunManifest manifest = start_manifest(common);
    manifest.config_fingerprint = to_hex(base.fingerprint());
    manifest.corpus_checksum = corpus_checksum_of(data_dir);
    for (int k = 0; k < run.ensemble_size; ++k) manifest.seeds.push_back(run.seed + k);
    write_output(manifest, report_path, report.to_json(),
                 fs::path(report_path).filename().string());
    manifest.wall_clock_seconds = watch.seconds();
    write_manifest(manifest, report_path + ".manifest.json");

    for (const eval::AblationRow& row : report.rows) {
        std::ostringstream line;
        line << std::left << std::setw(16) << row.variant << std::fixed << std::setprecision(2)
             << "single " << row.single_accuracy * 100.0 << "%  multi "
             << row.multi_accuracy * 100.0 << "%";
        out << line.str() << "\n";
    }
    return 0;
}

int cmd_visualize(const CommonArgs& common, const std::string& trace_path,
                  const std::string& map_name, const std::string& data_flag,
                  const std::string& start_text, const std::string& actions_text,
                  const std::string& out_path, std::ostream& out) {
    Stopwatch watch;
    std::string svg;
    if (!trace_path.empty()) {
        ordered_json t;
        try {
            t = ordered_json::parse(read_file(trace_path));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("bad trace file " + trace_path + ": " + e.what());
        }
        std::vector<std::string> tokens = t.at("tokens").get<std::vector<std::string>>();
        std::vector<worldsim::Action> actions;
        for (const std::string& name : t.at("actions").get<std::vector<std::string>>()) {
            actions.push_back(worldsim::parse_action(name));
        }
        seq2seq::AlignmentTrace trace;
        trace.steps = actions.size();
        trace.tokens = tokens.size();
        for (const auto& row : t.at("alpha")) {
            for (const auto& v : row) trace.alpha.push_back(v.get<double>());
        }
        if (trace.alpha.size() != trace.steps * trace.tokens) {
            throw IntegrityError("trace alpha matrix is not steps x tokens");
        }
        svg = eval::render_alignment(trace, tokens, actions);
    } else {
        worldsim::WorldMap map = load_named_map(data_root(data_flag), map_name);
        worldsim::AgentPose start = parse_pose_flag(map, start_text);
        svg = eval::render_path(map, start, parse_action_list(actions_text));
    }

    RunManifest manifest = start_manifest(common);
    write_output(manifest, out_path, svg, fs::path(out_path).filename().string());
    manifest.wall_clock_seconds = watch.seconds();
    write_manifest(manifest, out_path + ".manifest.json");
    out << "wrote " << out_path << "\n";
    return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{
        "walklab: grid-world instruction following — corpus ingest, encoder/aligner/decoder "
        "training, beam-search evaluation, and visualization.\n"
        "Exit status: 0 success, 1 usage error, 2 data-integrity error, 3 numerical abort, "
        "4 internal error."};
    app.require_subcommand(1);

    CommonArgs common{args};
    int status = 0;

    // ingest ----------------------------------------------------------------
    auto* ingest = app.add_subcommand("ingest", "convert a raw corpus tree into canonical form");
    std::string ingest_raw, ingest_out;
    ingest->add_option("--raw", ingest_raw, "raw corpus directory")->required();
    ingest->add_option("--out", ingest_out, "output directory for corpus.jsonl and maps/")
        ->required();
    ingest->callback([&] { status = cmd_ingest(common, ingest_raw, ingest_out, out); });

    // train -----------------------------------------------------------------
    auto* train = app.add_subcommand("train", "train per-fold model ensembles");
    std::string train_data, train_out, train_protocol = "vdev", train_fold;
    int train_epochs = 50, train_ensemble = 10, train_jobs = default_jobs(), train_batch = 1;
    std::uint64_t train_seed = 1;
    ModelFlags train_model;
    train->add_option("--data", train_data, "corpus directory (default: $WALKLAB_DATA)");
    train->add_option("--out", train_out, "model output directory")->required();
    train->add_option("--protocol", train_protocol, "early-stopping protocol: vdev|vtest")
        ->check(CLI::IsMember({"vdev", "vtest"}));
    train->add_option("--fold", train_fold, "train only the fold holding out this map");
    train->add_option("--epochs", train_epochs, "epoch cap");
    train->add_option("--ensemble", train_ensemble, "models per fold");
    train->add_option("--seed", train_seed, "base seed; member k uses seed+k");
    train->add_option("--jobs", train_jobs, "worker threads (default: available cores)");
    train->add_option("--batch", train_batch, "items per parameter update");
    add_model_flags(train, train_model);
    train->callback([&] {
        status = cmd_train(common, train, train_model, train_data, train_out, train_protocol,
                           train_fold, train_epochs, train_ensemble, train_seed, train_jobs,
                           train_batch, out, err);
    });

    // eval ------------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "run the evaluation protocol over trained models");
    std::string eval_model, eval_data, eval_protocol = "vdev", eval_task = "single", eval_report;
    int eval_beam = 0, eval_jobs = default_jobs();
    eval_cmd->add_option("--model", eval_model, "model directory from `walklab train`")
        ->required();
    eval_cmd->add_option("--data", eval_data, "corpus directory (default: $WALKLAB_DATA)");
    eval_cmd->add_option("--protocol", eval_protocol, "protocol label for the report: vdev|vtest")
        ->check(CLI::IsMember({"vdev", "vtest"}));
    eval_cmd->add_option("--task", eval_task, "granularity: single|multi")
        ->check(CLI::IsMember({"single", "multi"}));
    eval_cmd->add_option("--beam", eval_beam, "beam width (default: config value)");
    eval_cmd->add_option("--report", eval_report, "report JSON output path")->required();
    eval_cmd->add_option("--jobs", eval_jobs, "worker threads (default: available cores)");
    eval_cmd->callback([&] {
        status = cmd_eval(common, eval_cmd, eval_model, eval_data, eval_protocol, eval_task,
                          eval_beam, eval_report, eval_jobs, out);
    });

    // follow ----------------------------------------------------------------
    auto* follow = app.add_subcommand("follow", "decode instructions from a start pose");
    std::string follow_model, follow_data, follow_map, follow_start, follow_trace;
    std::vector<std::string> follow_instructions;
    int follow_beam = 0;
    follow->add_option("--model", follow_model, "model directory")->required();
    follow->add_option("--data", follow_data, "corpus directory (default: $WALKLAB_DATA)");
    follow->add_option("--map", follow_map, "map name; uses the fold that held this map out")
        ->required();
    follow->add_option("--start", follow_start, "start pose as NODE,ORIENT")->required();
    follow
        ->add_option("--instruction", follow_instructions,
                     "instruction sentence (repeat for a paragraph)")
        ->required();
    follow->add_option("--beam", follow_beam, "beam width (default: config value)");
    follow->add_option("--trace", follow_trace,
                       "write per-step distributions and attention to this JSON file");
    follow->callback([&] {
        status = cmd_follow(common, follow_model, follow_data, follow_map, follow_start,
                            follow_instructions, follow_beam, follow, follow_trace, out);
    });

    // ablate ----------------------------------------------------------------
    auto* ablate = app.add_subcommand("ablate", "train and score all architecture variants");
    std::string ablate_data, ablate_protocol = "vdev", ablate_report;
    int ablate_epochs = 50, ablate_ensemble = 10, ablate_jobs = default_jobs();
    std::uint64_t ablate_seed = 1;
    ModelFlags ablate_model;
    ablate->add_option("--data", ablate_data, "corpus directory (default: $WALKLAB_DATA)");
    ablate->add_option("--protocol", ablate_protocol, "early-stopping protocol: vdev|vtest")
        ->check(CLI::IsMember({"vdev", "vtest"}));
    ablate->add_option("--epochs", ablate_epochs, "epoch cap");
    ablate->add_option("--ensemble", ablate_ensemble, "models per fold");
    ablate->add_option("--seed", ablate_seed, "base seed shared by every variant");
    ablate->add_option("--jobs", ablate_jobs, "worker threads (default: available cores)");
    ablate->add_option("--report", ablate_report, "report JSON output path")->required();
    add_model_flags(ablate, ablate_model);
    ablate->callback([&] {
        status = cmd_ablate(common, ablate, ablate_model, ablate_data, ablate_protocol,
                            ablate_epochs, ablate_ensemble, ablate_seed, ablate_jobs,
                            ablate_report, out);
    });

    // visualize -------------------------------------------------------------
    auto* viz = app.add_subcommand("visualize",
                                   "render an attention trace or a walked path as SVG");
    std::string viz_trace, viz_map, viz_data, viz_start, viz_actions, viz_out;
    auto* viz_trace_opt = viz->add_option("--trace", viz_trace, "trace JSON from `walklab follow`");
    auto* viz_map_opt = viz->add_option("--map", viz_map, "map name for path mode");
    viz->add_option("--data", viz_data, "corpus directory (default: $WALKLAB_DATA)");
    viz->add_option("--start", viz_start, "path mode: start pose as NODE,ORIENT");
    viz->add_option("--actions", viz_actions,
                    "path mode: comma-separated actions (FORWARD,TURN_LEFT,TURN_RIGHT,STOP)");
    viz->add_option("--out", viz_out, "SVG output path")->required();
    viz_trace_opt->excludes(viz_map_opt);
    viz->callback([&] {
        if (viz_trace.empty() && viz_map.empty()) {
            throw UsageError("visualize needs --trace (heatmap) or --map with --start/--actions "
                             "(path drawing)");
        }
        if (!viz_map.empty() && (viz->count("--start") == 0 || viz->count("--actions") == 0)) {
            throw UsageError("path mode needs --start and --actions");
        }
        status = cmd_visualize(common, viz_trace, viz_map, viz_data, viz_start, viz_actions,
                               viz_out, out);
    });

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    } catch (const WalklabError& e) {
        err << "error: " << e.what() << "\n";
        switch (e.kind()) {
            case ErrorKind::Usage: return 1;
            case ErrorKind::Data: return 2;
            case ErrorKind::Numeric: return 3;
            case ErrorKind::Internal: return 4;
        }
        return 4;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 4;
    }
    return status;
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(args, out, err);
}

}  // namespace walklab::cli
