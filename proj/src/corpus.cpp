#include "walklab/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <set>
#include <sstream>

#include <json.hpp>

namespace walklab::corpus {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using worldsim::Action;

Vocabulary::Vocabulary(std::vector<std::string> sorted_tokens) : tokens_(std::move(sorted_tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        index_.emplace(tokens_[i], static_cast<int>(i));
    }
}

int Vocabulary::index_of(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? oov_index() : it->second;
}

std::string Vocabulary::to_text() const {
    std::string out;
    for (const std::string& t : tokens_) {
        out += t;
        out += '\n';
    }
    return out;
}

Vocabulary Vocabulary::from_text(const std::string& text) {
    std::vector<std::string> tokens;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
}

const char* protocol_name(Protocol p) { return p == Protocol::VDev ? "vdev" : "vtest"; }

Protocol parse_protocol(const std::string& name) {
    if (name == "vdev") return Protocol::VDev;
    if (name == "vtest") return Protocol::VTest;
    throw UsageError("unknown protocol '" + name + "' (expected vdev or vtest)");
}

std::vector<std::string> tokenize(const std::string& sentence) {
    std::vector<std::string> out;
    std::istringstream in(sentence);
    std::string word;
    auto is_punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
    while (in >> word) {
        // Peel surrounding punctuation into separate tokens; interior
        // punctuation (hyphens, apostrophes) stays put. Spelling is never
        // corrected.
        std::size_t lo = 0, hi = word.size();
        while (lo < hi && is_punct(word[lo])) ++lo;
        while (hi > lo && is_punct(word[hi - 1])) --hi;
        for (std::size_t i = 0; i < lo; ++i) out.push_back(std::string(1, word[i]));
        if (lo < hi) {
            std::string core = word.substr(lo, hi - lo);
            for (char& c : core) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            out.push_back(core);
        }
        for (std::size_t i = hi; i < word.size(); ++i) out.push_back(std::string(1, word[i]));
    }
    return out;
}

Vocabulary build_vocab(const std::vector<SampleItem>& items) {
    if (items.empty()) throw ContractError("build_vocab: no items");
    std::set<std::string> distinct;
    for (const SampleItem& it : items) {
        distinct.insert(it.tokens.begin(), it.tokens.end());
    }
    return Vocabulary(std::vector<std::string>(distinct.begin(), distinct.end()));
}

namespace {

void sort_items(std::vector<SampleItem>& items) {
    std::stable_sort(items.begin(), items.end(), [](const SampleItem& a, const SampleItem& b) {
        if (a.map_name != b.map_name) return a.map_name < b.map_name;
        if (a.paragraph_id != b.paragraph_id) return a.paragraph_id < b.paragraph_id;
        return a.sentence_index < b.sentence_index;
    });
}

}  // namespace

std::vector<FoldSpec> make_folds(const std::vector<SampleItem>& items, Protocol protocol,
                                 std::uint64_t seed) {
    std::set<std::string> map_names;
    for (const SampleItem& it : items) map_names.insert(it.map_name);
    if (map_names.size() < 2) {
        throw IntegrityError("make_folds: corpus covers " + std::to_string(map_names.size()) +
                             " map(s); cross-validation needs every world present");
    }
    std::vector<FoldSpec> folds;
    for (const std::string& test_map : map_names) {
        FoldSpec fold;
        fold.test_map = test_map;
        fold.protocol = protocol;
        std::vector<SampleItem> pool;
        for (const SampleItem& it : items) {
            if (it.map_name == test_map) {
                fold.test_items.push_back(it);
            } else {
                pool.push_back(it);
            }
        }
        sort_items(pool);
        sort_items(fold.test_items);
        if (protocol == Protocol::VDev) {
            // Validation slice is sampled by paragraph so a paragraph's
            // sentences never straddle the train/validation boundary.
            std::vector<std::pair<std::string, std::string>> paragraphs;
            for (const SampleItem& it : pool) {
                auto key = std::make_pair(it.map_name, it.paragraph_id);
                if (paragraphs.empty() || paragraphs.back() != key) paragraphs.push_back(key);
            }
            std::sort(paragraphs.begin(), paragraphs.end());
            paragraphs.erase(std::unique(paragraphs.begin(), paragraphs.end()), paragraphs.end());
            Rng rng = Rng(seed).derive("vdev-split").derive(test_map);
            rng.shuffle(paragraphs);
            std::size_t n_val = static_cast<std::size_t>(
                std::max<long long>(1, std::llround(0.1 * static_cast<double>(paragraphs.size()))));
            n_val = std::min(n_val, paragraphs.size() > 1 ? paragraphs.size() - 1 : std::size_t{0});
            std::set<std::pair<std::string, std::string>> val_keys(paragraphs.begin(),
                                                                   paragraphs.begin() + static_cast<std::ptrdiff_t>(n_val));
            for (const SampleItem& it : pool) {
                if (val_keys.count({it.map_name, it.paragraph_id})) {
                    fold.validation_items.push_back(it);
                } else {
                    fold.train_items.push_back(it);
                }
            }
        } else {
            fold.train_items = std::move(pool);
        }
        folds.push_back(std::move(fold));
    }
    return folds;
}

std::vector<Paragraph> group_paragraphs(const std::vector<SampleItem>& items) {
    std::map<std::pair<std::string, std::string>, std::vector<SampleItem>> groups;
    for (const SampleItem& it : items) {
        groups[{it.map_name, it.paragraph_id}].push_back(it);
    }
    std::vector<Paragraph> out;
    for (auto& [key, sentences] : groups) {
        std::sort(sentences.begin(), sentences.end(),
                  [](const SampleItem& a, const SampleItem& b) {
                      return a.sentence_index < b.sentence_index;
                  });
        for (std::size_t i = 0; i < sentences.size(); ++i) {
            if (sentences[i].sentence_index != static_cast<int>(i)) {
                throw IntegrityError("paragraph '" + key.second + "' on map '" + key.first +
                                     "': sentence indices have a gap at " + std::to_string(i));
            }
        }
        Paragraph p;
        p.map_name = key.first;
        p.paragraph_id = key.second;
        p.start = sentences.front().start;
        p.end_node = sentences.back().end.node;
        p.sentences = std::move(sentences);
        out.push_back(std::move(p));
    }
    return out;
}

namespace {

ordered_json pose_to_json(const PoseRef& p) {
    ordered_json j;
    j["node"] = p.node;
    j["orientation"] = p.orientation;
    return j;
}

PoseRef pose_from_json(const nlohmann::json& j) {
    PoseRef p;
    p.node = j.at("node").get<std::string>();
    p.orientation = j.at("orientation").get<int>();
    if (p.orientation != 0 && p.orientation != 90 && p.orientation != 180 && p.orientation != 270) {
        throw ParseError("bad orientation " + std::to_string(p.orientation));
    }
    return p;
}

}  // namespace

std::string to_jsonl(const std::vector<SampleItem>& items) {
    std::string out;
    for (const SampleItem& it : items) {
        ordered_json j;
        j["map"] = it.map_name;
        j["paragraph_id"] = it.paragraph_id;
        j["sentence_index"] = it.sentence_index;
        j["instruction"] = it.instruction;
        j["tokens"] = it.tokens;
        std::vector<std::string> actions;
        for (Action a : it.actions) actions.push_back(worldsim::action_name(a));
        j["actions"] = actions;
        j["start"] = pose_to_json(it.start);
        j["end"] = pose_to_json(it.end);
        j["feasible"] = it.feasible;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<SampleItem> from_jsonl(const std::string& text) {
    std::vector<SampleItem> items;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            SampleItem it;
            it.map_name = j.at("map").get<std::string>();
            it.paragraph_id = j.at("paragraph_id").get<std::string>();
            it.sentence_index = j.at("sentence_index").get<int>();
            it.instruction = j.at("instruction").get<std::string>();
            it.tokens = j.at("tokens").get<std::vector<std::string>>();
            for (const auto& a : j.at("actions")) {
                it.actions.push_back(worldsim::parse_action(a.get<std::string>()));
            }
            it.start = pose_from_json(j.at("start"));
            it.end = pose_from_json(j.at("end"));
            it.feasible = j.at("feasible").get<bool>();
            items.push_back(std::move(it));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("corpus line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return items;
}

// ---------------------------------------------------------------------------
// Raw-distribution conversion ("sail-raw v1").
//
//   RAW/maps/<name>.txt        Node <x> <y> [object]
//                              Edge <x1>,<y1> <x2>,<y2> <floor> <painting>
//   RAW/paragraphs/<file>.json {"map": ..., "paragraphs": [{"id", "sentences":
//                              [{"text", "path": [[x,y,orient], ...]}]}]}
//
// Follower paths arrive as pose sequences; the converter derives the action
// sequence and flags items whose replay fails on the map.

namespace {

std::string coord_id(int x, int y) { return std::to_string(x) + "_" + std::to_string(y); }

worldsim::WorldMap parse_raw_map(const std::string& name, const std::string& text) {
    worldsim::WorldMap map;
    map.name = name;
    struct RawEdge {
        int x1, y1, x2, y2, floor, painting, line;
    };
    std::vector<RawEdge> edges;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto parse_coord = [&](const std::string& tok) {
        auto comma = tok.find(',');
        if (comma == std::string::npos) {
            throw ParseError("expected x,y coordinate, got '" + tok + "'");
        }
        return std::make_pair(std::stoi(tok.substr(0, comma)), std::stoi(tok.substr(comma + 1)));
    };
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string kw;
        if (!(ls >> kw)) continue;
        try {
            if (kw == "Node") {
                int x, y;
                if (!(ls >> x >> y)) throw ParseError("Node line needs: x y [object]");
                std::string obj;
                int object = -1;
                if (ls >> obj) object = worldsim::object_index(obj);
                map.add_node(coord_id(x, y), x, y, object);
            } else if (kw == "Edge") {
                std::string c1, c2, floor, wall;
                if (!(ls >> c1 >> c2 >> floor >> wall)) {
                    throw ParseError("Edge line needs: x1,y1 x2,y2 floor painting");
                }
                auto [x1, y1] = parse_coord(c1);
                auto [x2, y2] = parse_coord(c2);
                edges.push_back({x1, y1, x2, y2, worldsim::floor_index(floor),
                                 worldsim::painting_index(wall), lineno});
            } else {
                throw ParseError("unknown keyword '" + kw + "'");
            }
        } catch (const WalklabError& e) {
            throw ParseError(name + " map line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    for (const RawEdge& e : edges) {
        try {
            map.add_edge(coord_id(e.x1, e.y1), coord_id(e.x2, e.y2), e.floor, e.painting);
        } catch (const WalklabError& err) {
            throw IntegrityError(name + " map line " + std::to_string(e.line) + ": " + err.what());
        }
    }
    map.validate();
    return map;
}

struct RawPose {
    int x, y, orientation;
};

RawPose pose_from_triplet(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 3) throw ParseError("pose must be [x, y, orientation]");
    RawPose p{j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
    if (p.orientation != 0 && p.orientation != 90 && p.orientation != 180 && p.orientation != 270) {
        throw ParseError("pose orientation must be 0/90/180/270");
    }
    return p;
}

// Primitive decomposition of one recorded hop: turns aligning the heading,
// then at most one forward step onto an adjacent cell.
void derive_step(const RawPose& from, const RawPose& to, std::vector<Action>& out) {
    int dx = to.x - from.x;
    int dy = to.y - from.y;
    if (dx == 0 && dy == 0) {
        int delta = ((to.orientation - from.orientation) % 360 + 360) % 360;
        if (delta == 90) {
            out.push_back(Action::TurnRight);
        } else if (delta == 270) {
            out.push_back(Action::TurnLeft);
        } else if (delta == 180) {
            out.push_back(Action::TurnRight);
            out.push_back(Action::TurnRight);
        }
        return;
    }
    if (std::abs(dx) + std::abs(dy) != 1) {
        throw IntegrityError("path hops between non-adjacent cells");
    }
    int move_dir;
    if (dy == 1) move_dir = 0;
    else if (dx == 1) move_dir = 90;
    else if (dy == -1) move_dir = 180;
    else move_dir = 270;
    if (to.orientation != move_dir) {
        throw IntegrityError("path moves without facing the travel direction");
    }
    int delta = ((move_dir - from.orientation) % 360 + 360) % 360;
    if (delta == 90) {
        out.push_back(Action::TurnRight);
    } else if (delta == 270) {
        out.push_back(Action::TurnLeft);
    } else if (delta == 180) {
        out.push_back(Action::TurnRight);
        out.push_back(Action::TurnRight);
    }
    out.push_back(Action::Forward);
}

}  // namespace

IngestStats convert_raw(const std::string& raw_dir, const std::string& out_dir) {
    fs::path raw(raw_dir);
    if (!fs::is_directory(raw / "maps") || !fs::is_directory(raw / "paragraphs")) {
        throw IntegrityError("raw tree '" + raw_dir + "' lacks maps/ and paragraphs/ directories");
    }

    std::map<std::string, worldsim::WorldMap> maps;
    std::vector<fs::path> map_files;
    for (const auto& entry : fs::directory_iterator(raw / "maps")) {
        if (entry.is_regular_file()) map_files.push_back(entry.path());
    }
    std::sort(map_files.begin(), map_files.end());
    for (const fs::path& p : map_files) {
        std::string name = p.stem().string();
        maps.emplace(name, parse_raw_map(name, read_file(p.string())));
    }
    if (maps.empty()) throw IntegrityError("raw tree contains no map files");

    std::vector<fs::path> paragraph_files;
    for (const auto& entry : fs::directory_iterator(raw / "paragraphs")) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") {
            paragraph_files.push_back(entry.path());
        }
    }
    std::sort(paragraph_files.begin(), paragraph_files.end());
    if (paragraph_files.empty()) throw IntegrityError("raw tree contains no paragraph files");

    std::vector<SampleItem> items;
    IngestStats stats;
    std::set<std::tuple<std::string, std::string, std::string>> pairs;
    for (const fs::path& pf : paragraph_files) {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(read_file(pf.string()));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(pf.filename().string() + ": " + e.what());
        }
        std::string map_name = doc.at("map").get<std::string>();
        auto map_it = maps.find(map_name);
        for (const auto& para : doc.at("paragraphs")) {
            std::string pid = para.at("id").get<std::string>();
            if (map_it == maps.end()) {
                throw IntegrityError("paragraph '" + pid + "' references missing map '" +
                                     map_name + "'");
            }
            const worldsim::WorldMap& map = map_it->second;
            ++stats.paragraphs;
            int sentence_index = 0;
            PoseRef para_start, para_end;
            for (const auto& sent : para.at("sentences")) {
                SampleItem item;
                item.map_name = map_name;
                item.paragraph_id = pid;
                item.sentence_index = sentence_index++;
                item.instruction = sent.at("text").get<std::string>();
                item.tokens = tokenize(item.instruction);

                const auto& path = sent.at("path");
                if (!path.is_array() || path.empty()) {
                    throw IntegrityError("paragraph '" + pid + "' sentence " +
                                         std::to_string(item.sentence_index) + " has an empty path");
                }
                std::vector<RawPose> poses;
                for (const auto& pj : path) poses.push_back(pose_from_triplet(pj));
                for (std::size_t i = 1; i < poses.size(); ++i) {
                    try {
                        derive_step(poses[i - 1], poses[i], item.actions);
                    } catch (const WalklabError& e) {
                        throw IntegrityError("paragraph '" + pid + "': " + e.what());
                    }
                }
                item.actions.push_back(Action::Stop);
                item.start = PoseRef{coord_id(poses.front().x, poses.front().y),
                                     poses.front().orientation};
                item.end = PoseRef{coord_id(poses.back().x, poses.back().y),
                                   poses.back().orientation};

                // Replay check: gold actions must walk the map from start to
                // end; failures are flagged, never dropped.
                item.feasible = false;
                int start_idx = map.node_index(item.start.node);
                if (start_idx >= 0) {
                    try {
                        worldsim::AgentPose got = worldsim::execute_sequence(
                            map, worldsim::AgentPose{start_idx, item.start.orientation},
                            item.actions);
                        item.feasible = map.node(got.node).id == item.end.node &&
                                        got.orientation == item.end.orientation;
                    } catch (const worldsim::BlockedMoveError&) {
                        item.feasible = false;
                    }
                }
                if (!item.feasible) ++stats.infeasible_items;
                if (item.sentence_index == 0) para_start = item.start;
                para_end = item.end;
                items.push_back(std::move(item));
            }
            if (sentence_index == 0) {
                throw IntegrityError("paragraph '" + pid + "' has no sentences");
            }
            pairs.insert({map_name, para_start.node, para_end.node});
        }
    }

    sort_items(items);
    stats.items = static_cast<int>(items.size());
    stats.maps = static_cast<int>(maps.size());
    stats.start_end_pairs = static_cast<int>(pairs.size());

    fs::create_directories(fs::path(out_dir) / "maps");
    write_file((fs::path(out_dir) / "corpus.jsonl").string(), to_jsonl(items));
    for (const auto& [name, map] : maps) {
        write_file((fs::path(out_dir) / "maps" / (name + ".map")).string(),
                   worldsim::format_map(map));
    }
    return stats;
}

Dataset load_dataset(const std::string& data_dir) {
    fs::path dir(data_dir);
    Dataset ds;
    ds.items = from_jsonl(read_file((dir / "corpus.jsonl").string()));
    fs::path maps_dir = dir / "maps";
    if (!fs::is_directory(maps_dir)) {
        throw IntegrityError("data directory '" + data_dir + "' lacks maps/");
    }
    std::vector<fs::path> map_files;
    for (const auto& entry : fs::directory_iterator(maps_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".map") {
            map_files.push_back(entry.path());
        }
    }
    std::sort(map_files.begin(), map_files.end());
    for (const fs::path& p : map_files) {
        worldsim::WorldMap m = worldsim::load_map(read_file(p.string()));
        ds.maps.emplace(m.name, std::move(m));
    }
    for (const SampleItem& it : ds.items) {
        if (!ds.maps.count(it.map_name)) {
            throw IntegrityError("corpus item references missing map '" + it.map_name + "'");
        }
    }
    return ds;
}

}  // namespace walklab::corpus
