#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "walklab/common.hpp"
#include "walklab/worldsim.hpp"

namespace walklab::corpus {

struct PoseRef {
    std::string node;
    int orientation = 0;
    bool operator==(const PoseRef&) const = default;
};

struct SampleItem {
    std::string map_name;
    std::string paragraph_id;
    int sentence_index = 0;
    std::string instruction;  // raw text, spelling untouched
    std::vector<std::string> tokens;
    std::vector<worldsim::Action> actions;  // STOP-terminated
    PoseRef start;
    PoseRef end;
    bool feasible = true;
};

class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> sorted_tokens);

    int size() const { return static_cast<int>(tokens_.size()) + 1; }  // + OOV
    int oov_index() const { return static_cast<int>(tokens_.size()); }
    int index_of(const std::string& token) const;
    const std::vector<std::string>& known_tokens() const { return tokens_; }

    std::string to_text() const;
    static Vocabulary from_text(const std::string& text);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

enum class Protocol { VDev, VTest };
const char* protocol_name(Protocol p);
Protocol parse_protocol(const std::string& name);

struct FoldSpec {
    std::string test_map;
    std::vector<SampleItem> train_items;
    std::vector<SampleItem> validation_items;  // empty under vTest
    std::vector<SampleItem> test_items;
    Protocol protocol = Protocol::VDev;
    // vTest uses the held-out map itself to pick the stopping epoch.
    bool stop_on_test_map() const { return protocol == Protocol::VTest; }
};

struct Paragraph {
    std::string map_name;
    std::string paragraph_id;
    std::vector<SampleItem> sentences;  // ordered by sentence_index
    PoseRef start;
    std::string end_node;  // final orientation is disregarded
};

std::vector<std::string> tokenize(const std::string& sentence);

Vocabulary build_vocab(const std::vector<SampleItem>& items);

std::vector<FoldSpec> make_folds(const std::vector<SampleItem>& items, Protocol protocol,
                                 std::uint64_t seed);

std::vector<Paragraph> group_paragraphs(const std::vector<SampleItem>& items);

// JSONL wire format. One record per line, fields exactly:
// map, paragraph_id, sentence_index, instruction, tokens, actions,
// start {node, orientation}, end {node, orientation}, feasible.
std::string to_jsonl(const std::vector<SampleItem>& items);
std::vector<SampleItem> from_jsonl(const std::string& text);

struct IngestStats {
    int paragraphs = 0;
    int items = 0;
    int maps = 0;
    int infeasible_items = 0;
    int start_end_pairs = 0;
};

// Converts a raw distribution tree (layout "sail-raw v1", see README) into the
// canonical corpus document plus one canonical map document per world.
IngestStats convert_raw(const std::string& raw_dir, const std::string& out_dir);

// Loads the canonical corpus directory emitted by convert_raw.
struct Dataset {
    std::vector<SampleItem> items;
    std::map<std::string, worldsim::WorldMap> maps;
};
Dataset load_dataset(const std::string& data_dir);

}  // namespace walklab::corpus
