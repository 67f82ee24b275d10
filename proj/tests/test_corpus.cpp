#include <doctest.h>

#include <filesystem>
#include <set>
#include <vector>

#include "walklab/corpus.hpp"

using namespace walklab;
using namespace walklab::corpus;

namespace {

const char* kDataDir = WALKLAB_DATA_DIR;

std::vector<SampleItem> committed_items() {
    return from_jsonl(read_file(std::string(kDataDir) + "/corpus.jsonl"));
}

}  // namespace

TEST_CASE("tokenize lowercases and peels surrounding punctuation") {
    CHECK(tokenize("Turn LEFT, then walk.") ==
          std::vector<std::string>{"turn", "left", ",", "then", "walk", "."});
    CHECK(tokenize("  spaced   out  ") == std::vector<std::string>{"spaced", "out"});
    CHECK(tokenize("\"hello!\"") == std::vector<std::string>{"\"", "hello", "!", "\""});
    // Interior punctuation is part of the word.
    CHECK(tokenize("the yellow-tiled hall; it's long") ==
          std::vector<std::string>{"the", "yellow-tiled", "hall", ";", "it's", "long"});
    // Misspellings survive untouched.
    CHECK(tokenize("at the interesction") ==
          std::vector<std::string>{"at", "the", "interesction"});
    CHECK(tokenize("") == std::vector<std::string>{});
    CHECK(tokenize("...") == std::vector<std::string>{".", ".", "."});
}

TEST_CASE("vocabulary indexes known tokens and routes the rest to OOV") {
    Vocabulary v(std::vector<std::string>{"alley", "brick", "chair"});
    CHECK(v.size() == 4);
    CHECK(v.oov_index() == 3);
    CHECK(v.index_of("alley") == 0);
    CHECK(v.index_of("chair") == 2);
    CHECK(v.index_of("zebra") == v.oov_index());
    CHECK(v.index_of("") == v.oov_index());

    Vocabulary back = Vocabulary::from_text(v.to_text());
    CHECK(back.known_tokens() == v.known_tokens());
    CHECK(back.size() == v.size());
}

TEST_CASE("build_vocab collects the distinct sorted token set") {
    SampleItem a;
    a.tokens = {"walk", "to", "the", "chair"};
    SampleItem b;
    b.tokens = {"turn", "to", "the", "lamp"};
    Vocabulary v = build_vocab({a, b});
    CHECK(v.known_tokens() ==
          std::vector<std::string>{"chair", "lamp", "the", "to", "turn", "walk"});
    CHECK_THROWS_AS(build_vocab({}), ContractError);
}

TEST_CASE("protocol names round-trip") {
    CHECK(parse_protocol(protocol_name(Protocol::VDev)) == Protocol::VDev);
    CHECK(parse_protocol(protocol_name(Protocol::VTest)) == Protocol::VTest);
    CHECK_THROWS_AS(parse_protocol("vdev2"), UsageError);
}

TEST_CASE("the committed corpus round-trips through the wire format byte for byte") {
    std::string text = read_file(std::string(kDataDir) + "/corpus.jsonl");
    std::vector<SampleItem> items = from_jsonl(text);
    CHECK(items.size() == 226);
    CHECK(to_jsonl(items) == text);

    int infeasible = 0;
    std::set<std::string> maps;
    for (const SampleItem& it : items) {
        maps.insert(it.map_name);
        if (!it.feasible) ++infeasible;
        REQUIRE(!it.actions.empty());
        CHECK(it.actions.back() == worldsim::Action::Stop);
        for (std::size_t k = 0; k + 1 < it.actions.size(); ++k) {
            CHECK(it.actions[k] != worldsim::Action::Stop);
        }
        CHECK(it.tokens == tokenize(it.instruction));
    }
    CHECK(infeasible == 6);
    CHECK(maps == std::set<std::string>{"grid", "jelly", "l"});
}

TEST_CASE("from_jsonl rejects malformed records") {
    CHECK_THROWS_AS(from_jsonl("{not json\n"), ParseError);
    CHECK_THROWS_AS(from_jsonl("{\"map\": \"grid\"}\n"), ParseError);  // missing fields
}

TEST_CASE("ingesting the bundled raw tree reproduces the canonical corpus") {
    namespace fs = std::filesystem;
    fs::path out = fs::temp_directory_path() / "walklab_ingest_test";
    fs::remove_all(out);
    IngestStats stats = convert_raw(std::string(kDataDir) + "/raw", out.string());
    CHECK(stats.items == 226);
    CHECK(stats.paragraphs == 90);
    CHECK(stats.maps == 3);
    CHECK(stats.infeasible_items == 6);
    CHECK(stats.start_end_pairs == 70);

    CHECK(read_file((out / "corpus.jsonl").string()) ==
          read_file(std::string(kDataDir) + "/corpus.jsonl"));
    for (const std::string name : {"grid", "jelly", "l"}) {
        CHECK(read_file((out / "maps" / (name + ".map")).string()) ==
              read_file(std::string(kDataDir) + "/maps/" + name + ".map"));
    }
    fs::remove_all(out);
}

TEST_CASE("load_dataset returns items plus every world map") {
    Dataset data = load_dataset(kDataDir);
    CHECK(data.items.size() == 226);
    REQUIRE(data.maps.size() == 3);
    CHECK(data.maps.count("grid") == 1);
    CHECK(data.maps.at("jelly").name == "jelly");
    for (const auto& [name, map] : data.maps) {
        CHECK(map.node_count() > 0);
    }
}

TEST_CASE("cross-validation folds hold out one whole map each") {
    std::vector<SampleItem> items = committed_items();

    for (Protocol proto : {Protocol::VDev, Protocol::VTest}) {
        std::vector<FoldSpec> folds = make_folds(items, proto, 7);
        REQUIRE(folds.size() == 3);
        std::set<std::string> held;
        for (const FoldSpec& fold : folds) {
            held.insert(fold.test_map);
            CHECK(fold.protocol == proto);
            std::size_t expected_test = 0;
            for (const SampleItem& it : items) {
                if (it.map_name == fold.test_map) ++expected_test;
            }
            CHECK(fold.test_items.size() == expected_test);
            for (const SampleItem& it : fold.test_items) CHECK(it.map_name == fold.test_map);
            for (const SampleItem& it : fold.train_items) CHECK(it.map_name != fold.test_map);
            for (const SampleItem& it : fold.validation_items) CHECK(it.map_name != fold.test_map);
            CHECK(fold.train_items.size() + fold.validation_items.size() +
                      fold.test_items.size() == items.size());
            if (proto == Protocol::VDev) {
                CHECK(!fold.validation_items.empty());
                CHECK_FALSE(fold.stop_on_test_map());
                // No paragraph straddles the train/validation boundary.
                std::set<std::pair<std::string, std::string>> val_keys;
                for (const SampleItem& it : fold.validation_items) {
                    val_keys.insert({it.map_name, it.paragraph_id});
                }
                for (const SampleItem& it : fold.train_items) {
                    CHECK(val_keys.count({it.map_name, it.paragraph_id}) == 0);
                }
            } else {
                CHECK(fold.validation_items.empty());
                CHECK(fold.stop_on_test_map());
            }
        }
        CHECK(held == std::set<std::string>{"grid", "jelly", "l"});
    }
}

TEST_CASE("fold assignment is a pure function of the seed") {
    std::vector<SampleItem> items = committed_items();
    auto key_list = [](const FoldSpec& f) {
        std::vector<std::string> keys;
        for (const SampleItem& it : f.validation_items) {
            keys.push_back(it.map_name + "/" + it.paragraph_id + "#" +
                           std::to_string(it.sentence_index));
        }
        return keys;
    };
    std::vector<FoldSpec> a = make_folds(items, Protocol::VDev, 11);
    std::vector<FoldSpec> b = make_folds(items, Protocol::VDev, 11);
    std::vector<FoldSpec> c = make_folds(items, Protocol::VDev, 12);
    bool any_difference = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(key_list(a[i]) == key_list(b[i]));
        if (key_list(a[i]) != key_list(c[i])) any_difference = true;
    }
    CHECK(any_difference);
}

TEST_CASE("make_folds refuses a single-map corpus") {
    std::vector<SampleItem> items = committed_items();
    std::vector<SampleItem> only_grid;
    for (const SampleItem& it : items) {
        if (it.map_name == "grid") only_grid.push_back(it);
    }
    CHECK_THROWS_AS(make_folds(only_grid, Protocol::VDev, 1), IntegrityError);
}

TEST_CASE("group_paragraphs stitches sentences back into ordered walks") {
    std::vector<SampleItem> items = committed_items();
    std::vector<Paragraph> paragraphs = group_paragraphs(items);
    CHECK(paragraphs.size() == 90);

    const Paragraph* walk = nullptr;
    for (const Paragraph& p : paragraphs) {
        REQUIRE(!p.sentences.empty());
        for (std::size_t i = 0; i < p.sentences.size(); ++i) {
            CHECK(p.sentences[i].sentence_index == static_cast<int>(i));
            CHECK(p.sentences[i].paragraph_id == p.paragraph_id);
            CHECK(p.sentences[i].map_name == p.map_name);
        }
        CHECK(p.start == p.sentences.front().start);
        CHECK(p.end_node == p.sentences.back().end.node);
        if (p.paragraph_id == "walkthrough") walk = &p;
    }
    REQUIRE(walk != nullptr);
    CHECK(walk->map_name == "grid");
    CHECK(walk->sentences.size() == 14);
    CHECK(walk->start.node == "5_1");
    CHECK(walk->start.orientation == 0);
    CHECK(walk->end_node == "0_0");
}
