#include <doctest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "walklab/corpus.hpp"
#include "walklab/worldsim.hpp"

using namespace walklab;
using worldsim::Action;
using worldsim::AgentPose;
using worldsim::Observation;
using worldsim::WorldMap;

namespace {

WorldMap sample_map(const std::string& name) {
    return worldsim::load_map(read_file(std::string(WALKLAB_DATA_DIR) + "/maps/" + name + ".map"));
}

// Brute-force all-pairs shortest hop counts, independent of path_distance.
std::vector<std::vector<int>> floyd_warshall(const WorldMap& map) {
    const int n = map.node_count();
    const int inf = 1 << 20;
    std::vector<std::vector<int>> d(n, std::vector<int>(n, inf));
    for (int i = 0; i < n; ++i) d[i][i] = 0;
    for (const auto& e : map.edges()) {
        d[e.a][e.b] = 1;
        d[e.b][e.a] = 1;
    }
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
            }
        }
    }
    return d;
}

// Observation block accessors for readability.
std::vector<int> block(const Observation& obs, int which) {
    std::vector<int> out;
    for (int i = 0; i < worldsim::kDirectionBlockWidth; ++i) {
        out.push_back(obs.bits[static_cast<std::size_t>(which * worldsim::kDirectionBlockWidth + i)]);
    }
    return out;
}

std::vector<int> make_block(std::vector<int> floors, std::vector<int> paintings,
                            std::vector<int> objects, bool hallway) {
    std::vector<int> b(worldsim::kDirectionBlockWidth, 0);
    for (int f : floors) b[static_cast<std::size_t>(f)] = 1;
    for (int p : paintings) b[static_cast<std::size_t>(7 + p)] = 1;
    for (int o : objects) b[static_cast<std::size_t>(10 + o)] = 1;
    b[16] = hallway ? 1 : 0;
    b[17] = hallway ? 0 : 1;
    return b;
}

}  // namespace

TEST_CASE("attribute vocabularies resolve by name") {
    CHECK(worldsim::floor_index("grass") == 0);
    CHECK(worldsim::floor_index("yellow-octagon") == 6);
    CHECK(worldsim::painting_index("eiffel") == 2);
    CHECK(worldsim::object_index("easel") == 5);
    CHECK_THROWS_AS(worldsim::floor_index("carpet"), ParseError);
    CHECK_THROWS_AS(worldsim::object_index(""), ParseError);
}

TEST_CASE("actions round-trip through names") {
    for (int i = 0; i < worldsim::kActionCount; ++i) {
        Action a = static_cast<Action>(i);
        CHECK(worldsim::parse_action(worldsim::action_name(a)) == a);
    }
    CHECK_THROWS_AS(worldsim::parse_action("JUMP"), ParseError);
}

TEST_CASE("orientation parsing accepts the four compass values only") {
    CHECK(worldsim::parse_orientation("0") == 0);
    CHECK(worldsim::parse_orientation("270") == 270);
    CHECK_THROWS_AS(worldsim::parse_orientation("45"), ParseError);
    CHECK_THROWS_AS(worldsim::parse_orientation("north"), ParseError);
}

TEST_CASE("turn actions rotate by quarter turns") {
    WorldMap map = sample_map("grid");
    AgentPose p{map.require_node("5_1"), 0};

    SUBCASE("left then right is identity") {
        AgentPose q = worldsim::apply_action(map, worldsim::apply_action(map, p, Action::TurnLeft),
                                             Action::TurnRight);
        CHECK(q == p);
    }
    SUBCASE("four rights are identity") {
        AgentPose q = p;
        for (int i = 0; i < 4; ++i) q = worldsim::apply_action(map, q, Action::TurnRight);
        CHECK(q == p);
    }
    SUBCASE("stop does not move") {
        CHECK(worldsim::apply_action(map, p, Action::Stop) == p);
    }
    SUBCASE("left goes counter-clockwise") {
        CHECK(worldsim::apply_action(map, p, Action::TurnLeft).orientation == 270);
        CHECK(worldsim::apply_action(map, p, Action::TurnRight).orientation == 90);
    }
}

TEST_CASE("forward moves along hallways and blocks at walls") {
    WorldMap map = sample_map("grid");
    int a = map.require_node("5_1");
    int b = map.require_node("5_2");

    AgentPose north{a, 0};
    CHECK(worldsim::apply_action(map, north, Action::Forward).node == b);

    AgentPose south{a, 180};  // wall behind the T intersection
    CHECK_THROWS_AS(worldsim::apply_action(map, south, Action::Forward),
                    worldsim::BlockedMoveError);
}

TEST_CASE("execute_sequence reports the failing step and rejects interior stops") {
    WorldMap map = sample_map("grid");
    AgentPose start{map.require_node("5_1"), 0};

    SUBCASE("walks a feasible sequence") {
        AgentPose end = worldsim::execute_sequence(
            map, start,
            {Action::Forward, Action::TurnLeft, Action::Forward, Action::Forward, Action::Stop});
        CHECK(map.node(end.node).id == "3_2");
        CHECK(end.orientation == 270);
    }
    SUBCASE("names the step that walks into a wall") {
        try {
            worldsim::execute_sequence(map, start,
                                       {Action::Forward, Action::Forward, Action::Stop});
            FAIL("expected BlockedMoveError");
        } catch (const worldsim::BlockedMoveError& e) {
            CHECK(e.step() == 1);
        }
    }
    SUBCASE("interior stop is rejected") {
        CHECK_THROWS_AS(
            worldsim::execute_sequence(map, start, {Action::Stop, Action::Forward}),
            ContractError);
    }
    SUBCASE("empty sequence stays put") {
        CHECK(worldsim::execute_sequence(map, start, {}) == start);
    }
}

TEST_CASE("observation matches hand-traced corridors on the grid world") {
    WorldMap map = sample_map("grid");
    const int grass = 0, brick = 1, wood = 2, gravel = 3, flower = 5, yellow = 6;
    const int butterfly = 0, fish = 1, eiffel = 2;
    const int chair = 2, easel = 5;

    SUBCASE("T intersection facing the stem") {
        // North: grass hall one segment to the chair. West: yellow then wood
        // halls with the easel in view. East: yellow hall, empty.
        Observation obs = worldsim::observe(map, {map.require_node("5_1"), 0});
        CHECK(block(obs, 0) == make_block({grass}, {butterfly}, {chair}, true));
        CHECK(block(obs, 1) == make_block({yellow, wood}, {butterfly}, {easel}, true));
        CHECK(block(obs, 2) == make_block({yellow}, {butterfly}, {}, true));
    }
    SUBCASE("easel intersection facing west") {
        Observation obs = worldsim::observe(map, {map.require_node("3_1"), 270});
        CHECK(block(obs, 0) == make_block({wood}, {butterfly}, {}, true));  // down the wood hall
        CHECK(block(obs, 1) == make_block({}, {}, {}, false));              // wall to the south
        CHECK(block(obs, 2) == make_block({brick}, {eiffel}, {}, true));    // brick hall north
    }
    SUBCASE("lamp intersection facing north") {
        Observation obs = worldsim::observe(map, {map.require_node("1_0"), 0});
        CHECK(block(obs, 0) == make_block({gravel}, {fish}, {}, true));
        CHECK(block(obs, 1) == make_block({flower}, {eiffel}, {}, true));
        CHECK(block(obs, 2) == make_block({flower}, {eiffel}, {}, true));
    }
}

TEST_CASE("observation bits are binary and the wall flag complements the hallway flag") {
    for (const std::string name : {"grid", "jelly", "l"}) {
        WorldMap map = sample_map(name);
        for (int n = 0; n < map.node_count(); ++n) {
            for (int o : {0, 90, 180, 270}) {
                Observation obs = worldsim::observe(map, {n, o});
                for (int blk = 0; blk < 3; ++blk) {
                    auto b = block(obs, blk);
                    for (int v : b) CHECK((v == 0 || v == 1));
                    CHECK(b[16] + b[17] == 1);
                }
                std::vector<double> d = obs.as_doubles();
                REQUIRE(d.size() == static_cast<std::size_t>(worldsim::kObservationDim));
                for (std::size_t i = 0; i < d.size(); ++i) {
                    CHECK(d[i] == static_cast<double>(obs.bits[i]));
                }
            }
        }
    }
}

TEST_CASE("rotating the agent permutes the observation blocks") {
    // What is ahead at orientation o is on your left at o+90 and on your
    // right at o-90.
    for (const std::string name : {"grid", "jelly", "l"}) {
        WorldMap map = sample_map(name);
        for (int n = 0; n < map.node_count(); ++n) {
            for (int o : {0, 90, 180, 270}) {
                Observation here = worldsim::observe(map, {n, o});
                Observation cw = worldsim::observe(map, {n, (o + 90) % 360});
                Observation ccw = worldsim::observe(map, {n, (o + 270) % 360});
                CHECK(block(here, 0) == block(cw, 1));
                CHECK(block(here, 0) == block(ccw, 2));
            }
        }
    }
}

TEST_CASE("path_distance equals Floyd-Warshall on every map") {
    for (const std::string name : {"grid", "jelly", "l"}) {
        WorldMap map = sample_map(name);
        auto oracle = floyd_warshall(map);
        for (int a = 0; a < map.node_count(); ++a) {
            for (int b = 0; b < map.node_count(); ++b) {
                CHECK(worldsim::path_distance(map, a, b) == oracle[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)]);
            }
        }
    }
}

TEST_CASE("path_distance rejects out-of-range nodes and unreachable pairs") {
    WorldMap map = sample_map("grid");
    CHECK_THROWS_AS(worldsim::path_distance(map, -1, 0), ContractError);
    CHECK_THROWS_AS(worldsim::path_distance(map, 0, map.node_count()), ContractError);

    WorldMap split;
    split.name = "split";
    split.add_node("a1", 0, 0, -1);
    split.add_node("a2", 0, 1, -1);
    split.add_node("b1", 5, 0, -1);
    split.add_node("b2", 5, 1, -1);
    split.add_edge("a1", "a2", 0, 0);
    split.add_edge("b1", "b2", 0, 0);
    CHECK(worldsim::path_distance(split, 0, 1) == 1);
    CHECK_THROWS_AS(worldsim::path_distance(split, 0, 2), worldsim::UnreachableError);
}

TEST_CASE("map text round-trips through format_map") {
    for (const std::string name : {"grid", "jelly", "l"}) {
        std::string text = read_file(std::string(WALKLAB_DATA_DIR) + "/maps/" + name + ".map");
        WorldMap map = worldsim::load_map(text);
        CHECK(worldsim::format_map(map) == text);
        WorldMap again = worldsim::load_map(worldsim::format_map(map));
        CHECK(worldsim::format_map(again) == text);
    }
}

TEST_CASE("map construction rejects inconsistencies") {
    WorldMap m;
    m.add_node("a", 0, 0, -1);
    m.add_node("b", 1, 0, -1);
    CHECK_THROWS_AS(m.add_node("a", 2, 2, -1), IntegrityError);       // duplicate id
    CHECK_THROWS_AS(m.add_edge("a", "zzz", 0, 0), IntegrityError);    // unknown endpoint
    CHECK_THROWS_AS(m.add_edge("a", "a", 0, 0), IntegrityError);      // self loop
    m.add_edge("a", "b", 0, 0);
    CHECK_THROWS_AS(m.add_edge("b", "a", 1, 1), IntegrityError);      // duplicate hallway

    WorldMap diag;
    diag.add_node("a", 0, 0, -1);
    diag.add_node("b", 1, 1, -1);
    CHECK_THROWS_AS(diag.add_edge("a", "b", 0, 0), IntegrityError);   // not axis-adjacent
}

TEST_CASE("pose validity") {
    WorldMap map = sample_map("l");
    CHECK(worldsim::pose_valid(map, {0, 0}));
    CHECK_FALSE(worldsim::pose_valid(map, {-1, 0}));
    CHECK_FALSE(worldsim::pose_valid(map, {map.node_count(), 0}));
    CHECK_FALSE(worldsim::pose_valid(map, {0, 45}));
}

TEST_CASE("the bundled walkthrough paragraph replays to its recorded endpoint") {
    WorldMap map = sample_map("grid");
    corpus::Dataset data = corpus::load_dataset(WALKLAB_DATA_DIR);
    std::vector<corpus::SampleItem> walk;
    for (const corpus::SampleItem& item : data.items) {
        if (item.paragraph_id == "walkthrough") {
            CHECK(item.map_name == "grid");
            walk.push_back(item);
        }
    }
    REQUIRE(walk.size() == 14);
    std::sort(walk.begin(), walk.end(), [](const auto& a, const auto& b) {
        return a.sentence_index < b.sentence_index;
    });

    AgentPose pose{map.require_node(walk.front().start.node), walk.front().start.orientation};
    CHECK(map.node(pose.node).id == "5_1");
    for (const corpus::SampleItem& item : walk) {
        CHECK(item.feasible);
        CHECK(map.node(pose.node).id == item.start.node);
        pose = worldsim::execute_sequence(map, pose, item.actions);
        CHECK(map.node(pose.node).id == item.end.node);
        CHECK(pose.orientation == item.end.orientation);
    }
    CHECK(map.node(pose.node).id == "0_0");
    CHECK(pose.orientation == 270);
}
