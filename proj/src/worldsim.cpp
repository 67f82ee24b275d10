#include "walklab/worldsim.hpp"

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <sstream>

namespace walklab::worldsim {

namespace {

// Direction index 0=N,1=E,2=S,3=W; +y is north, +x is east.
constexpr int kDx[4] = {0, 1, 0, -1};
constexpr int kDy[4] = {1, 0, -1, 0};

int dir_of(int orientation) {
    return (orientation / 90) % 4;
}

template <typename T>
int lookup(const T& table, const std::string& name, const char* what) {
    for (std::size_t i = 0; i < table.size(); ++i) {
        if (name == table[i]) return static_cast<int>(i);
    }
    throw ParseError(std::string("unknown ") + what + ": '" + name + "'");
}

}  // namespace

const char* action_name(Action a) {
    switch (a) {
        case Action::Forward: return "FORWARD";
        case Action::TurnLeft: return "TURN_LEFT";
        case Action::TurnRight: return "TURN_RIGHT";
        case Action::Stop: return "STOP";
    }
    throw ContractError("invalid action value");
}

Action parse_action(const std::string& name) {
    if (name == "FORWARD") return Action::Forward;
    if (name == "TURN_LEFT") return Action::TurnLeft;
    if (name == "TURN_RIGHT") return Action::TurnRight;
    if (name == "STOP") return Action::Stop;
    throw ParseError("unknown action: '" + name + "'");
}

int floor_index(const std::string& name) { return lookup(kFloorPatterns, name, "floor pattern"); }
int painting_index(const std::string& name) { return lookup(kWallPaintings, name, "wall painting"); }
int object_index(const std::string& name) { return lookup(kObjects, name, "object"); }

int parse_orientation(const std::string& text) {
    if (text == "0" || text == "90" || text == "180" || text == "270") {
        return std::atoi(text.c_str());
    }
    throw ParseError("orientation must be one of 0/90/180/270, got '" + text + "'");
}

int WorldMap::node_index(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? -1 : it->second;
}

int WorldMap::require_node(const std::string& id) const {
    int idx = node_index(id);
    if (idx < 0) throw IntegrityError("map '" + name + "': unknown node '" + id + "'");
    return idx;
}

void WorldMap::add_node(const std::string& id, int x, int y, int object) {
    if (index_.count(id)) throw IntegrityError("duplicate node id '" + id + "'");
    for (const Node& n : nodes_) {
        if (n.x == x && n.y == y) {
            throw IntegrityError("nodes '" + n.id + "' and '" + id + "' share coordinates");
        }
    }
    index_.emplace(id, static_cast<int>(nodes_.size()));
    nodes_.push_back(Node{id, x, y, object});
    adjacency_.push_back({-1, -1, -1, -1});
    edge_ref_.push_back({-1, -1, -1, -1});
}

void WorldMap::add_edge(const std::string& id_a, const std::string& id_b, int floor, int painting) {
    int a = node_index(id_a);
    int b = node_index(id_b);
    if (a < 0 || b < 0) {
        throw IntegrityError("edge references undeclared node '" + (a < 0 ? id_a : id_b) + "'");
    }
    const Node& na = nodes_[static_cast<std::size_t>(a)];
    const Node& nb = nodes_[static_cast<std::size_t>(b)];
    int dx = nb.x - na.x;
    int dy = nb.y - na.y;
    if (std::abs(dx) + std::abs(dy) != 1) {
        throw IntegrityError("edge '" + id_a + "'-'" + id_b + "' does not join grid-adjacent nodes");
    }
    int dir = -1;
    for (int d = 0; d < 4; ++d) {
        if (kDx[d] == dx && kDy[d] == dy) dir = d;
    }
    if (adjacency_[static_cast<std::size_t>(a)][static_cast<std::size_t>(dir)] != -1) {
        throw IntegrityError("duplicate edge at node '" + id_a + "'");
    }
    int eidx = static_cast<int>(edges_.size());
    edges_.push_back(Edge{a, b, floor, painting});
    adjacency_[static_cast<std::size_t>(a)][static_cast<std::size_t>(dir)] = b;
    adjacency_[static_cast<std::size_t>(b)][static_cast<std::size_t>((dir + 2) % 4)] = a;
    edge_ref_[static_cast<std::size_t>(a)][static_cast<std::size_t>(dir)] = eidx;
    edge_ref_[static_cast<std::size_t>(b)][static_cast<std::size_t>((dir + 2) % 4)] = eidx;
}

void WorldMap::validate() const {
    if (name.empty()) throw IntegrityError("map has no name");
}

WorldMap load_map(const std::string& text) {
    WorldMap map;
    struct PendingEdge {
        std::string a, b;
        int floor, painting, line;
    };
    std::vector<PendingEdge> pending;

    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string kw;
        if (!(ls >> kw)) continue;
        try {
            if (kw == "name") {
                std::string n;
                if (!(ls >> n)) throw ParseError("name line needs a value");
                map.name = n;
            } else if (kw == "node") {
                std::string id, obj;
                int x, y;
                if (!(ls >> id >> x >> y)) throw ParseError("node line needs: id x y [object]");
                int object = -1;
                if (ls >> obj) object = object_index(obj);
                std::string extra;
                if (ls >> extra) throw ParseError("trailing tokens after node declaration");
                map.add_node(id, x, y, object);
            } else if (kw == "edge") {
                std::string a, b, floor, painting;
                if (!(ls >> a >> b >> floor >> painting)) {
                    throw ParseError("edge line needs: id1 id2 floor painting");
                }
                // Edges may reference nodes declared later; resolve after the pass.
                pending.push_back({a, b, floor_index(floor), painting_index(painting), lineno});
            } else {
                throw ParseError("unknown keyword '" + kw + "'");
            }
        } catch (const WalklabError& e) {
            throw ParseError("map line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    for (const PendingEdge& e : pending) {
        try {
            map.add_edge(e.a, e.b, e.floor, e.painting);
        } catch (const WalklabError& err) {
            throw IntegrityError("map line " + std::to_string(e.line) + ": " + err.what());
        }
    }
    map.validate();
    return map;
}

std::string format_map(const WorldMap& map) {
    std::ostringstream out;
    out << "name " << map.name << "\n";
    for (const auto& n : map.nodes()) {
        out << "node " << n.id << " " << n.x << " " << n.y;
        if (n.object >= 0) out << " " << kObjects[static_cast<std::size_t>(n.object)];
        out << "\n";
    }
    for (const auto& e : map.edges()) {
        out << "edge " << map.node(e.a).id << " " << map.node(e.b).id << " "
            << kFloorPatterns[static_cast<std::size_t>(e.floor)] << " "
            << kWallPaintings[static_cast<std::size_t>(e.painting)] << "\n";
    }
    return out.str();
}

bool pose_valid(const WorldMap& map, const AgentPose& pose) {
    return pose.node >= 0 && pose.node < map.node_count() &&
           (pose.orientation == 0 || pose.orientation == 90 || pose.orientation == 180 ||
            pose.orientation == 270);
}

AgentPose apply_action(const WorldMap& map, const AgentPose& pose, Action a) {
    if (!pose_valid(map, pose)) throw ContractError("invalid pose");
    switch (a) {
        case Action::TurnLeft:
            return AgentPose{pose.node, (pose.orientation + 270) % 360};
        case Action::TurnRight:
            return AgentPose{pose.node, (pose.orientation + 90) % 360};
        case Action::Stop:
            return pose;
        case Action::Forward: {
            int next = map.neighbor(pose.node, dir_of(pose.orientation));
            if (next < 0) {
                throw BlockedMoveError("blocked move at node '" + map.node(pose.node).id +
                                       "' facing " + std::to_string(pose.orientation));
            }
            return AgentPose{next, pose.orientation};
        }
    }
    throw ContractError("invalid action value");
}

Observation observe(const WorldMap& map, const AgentPose& pose) {
    if (!pose_valid(map, pose)) throw ContractError("invalid pose");
    Observation obs;
    // Relative directions: forward, left, right.
    const int rel[3] = {0, 3, 1};
    for (int blk = 0; blk < 3; ++blk) {
        int dir = (dir_of(pose.orientation) + rel[blk]) % 4;
        int base = blk * kDirectionBlockWidth;
        int cur = pose.node;
        bool any = false;
        while (true) {
            int eidx = map.edge_at(cur, dir);
            if (eidx < 0) break;
            any = true;
            const WorldMap::Edge& e = map.edges()[static_cast<std::size_t>(eidx)];
            obs.bits[static_cast<std::size_t>(base + e.floor)] = 1;
            obs.bits[static_cast<std::size_t>(base + 7 + e.painting)] = 1;
            cur = map.neighbor(cur, dir);
            int obj = map.node(cur).object;
            if (obj >= 0) obs.bits[static_cast<std::size_t>(base + 10 + obj)] = 1;
        }
        obs.bits[static_cast<std::size_t>(base + 16)] = any ? 1 : 0;
        obs.bits[static_cast<std::size_t>(base + 17)] = any ? 0 : 1;
    }
    return obs;
}

AgentPose execute_sequence(const WorldMap& map, const AgentPose& start,
                           const std::vector<Action>& actions) {
    for (std::size_t i = 0; i < actions.size(); ++i) {
        if (actions[i] == Action::Stop && i + 1 != actions.size()) {
            throw ContractError("STOP may appear only as the final action");
        }
    }
    AgentPose pose = start;
    for (std::size_t i = 0; i < actions.size(); ++i) {
        try {
            pose = apply_action(map, pose, actions[i]);
        } catch (const BlockedMoveError& e) {
            throw BlockedMoveError(std::string(e.what()) + " (action index " + std::to_string(i) + ")",
                                   static_cast<int>(i));
        }
    }
    return pose;
}

int path_distance(const WorldMap& map, int a, int b) {
    if (a < 0 || a >= map.node_count() || b < 0 || b >= map.node_count()) {
        throw ContractError("path_distance: node out of range");
    }
    if (a == b) return 0;
    std::vector<int> dist(static_cast<std::size_t>(map.node_count()), -1);
    std::deque<int> queue;
    dist[static_cast<std::size_t>(a)] = 0;
    queue.push_back(a);
    while (!queue.empty()) {
        int cur = queue.front();
        queue.pop_front();
        for (int d = 0; d < 4; ++d) {
            int next = map.neighbor(cur, d);
            if (next >= 0 && dist[static_cast<std::size_t>(next)] < 0) {
                dist[static_cast<std::size_t>(next)] = dist[static_cast<std::size_t>(cur)] + 1;
                if (next == b) return dist[static_cast<std::size_t>(next)];
                queue.push_back(next);
            }
        }
    }
    throw UnreachableError("no path between '" + map.node(a).id + "' and '" + map.node(b).id + "'");
}

}  // namespace walklab::worldsim
