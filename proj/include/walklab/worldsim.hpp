#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "walklab/common.hpp"

namespace walklab::worldsim {

// Closed attribute vocabularies of the grid worlds.
inline constexpr std::array<const char*, 7> kFloorPatterns = {
    "grass", "brick", "wood", "gravel", "blue", "flower", "yellow-octagon"};
inline constexpr std::array<const char*, 3> kWallPaintings = {"butterfly", "fish", "eiffel"};
inline constexpr std::array<const char*, 6> kObjects = {
    "hatrack", "lamp", "chair", "sofa", "barstool", "easel"};

enum class Action : std::uint8_t { Forward = 0, TurnLeft = 1, TurnRight = 2, Stop = 3 };
inline constexpr int kActionCount = 4;

const char* action_name(Action a);
Action parse_action(const std::string& name);

// Orientation in degrees, clockwise from map-north: 0=N, 90=E, 180=S, 270=W.
struct AgentPose {
    int node = -1;
    int orientation = 0;
    bool operator==(const AgentPose&) const = default;
};

class BlockedMoveError : public WalklabError {
public:
    BlockedMoveError(const std::string& msg, int step = -1)
        : WalklabError(ErrorKind::Data, msg), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

class UnreachableError : public WalklabError {
public:
    explicit UnreachableError(const std::string& msg) : WalklabError(ErrorKind::Data, msg) {}
};

class WorldMap {
public:
    struct Node {
        std::string id;
        int x = 0;
        int y = 0;
        int object = -1;  // index into kObjects, -1 if none
    };
    struct Edge {
        int a = 0;
        int b = 0;
        int floor = 0;     // index into kFloorPatterns
        int painting = 0;  // index into kWallPaintings
    };

    std::string name;

    int node_count() const { return static_cast<int>(nodes_.size()); }
    const Node& node(int idx) const { return nodes_.at(static_cast<std::size_t>(idx)); }
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }

    int node_index(const std::string& id) const;  // -1 if absent
    int require_node(const std::string& id) const;

    // Neighbor node index in absolute direction dir (0=N,1=E,2=S,3=W), -1 if no edge.
    int neighbor(int node, int dir) const { return adjacency_.at(static_cast<std::size_t>(node))[static_cast<std::size_t>(dir)]; }
    // Edge index in that direction, -1 if none.
    int edge_at(int node, int dir) const { return edge_ref_.at(static_cast<std::size_t>(node))[static_cast<std::size_t>(dir)]; }

    void add_node(const std::string& id, int x, int y, int object);
    void add_edge(const std::string& id_a, const std::string& id_b, int floor, int painting);
    void validate() const;

private:
    std::vector<Node> nodes_;
    std::vector<Edge> edges_;
    std::unordered_map<std::string, int> index_;
    std::vector<std::array<int, 4>> adjacency_;
    std::vector<std::array<int, 4>> edge_ref_;
};

// Per-direction observation block: 7 floor + 3 painting + 6 object +
// hallway-exists + wall-ahead bits. Three blocks: forward, left, right.
inline constexpr int kDirectionBlockWidth = 18;
inline constexpr int kObservationDim = 3 * kDirectionBlockWidth;

struct Observation {
    std::array<std::uint8_t, kObservationDim> bits{};
    bool operator==(const Observation&) const = default;
    std::vector<double> as_doubles() const {
        return std::vector<double>(bits.begin(), bits.end());
    }
};

WorldMap load_map(const std::string& text);
std::string format_map(const WorldMap& map);

bool pose_valid(const WorldMap& map, const AgentPose& pose);
AgentPose apply_action(const WorldMap& map, const AgentPose& pose, Action a);
Observation observe(const WorldMap& map, const AgentPose& pose);
AgentPose execute_sequence(const WorldMap& map, const AgentPose& start,
                           const std::vector<Action>& actions);
int path_distance(const WorldMap& map, int a, int b);

int parse_orientation(const std::string& text);
int floor_index(const std::string& name);
int painting_index(const std::string& name);
int object_index(const std::string& name);

}  // namespace walklab::worldsim
