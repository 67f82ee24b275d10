#!/usr/bin/env python3
"""Deterministic sample-corpus generator.

Writes the raw tree (data/raw/) that `walklab ingest` converts into the
canonical corpus. Three small worlds (grid, jelly, l) in the documented
raw layout:

    maps/<name>.txt         Node <x> <y> [object]
                            Edge <x1>,<y1> <x2>,<y2> <floor> <painting>
    paragraphs/<name>.json  {"map": ..., "paragraphs": [{"id", "sentences":
                            [{"text", "path": [[x, y, orientation], ...]}]}]}

Instructions are templated but noisy on purpose: spelling mistakes stay,
and a few recorded paths walk through walls, mirroring the messiness of
human-collected navigation data. Regenerating with the same seed is
byte-identical.
"""

import json
import random
from pathlib import Path

SEED = 20240811

FLOORS = ["grass", "brick", "wood", "gravel", "blue", "flower", "yellow-octagon"]
FLOOR_PHRASE = {
    "grass": "grassy",
    "brick": "brick",
    "wood": "wooden",
    "gravel": "gravel",
    "blue": "blue tiled",
    "flower": "flowered",
    "yellow-octagon": "yellow tiled",
}
OBJECTS = ["hatrack", "lamp", "chair", "sofa", "barstool", "easel"]

DX = {0: 0, 90: 1, 180: 0, 270: -1}
DY = {0: 1, 90: 0, 180: -1, 270: 0}


class World:
    def __init__(self, name, nodes, edges):
        # nodes: {(x, y): object-or-None}; edges: {((x,y),(x,y)): (floor, painting)}
        self.name = name
        self.nodes = dict(nodes)
        self.edges = {}
        for (a, b), attrs in edges.items():
            self.edges[frozenset((a, b))] = attrs

    def edge(self, a, b):
        return self.edges.get(frozenset((a, b)))

    def neighbor(self, cell, direction):
        x, y = cell
        nxt = (x + DX[direction], y + DY[direction])
        if nxt in self.nodes and self.edge(cell, nxt) is not None:
            return nxt
        return None

    def missing_wall_hops(self):
        """Coordinate-adjacent node pairs with no hallway between them."""
        hops = []
        for cell in sorted(self.nodes):
            for d in (0, 90, 180, 270):
                x, y = cell
                nxt = (x + DX[d], y + DY[d])
                if nxt in self.nodes and self.edge(cell, nxt) is None:
                    hops.append((cell, nxt, d))
        return hops

    def map_text(self):
        lines = [f"# {self.name} world"]
        for (x, y) in sorted(self.nodes):
            obj = self.nodes[(x, y)]
            lines.append(f"Node {x} {y}" + (f" {obj}" if obj else ""))
        for key in sorted(self.edges, key=lambda k: sorted(k)):
            a, b = sorted(key)
            floor, wall = self.edges[key]
            lines.append(f"Edge {a[0]},{a[1]} {b[0]},{b[1]} {floor} {wall}")
        return "\n".join(lines) + "\n"


def build_grid():
    nodes = {
        (5, 1): None, (5, 2): "chair", (4, 2): None, (3, 2): None, (6, 2): None,
        (3, 1): "easel", (2, 1): None, (1, 1): None, (4, 1): None, (6, 1): None,
        (1, 0): "lamp", (0, 0): None, (2, 0): None,
    }
    edges = {
        ((5, 1), (5, 2)): ("grass", "butterfly"),
        ((5, 2), (4, 2)): ("blue", "fish"),
        ((4, 2), (3, 2)): ("blue", "fish"),
        ((5, 2), (6, 2)): ("blue", "fish"),
        ((3, 2), (3, 1)): ("brick", "eiffel"),
        ((3, 1), (2, 1)): ("wood", "butterfly"),
        ((2, 1), (1, 1)): ("wood", "butterfly"),
        ((3, 1), (4, 1)): ("wood", "butterfly"),
        ((1, 1), (1, 0)): ("gravel", "fish"),
        ((1, 0), (0, 0)): ("flower", "eiffel"),
        ((1, 0), (2, 0)): ("flower", "eiffel"),
        ((5, 1), (4, 1)): ("yellow-octagon", "butterfly"),
        ((5, 1), (6, 1)): ("yellow-octagon", "butterfly"),
    }
    return World("grid", nodes, edges)


def build_jelly():
    nodes = {
        (0, 0): "hatrack", (1, 0): None, (2, 0): None, (2, 1): None,
        (2, 2): "sofa", (1, 2): None, (0, 2): None, (0, 1): None,
        (3, 1): "barstool", (1, 3): None, (3, 2): None,
    }
    edges = {
        ((0, 0), (1, 0)): ("grass", "butterfly"),
        ((1, 0), (2, 0)): ("grass", "butterfly"),
        ((2, 0), (2, 1)): ("brick", "fish"),
        ((2, 1), (2, 2)): ("brick", "fish"),
        ((2, 2), (1, 2)): ("blue", "eiffel"),
        ((1, 2), (0, 2)): ("blue", "eiffel"),
        ((0, 2), (0, 1)): ("wood", "butterfly"),
        ((0, 1), (0, 0)): ("wood", "butterfly"),
        ((2, 1), (3, 1)): ("gravel", "fish"),
        ((1, 2), (1, 3)): ("flower", "eiffel"),
        ((2, 2), (3, 2)): ("gravel", "butterfly"),
    }
    return World("jelly", nodes, edges)


def build_l():
    nodes = {
        (0, 3): "hatrack", (0, 2): None, (0, 1): None, (0, 0): "easel",
        (1, 0): None, (2, 0): None, (3, 0): "chair", (1, 1): "lamp",
    }
    edges = {
        ((0, 3), (0, 2)): ("yellow-octagon", "butterfly"),
        ((0, 2), (0, 1)): ("yellow-octagon", "butterfly"),
        ((0, 1), (0, 0)): ("yellow-octagon", "butterfly"),
        ((0, 0), (1, 0)): ("gravel", "eiffel"),
        ((1, 0), (2, 0)): ("gravel", "eiffel"),
        ((2, 0), (3, 0)): ("gravel", "eiffel"),
        ((1, 0), (1, 1)): ("flower", "fish"),
    }
    return World("l", nodes, edges)


# ---------------------------------------------------------------------------
# Language

NUMBER_WORD = {1: "one", 2: "two", 3: "three", 4: "four"}


def article(noun):
    return "an" if noun[0] in "aeiou" else "a"


def misspell(rng, text):
    swaps = [("intersection", "interesction"), ("contains", "conatains"),
             ("forward", "forwards"), ("segments", "segemnts")]
    for good, bad in swaps:
        if good in text and rng.random() < 0.06:
            text = text.replace(good, bad, 1)
    return text


def turn_text(rng, delta):
    if delta == 180:
        return rng.choice(["turn around.", "turn all the way around."])
    side = "left" if delta == 270 else "right"
    return rng.choice([
        f"turn {side}.",
        f"take a {side}.",
        f"turn to your {side}.",
    ])


def turn_phrase(rng, delta):
    if delta == 180:
        return "turn around"
    side = "left" if delta == 270 else "right"
    return rng.choice([f"turn {side}", f"take a {side}"])


def move_text(rng, world, n, dest, floor_counts):
    seg = f"{NUMBER_WORD[n]} segment" + ("s" if n > 1 else "")
    dest_obj = world.nodes.get(dest)
    choices = [f"go forward {seg}.", f"walk forward {seg}.", f"move {seg} ahead."]
    if dest_obj is not None:
        choices += [
            f"go forward {seg} to the intersection with the {dest_obj}.",
            f"go forward {seg} to the {dest_obj}.",
            f"walk to the {dest_obj}.",
        ]
    if len(floor_counts) == 1:
        floor = FLOOR_PHRASE[next(iter(floor_counts))]
        choices += [
            f"follow the {floor} hall {seg}.",
            f"go down the {floor} hall {seg}.",
        ]
    return rng.choice(choices)


def describe_text(rng, world, cell, facing):
    obj = world.nodes.get(cell)
    if obj is not None and rng.random() < 0.7:
        return rng.choice([
            f"this intersection contains {article(obj)} {obj}.",
            f"there is {article(obj)} {obj} here.",
        ])
    ahead = world.neighbor(cell, facing)
    if ahead is not None:
        floor = FLOOR_PHRASE[world.edge(cell, ahead)[0]]
        return f"the hall in front of you is {floor}."
    return rng.choice(["stop.", "stay where you are.", "you are done."])


# ---------------------------------------------------------------------------
# Paragraph assembly

def move_unit(rng, world, pose):
    x, y, o = pose
    options = [d for d in (0, 90, 180, 270) if world.neighbor((x, y), d) is not None]
    if not options:
        return None
    weights = []
    for d in options:
        delta = (d - o) % 360
        weights.append(4 if delta == 0 else (2 if delta in (90, 270) else 1))
    d = rng.choices(options, weights=weights, k=1)[0]

    path = [[x, y, o]]
    floors = set()
    cur = (x, y)
    want = rng.choice([1, 1, 2, 2, 3])
    n = 0
    while n < want:
        nxt = world.neighbor(cur, d)
        if nxt is None:
            break
        floors.add(world.edge(cur, nxt)[0])
        cur = nxt
        path.append([cur[0], cur[1], d])
        n += 1
    if n == 0:
        return None

    delta = (d - o) % 360
    text = move_text(rng, world, n, cur, floors)
    if delta != 0:
        text = f"{turn_phrase(rng, delta)} , then {text}"
    return {"text": misspell(rng, text), "path": path}, (cur[0], cur[1], d)


def turn_unit(rng, pose):
    x, y, o = pose
    delta = rng.choice([90, 270, 270, 90, 180])
    new_o = (o + delta) % 360
    return {"text": turn_text(rng, delta), "path": [[x, y, o], [x, y, new_o]]}, (x, y, new_o)


def describe_unit(rng, world, pose):
    x, y, o = pose
    return {"text": misspell(rng, describe_text(rng, world, (x, y), o))}, pose


def make_paragraph(rng, world, pid, corrupt=False):
    sentences = []
    if corrupt:
        # A recorded path that cuts through a wall; the converter keeps the
        # item and flags the replay failure.
        a, b, d = rng.choice(world.missing_wall_hops())
        o = rng.choice([0, 90, 180, 270])
        sentences.append({
            "text": misspell(rng, "go forward one segment."),
            "path": [[a[0], a[1], o], [b[0], b[1], d]],
        })
        pose = (b[0], b[1], d)
    else:
        start_cell = rng.choice(sorted(world.nodes))
        pose = (start_cell[0], start_cell[1], rng.choice([0, 90, 180, 270]))

    n_units = rng.choice([1, 2, 2, 3, 3, 4])
    while len(sentences) < n_units:
        roll = rng.random()
        if roll < 0.55:
            made = move_unit(rng, world, pose)
            if made is None:
                made = turn_unit(rng, pose)
        elif roll < 0.8:
            made = turn_unit(rng, pose)
        else:
            made = describe_unit(rng, world, pose)
        sent, pose = made
        if "path" not in sent:
            sent["path"] = [[pose[0], pose[1], pose[2]]]
        sentences.append(sent)

    return {"id": pid, "sentences": sentences}


FIG_WALK = {
    "id": "walkthrough",
    "sentences": [
        {"text": 'Place your back against the wall of the "T" intersection.',
         "path": [[5, 1, 0]]},
        {"text": "Go forward one segment to the intersection with the blue-tiled hall.",
         "path": [[5, 1, 0], [5, 2, 0]]},
        {"text": "This interesction contains a chair.",
         "path": [[5, 2, 0]]},
        {"text": "Turn left.",
         "path": [[5, 2, 0], [5, 2, 270]]},
        {"text": "Go forward to the end of the hall.",
         "path": [[5, 2, 270], [4, 2, 270], [3, 2, 270]]},
        {"text": "Turn left.",
         "path": [[3, 2, 270], [3, 2, 180]]},
        {"text": "Go forward one segment to the intersection with the wooden-floored hall.",
         "path": [[3, 2, 180], [3, 1, 180]]},
        {"text": "This intersection conatains an easel.",
         "path": [[3, 1, 180]]},
        {"text": "Turn right.",
         "path": [[3, 1, 180], [3, 1, 270]]},
        {"text": "Go forward two segments to the end of the hall.",
         "path": [[3, 1, 270], [2, 1, 270], [1, 1, 270]]},
        {"text": "Turn left.",
         "path": [[1, 1, 270], [1, 1, 180]]},
        {"text": "Go forward one segment to the intersection containing the lamp.",
         "path": [[1, 1, 180], [1, 0, 180]]},
        {"text": "Turn right.",
         "path": [[1, 0, 180], [1, 0, 270]]},
        {"text": "Go forward one segment to the empty corner.",
         "path": [[1, 0, 270], [0, 0, 270]]},
    ],
}


def main():
    rng = random.Random(SEED)
    out_root = Path(__file__).resolve().parent.parent / "data" / "raw"
    (out_root / "maps").mkdir(parents=True, exist_ok=True)
    (out_root / "paragraphs").mkdir(parents=True, exist_ok=True)

    worlds = [build_grid(), build_jelly(), build_l()]
    per_map = 30
    for world in worlds:
        (out_root / "maps" / f"{world.name}.txt").write_text(world.map_text())
        paragraphs = []
        if world.name == "grid":
            paragraphs.append(FIG_WALK)
        while len(paragraphs) < per_map:
            pid = f"{world.name}_p{len(paragraphs):02d}"
            corrupt = rng.random() < 0.1 and bool(world.missing_wall_hops())
            paragraphs.append(make_paragraph(rng, world, pid, corrupt))
        doc = {"map": world.name, "paragraphs": paragraphs}
        (out_root / "paragraphs" / f"{world.name}.json").write_text(
            json.dumps(doc, indent=1) + "\n")
    print(f"wrote raw corpus under {out_root}")


if __name__ == "__main__":
    main()
