"""Generate the shipped benchmark scenario suites.

Two families:

* ``scenarios/perfect20/``: 20 solvable episodes used with the perfect
  oracle; the generator verifies each one succeeds with an Initial+Active
  confirmation on the same memory entry and redraws the layout otherwise.
* ``scenarios/suite50/``: 50 episodes for the ablation comparison with the
  quality-dependent oracle: a true target next to its landmark, usually with
  a look-alike decoy placed nearer to the start, so single-stage grounding
  commits to the wrong object while active re-checking and memory replay
  recover.

Scenario drawing is seeded; regeneration is deterministic.
"""

import math
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from magnav.bench import build_spec, run_episode

ROOT = Path(__file__).resolve().parent.parent / "scenarios"


def render_rows(width, height, walls):
    rows = [["."] * width for _ in range(height)]
    for x in range(width):
        rows[0][x] = "#"
        rows[height - 1][x] = "#"
    for y in range(height):
        rows[y][0] = "#"
        rows[y][width - 1] = "#"
    for (x, y) in walls:
        rows[y][x] = "#"
    return ["".join(r) for r in rows]


def partition_walls(rng, width, height):
    """One or two straight partitions with 3-cell doorways."""
    walls = set()
    for _ in range(rng.randint(1, 2)):
        if rng.random() < 0.5:
            y = rng.randrange(height // 3, 2 * height // 3)
            door = rng.randrange(3, width - 6)
            for x in range(1, width - 1):
                if abs(x - door) > 1:
                    walls.add((x, y))
        else:
            x = rng.randrange(width // 3, 2 * width // 3)
            door = rng.randrange(3, height - 6)
            for y in range(1, height - 1):
                if abs(y - door) > 1:
                    walls.add((x, y))
    return walls


def blocked(cells, regions):
    return any(c in region for c in cells for region in regions)


def rect_cells(x, y, w, h):
    return {(x + dx, y + dy) for dx in range(w) for dy in range(h)}


def grown(cells, margin=2):
    return {(x + dx, y + dy) for (x, y) in cells
            for dx in range(-margin, margin + 1)
            for dy in range(-margin, margin + 1)}


def place_rect(rng, width, height, w, h, walls, keepout, tries=200):
    for _ in range(tries):
        x = rng.randrange(2, width - w - 2)
        y = rng.randrange(2, height - h - 2)
        cells = rect_cells(x, y, w, h)
        if not (cells & walls) and not (cells & keepout):
            return x, y, cells
    return None


def draw_scenario(rng, name, n_decoys, seed):
    width = rng.randrange(22, 28)
    height = rng.randrange(14, 18)
    walls = partition_walls(rng, width, height)

    keepout = set(grown(walls, 1))
    placed = place_rect(rng, width, height, 2, 2, walls, keepout)
    if placed is None:
        return None
    tx, ty, target_cells = placed
    keepout |= grown(target_cells, 3)

    # landmark stool flush against the true target so it shares observations;
    # two cells long so some corner of it is visible from most approaches
    stool_spots = [(tx - 1, ty, 1, 2), (tx + 2, ty, 1, 2),
                   (tx, ty - 1, 2, 1), (tx, ty + 2, 2, 1)]
    rng.shuffle(stool_spots)
    stool = None
    for (sx, sy, sw, sh) in stool_spots:
        cells = rect_cells(sx, sy, sw, sh)
        if (all(1 <= x < width - 1 and 1 <= y < height - 1 for (x, y) in cells)
                and not (cells & walls)):
            stool = (sx, sy, sw, sh, cells)
            break
    if stool is None:
        return None
    sx, sy, sw, sh, stool_cells = stool
    keepout |= grown(stool_cells, 2)

    decoys = []
    for _ in range(n_decoys):
        decoy = place_rect(rng, width, height, 2, 2, walls, keepout)
        if decoy is None:
            return None
        decoys.append(decoy)
        keepout |= grown(decoy[2], 3)

    # context clutter (different class, no effect on annotation)
    chair = place_rect(rng, width, height, 1, 1, walls, keepout)

    occupied = set(walls) | target_cells | stool_cells
    for decoy in decoys:
        occupied |= decoy[2]
    if chair:
        occupied |= chair[2]
    free = [(x, y) for y in range(1, height - 1) for x in range(1, width - 1)
            if (x, y) not in occupied]
    if decoys:
        # start nearer the first decoy than the true target, so a decoy is
        # typically sighted first
        dx_, dy_ = decoys[0][0], decoys[0][1]
        free.sort(key=lambda c: (math.hypot(c[0] - dx_, c[1] - dy_)
                                 - 0.5 * math.hypot(c[0] - tx, c[1] - ty)))
        candidates = free[:40]
    else:
        candidates = free
    start = candidates[rng.randrange(len(candidates))]

    objects = [
        {"id": "bag_true", "class": "bag", "attributes": ["black"],
         "rect": [tx, ty, 2, 2]},
        {"id": "stool_lm", "class": "stool", "attributes": ["red"],
         "rect": [sx, sy, sw, sh]},
    ]
    for i, decoy in enumerate(decoys):
        objects.append({"id": f"bag_decoy{i}", "class": "bag",
                        "attributes": ["black"],
                        "rect": [decoy[0], decoy[1], 2, 2]})
    if chair:
        objects.append({"id": "chair_ctx", "class": "chair",
                        "attributes": ["wooden"],
                        "rect": [chair[0], chair[1], 1, 1]})

    doc = {
        "name": name,
        "seed": seed,
        "grid": {"resolution": 0.25, "rows": render_rows(width, height, walls)},
        "objects": objects,
        "instruction": "Please find my black bag near the red stool",
        "start": {"x": start[0], "y": start[1],
                  "heading": rng.choice([0.0, math.pi / 2, math.pi,
                                         3 * math.pi / 2]),
                  "fov": math.pi / 2, "sense_range": 2.5},
        "truth_target_id": "bag_true",
        "config": {
            "delta_sim": 0.65,
            "viewplan": {"d_desired": 1.0},
            "oracle": {"kind": "perfect"},
        },
    }
    return doc


def doc_to_yaml(doc):
    lines = [f"name: {doc['name']}", f"seed: {doc['seed']}", "grid:",
             f"  resolution: {doc['grid']['resolution']}", "  rows: |"]
    lines += [f"    {row}" for row in doc["grid"]["rows"]]
    lines.append("objects:")
    for obj in doc["objects"]:
        lines.append(f"  - id: {obj['id']}")
        lines.append(f"    class: {obj['class']}")
        lines.append(f"    attributes: [{', '.join(obj['attributes'])}]")
        lines.append(f"    rect: [{', '.join(str(v) for v in obj['rect'])}]")
    lines.append(f"instruction: \"{doc['instruction']}\"")
    s = doc["start"]
    lines.append(f"start: {{x: {s['x']}, y: {s['y']}, heading: {s['heading']}, "
                 f"fov: {s['fov']}, sense_range: {s['sense_range']}}}")
    lines.append(f"truth_target_id: {doc['truth_target_id']}")
    cfg = doc["config"]
    lines.append("config:")
    lines.append(f"  delta_sim: {cfg['delta_sim']}")
    lines.append(f"  viewplan: {{d_desired: {cfg['viewplan']['d_desired']}}}")
    lines.append(f"  oracle: {{kind: {cfg['oracle']['kind']}}}")
    return "\n".join(lines) + "\n"


def verified_perfect(doc):
    """A perfect-oracle run must succeed via Initial+Active on one entry."""
    spec = build_spec(doc, name=doc["name"])
    r = run_episode(spec)
    if not r.success:
        return False
    goal = r.trace["goal"]
    if goal is None or goal["phase"] != "Active":
        return False
    phases = [q["phase"] for q in r.trace["queries"] if q["result"]["success"]]
    return "Initial" in phases and "Active" in phases


def solvable(doc):
    spec = build_spec(doc, name=doc["name"])
    r = run_episode(spec)
    return r.success


def main():
    rng = random.Random(1108)

    perfect_dir = ROOT / "perfect20"
    perfect_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    while count < 20:
        name = f"p{count:02d}"
        doc = draw_scenario(rng, name, n_decoys=1 if count % 3 == 0 else 0,
                            seed=1000 + count)
        if doc is None or not verified_perfect(doc):
            continue
        (perfect_dir / f"{name}.yaml").write_text(doc_to_yaml(doc))
        count += 1
    print(f"wrote 20 perfect-oracle scenarios to {perfect_dir}")

    suite_dir = ROOT / "suite50"
    suite_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    while count < 50:
        name = f"s{count:02d}"
        # 70% of episodes contain look-alike decoys, most of them two
        n_decoys = 2 if count % 10 < 5 else (1 if count % 10 < 7 else 0)
        doc = draw_scenario(rng, name, n_decoys=n_decoys, seed=2000 + count)
        if doc is None:
            continue
        doc["config"]["oracle"] = {"kind": "quality"}
        # solvability check runs with a perfect oracle
        check = {**doc, "config": {**doc["config"], "oracle": {"kind": "perfect"}}}
        if not solvable(check):
            continue
        (suite_dir / f"{name}.yaml").write_text(doc_to_yaml(doc))
        count += 1
    print(f"wrote 50 quality-oracle scenarios to {suite_dir}")


if __name__ == "__main__":
    main()
