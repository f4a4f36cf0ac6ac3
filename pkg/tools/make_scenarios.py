"""Regenerate the scenario JSON files (hand-tuned geometry, arcs sampled)."""

import json
import math
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "scenarios"

PI = math.pi
LANE = 3.5


def rect(x0, y0, x1, y1):
    return [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]


def left_turn_route(approach_x=1.75, arc_start_y=-6.0, radius=7.75, exit_x=-58.0, start_y=-45.0):
    # exit lane center sits at arc_start_y + radius
    """North on x=approach_x, quarter arc left, then west on y=radius+arc_start_y."""
    cx, cy = approach_x - radius, arc_start_y
    pts = [[approach_x, start_y], [approach_x, arc_start_y]]
    for deg in range(5, 90, 5):
        a = math.radians(deg)
        pts.append([cx + radius * math.cos(a), cy + radius * math.sin(a)])
    exit_y = cy + radius
    pts.append([cx, exit_y])
    pts.append([exit_x, exit_y])
    return pts


def right_turn_path(start_x, lane_y=-1.75, radius=6.0, exit_y=-50.0, exit_x=-1.75):
    """East on y=lane_y, quarter arc right onto the southbound lane."""
    turn_x = exit_x - radius
    cx, cy = turn_x, lane_y - radius
    pts = [[start_x, lane_y], [turn_x, lane_y]]
    for deg in range(5, 91, 5):
        phi = math.radians(deg)
        pts.append([cx + radius * math.sin(phi), cy + radius * math.cos(phi)])
    pts.append([exit_x, exit_y])
    return pts


def cross_road_infra(extent=60.0, half=LANE, strip=0.3, block_gap=1.0, block_reach=45.0):
    """Edge strips of the two crossing roads plus solid corner blocks.

    The thin strips mark the road edges; the wide corner blocks (sidewalk
    plus frontage) make cutting a corner expensive at any sampling speed.
    """
    e = extent
    h = half
    s = strip
    b = h + block_gap
    r = block_reach
    items = [
        ("south_w", rect(-h - s, -e, -h, -h)),
        ("south_e", rect(h, -e, h + s, -h)),
        ("north_w", rect(-h - s, h, -h, e)),
        ("north_e", rect(h, h, h + s, e)),
        ("west_s", rect(-e, -h - s, -h, -h)),
        ("west_n", rect(-e, h, -h, h + s)),
        ("east_s", rect(h, -h - s, e, -h)),
        ("east_n", rect(h, h, e, h + s)),
        ("center_s", rect(-0.15, -e, 0.15, -h - 5.0)),
        ("center_n", rect(-0.15, h + 5.0, 0.15, e)),
        ("center_w", rect(-e, -0.15, -h - 5.0, 0.15)),
        ("center_e", rect(h + 5.0, -0.15, e, 0.15)),
        ("corner_sw", rect(-r, -r, -b, -b)),
        ("corner_nw", rect(-r, b, -b, r)),
        ("corner_ne", rect(b, b, r, r)),
        ("corner_se", rect(b, -r, r, -b)),
    ]
    return [{"id": i, "vertices": v} for i, v in items]


def scenario_1():
    return {
        "name": "s1_hidden_vehicle",
        "description": (
            "Four-way intersection; the ego approaches from the south for a left "
            "turn while buildings occlude the corridor on its right, from which a "
            "vehicle approaches the crossing."
        ),
        "window": {"x_min": -60.0, "x_max": 60.0, "y_min": -60.0, "y_max": 60.0},
        "timing": {"duration": 16.0},
        "planner": {"bounds": {"delta": [-0.61, 0.61]}},
        "ego": {
            "start": {"x": 1.75, "y": -40.0, "theta": PI / 2},
            "route": left_turn_route(),
        },
        "map": {
            "buildings": [
                {"id": "block_se", "vertices": rect(4.5, -35.0, 45.0, -4.5)},
                {"id": "block_ne", "vertices": rect(4.5, 4.5, 45.0, 35.0)},
            ],
            "infrastructure": cross_road_infra(),
        },
        "hidden_classes": [
            {"id": 0, "name": "vehicle", "v_max": 4.44, "element": "semicircle"}
        ],
        # a hidden vehicle on the occluded east approach may continue west,
        # turn left across the intersection box onto the southbound road, or
        # right onto the northbound one; each route is its own area whose
        # segments follow the driving direction
        "areas": [
            {"id": 0, "class": 0, "segments": [
                {"vertices": rect(-58.0, 0.0, 58.0, LANE), "heading": PI}]},
            {"id": 1, "class": 0, "segments": [
                {"vertices": rect(0.0, 0.0, 58.0, LANE), "heading": PI},
                {"vertices": rect(-LANE, -LANE, LANE, LANE), "heading": -PI / 2},
                {"vertices": rect(-LANE, -58.0, 0.0, -LANE), "heading": -PI / 2}]},
            {"id": 2, "class": 0, "segments": [
                {"vertices": rect(0.0, 0.0, 58.0, LANE), "heading": PI},
                {"vertices": rect(0.0, 0.0, LANE, 58.0), "heading": PI / 2}]},
            {"id": 3, "class": 0, "segments": [
                {"vertices": rect(-LANE, -58.0, 0.0, 58.0), "heading": -PI / 2}]},
            {"id": 4, "class": 0, "segments": [
                {"vertices": rect(-58.0, -LANE, 58.0, 0.0), "heading": 0.0}]},
        ],
        "agents": [
            {"id": "oncoming", "class": "vehicle",
             "path": [[-1.75, 20.0], [-1.75, -55.0]], "speed": 4.2},
            {"id": "east_slow", "class": "vehicle",
             "path": [[-50.0, -1.75], [57.0, -1.75]], "speed": 2.2},
            {"id": "hidden_car", "class": "vehicle",
             "path": [[44.0, 1.75], [-57.0, 1.75]], "speed": 4.2},
        ],
    }


def scenario_2():
    cars_y = -4.4  # parked row abuts the road edge
    # hidden pedestrians spawn in the bay between the two parked cars and
    # may step out across the near half of the road
    walk = rect(1.75, -6.6, 6.75, 0.0)
    return {
        "name": "s2_hidden_pedestrian",
        "description": (
            "Straight road along a strip of parked cars; a pedestrian crosses "
            "through the gap between two of them, initially hidden from view."
        ),
        "window": {"x_min": -52.0, "x_max": 62.0, "y_min": -16.0, "y_max": 16.0},
        "timing": {"duration": 16.0},
        "planner": {"bounds": {"delta": [-0.61, 0.61]}},
        "ego": {
            "start": {"x": -38.0, "y": -1.75, "theta": 0.0},
            "route": [[-45.0, -1.75], [58.0, -1.75]],
        },
        "map": {
            "buildings": [],
            "infrastructure": [
                {"id": "south_edge", "vertices": rect(-50.0, -3.8, 60.0, -3.5)},
                {"id": "north_edge", "vertices": rect(-50.0, 3.5, 60.0, 3.8)},
                {"id": "center_line", "vertices": rect(-50.0, -0.15, 60.0, 0.15),
                 "amplitude": 1000.0, "sigma": 0.5},
                {"id": "verge_west", "vertices": rect(-50.0, -9.0, -8.0, -4.3)},
                {"id": "sidewalk_mid", "vertices": rect(-8.0, -9.0, 21.0, -6.6)},
                {"id": "verge_east", "vertices": rect(21.0, -9.0, 60.0, -4.3)},
                {"id": "north_sidewalk", "vertices": rect(-50.0, 3.8, 60.0, 6.5)},
            ],
        },
        "hidden_classes": [
            {"id": 0, "name": "vehicle", "v_max": 4.44, "element": "semicircle"},
            {"id": 1, "name": "pedestrian", "v_max": 0.84, "element": "disk"},
        ],
        "areas": [
            {"id": 0, "class": 0, "segments": [
                {"vertices": rect(-50.0, -LANE, 60.0, 0.0), "heading": 0.0}]},
            {"id": 1, "class": 0, "segments": [
                {"vertices": rect(-50.0, 0.0, 60.0, LANE), "heading": PI}]},
            {"id": 2, "class": 1, "segments": [{"vertices": walk, "heading": None}]},
        ],
        "agents": [
            {"id": "parked_a", "class": "vehicle", "path": [[-5.0, cars_y], [30.0, cars_y]], "speed": 0.0},
            {"id": "parked_b", "class": "vehicle", "path": [[-0.5, cars_y], [30.0, cars_y]], "speed": 0.0},
            {"id": "parked_c", "class": "vehicle", "path": [[9.0, cars_y], [30.0, cars_y]], "speed": 0.0},
            {"id": "parked_d", "class": "vehicle", "path": [[13.5, cars_y], [30.0, cars_y]], "speed": 0.0},
            {"id": "parked_e", "class": "vehicle", "path": [[18.0, cars_y], [30.0, cars_y]], "speed": 0.0},
            {"id": "pedestrian", "class": "pedestrian",
             "path": [[4.25, -6.0], [4.25, 8.0]], "speed": 0.84, "start_delay": 5.2},
            {"id": "oncoming", "class": "vehicle",
             "path": [[41.0, 1.75], [-48.0, 1.75]], "speed": 4.44},
        ],
    }


def scenario_3():
    L3 = 4.0  # wider lanes: the turning truck needs the swing room
    return {
        "name": "s3_hidden_motorcycle",
        "description": (
            "Open intersection; a truck from the left turns right while a "
            "motorcycle behind it continues straight, occluded by the truck."
        ),
        "window": {"x_min": -60.0, "x_max": 60.0, "y_min": -60.0, "y_max": 60.0},
        "timing": {"duration": 16.0},
        "planner": {"bounds": {"delta": [-0.61, 0.61]}},
        "ego": {
            "start": {"x": 2.0, "y": -40.0, "theta": PI / 2},
            "route": left_turn_route(approach_x=2.0, radius=8.0),
        },
        "map": {
            "buildings": [
                {"id": "block_sw", "vertices": rect(-45.0, -35.0, -5.0, -5.0)},
            ],
            "infrastructure": cross_road_infra(half=L3, block_gap=1.0),
        },
        "hidden_classes": [
            {"id": 0, "name": "vehicle", "v_max": 4.5, "element": "semicircle"}
        ],
        # hidden vehicles on the west approach may continue east, turn left
        # across the intersection box onto the northbound road, or right onto
        # the southbound one
        "areas": [
            {"id": 0, "class": 0, "segments": [
                {"vertices": rect(-58.0, -L3, 58.0, 0.0), "heading": 0.0}]},
            {"id": 1, "class": 0, "segments": [
                {"vertices": rect(-58.0, -L3, 0.0, 0.0), "heading": 0.0},
                {"vertices": rect(-L3, -L3, L3, L3), "heading": PI / 2},
                {"vertices": rect(0.0, L3, L3, 58.0), "heading": PI / 2}]},
            {"id": 2, "class": 0, "segments": [
                {"vertices": rect(-58.0, -L3, 0.0, 0.0), "heading": 0.0},
                {"vertices": rect(-L3, -58.0, 0.0, 0.0), "heading": -PI / 2}]},
            {"id": 3, "class": 0, "segments": [
                {"vertices": rect(-58.0, 0.0, 58.0, L3), "heading": PI}]},
        ],
        "agents": [
            {"id": "truck", "class": "truck", "footprint": {"length": 7.0, "width": 2.5},
             "path": right_turn_path(-28.0, lane_y=-2.0, radius=7.0, exit_x=-2.0), "speed": 2.5},
            {"id": "motorcycle", "class": "motorcycle",
             "path": [[-38.0, -2.0], [55.0, -2.0]], "speed": 4.5, "start_delay": 1.0},
        ],
    }


def main():
    OUT.mkdir(exist_ok=True)
    for name, data in (("s1", scenario_1()), ("s2", scenario_2()), ("s3", scenario_3())):
        path = OUT / f"{name}.json"
        path.write_text(json.dumps(data, indent=2) + "\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
