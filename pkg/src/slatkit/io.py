"""File formats: scenario JSON, range CSV, refinement trace CSV."""
from __future__ import annotations

import csv
import json

import numpy as np

from .model import ObservationMask, RangeData, Scenario


def save_scenario(s: Scenario, path) -> None:
    data = {"anchors": s.anchors.tolist(), "sensors": s.sensors.tolist(), "targets": s.targets.tolist()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=1)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        return Scenario(np.array(data["anchors"], float).reshape(-1, 2),
                        np.array(data.get("sensors", []), float).reshape(-1, 2),
                        np.array(data.get("targets", []), float).reshape(-1, 2))
    except KeyError as exc:
        raise ValueError(f"scenario file lacks {exc}") from exc


def save_ranges(r: RangeData, path) -> None:
    """CSV ``kind,i,j,d``; ``st`` rows are sensor-target, ``at`` rows anchor-target."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "i", "j", "d"])
        for (i, j), d in zip(r.mask.sensor_target, r.st):
            w.writerow(["st", i, j, f"{d:.9f}"])
        for (k, j), d in zip(r.mask.anchor_target, r.at):
            w.writerow(["at", k, j, f"{d:.9f}"])


def load_ranges(path, n: int = -1, m: int = -1, l: int = -1) -> RangeData:
    st, at = {}, {}
    with open(path, encoding="utf-8", newline="") as fh:
        rows = csv.DictReader(fh)
        if rows.fieldnames != ["kind", "i", "j", "d"]:
            raise ValueError("range file must have header kind,i,j,d")
        for row in rows:
            key = (int(row["i"]), int(row["j"]))
            if row["kind"] == "st":
                st[key] = float(row["d"])
            elif row["kind"] == "at":
                at[key] = float(row["d"])
            else:
                raise ValueError(f"unknown range kind {row['kind']!r}")
    mask = ObservationMask(st, at)
    return RangeData(mask, [st[p] for p in mask.sensor_target], [at[p] for p in mask.anchor_target],
                     n=n, m=m, l=l)


def save_trace(costs, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "cost"])
        for it, c in enumerate(costs):
            w.writerow([it, repr(float(c))])


def load_trace(path) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [float(r["cost"]) for r in rows]
