"""
On-disk draw storage.

A store is a directory with ``manifest.json`` and one raw little-endian
float64 file per array (``<name>.f64``).  Per-draw arrays have shape
``(n_chains, n_draws, ...)``; the manifest records every shape plus the
panel coordinates, so stores can be read lazily with :func:`numpy.memmap`.
"""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Mapping

import numpy as np

from ..panel import Dimension, ItemSpec, Panel

FORMAT = "gdplatent-drawstore"
VERSION = 1
DTYPE = np.dtype("<f8")


class StoreError(OSError):
    pass


def panel_coords(panel: Panel) -> dict:
    return {
        "countries": list(panel.countries),
        "years": [int(y) for y in panel.years],
        "start": [int(s) for s in panel.start],
        "end": [int(e) for e in panel.end],
        "items": [{"item_id": it.item_id, "name": it.name, "dimension": it.dimension.value,
                   "intercept_anchor": it.intercept_anchor, "unit_note": it.unit_note,
                   "anchor": it.anchor} for it in panel.items],
    }


class DrawStore:
    """Read access to a draw store."""

    def __init__(self, path):
        self.path = Path(path)
        manifest = self.path / "manifest.json"
        if not manifest.is_file():
            raise StoreError(f"{self.path}: no manifest.json")
        try:
            self.manifest = json.loads(manifest.read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise StoreError(f"{manifest}: {err}") from None
        if self.manifest.get("format") != FORMAT:
            raise StoreError(f"{manifest}: not a {FORMAT} manifest")
        self._cache = {}

    @property
    def n_chains(self) -> int:
        return self.manifest["n_chains"]

    @property
    def n_draws(self) -> int:
        """Retained draws per chain."""
        return self.manifest["n_draws"]

    @property
    def names(self) -> list[str]:
        return sorted(self.manifest["arrays"])

    @property
    def per_draw_names(self) -> list[str]:
        """Arrays with leading (chain, draw) axes."""
        static = set(self.manifest.get("static", ()))
        return [n for n in self.names if n not in static]

    @property
    def countries(self) -> list[str]:
        return self.manifest["countries"]

    @property
    def years(self) -> np.ndarray:
        return np.asarray(self.manifest["years"], dtype=int)

    @property
    def items(self) -> list[ItemSpec]:
        return [ItemSpec(d["item_id"], d["name"], Dimension(d["dimension"]), d["intercept_anchor"],
                         d["unit_note"], d["anchor"]) for d in self.manifest["items"]]

    @property
    def tau_names(self) -> list[str]:
        return self.manifest["tau_names"]

    @property
    def active(self) -> np.ndarray:
        return self.array("active").astype(bool)

    def shape(self, name: str) -> tuple:
        return tuple(self.manifest["arrays"][name])

    def array(self, name: str) -> np.ndarray:
        """Read-only memory map of one array."""
        if name not in self.manifest["arrays"]:
            raise KeyError(f"{self.path}: no array {name!r}")
        if name not in self._cache:
            shape = self.shape(name)
            f = self.path / f"{name}.f64"
            if not f.is_file() or f.stat().st_size != DTYPE.itemsize * int(np.prod(shape)):
                raise StoreError(f"{f}: missing or truncated")
            if int(np.prod(shape)) == 0:
                self._cache[name] = np.zeros(shape)
            else:
                self._cache[name] = np.memmap(f, dtype=DTYPE, mode="r", shape=shape)
        return self._cache[name]

    def draws(self, name: str) -> np.ndarray:
        """Draws pooled over chains, shape (n_chains * n_draws, ...)."""
        a = self.array(name)
        return a.reshape((-1,) + a.shape[2:])

    def coords_match(self, other: "DrawStore") -> bool:
        keys = ("countries", "years", "start", "end")
        ids = lambda s: [d["item_id"] for d in s.manifest["items"]]
        return all(self.manifest[k] == other.manifest[k] for k in keys) and ids(self) == ids(other)


def store_panel(store: DrawStore) -> Panel:
    """The observation panel a store was fitted to, rebuilt from its manifest."""
    observed = np.asarray(store.array("observed"))
    mask = np.isfinite(observed)
    m = store.manifest
    return Panel(tuple(m["countries"]), np.asarray(m["years"], dtype=int), np.asarray(m["start"], dtype=int),
                 np.asarray(m["end"], dtype=int), tuple(store.items), np.where(mask, observed, 0.0), mask)


def create_store(path, coords: Mapping, per_draw: Mapping[str, tuple], static: Mapping[str, np.ndarray],
                 n_chains: int, n_draws: int, extra: Mapping | None = None) -> DrawStore:
    """Allocate a store: zero-filled per-draw arrays plus written static arrays.

    ``per_draw`` maps names to trailing shapes; stored shape is
    ``(n_chains, n_draws) + shape``.
    """
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        for old in path.glob("*.f64"):
            old.unlink()
        arrays = {}
        for name, tail in per_draw.items():
            shape = (n_chains, n_draws) + tuple(tail)
            arrays[name] = list(shape)
            with open(path / f"{name}.f64", "wb") as fh:
                fh.truncate(DTYPE.itemsize * int(np.prod(shape)))
        for name, value in static.items():
            value = np.ascontiguousarray(value, dtype=DTYPE)
            arrays[name] = list(value.shape)
            value.tofile(path / f"{name}.f64")
        manifest = {"format": FORMAT, "version": VERSION, "n_chains": n_chains, "n_draws": n_draws,
                    "arrays": arrays, "static": sorted(static), **coords, **(extra or {})}
        tmp = path / "manifest.json.tmp"
        tmp.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8")
        os.replace(tmp, path / "manifest.json")
    except OSError as err:
        raise StoreError(f"cannot create draw store at {path}: {err}") from err
    return DrawStore(path)


def open_writable(store: DrawStore, name: str) -> np.memmap:
    shape = store.shape(name)
    return np.memmap(store.path / f"{name}.f64", dtype=DTYPE, mode="r+", shape=shape)


def write_store(path, coords: Mapping, arrays: Mapping[str, np.ndarray],
                static: Mapping[str, np.ndarray] | None = None, extra: Mapping | None = None) -> DrawStore:
    """Write fully materialised per-draw arrays (shape (chains, draws, ...))."""
    first = next(iter(arrays.values()))
    n_chains, n_draws = first.shape[:2]
    store = create_store(path, coords, {k: v.shape[2:] for k, v in arrays.items()}, static or {},
                         n_chains, n_draws, extra)
    for name, value in arrays.items():
        if value.size:
            mm = open_writable(store, name)
            mm[...] = value
            mm.flush()
            del mm
    return DrawStore(path)
