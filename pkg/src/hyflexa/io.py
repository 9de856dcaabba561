"""LASSO instance files.

An instance directory holds

``A.mtx``
    Matrix Market coordinate file (1-based indices, 17 significant digits).
``b.txt``, ``xstar.txt``
    One value per line, ``%.17g``.  ``xstar.txt`` only exists when the
    optimum is known.
``meta.txt``
    ``key=value`` lines: ``m``, ``n``, ``c``, ``V_star`` and, for generated
    instances, ``seed``, ``s_A``, ``s_sol``.

Writing the same instance twice gives byte-identical files, and ``%.17g``
round-trips every double exactly.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .exceptions import ConfigError
from .lasso import LassoProblem

__all__ = ["save_instance", "load_instance", "read_vector", "write_vector", "read_meta", "write_meta"]

_META_ORDER = ("m", "n", "c", "V_star", "seed", "s_A", "s_sol")


def write_vector(path, v) -> None:
    with open(path, "w") as fh:
        for val in np.asarray(v, dtype=float).ravel():
            fh.write(f"{val:.17g}\n")


def read_vector(path) -> np.ndarray:
    return np.loadtxt(path, dtype=float, ndmin=1)


def write_meta(path, meta: dict) -> None:
    keys = [k for k in _META_ORDER if k in meta] + sorted(k for k in meta if k not in _META_ORDER)
    with open(path, "w") as fh:
        for k in keys:
            v = meta[k]
            fh.write(f"{k}={v:.17g}\n" if isinstance(v, float) else f"{k}={v}\n")


def read_meta(path) -> dict:
    meta = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            meta[key.strip()] = _parse_scalar(val.strip())
    return meta


def _parse_scalar(s: str):
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def save_instance(problem: LassoProblem, out_dir) -> Path:
    """Write ``problem`` into ``out_dir`` (created if missing)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(str(out / "A.mtx"), problem.A, precision=17)
    write_vector(out / "b.txt", problem.b)
    meta = {"m": problem.m, "n": problem.n, "c": problem.c}
    if problem.known_optimum is not None:
        xstar, vstar = problem.known_optimum
        write_vector(out / "xstar.txt", xstar)
        meta["V_star"] = float(vstar)
    elif (out / "xstar.txt").exists():
        os.remove(out / "xstar.txt")
    for k in ("seed", "s_A", "s_sol"):
        if k in problem.metadata:
            meta[k] = problem.metadata[k]
    write_meta(out / "meta.txt", meta)
    return out


def load_instance(in_dir) -> LassoProblem:
    """Read an instance directory written by :func:`save_instance`."""
    src = Path(in_dir)
    for name in ("A.mtx", "b.txt", "meta.txt"):
        if not (src / name).is_file():
            raise FileNotFoundError(f"instance file {src / name} not found")
    A = sp.csc_matrix(scipy.io.mmread(str(src / "A.mtx")))
    b = read_vector(src / "b.txt")
    meta = read_meta(src / "meta.txt")
    if "c" not in meta:
        raise ConfigError(f"{src / 'meta.txt'} has no c entry")
    optimum = None
    if (src / "xstar.txt").is_file():
        xstar = read_vector(src / "xstar.txt")
        if xstar.shape != (A.shape[1],):
            raise ConfigError(f"xstar.txt has {xstar.size} entries, expected {A.shape[1]}")
        optimum = xstar
    extra = {k: v for k, v in meta.items() if k not in ("m", "n", "c", "V_star")}
    prob = LassoProblem(A, b, float(meta["c"]), None, extra)
    if optimum is not None:
        vstar = float(meta["V_star"]) if "V_star" in meta else prob.objective(optimum)
        prob.known_optimum = (optimum, vstar)
    return prob
