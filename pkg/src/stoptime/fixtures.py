"""Fixture files, tensor-chain filtrations and seeded random stopping times.

A fixture is a JSON document::

    {
      "schema_version": 1,
      "name": "F1",
      "grid": [0, 1, 2],
      "algebra": {"tensor_chain": [2, 2], "levels": [0, 1, 2]},
      "state": {"product_diagonals": [["2/3", "1/3"], ["2/3", "1/3"]]},
      "stopping_time": {"q": ["zero", {"kron": [[[1, 0], [0, 0]], {"identity": 2}]}, "identity"]},
      "tolerance": {"eq_tol": 1e-9, "rank_tol": 1e-8}
    }

``algebra`` is either a tensor chain (``levels[i]`` = number of leading
factors present at grid point ``i``) or ``{"dim": n, "generators": [...]}``
with one generator list per grid point. ``state`` is one of
``product_diagonals``, ``product`` (per-factor density matrices) or ``rho``.
``stopping_time`` is ``q`` (one matrix per grid point), ``random_adapted``
(``{"seed": k}``) or ``deterministic`` (a grid label).

Matrices are row lists; an entry is a number, a fraction string such as
``"2/3"``, or an ``[re, im]`` pair. The strings ``"zero"`` and
``"identity"`` and the objects ``{"identity": d}``, ``{"zero": d}``,
``{"unit": [i, j, d]}`` and ``{"kron": [...]}`` are accepted wherever a
matrix is expected.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .algebra import MatrixAlgebra, generate_subalgebra
from .errors import ParseError, StopTimeError, ValidationError
from .filtration import Filtration, TimeGrid
from .gns import FaithfulState, build_gns
from .kernel import DEFAULT_TOL, Tolerance, dagger
from .stopping import StoppingTime, deterministic_stopping_time

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# tensor chains


def _embed_factor(mat, dims, j):
    out = np.ones((1, 1), dtype=complex)
    for k, d in enumerate(dims):
        out = np.kron(out, mat if k == j else np.eye(d))
    return out


def factor_generators(dims, j):
    """Shift matrix units of factor ``j``; together they generate ``M_{d_j}``."""
    d = dims[j]
    gens = []
    for a in range(d - 1):
        e = np.zeros((d, d), dtype=complex)
        e[a, a + 1] = 1.0
        gens.append(_embed_factor(e, dims, j))
    return gens


def tensor_chain_algebras(dims, tol: Tolerance = DEFAULT_TOL) -> list:
    """``[C1, M_{d1} (x) 1, M_{d1} (x) M_{d2} (x) 1, ...]`` inside ``M_n``."""
    dims = [int(d) for d in dims]
    n = int(np.prod(dims))
    out = [generate_subalgebra(n, [], tol)]
    gens = []
    for j in range(len(dims)):
        gens = gens + factor_generators(dims, j)
        out.append(generate_subalgebra(n, gens, tol))
    return out


# ---------------------------------------------------------------------------
# random stopping times


def random_adapted_stopping_time(
    F: Filtration, seed: int, stay_probability: float = 0.2
) -> StoppingTime:
    """Seeded random stopping time adapted to ``F``.

    At each interior grid point a random Hermitian element of ``A_t`` is
    shifted to be >= 1, compressed to the range of ``1 - q`` and cut at the
    midpoint of its spectrum there; the upper spectral projection is the
    increment. With probability ``stay_probability`` the step is skipped.
    """
    rng = np.random.default_rng(seed)
    n = F.gns.algebra.ambient_dim
    eye = np.eye(n, dtype=complex)
    q = np.zeros((n, n), dtype=complex)
    qs = [q]
    for alg in F.algebras[1:-1]:
        h = alg.random_element(rng, hermitian=True)
        skip = rng.random() < stay_probability
        if not skip:
            lo = np.linalg.eigvalsh(h)[0]
            comp = eye - q
            h = comp @ (h + (1.0 - lo) * eye) @ comp
            w, v = np.linalg.eigh(0.5 * (h + dagger(h)))
            live = w > 0.5
            if np.any(live) and w[live].max() - w[live].min() > 1e-6:
                mid = 0.5 * (w[live].max() + w[live].min())
                cols = v[:, w > mid]
                r = cols @ dagger(cols)
                q = q + r
                q = 0.5 * (q + dagger(q))
        qs.append(q)
    qs.append(eye)
    return StoppingTime(F, tuple(qs))


# ---------------------------------------------------------------------------
# fixture objects


@dataclass(eq=False)
class Fixture:
    name: str
    config: dict
    filtration: Filtration
    tau: StoppingTime
    seed: int | None = None
    fingerprint: str = field(default="")

    def __post_init__(self):
        if not self.fingerprint:
            self.fingerprint = fingerprint(self.config, self.seed)


def fingerprint(config: dict, seed=None) -> str:
    blob = json.dumps({"config": config, "seed": seed}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _num(x, where):
    if isinstance(x, bool):
        raise ParseError("booleans are not numbers", where)
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, str):
        try:
            return complex(float(Fraction(x)))
        except (ValueError, ZeroDivisionError) as exc:
            raise ParseError(f"cannot read number {x!r}", where) from exc
    if isinstance(x, list) and len(x) == 2:
        return complex(_num(x[0], where).real, _num(x[1], where).real)
    raise ParseError(f"expected a number, fraction string or [re, im], got {x!r}", where)


def parse_matrix(node, where: str, n: int | None = None) -> np.ndarray:
    if isinstance(node, str):
        if n is None:
            raise ParseError(f"{node!r} needs a known dimension here", where)
        if node == "identity":
            return np.eye(n, dtype=complex)
        if node == "zero":
            return np.zeros((n, n), dtype=complex)
        raise ParseError(f"unknown matrix keyword {node!r}", where)
    if isinstance(node, dict):
        if "identity" in node:
            return np.eye(int(node["identity"]), dtype=complex)
        if "zero" in node:
            d = int(node["zero"])
            return np.zeros((d, d), dtype=complex)
        if "unit" in node:
            i, j, d = (int(v) for v in node["unit"])
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1.0
            return e
        if "kron" in node:
            out = np.ones((1, 1), dtype=complex)
            for k, f in enumerate(node["kron"]):
                out = np.kron(out, parse_matrix(f, f"{where}.kron[{k}]"))
            return out
        raise ParseError(f"unknown matrix object with keys {sorted(node)}", where)
    if not isinstance(node, list) or not node or not all(isinstance(r, list) for r in node):
        raise ParseError("a matrix must be a non-empty list of rows", where)
    rows = [[_num(x, f"{where}[{i}][{j}]") for j, x in enumerate(r)] for i, r in enumerate(node)]
    if len({len(r) for r in rows}) != 1:
        raise ParseError("matrix rows have different lengths", where)
    m = np.array(rows, dtype=complex)
    if m.shape[0] != m.shape[1]:
        raise ParseError(f"matrix is not square: {m.shape}", where)
    return m


def _require(cfg, key, where=""):
    if key not in cfg:
        raise ParseError("missing field", f"{where}{key}")
    return cfg[key]


def _build_state(node, n, tol):
    if not isinstance(node, dict):
        raise ParseError("state must be an object", "state")
    try:
        if "product_diagonals" in node:
            diags = [
                np.array([_num(x, f"state.product_diagonals[{i}][{j}]") for j, x in enumerate(d)])
                for i, d in enumerate(node["product_diagonals"])
            ]
            state = FaithfulState.product(diags, tol)
        elif "product" in node:
            mats = [parse_matrix(m, f"state.product[{i}]") for i, m in enumerate(node["product"])]
            state = FaithfulState.product(mats, tol)
        elif "rho" in node:
            state = FaithfulState(parse_matrix(node["rho"], "state.rho", n), tol)
        else:
            raise ParseError("expected product_diagonals, product or rho", "state")
    except (ParseError, ValidationError):
        raise
    except StopTimeError as exc:
        raise ValidationError(f"state: {exc}") from exc
    if state.rho.shape != (n, n):
        raise ValidationError(f"state: density matrix has size {state.rho.shape[0]}, expected {n}")
    return state


def _build_algebras(node, npts, tol):
    if not isinstance(node, dict):
        raise ParseError("algebra must be an object", "algebra")
    if "tensor_chain" in node:
        dims = [int(d) for d in node["tensor_chain"]]
        if not dims or any(d < 1 for d in dims):
            raise ParseError("tensor chain dimensions must be positive", "algebra.tensor_chain")
        chain = tensor_chain_algebras(dims, tol)
        levels = node.get("levels")
        if levels is None:
            if npts != len(chain):
                raise ParseError(
                    f"grid has {npts} points but the chain has {len(chain)} levels; give 'levels'",
                    "algebra.levels",
                )
            levels = list(range(len(chain)))
        if len(levels) != npts:
            raise ParseError(f"need {npts} levels, got {len(levels)}", "algebra.levels")
        for i, lv in enumerate(levels):
            if not (0 <= int(lv) < len(chain)):
                raise ParseError(f"level {lv} out of range", f"algebra.levels[{i}]")
        return int(np.prod(dims)), [chain[int(lv)] for lv in levels]
    if "generators" in node:
        n = int(_require(node, "dim", "algebra."))
        gens = node["generators"]
        if len(gens) != npts:
            raise ParseError(f"need {npts} generator lists, got {len(gens)}", "algebra.generators")
        algs = []
        for i, gl in enumerate(gens):
            mats = [parse_matrix(g, f"algebra.generators[{i}][{j}]", n) for j, g in enumerate(gl)]
            try:
                algs.append(generate_subalgebra(n, mats, tol))
            except StopTimeError as exc:
                raise ValidationError(f"algebra.generators[{i}]: {exc}") from exc
        return n, algs
    raise ParseError("expected tensor_chain or generators", "algebra")


def build_fixture(config: dict, seed: int | None = None) -> Fixture:
    """Validate a parsed fixture document and build its objects.

    ``seed`` overrides the seed of a ``random_adapted`` stopping time.
    """
    if not isinstance(config, dict):
        raise ParseError("fixture must be a JSON object")
    version = _require(config, "schema_version")
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {version!r}", "schema_version")
    name = str(config.get("name", "fixture"))
    tol_spec = config.get("tolerance", {})
    try:
        tol = Tolerance(**tol_spec)
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc), "tolerance") from exc
    try:
        grid = TimeGrid(tuple(_require(config, "grid")))
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc), "grid") from exc
    n, algebras = _build_algebras(_require(config, "algebra"), len(grid), tol)
    state = _build_state(_require(config, "state"), n, tol)
    try:
        gns = build_gns(algebras[-1], state)
        F = Filtration(gns, grid, tuple(algebras))
        F.expectations  # noqa: B018  existence of every E_t is part of validation
    except ValidationError:
        raise
    except StopTimeError as exc:
        raise ValidationError(str(exc)) from exc

    st = _require(config, "stopping_time")
    used_seed = None
    try:
        if "q" in st:
            qs = st["q"]
            if len(qs) != len(grid):
                raise ParseError(f"need {len(grid)} matrices, got {len(qs)}", "stopping_time.q")
            mats = [parse_matrix(m, f"stopping_time.q[{i}]", n) for i, m in enumerate(qs)]
            tau = StoppingTime(F, tuple(mats))
        elif "random_adapted" in st:
            used_seed = int(st["random_adapted"].get("seed", 0)) if seed is None else int(seed)
            tau = random_adapted_stopping_time(F, used_seed)
        elif "deterministic" in st:
            tau = deterministic_stopping_time(F, st["deterministic"])
        else:
            raise ParseError("expected q, random_adapted or deterministic", "stopping_time")
    except (ParseError, ValidationError):
        raise
    except StopTimeError as exc:
        raise ValidationError(f"stopping_time: {exc}") from exc
    return Fixture(name, copy.deepcopy(config), F, tau, used_seed)


def load_fixture(path, seed: int | None = None) -> Fixture:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return build_fixture(config, seed)


# ---------------------------------------------------------------------------
# built-in fixtures

F1_CONFIG = {
    "schema_version": SCHEMA_VERSION,
    "name": "F1",
    "grid": [0, 1, 2],
    "algebra": {"tensor_chain": [2, 2], "levels": [0, 1, 2]},
    "state": {"product_diagonals": [["2/3", "1/3"], ["2/3", "1/3"]]},
    "stopping_time": {
        "q": ["zero", {"kron": [[[1, 0], [0, 0]], {"identity": 2}]}, "identity"]
    },
}

CHAINS = ([2], [3], [2, 2], [2, 3], [3, 2], [4, 2], [2, 2, 2])


def _random_density(rng, d, diagonal):
    if diagonal:
        w = rng.uniform(0.2, 1.0, size=d)
        return (w / w.sum()).tolist()
    x = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = x @ dagger(x) + 0.3 * np.eye(d)
    rho /= np.trace(rho).real
    return [[[float(v.real), float(v.imag)] for v in row] for row in rho]


def random_fixture_config(seed: int) -> dict:
    """A random tensor-chain fixture with a random product state.

    Grids may repeat a level, so some A_t stay constant over several points.
    """
    rng = np.random.default_rng([seed, 7919])
    dims = list(CHAINS[int(rng.integers(len(CHAINS)))])
    k = len(dims)
    extra = int(rng.integers(0, 3))
    inner = sorted(int(v) for v in rng.integers(1, k + 1, size=extra))
    levels = sorted([0] + list(range(1, k + 1)) + inner)
    diagonal = bool(rng.random() < 0.4)
    factors = [_random_density(rng, d, diagonal) for d in dims]
    state = {"product_diagonals": factors} if diagonal else {"product": factors}
    return {
        "schema_version": SCHEMA_VERSION,
        "name": f"random-{seed}",
        "grid": list(range(len(levels))),
        "algebra": {"tensor_chain": dims, "levels": levels},
        "state": state,
        "stopping_time": {"random_adapted": {"seed": seed}},
    }


def random_corpus(count: int, start: int = 0) -> list:
    return [build_fixture(random_fixture_config(s)) for s in range(start, start + count)]
