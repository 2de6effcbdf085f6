"""Seeded synthetic data sources.

Families:

* gaussian         center + scale * N(0, I)        (scale scalar or per-coordinate)
* student_t        center + scale * t_dof, i.i.d. coordinates, dof > 2
* mixture          gaussian mixture, shared scale, component weights sum to 1
* sphere_uniform   uniform on the sphere of given radius (plus optional center)
* kl_brownian      truncated Brownian-motion expansion, represented by its K
                   basis coefficients xi_k / ((k - 1/2) pi); coefficient space
                   is isometric to the corresponding function space, so norms
                   and inner products are exact
* teacher_logistic labeled pairs: x gaussian, y = sign(<x, teacher>) flipped
                   with probability `noise`
* teacher_cosh     same label mechanism (the objectives differ, not the data)

Draws come from two counter-based lanes per stream (see asgd.streams): one
for coordinates, one for labels / component picks.  Because each lane is
consumed strictly sequentially, a stream produces the same values whether
drawn one sample at a time or in large blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import streams
from .errors import DimensionMismatch
from .linalg import as_vector

FAMILIES = ("gaussian", "student_t", "mixture", "sphere_uniform",
            "kl_brownian", "teacher_logistic", "teacher_cosh")
LABELED_FAMILIES = ("teacher_logistic", "teacher_cosh")

# freeze() memory guard: at most 1e8 stored doubles
MAX_FROZEN_VALUES = 10 ** 8


def _as_scale(scale, dim):
    arr = np.atleast_1d(np.asarray(scale, dtype=np.float64))
    if arr.ndim != 1 or arr.shape[0] not in (1, dim):
        raise DimensionMismatch("scale must be a scalar or one value per coordinate")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise ValueError("scales must be finite and positive")
    return arr if arr.shape[0] == dim else np.full(dim, arr[0])


@dataclass
class DistributionSpec:
    """Validated description of one data source."""

    family: str
    dim: int
    center: Optional[np.ndarray] = None
    scale: object = 1.0
    dof: float = 3.0
    weights: Optional[np.ndarray] = None
    means: Optional[np.ndarray] = None
    radius: float = 1.0
    teacher: Optional[np.ndarray] = None
    noise: float = 0.0
    _scale_vec: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        self.dim = int(self.dim)
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.center is None:
            self.center = np.zeros(self.dim)
        else:
            self.center = as_vector(self.center, "center")
            if self.center.shape[0] != self.dim:
                raise DimensionMismatch("center dim does not match")
        self._scale_vec = _as_scale(self.scale, self.dim)
        if self.family == "student_t":
            self.dof = float(self.dof)
            if not np.isfinite(self.dof) or self.dof <= 2.0:
                raise ValueError("student_t requires dof > 2 so second moments exist")
        if self.family == "mixture":
            if self.means is None or self.weights is None:
                raise ValueError("mixture requires means and weights")
            self.means = np.asarray(self.means, dtype=np.float64)
            if self.means.ndim != 2 or self.means.shape[1] != self.dim:
                raise DimensionMismatch("means must be (k, dim)")
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.ndim != 1 or self.weights.shape[0] != self.means.shape[0]:
                raise DimensionMismatch("weights must match the number of components")
            if np.any(self.weights < 0) or abs(float(self.weights.sum()) - 1.0) > 1e-9:
                raise ValueError("mixture weights must be nonnegative and sum to 1")
            self.weights = self.weights / self.weights.sum()
        if self.family == "sphere_uniform":
            self.radius = float(self.radius)
            if not np.isfinite(self.radius) or self.radius <= 0:
                raise ValueError("radius must be finite and positive")
        if self.family not in LABELED_FAMILIES and self.teacher is not None:
            raise ValueError("teacher is only meaningful for teacher_* families")
        if self.family in LABELED_FAMILIES:
            if self.teacher is None:
                raise ValueError(f"{self.family} requires a teacher vector")
            self.teacher = as_vector(self.teacher, "teacher")
            if self.teacher.shape[0] != self.dim:
                raise DimensionMismatch("teacher dim does not match")
            self.noise = float(self.noise)
            if not (0.0 <= self.noise < 0.5):
                raise ValueError("label noise must lie in [0, 0.5)")

    @property
    def labeled(self) -> bool:
        return self.family in LABELED_FAMILIES

    def param_items(self) -> list[tuple[str, str]]:
        """Stable (key, value-text) pairs describing this spec, for headers."""
        fmt = lambda a: ",".join(f"{float(x):.17g}" for x in np.atleast_1d(a))
        items = [("family", self.family), ("dim", str(self.dim)),
                 ("center", fmt(self.center)), ("scale", fmt(self._scale_vec))]
        if self.family == "student_t":
            items.append(("dof", f"{self.dof:.17g}"))
        if self.family == "mixture":
            items.append(("means", ";".join(fmt(row) for row in self.means)))
            items.append(("weights", fmt(self.weights)))
        if self.family == "sphere_uniform":
            items.append(("radius", f"{self.radius:.17g}"))
        if self.labeled:
            items.append(("teacher", fmt(self.teacher)))
            items.append(("noise", f"{self.noise:.17g}"))
        return items


# kl_brownian basis: coefficient k (1-based) has standard deviation
# 1 / ((k - 1/2) pi)
def kl_coefficient_scales(n_terms: int) -> np.ndarray:
    k = np.arange(1, n_terms + 1, dtype=np.float64)
    return 1.0 / ((k - 0.5) * np.pi)


class SampleStream:
    """Single-owner sample source bound to (spec, seed, path)."""

    def __init__(self, spec: DistributionSpec, seed: int, path: tuple = ()):
        self.spec = spec
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        self._primary, self._aux = streams.lane_pair(self.seed, *self.path)

    def block(self, count: int):
        """Next `count` draws: (xs (count, dim), ys (count,) or None)."""
        count = int(count)
        if count < 1:
            raise ValueError("count must be >= 1")
        spec = self.spec
        d = spec.dim
        if spec.family == "gaussian":
            xs = spec.center + spec._scale_vec * self._primary.standard_normal((count, d))
            return xs, None
        if spec.family == "student_t":
            xs = spec.center + spec._scale_vec * self._primary.standard_t(spec.dof, size=(count, d))
            return xs, None
        if spec.family == "mixture":
            u = self._aux.random(count)
            comp = np.searchsorted(np.cumsum(spec.weights), u, side="right")
            comp = np.minimum(comp, spec.weights.shape[0] - 1)
            xs = spec.means[comp] + spec._scale_vec * self._primary.standard_normal((count, d))
            return xs, None
        if spec.family == "sphere_uniform":
            gn = self._primary.standard_normal((count, d))
            norms = np.sqrt(np.einsum("nd,nd->n", gn, gn))
            bad = norms < 1e-300
            if bad.any():
                gn[bad] = 0.0
                gn[bad, 0] = 1.0
                norms = np.where(bad, 1.0, norms)
            xs = spec.center + spec.radius * (gn / norms[:, None])
            return xs, None
        if spec.family == "kl_brownian":
            xi = self._primary.standard_normal((count, d))
            xs = spec.center + spec._scale_vec * (xi * kl_coefficient_scales(d))
            return xs, None
        # teacher families
        xs = spec.center + spec._scale_vec * self._primary.standard_normal((count, d))
        raw = np.where(xs @ spec.teacher >= 0.0, 1.0, -1.0)
        flip = self._aux.random(count) < spec.noise
        ys = raw * np.where(flip, -1.0, 1.0)
        return xs, ys

    def draw(self):
        """One draw: a vector, or (vector, label) for labeled families."""
        xs, ys = self.block(1)
        if ys is None:
            return xs[0]
        return xs[0], float(ys[0])

    def iter_samples(self, n: int, chunk: int = 1024):
        """Yield n draws one at a time (reference-path consumption)."""
        left = int(n)
        while left > 0:
            take = min(chunk, left)
            xs, ys = self.block(take)
            for i in range(take):
                yield xs[i] if ys is None else (xs[i], float(ys[i]))
            left -= take


def sample(spec: DistributionSpec, stream: SampleStream):
    """One i.i.d. draw from an existing stream."""
    if stream.spec is not spec and stream.spec != spec:
        raise ValueError("stream was built for a different spec")
    return stream.draw()


@dataclass
class Dataset:
    """Materialized draws: x (n, dim), y (n,) labels or None."""

    x: np.ndarray
    y: Optional[np.ndarray]
    header: str

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


def dataset_stream(spec: DistributionSpec, seed: int) -> SampleStream:
    """The stream freeze() consumes; exposed so streaming checks can replay it."""
    return SampleStream(spec, seed, (streams.PURPOSE_DATASET,))


def freeze(spec: DistributionSpec, n: int, seed: int) -> Dataset:
    """Materialize n draws from the dedicated dataset stream of (spec, seed)."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if n * spec.dim > MAX_FROZEN_VALUES:
        raise MemoryError(f"refusing to materialize {n} x {spec.dim} values "
                          f"(limit {MAX_FROZEN_VALUES} total)")
    st = dataset_stream(spec, seed)
    xs_parts, ys_parts = [], []
    left = n
    while left > 0:
        take = min(left, 1 << 16)
        xs, ys = st.block(take)
        xs_parts.append(xs)
        if ys is not None:
            ys_parts.append(ys)
        left -= take
    x = np.concatenate(xs_parts, axis=0)
    y = np.concatenate(ys_parts) if ys_parts else None
    header = _header_line(spec, n, seed)
    return Dataset(x=x, y=y, header=header)


def _header_line(spec: DistributionSpec, n: int, seed: int) -> str:
    parts = [f"{k}={v}" for k, v in spec.param_items()]
    parts.append(f"n={n}")
    parts.append(f"seed={int(seed)}")
    return "# " + " ".join(parts)


def write_dataset_csv(dataset: Dataset, path) -> None:
    """One header line (family, params, seed), then %.17g comma rows."""
    with open(path, "w", newline="\n") as f:
        f.write(dataset.header + "\n")
        labeled = dataset.y is not None
        for i in range(dataset.n):
            row = ",".join(f"{v:.17g}" for v in dataset.x[i])
            if labeled:
                row += f",{dataset.y[i]:.17g}"
            f.write(row + "\n")


def _parse_header(line: str) -> dict:
    if not line.startswith("# "):
        raise ValueError("dataset file lacks the expected header line")
    fields = {}
    for tok in line[2:].strip().split(" "):
        if "=" not in tok:
            raise ValueError(f"malformed header token {tok!r}")
        k, v = tok.split("=", 1)
        fields[k] = v
    return fields


def spec_from_header(line: str) -> tuple[DistributionSpec, int, int]:
    """Rebuild (spec, n, seed) from a dataset header line."""
    f = _parse_header(line)
    fam = f["family"]
    dim = int(f["dim"])
    vec = lambda s: np.array([float(t) for t in s.split(",")])
    kw = dict(family=fam, dim=dim, center=vec(f["center"]), scale=vec(f["scale"]))
    if fam == "student_t":
        kw["dof"] = float(f["dof"])
    if fam == "mixture":
        kw["means"] = np.array([[float(t) for t in row.split(",")] for row in f["means"].split(";")])
        kw["weights"] = vec(f["weights"])
    if fam == "sphere_uniform":
        kw["radius"] = float(f["radius"])
    if fam in LABELED_FAMILIES:
        kw["teacher"] = vec(f["teacher"])
        kw["noise"] = float(f["noise"])
    return DistributionSpec(**kw), int(f["n"]), int(f["seed"])


def read_dataset_csv(path) -> Dataset:
    with open(path, "r") as f:
        header = f.readline().rstrip("\n")
        spec, n, _seed = spec_from_header(header)
        data = np.loadtxt(f, delimiter=",", ndmin=2)
    if data.shape[0] != n:
        raise ValueError(f"header promises {n} rows, file has {data.shape[0]}")
    if spec.labeled:
        if data.shape[1] != spec.dim + 1:
            raise ValueError("labeled dataset must have dim+1 columns")
        return Dataset(x=np.ascontiguousarray(data[:, :-1]), y=data[:, -1].copy(), header=header)
    if data.shape[1] != spec.dim:
        raise ValueError("dataset width does not match header dim")
    return Dataset(x=np.ascontiguousarray(data), y=None, header=header)
