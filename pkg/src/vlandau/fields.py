"""Grids, the mean-free force kernel, field tables, and weighted norms.

A field table holds E(x_i, t_n) on a uniform periodic grid in x and a
uniform grid in t = [t0, t_end].  Decay is measured in exponentially
weighted supremum norms

    |F|_{a}      = sup_{t >= t0}  e^{a t}          max_x |F(x, t)|
    |F|_{a, k}   = sup_{t >= t0}  t^{-k} e^{a t}   max_x |F(x, t)|

evaluated over the stored time samples.  A norm whose supremum sits on the
final sample is flagged `horizon_dominated`: the true supremum over the
half-line may exceed the grid value, so downstream inequality checks must
treat such values as lower bounds.

The force kernel on the circle of length 2 pi is

    B(x) = 1/2 - x / (2 pi)   for x in [0, 2 pi), extended periodically,

which is mean-free and has Fourier coefficients 1 / (2 pi i k), k != 0.
The field induced by a density rho is E(x) = int_0^{2pi} B(x - y) rho(y) dy,
i.e. Ehat(k) = rhohat(k) / (i k) with Ehat(0) = 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of n_steps+1 samples on [t0, t_end]."""

    t0: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if not (self.t_end > self.t0 > 0):
            raise ValueError("need 0 < t0 < t_end")
        if self.n_steps < 1:
            raise ValueError("need at least one time step")

    @property
    def dt(self) -> float:
        return (self.t_end - self.t0) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def __len__(self) -> int:
        return self.n_steps + 1


@dataclass(frozen=True)
class XGrid:
    """Uniform periodic grid x_i = i * length / n on [0, length)."""

    n: int
    length: float = TWO_PI

    def __post_init__(self):
        if self.n < 4 or (self.n & (self.n - 1)) != 0:
            raise ValueError("x grid size must be a power of two >= 4")
        if not self.length > 0:
            raise ValueError("x grid length must be positive")

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def points(self) -> np.ndarray:
        return self.dx * np.arange(self.n)

    @property
    def wavenumbers(self) -> np.ndarray:
        """Nonnegative mode numbers matching rfft layout, scaled to length."""
        return np.arange(self.n // 2 + 1) * (TWO_PI / self.length)


@dataclass(frozen=True)
class PhaseGrid:
    """Tensor grid over position times a truncated velocity interval.

    Velocity samples include both endpoints; integration uses trapezoid
    weights in v and exact uniform weights in x (periodic trapezoid).
    """

    xgrid: XGrid
    nv: int
    v_max: float

    def __post_init__(self):
        if self.nv < 3 or self.nv % 2 == 0:
            raise ValueError("velocity grid size must be an odd integer >= 3")
        if not self.v_max > 0:
            raise ValueError("v_max must be positive")

    @property
    def dv(self) -> float:
        return 2.0 * self.v_max / (self.nv - 1)

    @property
    def v(self) -> np.ndarray:
        return np.linspace(-self.v_max, self.v_max, self.nv)

    @property
    def v_weights(self) -> np.ndarray:
        w = np.full(self.nv, self.dv)
        w[0] = w[-1] = 0.5 * self.dv
        return w

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights (nx, nv) for int int . dx dv."""
        return np.full(self.xgrid.n, self.xgrid.dx)[:, None] * self.v_weights[None, :]


# ---------------------------------------------------------------------------
# force kernel
# ---------------------------------------------------------------------------

def kernel_B(x):
    """Periodic mean-free kernel, 1/2 - x/(2 pi) on the fundamental cell."""
    x = np.asarray(x, dtype=float)
    frac = np.mod(x, TWO_PI) / TWO_PI
    return 0.5 - frac


def kernel_fourier(k):
    """Fourier coefficients of B: 1/(2 pi i k) for k != 0, zero mean."""
    k = np.asarray(k)
    out = np.zeros(k.shape, dtype=complex)
    nz = k != 0
    out[nz] = 1.0 / (TWO_PI * 1j * k[nz])
    return out


# ---------------------------------------------------------------------------
# field tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldTable:
    """Sampled field E(x_i, t_n); values has shape (len(tgrid), xgrid.n)."""

    tgrid: TimeGrid
    xgrid: XGrid
    values: np.ndarray
    _coeff_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (len(self.tgrid), self.xgrid.n):
            raise ValueError(
                f"values shape {vals.shape} does not match grids "
                f"({len(self.tgrid)}, {self.xgrid.n})")
        object.__setattr__(self, "values", vals)

    def coefficients(self) -> np.ndarray:
        """Complex mode amplitudes c(t_n, k) with
        E(x) = c_0 + sum_{0<k<n/2} 2 Re(c_k e^{i k x'}) + Re(c_{n/2}) cos(n/2 x'),
        x' = 2 pi x / length; cached."""
        if "c" not in self._coeff_cache:
            self._coeff_cache["c"] = np.fft.rfft(self.values, axis=1) / self.xgrid.n
        return self._coeff_cache["c"]

    def sup_x(self) -> np.ndarray:
        """max_i |E(x_i, t_n)| for each time sample."""
        return np.abs(self.values).max(axis=1)

    def with_values(self, values) -> "FieldTable":
        return FieldTable(self.tgrid, self.xgrid, np.asarray(values, dtype=float))


def zero_field(tgrid: TimeGrid, xgrid: XGrid) -> FieldTable:
    return FieldTable(tgrid, xgrid, np.zeros((len(tgrid), xgrid.n)))


def tabulate_field(tgrid: TimeGrid, xgrid: XGrid, fn) -> FieldTable:
    """Build a table from fn(x, t) with broadcasting arrays."""
    x = xgrid.points
    vals = np.empty((len(tgrid), xgrid.n))
    for n, t in enumerate(tgrid.times):
        vals[n] = np.asarray(fn(x, t), dtype=float)
    return FieldTable(tgrid, xgrid, vals)


def spectral_dx(table: FieldTable) -> FieldTable:
    """d/dx by mode multiplication; the Nyquist mode is annihilated."""
    c = np.fft.rfft(table.values, axis=1)
    k = table.xgrid.wavenumbers
    c = c * (1j * k)[None, :]
    c[:, -1] = 0.0
    return table.with_values(np.fft.irfft(c, n=table.xgrid.n, axis=1))


def interp_field(table: FieldTable, x, t: float):
    """Evaluate the field at arbitrary positions and a single time.

    Trigonometric in x (exact at grid points), linear in t between samples.
    Times beyond the horizon return 0 (the field is treated as fully
    damped there); times before the grid start are refused.
    """
    tg = table.tgrid
    if t > tg.t_end:
        return np.zeros_like(np.asarray(x, dtype=float))
    if t < tg.t0 - 1e-12 * max(1.0, tg.t0):
        raise ValueError(f"time {t} precedes the table start {tg.t0}")
    s = (t - tg.t0) / tg.dt
    n0 = min(int(math.floor(s)), tg.n_steps - 1)
    n0 = max(n0, 0)
    w = s - n0
    c = table.coefficients()
    row = (1.0 - w) * c[n0] + w * c[n0 + 1]
    return eval_modes_at(row, table.xgrid, x)


def eval_modes_at(coeffs: np.ndarray, xgrid: XGrid, x):
    """Evaluate one coefficient row (rfft layout / n) at arbitrary x."""
    x = np.asarray(x, dtype=float)
    theta = x * (TWO_PI / xgrid.length)
    out = np.full(x.shape, float(coeffs[0].real))
    half = xgrid.n // 2
    for k in range(1, half):
        out += 2.0 * (coeffs[k].real * np.cos(k * theta)
                      - coeffs[k].imag * np.sin(k * theta))
    out += coeffs[half].real * np.cos(half * theta)
    return out


# ---------------------------------------------------------------------------
# weighted norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormReport:
    """Weighted supremum over stored samples.

    horizon_dominated is True when the supremum is achieved at the final
    time sample, meaning the reported value is only a lower bound for the
    supremum over the half-line.  argmax_x is the spatial location of the
    supremum when the caller tracks one (None for pre-reduced series).
    """

    value: float
    argmax_t: float
    horizon_dominated: bool
    a: float
    moment: int
    t_start: float
    argmax_x: float | None = None

    def as_dict(self) -> dict:
        return {
            "value": self.value, "argmax_t": self.argmax_t,
            "horizon_dominated": self.horizon_dominated,
            "a": self.a, "moment": self.moment, "t_start": self.t_start,
            "argmax_x": self.argmax_x,
        }


def weighted_sup(times, sup_spatial, a: float, moment: int = 0,
                 t_start: float | None = None) -> NormReport:
    """Weighted sup of a pre-reduced series sup_spatial(t_n) >= 0.

    a = 0 gives the plain polynomially weighted norm sup t^{-moment} |F|.
    """
    if a < 0:
        raise ValueError("decay rate a must be nonnegative")
    if moment < 0 or int(moment) != moment:
        raise ValueError("moment must be a nonnegative integer")
    times = np.asarray(times, dtype=float)
    sup_spatial = np.asarray(sup_spatial, dtype=float)
    if t_start is None:
        t_start = float(times[0])
    mask = times >= t_start - 1e-12 * max(1.0, abs(t_start))
    if not mask.any():
        raise ValueError("t_start lies beyond the sampled horizon")
    tt = times[mask]
    weighted = np.exp(a * tt) * sup_spatial[mask]
    if moment:
        weighted = weighted / tt ** moment
    idx = int(np.argmax(weighted))
    return NormReport(value=float(weighted[idx]), argmax_t=float(tt[idx]),
                      horizon_dominated=(idx == len(tt) - 1), a=float(a),
                      moment=int(moment), t_start=float(t_start))


def weighted_norm(table: FieldTable, a: float, moment: int = 0,
                  t_start: float | None = None) -> NormReport:
    """sup_{t_n >= t_start} t^{-moment} e^{a t} max_x |E|, with argmax."""
    if t_start is None:
        t_start = table.tgrid.t0
    rep = weighted_sup(table.tgrid.times, table.sup_x(), a, moment, t_start)
    n = int(round((rep.argmax_t - table.tgrid.t0) / table.tgrid.dt))
    i = int(np.argmax(np.abs(table.values[n])))
    return NormReport(value=rep.value, argmax_t=rep.argmax_t,
                      horizon_dominated=rep.horizon_dominated, a=rep.a,
                      moment=rep.moment, t_start=rep.t_start,
                      argmax_x=float(table.xgrid.points[i]))


def plain_sup(table: FieldTable) -> float:
    """Unweighted supremum max_{n,i} |E(x_i, t_n)|."""
    return float(np.abs(table.values).max())


def difference_norm(left: FieldTable, right: FieldTable, a: float,
                    moment: int = 0) -> NormReport:
    """Weighted norm of (left - right); grids must match."""
    if left.tgrid != right.tgrid or left.xgrid != right.xgrid:
        raise ValueError("field tables live on different grids")
    return weighted_norm(left.with_values(left.values - right.values),
                         a, moment=moment)


# ---------------------------------------------------------------------------
# on-disk format
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return "%.17g" % x


def write_field_csv(table: FieldTable, path, metadata: dict | None = None) -> None:
    """Write the table as CSV (first column t, one column per grid point)
    plus a JSON sidecar <path minus .csv>.json holding grid metadata.

    Numbers use 17 significant digits, so reading the CSV back reproduces
    the doubles bit for bit and identical tables serialize identically.
    """
    path = str(path)
    xs = table.xgrid.points
    lines = ["t," + ",".join(_fmt(x) for x in xs)]
    for t, row in zip(table.tgrid.times, table.values):
        lines.append(_fmt(t) + "," + ",".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    side = {
        "format": "field-table-v1",
        "t0": table.tgrid.t0,
        "t_end": table.tgrid.t_end,
        "n_steps": table.tgrid.n_steps,
        "nx": table.xgrid.n,
        "length": table.xgrid.length,
    }
    if metadata:
        side.update(metadata)
    with open(_sidecar_path(path), "w") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sidecar_path(path: str) -> str:
    return (path[:-4] if path.endswith(".csv") else path) + ".json"


def read_field_csv(path) -> tuple[FieldTable, dict]:
    """Read a table written by write_field_csv; returns (table, sidecar)."""
    path = str(path)
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("t,"):
        raise ValueError(f"{path}: not a field table (missing 't' header)")
    xs = np.array([float(tok) for tok in lines[0].split(",")[1:]])
    times = []
    rows = []
    for ln in lines[1:]:
        toks = ln.split(",")
        if len(toks) != len(xs) + 1:
            raise ValueError(f"{path}: row with {len(toks)} fields, "
                             f"expected {len(xs) + 1}")
        times.append(float(toks[0]))
        rows.append([float(tok) for tok in toks[1:]])
    times = np.array(times)
    if len(times) < 2:
        raise ValueError(f"{path}: need at least two time samples")
    dts = np.diff(times)
    if not np.allclose(dts, dts[0], rtol=1e-9, atol=0.0):
        raise ValueError(f"{path}: time samples are not uniform")
    dxs = np.diff(xs)
    if not np.allclose(dxs, dxs[0], rtol=1e-9, atol=0.0):
        raise ValueError(f"{path}: position samples are not uniform")
    try:
        with open(_sidecar_path(path)) as fh:
            side = json.load(fh)
    except FileNotFoundError:
        side = {}
    length = side.get("length", len(xs) * dxs[0])
    tgrid = TimeGrid(t0=float(times[0]), t_end=float(times[-1]),
                     n_steps=len(times) - 1)
    xgrid = XGrid(n=len(xs), length=float(length))
    return FieldTable(tgrid, xgrid, np.array(rows)), side
