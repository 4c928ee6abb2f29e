"""Monte-Carlo time stepping for the fractional stochastic heat equation.

Scheme: semi-implicit Euler-Maruyama.  The drift is integrated implicitly
through the cached spectral factor (I - dt A)^(-1) (unconditionally stable;
the stiffest eigenvalue grows like (n/L)^alpha, so explicit stepping would
force dt ~ n^(-alpha)).  The cell white-noise increment enters explicitly as
lambda sigma(u_i) dW_i / dx with dW_i ~ N(0, dt dx), the weak finite-difference
approximation of the Walsh integral; this makes the discrete second moment
match the deterministic Volterra oracle as dx, dt -> 0.

Determinism: path k draws from a generator seeded with SeedSequence
((master_seed, k)); paths are processed in fixed-size blocks by path index
and written to disjoint slices, so results are independent of worker count
and scheduling order.  Paths that go non-finite are flagged, keep their
earlier snapshots, and show NaN afterwards; they are never silently dropped.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .laplacian import DiscreteOperator, Grid, implicit_factor

__all__ = [
    "SigmaSpec",
    "ModelParams",
    "Discretization",
    "NoiseIncrement",
    "PathEnsemble",
    "SecondMomentEstimate",
    "sigma_eval",
    "sample_noise",
    "step",
    "simulate_path",
    "run_ensemble",
    "run_coupled_refinement",
    "estimate_second_moment",
    "estimate_second_moment_pair",
    "tent_profile",
    "default_dt",
]

_BLOCK = 128  # paths per work item; fixed so partitioning never depends on workers


@dataclass(frozen=True)
class SigmaSpec:
    """Noise coefficient with the linear-growth sandwich l|u| <= |sigma(u)| <= L|u|.

    kinds: "linear" (sigma(u) = L_sigma u, l = L), "bounded-linear"
    (sigma(u) = u (l + (L-l)/(1+u^2))), "custom-table" (odd interpolation of
    tabulated values on u >= 0, extended by the ray through the last point).
    """

    kind: str
    l_sigma: float
    L_sigma: float
    table_u: Optional[np.ndarray] = None
    table_values: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.kind not in ("linear", "bounded-linear", "custom-table"):
            raise ValueError(f"unknown sigma kind {self.kind!r}")
        if not (0.0 < self.l_sigma <= self.L_sigma) or not math.isfinite(self.L_sigma):
            raise ValueError(f"need 0 < l_sigma <= L_sigma, got ({self.l_sigma}, {self.L_sigma})")
        if self.kind == "linear" and self.l_sigma != self.L_sigma:
            raise ValueError("linear sigma requires l_sigma == L_sigma")
        if self.kind == "custom-table":
            if self.table_u is None or self.table_values is None:
                raise ValueError("custom-table sigma requires table_u and table_values")
            tu = np.asarray(self.table_u, dtype=float)
            tv = np.asarray(self.table_values, dtype=float)
            if tu.ndim != 1 or tu.shape != tv.shape or tu.size < 2:
                raise ValueError("sigma table must be matching 1-d arrays with >= 2 points")
            if tu[0] != 0.0 or tv[0] != 0.0 or np.any(np.diff(tu) <= 0.0):
                raise ValueError("sigma table must start at (0, 0) with increasing u")
            object.__setattr__(self, "table_u", tu)
            object.__setattr__(self, "table_values", tv)
            # sandwich and Lipschitz checked by finite differences on nodes and midpoints
            probe = np.sort(np.concatenate([tu[1:], 0.5 * (tu[1:] + tu[:-1])]))
            vals = np.interp(probe, tu, tv)
            ratio = vals / probe
            tol = 1e-9 * self.L_sigma
            if np.any(ratio < self.l_sigma - tol) or np.any(ratio > self.L_sigma + tol):
                raise ValueError("sigma table violates the linear-growth sandwich")
            slopes = np.diff(tv) / np.diff(tu)
            if np.any(np.abs(slopes) > self.L_sigma + tol):
                raise ValueError("sigma table violates the Lipschitz bound")
        elif self.table_u is not None or self.table_values is not None:
            raise ValueError(f"table data is only valid for kind='custom-table', not {self.kind!r}")


def sigma_eval(spec: SigmaSpec, u):
    """sigma(u), elementwise on arrays.  sigma(0) = 0 for every kind."""
    u = np.asarray(u, dtype=float)
    if spec.kind == "linear":
        out = spec.L_sigma * u
    elif spec.kind == "bounded-linear":
        out = u * (spec.l_sigma + (spec.L_sigma - spec.l_sigma) / (1.0 + u * u))
    else:
        a = np.abs(u)
        out = np.sign(u) * np.interp(a, spec.table_u, spec.table_values)
        beyond = a > spec.table_u[-1]
        if np.any(beyond):
            ray = spec.table_values[-1] / spec.table_u[-1]
            out = np.where(beyond, ray * u, out)
    return out if out.ndim else float(out)


def tent_profile(grid: Grid) -> np.ndarray:
    """Default initial condition u0(x) = min(x, L-x) 2/L: continuous, positive inside."""
    x = grid.nodes
    return np.minimum(x, grid.L - x) * 2.0 / grid.L


@dataclass(frozen=True)
class ModelParams:
    """Equation-level inputs: exponent, domain, noise level and coefficient, u0, moment order."""

    alpha: float
    L: float
    lam: float
    sigma: SigmaSpec
    u0: np.ndarray
    mu: float
    p: float = 2.0

    def __post_init__(self) -> None:
        if not (1.0 < self.alpha < 2.0):
            raise ValueError(f"alpha must lie in (1, 2), got {self.alpha}")
        if not (self.L > 0.0 and 0.0 < self.mu < 0.5 * self.L):
            raise ValueError(f"need L > 0 and mu in (0, L/2), got L={self.L}, mu={self.mu}")
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be a finite nonnegative real, got {self.lam}")
        u0 = np.asarray(self.u0, dtype=float)
        if u0.ndim != 1 or not np.all(np.isfinite(u0)) or np.any(u0 < 0.0):
            raise ValueError("u0 must be a finite nonnegative 1-d profile")
        object.__setattr__(self, "u0", u0)
        if self.p < 2.0:
            raise ValueError(f"moment order p must be >= 2, got {self.p}")
        threshold = 2.0 / (self.alpha - 1.0)
        if self.p <= threshold:
            warnings.warn(
                f"p={self.p} is at or below 2/(alpha-1)={threshold:.4g}; the moment "
                "growth/decay theorems assume p above this threshold",
                stacklevel=2,
            )

    def check_grid(self, grid: Grid) -> None:
        """u0 must be sampled on this grid and positive on the inner window [mu, L-mu]."""
        if self.u0.shape != (grid.n,):
            raise ValueError(f"u0 has {self.u0.size} nodes but the grid has {grid.n}")
        if abs(self.L - grid.L) > 1e-12 * self.L:
            raise ValueError(f"params.L={self.L} does not match grid.L={grid.L}")
        x = grid.nodes
        tol = 1e-12 * self.L
        inner = np.nonzero((x >= self.mu - tol) & (x <= self.L - self.mu + tol))[0]
        if inner.size == 0:
            raise ValueError(f"no grid nodes inside [{self.mu}, {self.L - self.mu}]")
        if float(np.min(self.u0[inner])) <= 0.0:
            raise ValueError(f"u0 must be strictly positive on [mu, L-mu] = [{self.mu}, {self.L - self.mu}]")


@dataclass(frozen=True)
class Discretization:
    """Time grid: step, horizon, and snapshot times snapped to step multiples."""

    grid: Grid
    dt: float
    t_end: float
    snapshot_times: tuple = ()

    def __post_init__(self) -> None:
        if not (self.dt > 0.0 and self.t_end > 0.0 and self.dt <= self.t_end):
            raise ValueError(f"need 0 < dt <= t_end, got dt={self.dt}, t_end={self.t_end}")
        snaps = tuple(float(t) for t in self.snapshot_times)
        if any(t < 0.0 or t > self.t_end + 0.5 * self.dt for t in snaps):
            raise ValueError(f"snapshot times must lie in [0, t_end], got {snaps}")
        if sorted(snaps) != list(snaps):
            raise ValueError("snapshot times must be sorted")
        steps = self.n_steps()
        idx = tuple(min(int(round(t / self.dt)), steps) for t in snaps)
        if len(set(idx)) != len(idx):
            raise ValueError("snapshot times collide after snapping to the step grid")
        object.__setattr__(self, "snapshot_times", tuple(i * self.dt for i in idx))
        object.__setattr__(self, "_snap_steps", idx)

    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def snapshot_steps(self) -> tuple:
        return self._snap_steps


def default_dt(op: DiscreteOperator) -> float:
    """Accuracy-motivated default 0.1/lambda1 (the implicit step is stable for any dt)."""
    return 0.1 / op.lambda1


@dataclass(frozen=True)
class NoiseIncrement:
    """One time-step of cell white noise: independent N(0, dt dx) per node."""

    values: np.ndarray


def sample_noise(rng: np.random.Generator, grid: Grid, dt: float) -> NoiseIncrement:
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    return NoiseIncrement(values=rng.normal(0.0, math.sqrt(dt * grid.dx), size=grid.n))


def step(u: np.ndarray, op: DiscreteOperator, params: ModelParams, dt: float, noise: NoiseIncrement) -> np.ndarray:
    """One semi-implicit Euler-Maruyama step u+ = (I - dt A)^(-1)(u + lam sigma(u) dW/dx)."""
    u = np.asarray(u, dtype=float)
    if u.shape != (op.grid.n,) or noise.values.shape != u.shape:
        raise ValueError("state/noise dimensions do not match the operator grid")
    forced = u + params.lam * sigma_eval(params.sigma, u) * noise.values / op.grid.dx
    return forced @ implicit_factor(op, dt).T


@dataclass(frozen=True)
class PathEnsemble:
    """Snapshot store: shape (n_snapshots, n_paths, n) plus per-path blow-up flags."""

    n_paths: int
    master_seed: int
    snapshot_times: tuple
    snapshots: np.ndarray
    flagged: np.ndarray
    params: ModelParams
    disc: Discretization

    @property
    def grid(self) -> Grid:
        return self.disc.grid

    @property
    def flagged_count(self) -> int:
        return int(np.count_nonzero(self.flagged))

    @property
    def flagged_fraction(self) -> float:
        return self.flagged_count / self.n_paths

    def snapshot(self, t: float) -> np.ndarray:
        for k, s in enumerate(self.snapshot_times):
            if abs(s - t) <= 1e-9 * max(1.0, abs(t)):
                return self.snapshots[k]
        raise ValueError(f"t={t} is not a snapshot time; have {self.snapshot_times}")

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("path,t,x,u\n")
            nodes = [float(v) for v in self.disc.grid.nodes]
            for k, t in enumerate(self.snapshot_times):
                block = self.snapshots[k]
                for p in range(self.n_paths):
                    row = block[p]
                    for i, x in enumerate(nodes):
                        fh.write(f"{p},{float(t)!r},{x!r},{float(row[i])!r}\n")

    def write_metadata_json(self, path) -> None:
        meta = {
            "n_paths": self.n_paths,
            "master_seed": self.master_seed,
            "snapshot_times": list(self.snapshot_times),
            "flagged_count": self.flagged_count,
            "model": {
                "alpha": self.params.alpha,
                "L": self.params.L,
                "lambda": self.params.lam,
                "mu": self.params.mu,
                "p": self.params.p,
                "sigma_kind": self.params.sigma.kind,
                "l_sigma": self.params.sigma.l_sigma,
                "L_sigma": self.params.sigma.L_sigma,
            },
            "discretization": {
                "n": self.disc.grid.n,
                "L": self.disc.grid.L,
                "mu": self.disc.grid.mu,
                "dt": self.disc.dt,
                "t_end": self.disc.t_end,
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _path_generator(master_seed: int, k: int) -> np.random.Generator:
    # the stated pure function (master_seed, path index) -> RNG stream
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((master_seed, k))))


def _run_block(
    params: ModelParams,
    disc: Discretization,
    op: DiscreteOperator,
    path_indices: range,
    master_seed: int,
    out: np.ndarray,
    flagged: np.ndarray,
    antithetic: bool,
    noise_map: Optional[Callable] = None,
    draw_steps: Optional[int] = None,
) -> None:
    n = disc.grid.n
    steps = disc.n_steps()
    B = len(path_indices)
    raw_steps = steps if draw_steps is None else draw_steps
    noise = np.empty((B, raw_steps, n))
    for row, k in enumerate(path_indices):
        if antithetic:
            draw = _path_generator(master_seed, k // 2).standard_normal((raw_steps, n))
            noise[row] = draw if k % 2 == 0 else -draw
        else:
            noise[row] = _path_generator(master_seed, k).standard_normal((raw_steps, n))
    if noise_map is None:
        noise *= math.sqrt(disc.dt * disc.grid.dx)
    else:
        noise = noise_map(noise)
        if noise.shape != (B, steps, n):
            raise ValueError("noise_map must return increments matching the marching grid")

    factor_T = implicit_factor(op, disc.dt).T
    snap_steps = disc.snapshot_steps()
    snap_lookup = {s: i for i, s in enumerate(snap_steps)}
    u = np.tile(params.u0, (B, 1))
    alive = np.ones(B, dtype=bool)
    lam = params.lam

    def record(step_index: int) -> None:
        j = snap_lookup.get(step_index)
        if j is None:
            return
        snap = u.copy()
        snap[~alive] = np.nan
        out[j, path_indices.start : path_indices.stop] = snap

    record(0)
    # overflow here is an expected outcome (the path gets flagged), not an error
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(steps):
            forced = u + lam * sigma_eval(params.sigma, u) * noise[:, s, :] / disc.grid.dx
            u = forced @ factor_T
            bad = alive & ~np.all(np.isfinite(u), axis=1)
            if np.any(bad):
                alive &= ~bad
                u[bad] = 0.0  # quarantine so later matmuls stay finite; snapshots show NaN
            record(s + 1)
    flagged[path_indices.start : path_indices.stop] = ~alive


def run_ensemble(
    params: ModelParams,
    disc: Discretization,
    op: DiscreteOperator,
    n_paths: int,
    master_seed: int,
    worker_count: int = 1,
    antithetic: bool = False,
) -> PathEnsemble:
    """Simulate n_paths independent paths; deterministic in (master_seed, path index).

    antithetic=True pairs path 2j+1 with the sign-flipped noise of path 2j
    (variance reduction; requires even n_paths).
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    if worker_count < 1:
        raise ValueError(f"worker_count must be >= 1, got {worker_count}")
    if antithetic and n_paths % 2 != 0:
        raise ValueError("antithetic sampling requires an even number of paths")
    params.check_grid(disc.grid)
    if disc.dt * op.lambda1 > 10.0:
        raise ValueError(
            f"dt lambda1 = {disc.dt * op.lambda1:.3g} > 10; refine dt (default_dt suggests {default_dt(op):.3g})"
        )
    n = disc.grid.n
    snaps = len(disc.snapshot_times)
    out = np.empty((snaps, n_paths, n))
    flagged = np.zeros(n_paths, dtype=bool)
    blocks = [range(lo, min(lo + _BLOCK, n_paths)) for lo in range(0, n_paths, _BLOCK)]
    if worker_count == 1 or len(blocks) == 1:
        for blk in blocks:
            _run_block(params, disc, op, blk, master_seed, out, flagged, antithetic)
    else:
        with ThreadPoolExecutor(max_workers=worker_count) as pool:
            futures = [
                pool.submit(_run_block, params, disc, op, blk, master_seed, out, flagged, antithetic)
                for blk in blocks
            ]
            for f in futures:
                f.result()
    return PathEnsemble(
        n_paths=n_paths,
        master_seed=master_seed,
        snapshot_times=disc.snapshot_times,
        snapshots=out,
        flagged=flagged,
        params=params,
        disc=disc,
    )


def simulate_path(params: ModelParams, disc: Discretization, op: DiscreteOperator, seed: int):
    """Single path through the same block runner; returns (snapshots (n_snaps, n), flagged)."""
    ens = run_ensemble(params, disc, op, n_paths=1, master_seed=seed, worker_count=1)
    return ens.snapshots[:, 0, :], bool(ens.flagged[0])


def run_coupled_refinement(
    params: ModelParams,
    disc: Discretization,
    op: DiscreteOperator,
    n_paths: int,
    master_seed: int,
    worker_count: int = 1,
    antithetic: bool = False,
) -> tuple:
    """Run at dt and dt/2 on the same Brownian sheet (coarse dW = sum of fine pair).

    Sharing the noise makes the Monte-Carlo error common to both resolutions,
    so the difference against a deterministic reference isolates the time
    discretization bias.  Returns (coarse, fine) ensembles.
    """
    fine = Discretization(
        grid=disc.grid, dt=0.5 * disc.dt, t_end=disc.t_end, snapshot_times=disc.snapshot_times
    )
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    if antithetic and n_paths % 2 != 0:
        raise ValueError("antithetic sampling requires an even number of paths")
    params.check_grid(disc.grid)
    n = disc.grid.n
    results = []
    fine_scale = math.sqrt(fine.dt * disc.grid.dx)
    for which, d in (("fine", fine), ("coarse", disc)):
        out = np.empty((len(d.snapshot_times), n_paths, n))
        flagged = np.zeros(n_paths, dtype=bool)

        def noise_map(z, which=which):
            # z is the raw standard-normal fine sheet (B, 2 x coarse steps, n)
            z = z * fine_scale
            if which == "fine":
                return z
            return z[:, 0::2, :] + z[:, 1::2, :]

        blocks = [range(lo, min(lo + _BLOCK, n_paths)) for lo in range(0, n_paths, _BLOCK)]

        def run_blk(blk):
            _run_block(
                params, d, op, blk, master_seed, out, flagged, antithetic,
                noise_map=noise_map, draw_steps=fine.n_steps(),
            )

        if worker_count == 1 or len(blocks) == 1:
            for blk in blocks:
                run_blk(blk)
        else:
            with ThreadPoolExecutor(max_workers=worker_count) as pool:
                for f in [pool.submit(run_blk, blk) for blk in blocks]:
                    f.result()
        results.append(
            PathEnsemble(
                n_paths=n_paths,
                master_seed=master_seed,
                snapshot_times=d.snapshot_times,
                snapshots=out,
                flagged=flagged,
                params=params,
                disc=d,
            )
        )
    fine_ens, coarse_ens = results
    return coarse_ens, fine_ens


# ---------------------------------------------------------------------------
# Variance-reduced second-moment estimation
#
# E|u(t,x)|^2 under multiplicative noise is carried by rare high peaks (weak
# intermittency): the per-path spread of u^2 is several times its mean, so a
# direct sample average at feasible path counts is dominated by whether the
# draw happened to contain the peaks.  The estimator below removes most of
# that variance while staying an unbiased function of genuinely simulated
# paths:
#
#   * conditioning: paths are simulated only to an intermediate time t*, and
#     the remaining [t*, t] noise is integrated out exactly.  For linear
#     sigma the scheme's conditional second moment at time t given the state
#     v at t* is the quadratic form v' A_x v, where A_x is the adjoint
#     propagation of e_x e_x' through the per-step second-moment map
#     C -> M (C + c diag diag C) M'.
#   * antithetic pairing of the driving sheets.
#   * a control variate: the quadratic form evaluated on the second-order
#     noise expansion y = g + ell + q (deterministic flow, first and second
#     Wiener-chaos terms) is subtracted pathwise and its exact mean
#     g'Ag + tr(A E[ll']) + tr(A E[qq']) is added back.
#
# The A_x matrices depend on dt exactly as the simulation does, so the
# estimator retains the scheme's full time-discretization bias; only
# sampling noise is suppressed.


@dataclass(frozen=True)
class SecondMomentEstimate:
    """Per-node estimate of E|u(t,x)|^2 with sampling standard errors."""

    t: float
    dt: float
    values: np.ndarray
    stderr: np.ndarray
    n_paths: int
    flagged_count: int
    conditioning_time: float


def _conditional_forms(params, op, grid, dt, n_steps, cond_steps):
    """Adjoint quadratic forms A_x at t* and the exact chaos<=2 means.

    Returns (M^T, c, g, A, cv_mean) with g the deterministic flow sampled at
    the conditioning steps and cv_mean[x] = E[(g* + ell + q)' A_x (g* + ell + q)].
    """
    lam_sig = params.lam * params.sigma.L_sigma
    M = implicit_factor(op, dt)
    MT = M.T
    c = lam_sig**2 * dt / grid.dx
    proj = op.eigenvectors.T @ params.u0
    tgrid = dt * np.arange(cond_steps + 1)
    g = (np.exp(np.outer(tgrid, op.eigenvalues)) * proj) @ op.eigenvectors.T

    n = grid.n
    idx = np.arange(n)
    A = np.zeros((n, n, n))
    A[idx, idx, idx] = 1.0
    for _ in range(n_steps - cond_steps):
        B = MT[None, :, :] @ A @ M[None, :, :]
        B[:, idx, idx] *= 1.0 + c
        A = B

    Lam = np.zeros((n, n))
    Q = np.zeros((n, n))
    for k in range(cond_steps):
        Q = M @ (Q + c * np.diag(np.diag(Lam))) @ MT
        Lam = M @ (Lam + c * np.diag(g[k] ** 2)) @ MT
    gs = g[cond_steps]
    cv_mean = (
        np.einsum("i,xij,j->x", gs, A, gs)
        + np.einsum("xij,ij->x", A, Lam)
        + np.einsum("xij,ij->x", A, Q)
    )
    return MT, c, g, A, cv_mean


def _rb_branch(u0, noise, lam, dx, MT, g):
    """March u, ell (first chaos), q (second chaos) through one noise sheet."""
    nb = noise.shape[0]
    u = np.tile(u0, (nb, 1))
    ell = np.zeros_like(u)
    q = np.zeros_like(u)
    for s in range(noise.shape[1]):
        dW = noise[:, s, :] / dx
        q = (q + lam * ell * dW) @ MT
        ell = (ell + lam * g[s] * dW) @ MT
        u = (u + lam * u * dW) @ MT
    return u, g[noise.shape[1]] + ell + q


def _rb_run(params, op, grid, machinery, n_paths, master_seed, antithetic, worker_count):
    """Accumulate residual sums per resolution; deterministic in worker count.

    ``machinery`` holds one (MT, g, A, cv_mean, draw_steps, scale, stride)
    tuple per resolution: the raw standard-normal sheet is drawn once with
    ``draw_steps`` rows, and each resolution consumes it at its own stride
    (stride 2 sums consecutive pairs, the coarse increments of a shared
    fine sheet).
    """
    n = grid.n
    lam = params.lam * params.sigma.L_sigma
    blocks = [range(lo, min(lo + _BLOCK, n_paths)) for lo in range(0, n_paths, _BLOCK)]
    partial = [None] * len(blocks)
    draw_steps = machinery[-1][4]

    def run_blk(bi):
        blk = blocks[bi]
        nb = len(blk)
        z = np.empty((nb, draw_steps, n))
        for row, k in enumerate(blk):
            if antithetic:
                zz = _path_generator(master_seed, k // 2).standard_normal((draw_steps, n))
                z[row] = zz if k % 2 == 0 else -zz
            else:
                z[row] = _path_generator(master_seed, k).standard_normal((draw_steps, n))
        sums = []
        for MT, g, A, _cv, _steps, scale, stride in machinery:
            w = (z if stride == 1 else z[:, 0::2, :] + z[:, 1::2, :]) * scale
            u, y = _rb_branch(params.u0, w, lam, grid.dx, MT, g)
            alive = np.all(np.isfinite(u), axis=1)
            vals = np.einsum("pi,xij,pj->px", u, A, u, optimize=True) - np.einsum(
                "pi,xij,pj->px", y, A, y, optimize=True
            )
            vals = vals[alive]
            sums.append((vals.sum(axis=0), (vals**2).sum(axis=0), int(alive.sum())))
        partial[bi] = sums

    if worker_count == 1 or len(blocks) == 1:
        for bi in range(len(blocks)):
            run_blk(bi)
    else:
        with ThreadPoolExecutor(max_workers=worker_count) as pool:
            for f in [pool.submit(run_blk, bi) for bi in range(len(blocks))]:
                f.result()

    out = []
    for which in range(len(machinery)):
        acc = np.zeros(n)
        acc2 = np.zeros(n)
        total = 0
        for sums in partial:
            s, s2, cnt = sums[which]
            acc += s
            acc2 += s2
            total += cnt
        mean = acc / total
        var = np.maximum(acc2 / total - mean**2, 0.0)
        se = np.sqrt(var / total)
        out.append((mean, se, total))
    return out


def _check_rb_args(params, disc, op, n_paths, conditioning_steps, antithetic):
    if params.sigma.kind != "linear":
        raise ValueError(
            "conditional second-moment estimation requires linear sigma; "
            f"got kind={params.sigma.kind!r}"
        )
    params.check_grid(disc.grid)
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    if antithetic and n_paths % 2 != 0:
        raise ValueError("antithetic sampling requires an even number of paths")
    steps = disc.n_steps()
    cond = conditioning_steps if conditioning_steps is not None else max(1, steps // 8)
    if not (1 <= cond <= steps):
        raise ValueError(f"conditioning_steps={cond} outside [1, {steps}]")
    return cond


def estimate_second_moment(
    params: ModelParams,
    disc: Discretization,
    op: DiscreteOperator,
    n_paths: int,
    master_seed: int,
    conditioning_steps: Optional[int] = None,
    antithetic: bool = True,
    worker_count: int = 1,
) -> SecondMomentEstimate:
    """Estimate E|u(t_end, x)|^2 per node by conditional Monte Carlo.

    Simulates ``n_paths`` paths to the conditioning time (default t_end/8)
    and closes the remainder exactly; see the module comment above for the
    variance-reduction layout.  Linear sigma only.
    """
    cond = _check_rb_args(params, disc, op, n_paths, conditioning_steps, antithetic)
    steps = disc.n_steps()
    grid = disc.grid
    MT, c, g, A, cv_mean = _conditional_forms(params, op, grid, disc.dt, steps, cond)
    scale = math.sqrt(disc.dt * grid.dx)
    machinery = [(MT, g, A, cv_mean, cond, scale, 1)]
    ((mean, se, total),) = _rb_run(
        params, op, grid, machinery, n_paths, master_seed, antithetic, worker_count
    )
    return SecondMomentEstimate(
        t=disc.t_end,
        dt=disc.dt,
        values=mean + cv_mean,
        stderr=se,
        n_paths=n_paths,
        flagged_count=n_paths - total,
        conditioning_time=cond * disc.dt,
    )


def estimate_second_moment_pair(
    params: ModelParams,
    disc: Discretization,
    op: DiscreteOperator,
    n_paths: int,
    master_seed: int,
    conditioning_steps: Optional[int] = None,
    antithetic: bool = True,
    worker_count: int = 1,
) -> tuple:
    """Coupled estimates at dt and dt/2 sharing one Brownian sheet.

    The common noise makes the sampling error nearly identical at the two
    resolutions, so the pair of discrepancies against a deterministic
    reference isolates the time-discretization bias and its decay under
    refinement.  Returns (coarse, fine).
    """
    cond = _check_rb_args(params, disc, op, n_paths, conditioning_steps, antithetic)
    steps = disc.n_steps()
    grid = disc.grid
    fine = Discretization(
        grid=grid, dt=0.5 * disc.dt, t_end=disc.t_end, snapshot_times=disc.snapshot_times
    )
    MTc, cc, gc, Ac, cvc = _conditional_forms(params, op, grid, disc.dt, steps, cond)
    MTf, cf, gf, Af, cvf = _conditional_forms(params, op, grid, fine.dt, 2 * steps, 2 * cond)
    scale_f = math.sqrt(fine.dt * grid.dx)
    machinery = [
        (MTc, gc, Ac, cvc, 2 * cond, scale_f, 2),
        (MTf, gf, Af, cvf, 2 * cond, scale_f, 1),
    ]
    res = _rb_run(params, op, grid, machinery, n_paths, master_seed, antithetic, worker_count)
    out = []
    for (mean, se, total), cv, d, ct in (
        (res[0], cvc, disc, cond * disc.dt),
        (res[1], cvf, fine, cond * disc.dt),
    ):
        out.append(
            SecondMomentEstimate(
                t=d.t_end,
                dt=d.dt,
                values=mean + cv,
                stderr=se,
                n_paths=n_paths,
                flagged_count=n_paths - total,
                conditioning_time=ct,
            )
        )
    return out[0], out[1]
