"""Descent over edge lengths (and optionally vertex positions).

The objective combines data fidelity, curvature, edge-length smoothness,
total-area control, and the isometry coupling:

    total = data + mu_iso * iso
          + lambda * (curvature + mu_dirichlet * dirichlet + mu_volume * volume)

Two evaluation paths cooperate. The numeric path recomputes everything
from scratch, including fresh closest-point projections, and is what the
line search compares: accepted iterates are monotone in the true loss.
The traced path records the loss once per projection face assignment and
replays the tape for gradients; barycentric coordinates are frozen
inputs whose adjoints are discarded, the envelope treatment of the inner
closest-point minimization. A consequence worth testing: the data term
contributes exactly zero gradient to the edge lengths.

Every candidate step is pushed back into the feasible set (triangle
inequality with margin, length floor) before it is evaluated, so every
accepted iterate is strictly feasible.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import geometry
from .autodiff import Tape, TracedScalar
from . import autodiff as ad
from .errors import FeasibilityProjectionError, InfeasibleMetricError, TapeError
from .geometry import MetricField, TWO_PI
from .projection import Dataset, Embedding, isometry_coupling, project_dataset_arrays

Projections = tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass(frozen=True)
class LossConfig:
    """Weights and feasibility parameters of the objective.

    ``feas_margin`` and ``min_length`` default to None, meaning "derive
    from the initial metric" (1e-4 and 1e-6 times the mean edge length);
    :func:`run_optimization` resolves them. ``v_target`` is required only
    when ``mu_volume`` is positive; when present, the volume column is
    reported even at zero weight.
    """

    lambda_: float = 1.0
    p: float = 2.0
    mu_dirichlet: float = 0.0
    mu_volume: float = 0.0
    mu_iso: float = 0.0
    v_target: float | None = None
    feas_margin: float | None = None
    min_length: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.lambda_) and self.lambda_ >= 0.0):
            raise ValueError(f"lambda must be finite and >= 0, got {self.lambda_}")
        if not (math.isfinite(self.p) and self.p >= 1.0):
            raise ValueError(f"p must be finite and >= 1, got {self.p}")
        for name in ("mu_dirichlet", "mu_volume", "mu_iso"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        for name in ("v_target", "feas_margin", "min_length"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be positive when given, got {v}")


@dataclass(frozen=True)
class LossBreakdown:
    """Unweighted term values plus the weighted total."""

    data: float
    curvature: float
    dirichlet: float
    volume: float
    iso: float
    total: float


def total_loss(
    mesh,
    metric: MetricField,
    embedding: Embedding,
    dataset: Dataset | None,
    config: LossConfig,
    projections: Projections | None = None,
) -> LossBreakdown:
    """Numeric objective at one point; raises on an infeasible metric.

    ``projections`` takes the (faces, barycentric, squared distance)
    tuple of :func:`project_dataset_arrays` to reuse a projection pass;
    when omitted and a dataset is present, points are reprojected, which
    is what makes the reported loss the true one.
    """
    report = geometry.curvature_report(mesh, metric)
    curv = geometry.curvature_energy(report, config.p)
    diri = geometry.dirichlet_energy(mesh, metric)
    vol = (
        geometry.volume_penalty(report, config.v_target)
        if config.v_target is not None
        else 0.0
    )
    iso = isometry_coupling(mesh, metric, embedding)
    if dataset is None:
        data = 0.0
    else:
        if projections is None:
            projections = project_dataset_arrays(dataset.points, embedding, mesh)
        data = float(np.sum(projections[2]))
    total = data + config.mu_iso * iso + config.lambda_ * (
        curv + config.mu_dirichlet * diri + config.mu_volume * vol
    )
    return LossBreakdown(
        data=data, curvature=curv, dirichlet=diri, volume=vol, iso=iso, total=total
    )


# --------------------------------------------------------------------------
# Traced loss


_UNSET = object()


class _TracedLoss:
    """Cache of tape programs for the gradient, keyed by face assignment.

    Re-recording happens only when a data point switches its closest
    face; all other changes (lengths, coordinates, barycentric weights)
    replay an existing tape at new inputs. Input layout: edge lengths,
    then flattened coordinates when the embedding is free, then flattened
    barycentric coordinates when the data term is traced.

    Terms with zero weight are left off the tape entirely. With a frozen
    embedding the data term has no differentiable arguments at all and is
    skipped, and with lambda = 0 the tape contains no geometry, so the
    length gradient is exactly zero, not merely small.
    """

    def __init__(self, mesh, config: LossConfig, dataset: Dataset | None, freeze_embedding: bool):
        self._mesh = mesh
        self._config = config
        self._points = None if dataset is None else dataset.points
        self._freeze = bool(freeze_embedding)
        self._trace_data = self._points is not None and not self._freeze
        self._cache: dict[bytes, object] = {}

    def gradient(
        self,
        metric: MetricField,
        embedding: Embedding,
        projections: Projections | None,
    ) -> tuple[np.ndarray, np.ndarray | None]:
        """(length gradient, coordinate gradient or None if frozen)."""
        key = projections[0].tobytes() if self._trace_data else b""
        prog = self._cache.get(key, _UNSET)
        if prog is _UNSET:
            if len(self._cache) >= 32:
                # Assignment churn is front-loaded; dropping stale tapes
                # bounds memory without hurting steady state.
                self._cache.clear()
            prog = self._record(metric, embedding, projections)
            self._cache[key] = prog
        n_len = metric.edge_count
        n_coord = 0 if self._freeze else embedding.coords.size
        if prog is None:
            g_len = np.zeros(n_len)
            g_coord = None if self._freeze else np.zeros(n_coord)
            return g_len, g_coord
        x = self._pack(metric, embedding, projections)
        _, grad = prog.value_and_grad(x)
        g_len = grad[:n_len]
        g_coord = None if self._freeze else grad[n_len:n_len + n_coord]
        return g_len, g_coord

    def _pack(self, metric, embedding, projections) -> np.ndarray:
        parts = [metric.lengths]
        if not self._freeze:
            parts.append(embedding.coords.ravel())
        if self._trace_data:
            parts.append(projections[1].ravel())
        return np.concatenate(parts)

    def _record(self, metric, embedding, projections):
        cfg = self._config
        mesh = self._mesh
        ndim = embedding.ambient_dim
        tape = Tape()
        t_len = [tape.input(v) for v in metric.lengths]
        t_coord = None
        if not self._freeze:
            t_coord = [tape.input(v) for v in embedding.coords.ravel()]
        t_bary = None
        if self._trace_data:
            t_bary = [tape.input(v) for v in projections[1].ravel()]

        total = None

        def add(term):
            nonlocal total
            total = term if total is None else total + term

        if self._trace_data:
            faces = mesh.faces
            pf = projections[0]
            pts = self._points
            acc = None
            for i in range(pts.shape[0]):
                v0, v1, v2 = faces[pf[i]]
                b0, b1, b2 = t_bary[3 * i], t_bary[3 * i + 1], t_bary[3 * i + 2]
                sq = None
                for d in range(ndim):
                    q = (
                        b0 * t_coord[v0 * ndim + d]
                        + b1 * t_coord[v1 * ndim + d]
                        + b2 * t_coord[v2 * ndim + d]
                    )
                    r = q - float(pts[i, d])
                    sq = r * r if sq is None else sq + r * r
                acc = sq if acc is None else acc + sq
            if acc is not None:
                add(acc)

        if cfg.mu_iso > 0.0:
            edges = mesh.edges
            ext_const = embedding.edge_lengths(mesh) if self._freeze else None
            acc = None
            for e in range(mesh.edge_count):
                if self._freeze:
                    r = float(ext_const[e]) - t_len[e]
                else:
                    u, v = int(edges[e, 0]), int(edges[e, 1])
                    sq = None
                    for d in range(ndim):
                        diff = t_coord[u * ndim + d] - t_coord[v * ndim + d]
                        sq = diff * diff if sq is None else sq + diff * diff
                    r = ad.sqrt(sq) - t_len[e]
                term = r * r
                acc = term if acc is None else acc + term
            add(cfg.mu_iso * acc)

        if cfg.lambda_ > 0.0:
            fe = mesh.face_edges
            fcs = mesh.faces
            nv = mesh.vertex_count
            angle_sum: list = [None] * nv
            vertex_area: list = [None] * nv
            vol = None
            for f in range(mesh.face_count):
                l_ij = t_len[fe[f, 0]]
                l_jk = t_len[fe[f, 1]]
                l_ki = t_len[fe[f, 2]]
                ang = geometry.interior_angles(l_jk, l_ki, l_ij)
                area = geometry.triangle_area(l_jk, l_ki, l_ij)
                third = area / 3.0
                for pos in range(3):
                    vtx = int(fcs[f, pos])
                    a = ang[pos]
                    angle_sum[vtx] = a if angle_sum[vtx] is None else angle_sum[vtx] + a
                    vertex_area[vtx] = (
                        third if vertex_area[vtx] is None else vertex_area[vtx] + third
                    )
                vol = area if vol is None else vol + area
            boundary = mesh.boundary_vertex
            curv = None
            for vtx in range(nv):
                if angle_sum[vtx] is None:
                    continue
                base = math.pi if boundary[vtx] else TWO_PI
                defect = base - angle_sum[vtx]
                if cfg.p == 2.0:
                    term = (defect * defect) / vertex_area[vtx]
                else:
                    term = ad.absolute(defect) ** cfg.p * vertex_area[vtx] ** (1.0 - cfg.p)
                curv = term if curv is None else curv + term
            reg = curv
            if cfg.mu_dirichlet > 0.0:
                dir_acc = None
                for f in range(mesh.face_count):
                    lg0 = ad.log(t_len[fe[f, 0]])
                    lg1 = ad.log(t_len[fe[f, 1]])
                    lg2 = ad.log(t_len[fe[f, 2]])
                    d01 = lg0 - lg1
                    d12 = lg1 - lg2
                    d20 = lg2 - lg0
                    term = d01 * d01 + d12 * d12 + d20 * d20
                    dir_acc = term if dir_acc is None else dir_acc + term
                reg = reg + cfg.mu_dirichlet * dir_acc
            if cfg.mu_volume > 0.0:
                r = (vol - cfg.v_target) / cfg.v_target
                reg = reg + cfg.mu_volume * (r * r)
            add(cfg.lambda_ * reg)

        if not isinstance(total, TracedScalar):
            return None
        return tape.program(total)


def loss_gradient(
    mesh,
    metric: MetricField,
    embedding: Embedding,
    dataset: Dataset | None,
    config: LossConfig,
    freeze_embedding: bool = False,
) -> tuple[float, np.ndarray, np.ndarray | None]:
    """One-shot (value, length gradient, coordinate gradient).

    The value is the true numeric loss; gradients come from the traced
    surrogate with frozen barycentric coordinates.
    """
    config = _resolved(config, metric)
    proj = None
    if dataset is not None:
        proj = project_dataset_arrays(dataset.points, embedding, mesh)
    traced = _TracedLoss(mesh, config, dataset, freeze_embedding)
    g_len, g_coord = traced.gradient(metric, embedding, proj)
    value = total_loss(mesh, metric, embedding, dataset, config, projections=proj).total
    return value, g_len, g_coord


# --------------------------------------------------------------------------
# Feasibility projection


def feasibility_projection(
    mesh,
    metric: MetricField,
    feas_margin: float,
    min_length: float,
    max_sweeps: int = 50,
) -> MetricField:
    """Push a metric into the feasible set by local triangle repairs.

    Sweeps faces cyclically; a face whose worst triangle inequality falls
    short of the margin has its two short sides raised and its long side
    lowered by a third of the deficit each, slightly overshot so repeated
    visits cannot ping-pong below the margin, plus an absolute floor of a
    few ulps so that even deficits too small to register in one addition
    still make progress. Lengths never drop below ``min_length``. Already
    feasible input is returned unchanged (the same object).
    """
    if feas_margin <= 0.0:
        raise ValueError(f"feas_margin must be positive, got {feas_margin}")
    if min_length <= 0.0:
        raise ValueError(f"min_length must be positive, got {min_length}")
    slacks = geometry.face_slacks(mesh, metric)
    if (slacks >= feas_margin).all() and (metric.lengths >= min_length).all():
        return metric

    lengths = metric.lengths.copy()
    np.maximum(lengths, min_length, out=lengths)
    fe = mesh.face_edges
    for _ in range(max_sweeps):
        changed = False
        for f in range(fe.shape[0]):
            e0, e1, e2 = fe[f, 0], fe[f, 1], fe[f, 2]
            x0, x1, x2 = lengths[e0], lengths[e1], lengths[e2]
            s0 = x0 + x1 - x2
            s1 = x1 + x2 - x0
            s2 = x2 + x0 - x1
            if s0 <= s1 and s0 <= s2:
                smin, lo_a, lo_b, hi = s0, e0, e1, e2
            elif s1 <= s2:
                smin, lo_a, lo_b, hi = s1, e1, e2, e0
            else:
                smin, lo_a, lo_b, hi = s2, e2, e0, e1
            deficit = feas_margin - smin
            if deficit <= 0.0:
                continue
            step = max(
                deficit * (1.0 + 1e-9), 8.0 * np.spacing(max(x0, x1, x2))
            ) / 3.0
            lengths[lo_a] += step
            lengths[lo_b] += step
            lengths[hi] = max(lengths[hi] - step, min_length)
            changed = True
        if not changed:
            break
    result = MetricField(lengths)
    bad = geometry.check_feasible(mesh, result, feas_margin)
    if bad:
        raise FeasibilityProjectionError(
            f"{len(bad)} faces still below margin {feas_margin} after "
            f"{max_sweeps} sweeps, worst deficit {max(d for _, d in bad)}",
            faces=tuple(f for f, _ in bad[:16]),
        )
    return result


# --------------------------------------------------------------------------
# Descent loop


@dataclass(frozen=True)
class StopRule:
    """Termination thresholds; ``loss_tol`` of 0 disables that check."""

    max_iters: int = 5000
    grad_tol: float = 1e-6
    loss_tol: float = 0.0

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.grad_tol < 0.0 or self.loss_tol < 0.0:
            raise ValueError("tolerances must be >= 0")


@dataclass(frozen=True)
class TraceRow:
    """One accepted iterate; row 0 is the projected initial state."""

    iteration: int
    eta: float
    l_data: float
    l_curv: float
    l_dirichlet: float
    l_vol: float
    l_iso: float
    l_total: float
    max_deficit: float
    grad_norm: float

    @classmethod
    def fields(cls) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls))


@dataclass(frozen=True)
class IterationState:
    """Snapshot handed to the per-iteration callback."""

    row: TraceRow
    metric: MetricField
    embedding: Embedding
    grad_lengths: np.ndarray
    grad_coords: np.ndarray | None


@dataclass(frozen=True)
class OptimizationResult:
    rows: list[TraceRow]
    stop_reason: str
    metric: MetricField
    embedding: Embedding
    config: LossConfig

    @property
    def iterations(self) -> int:
        return len(self.rows) - 1

    @property
    def final(self) -> TraceRow:
        return self.rows[-1]


def _resolved(config: LossConfig, metric: MetricField) -> LossConfig:
    """Fill derived feasibility parameters and check cross-field needs."""
    if config.mu_volume > 0.0 and config.v_target is None:
        raise ValueError("mu_volume > 0 requires v_target")
    if config.feas_margin is not None and config.min_length is not None:
        return config
    mean = float(np.mean(metric.lengths))
    return dataclasses.replace(
        config,
        feas_margin=config.feas_margin if config.feas_margin is not None else 1e-4 * mean,
        min_length=config.min_length if config.min_length is not None else 1e-6 * mean,
    )


# Backtracking halves the step this many times before giving up, which
# spans about six orders of magnitude from the warm-started step.
_MAX_BACKTRACKS = 20


def run_optimization(
    mesh,
    metric: MetricField,
    embedding: Embedding,
    dataset: Dataset | None,
    config: LossConfig,
    stop: StopRule | None = None,
    eta_init: float = 1e-2,
    freeze_embedding: bool = False,
    on_iteration: Callable[[IterationState], None] | None = None,
) -> OptimizationResult:
    """Projected gradient descent with backtracking line search.

    The initial metric is projected to feasibility first, so row 0 of the
    trace is already a feasible point. Each iteration takes one gradient,
    then tries steps eta, eta/2, ... until the candidate (after its own
    feasibility projection) does not increase the true loss; the accepted
    step is doubled as the next iteration's first try. Stop reasons:
    ``grad_tol``, ``loss_tol``, ``max_iters``, ``stalled``.
    """
    if eta_init <= 0.0 or not math.isfinite(eta_init):
        raise ValueError(f"eta_init must be positive and finite, got {eta_init}")
    stop = stop if stop is not None else StopRule()
    config = _resolved(config, metric)
    metric = feasibility_projection(mesh, metric, config.feas_margin, config.min_length)
    coords_free = not freeze_embedding

    traced = _TracedLoss(mesh, config, dataset, freeze_embedding)
    proj = None
    if dataset is not None:
        proj = project_dataset_arrays(dataset.points, embedding, mesh)
    losses = total_loss(mesh, metric, embedding, dataset, config, projections=proj)

    rows: list[TraceRow] = []
    eta_used = 0.0
    eta_next = eta_init
    k = 0
    while True:
        g_len, g_coord = traced.gradient(metric, embedding, proj)
        sq = float(g_len @ g_len)
        if g_coord is not None:
            sq += float(g_coord @ g_coord)
        grad_norm = math.sqrt(sq)
        row = TraceRow(
            iteration=k,
            eta=eta_used,
            l_data=losses.data,
            l_curv=losses.curvature,
            l_dirichlet=losses.dirichlet,
            l_vol=losses.volume,
            l_iso=losses.iso,
            l_total=losses.total,
            max_deficit=geometry.max_feasibility_deficit(mesh, metric, config.feas_margin),
            grad_norm=grad_norm,
        )
        rows.append(row)
        if on_iteration is not None:
            on_iteration(IterationState(row, metric, embedding, g_len, g_coord))
        if grad_norm <= stop.grad_tol:
            reason = "grad_tol"
            break
        if stop.loss_tol > 0.0 and k > 0 and abs(rows[-2].l_total - row.l_total) <= stop.loss_tol:
            reason = "loss_tol"
            break
        if k >= stop.max_iters:
            reason = "max_iters"
            break

        accepted = None
        eta = eta_next
        for _ in range(_MAX_BACKTRACKS + 1):
            cand_lengths = np.maximum(metric.lengths - eta * g_len, config.min_length)
            try:
                cand_metric = feasibility_projection(
                    mesh, MetricField(cand_lengths), config.feas_margin, config.min_length
                )
            except (ValueError, FeasibilityProjectionError):
                eta *= 0.5
                continue
            if coords_free and g_coord is not None:
                new_coords = embedding.coords - eta * g_coord.reshape(embedding.coords.shape)
                try:
                    cand_emb = embedding.with_coords(new_coords)
                except ValueError:
                    eta *= 0.5
                    continue
            else:
                cand_emb = embedding
            cand_proj = proj
            if dataset is not None and coords_free:
                cand_proj = project_dataset_arrays(dataset.points, cand_emb, mesh)
            try:
                cand_losses = total_loss(
                    mesh, cand_metric, cand_emb, dataset, config, projections=cand_proj
                )
            except InfeasibleMetricError:
                eta *= 0.5
                continue
            if cand_losses.total <= losses.total:
                accepted = (cand_metric, cand_emb, cand_proj, cand_losses)
                break
            eta *= 0.5
        if accepted is None:
            reason = "stalled"
            break
        metric, embedding, proj, losses = accepted
        eta_used = eta
        eta_next = eta * 2.0
        k += 1

    return OptimizationResult(
        rows=rows,
        stop_reason=reason,
        metric=metric,
        embedding=embedding,
        config=config,
    )


# --------------------------------------------------------------------------
# Regularization sweep


@dataclass(frozen=True)
class SweepRecord:
    """Outcome at one regularization weight; ``result`` is None on failure."""

    lambda_: float
    status: str  # "ok" or "failed"
    detail: str  # stop reason, or the error for failed entries
    result: OptimizationResult | None


def lambda_sweep(
    mesh,
    metric: MetricField,
    embedding: Embedding,
    dataset: Dataset | None,
    config: LossConfig,
    lambdas: Sequence[float],
    stop: StopRule | None = None,
    eta_init: float = 1e-2,
    freeze_embedding: bool = False,
) -> list[SweepRecord]:
    """Optimize at each weight, warm-starting from the previous optimum.

    Weights must be ascending and non-negative. A failed run is recorded
    and the sweep continues from the last successful state, so one bad
    weight does not void the rest.
    """
    lam = [float(x) for x in lambdas]
    if not lam:
        raise ValueError("lambda sweep needs at least one weight")
    if any(not math.isfinite(x) or x < 0.0 for x in lam):
        raise ValueError(f"sweep weights must be finite and >= 0, got {lam}")
    if any(b < a for a, b in zip(lam, lam[1:])):
        raise ValueError(f"sweep weights must be ascending, got {lam}")

    records: list[SweepRecord] = []
    cur_metric, cur_emb = metric, embedding
    for lv in lam:
        cfg = dataclasses.replace(config, lambda_=lv)
        try:
            res = run_optimization(
                mesh,
                cur_metric,
                cur_emb,
                dataset,
                cfg,
                stop=stop,
                eta_init=eta_init,
                freeze_embedding=freeze_embedding,
            )
        except (InfeasibleMetricError, FeasibilityProjectionError, TapeError) as exc:
            records.append(
                SweepRecord(lv, "failed", f"{type(exc).__name__}: {exc}", None)
            )
            continue
        records.append(SweepRecord(lv, "ok", res.stop_reason, res))
        cur_metric, cur_emb = res.metric, res.embedding
    return records
