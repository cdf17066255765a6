"""Hot numeric kernels, numba-compiled by default with plain fallbacks.

Backend selection happens once at import time through the environment
variable ``METRICMESH_BACKEND``:

* unset or ``numba``: use ``numba.njit`` kernels when numba imports,
  otherwise fall back silently;
* ``numpy``: force the fallback path (pure-Python loops for the tape
  interpreter, vectorized NumPy for the projection scan).

Both variants of every kernel stay importable regardless of the flag so
they can be cross-checked and benchmarked against each other; the flag
only picks which one the library routes through.
"""

from __future__ import annotations

import math
import os

import numpy as np

BACKEND_ENV_VAR = "METRICMESH_BACKEND"

_requested = os.environ.get(BACKEND_ENV_VAR, "numba").strip().lower()

try:
    from numba import njit

    NUMBA_IMPORTABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_IMPORTABLE = False

USING_NUMBA = NUMBA_IMPORTABLE and _requested != "numpy"


def backend_name() -> str:
    """Name of the kernel path the library is routing through."""
    return "numba" if USING_NUMBA else "numpy"


# --------------------------------------------------------------------------
# Tape opcodes. The recorder in autodiff.py emits these; the interpreters
# below replay them. Codes are stable within a process, never serialized.

OP_CONST = 0
OP_INPUT = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_NEG = 6
OP_SQRT = 7
OP_LOG = 8
OP_EXP = 9
OP_POWC = 10
OP_ACOS = 11
OP_MIN = 12
OP_MAX = 13
OP_ADDC = 14
OP_MULC = 15

OP_NAMES = (
    "const",
    "input",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "sqrt",
    "log",
    "exp",
    "pow",
    "arccos",
    "min",
    "max",
    "add",
    "mul",
)

# arccos derivative is evaluated at arguments clamped to this magnitude so
# the one-sided value at the boundary stays finite.
ACOS_DERIV_CLAMP = 1.0 - 1e-12


def _tape_forward(ops, arg1, arg2, aux, inputs, values):
    """Replay a recorded tape front to back, filling ``values``."""
    n = ops.shape[0]
    for i in range(n):
        op = ops[i]
        if op == OP_INPUT:
            v = inputs[arg1[i]]
        elif op == OP_CONST:
            v = aux[i]
        elif op == OP_ADD:
            v = values[arg1[i]] + values[arg2[i]]
        elif op == OP_SUB:
            v = values[arg1[i]] - values[arg2[i]]
        elif op == OP_MUL:
            v = values[arg1[i]] * values[arg2[i]]
        elif op == OP_DIV:
            v = values[arg1[i]] / values[arg2[i]]
        elif op == OP_NEG:
            v = -values[arg1[i]]
        elif op == OP_SQRT:
            # IEEE results instead of the raising math-module semantics, so
            # the interpreted and jitted paths agree; callers scan for
            # non-finites and report the offending node
            u = values[arg1[i]]
            v = math.sqrt(u) if u >= 0.0 else math.nan
        elif op == OP_LOG:
            u = values[arg1[i]]
            if u > 0.0:
                v = math.log(u)
            elif u == 0.0:
                v = -math.inf
            else:
                v = math.nan
        elif op == OP_EXP:
            u = values[arg1[i]]
            v = math.inf if u > 709.782712893384 else math.exp(u)
        elif op == OP_POWC:
            v = values[arg1[i]] ** aux[i]
        elif op == OP_ACOS:
            u = values[arg1[i]]
            if u > 1.0:
                u = 1.0
            elif u < -1.0:
                u = -1.0
            v = math.acos(u)
        elif op == OP_MIN:
            va = values[arg1[i]]
            vb = values[arg2[i]]
            v = va if va <= vb else vb
        elif op == OP_MAX:
            va = values[arg1[i]]
            vb = values[arg2[i]]
            v = va if va >= vb else vb
        elif op == OP_ADDC:
            v = values[arg1[i]] + aux[i]
        else:  # OP_MULC
            v = values[arg1[i]] * aux[i]
        values[i] = v
    return 0


def _tape_backward(ops, arg1, arg2, aux, values, adj):
    """Reverse sweep accumulating adjoints; ``adj`` arrives seeded.

    Local partials are recomputed from the forward values, so the same
    tape can be replayed at fresh inputs before differentiating. Ties in
    min/max route the whole adjoint to the first argument.
    """
    n = ops.shape[0]
    for i in range(n - 1, -1, -1):
        g = adj[i]
        if g == 0.0:
            continue
        op = ops[i]
        if op == OP_ADD:
            adj[arg1[i]] += g
            adj[arg2[i]] += g
        elif op == OP_SUB:
            adj[arg1[i]] += g
            adj[arg2[i]] -= g
        elif op == OP_MUL:
            adj[arg1[i]] += g * values[arg2[i]]
            adj[arg2[i]] += g * values[arg1[i]]
        elif op == OP_DIV:
            vb = values[arg2[i]]
            adj[arg1[i]] += g / vb
            adj[arg2[i]] -= g * values[i] / vb
        elif op == OP_NEG:
            adj[arg1[i]] -= g
        elif op == OP_SQRT:
            adj[arg1[i]] += g * 0.5 / values[i]
        elif op == OP_LOG:
            adj[arg1[i]] += g / values[arg1[i]]
        elif op == OP_EXP:
            adj[arg1[i]] += g * values[i]
        elif op == OP_POWC:
            c = aux[i]
            adj[arg1[i]] += g * c * values[arg1[i]] ** (c - 1.0)
        elif op == OP_ACOS:
            u = values[arg1[i]]
            if u > ACOS_DERIV_CLAMP:
                u = ACOS_DERIV_CLAMP
            elif u < -ACOS_DERIV_CLAMP:
                u = -ACOS_DERIV_CLAMP
            adj[arg1[i]] -= g / math.sqrt(1.0 - u * u)
        elif op == OP_MIN:
            if values[arg1[i]] <= values[arg2[i]]:
                adj[arg1[i]] += g
            else:
                adj[arg2[i]] += g
        elif op == OP_MAX:
            if values[arg1[i]] >= values[arg2[i]]:
                adj[arg1[i]] += g
            else:
                adj[arg2[i]] += g
        elif op == OP_ADDC:
            adj[arg1[i]] += g
        elif op == OP_MULC:
            adj[arg1[i]] += g * aux[i]
        # OP_CONST / OP_INPUT have no parents.
    return 0


tape_forward_py = _tape_forward
tape_backward_py = _tape_backward

if NUMBA_IMPORTABLE:
    # numpy error model: division by zero yields inf/nan exactly like the
    # pure-python interpreters, and the callers' finiteness scans report it
    tape_forward_nb = njit(cache=True, error_model="numpy")(_tape_forward)
    tape_backward_nb = njit(cache=True, error_model="numpy")(_tape_backward)
else:  # pragma: no cover
    tape_forward_nb = None
    tape_backward_nb = None

tape_forward = tape_forward_nb if USING_NUMBA else tape_forward_py
tape_backward = tape_backward_nb if USING_NUMBA else tape_backward_py


# --------------------------------------------------------------------------
# Closest point on a triangle, batched over points x faces.
#
# Classic region decomposition on the barycentric-coordinate plane. Works
# in any ambient dimension since only dot products of edge vectors enter.
# Degenerate (collinear) triangles fall back to the best edge projection.


def _closest_point_single(p, a, b, c):
    """Barycentric coordinates of the point on triangle abc closest to p."""
    n = p.shape[0]
    d1 = 0.0
    d2 = 0.0
    d3 = 0.0
    d4 = 0.0
    d5 = 0.0
    d6 = 0.0
    for k in range(n):
        ab = b[k] - a[k]
        ac = c[k] - a[k]
        ap = p[k] - a[k]
        bp = p[k] - b[k]
        cp = p[k] - c[k]
        d1 += ab * ap
        d2 += ac * ap
        d3 += ab * bp
        d4 += ac * bp
        d5 += ab * cp
        d6 += ac * cp
    if d1 <= 0.0 and d2 <= 0.0:
        return 1.0, 0.0, 0.0
    if d3 >= 0.0 and d4 <= d3:
        return 0.0, 1.0, 0.0
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return 1.0 - v, v, 0.0
    if d6 >= 0.0 and d5 <= d6:
        return 0.0, 0.0, 1.0
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return 1.0 - w, 0.0, w
    va = d3 * d6 - d4 * d5
    if va <= 0.0 and d4 - d3 >= 0.0 and d5 - d6 >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return 0.0, 1.0 - w, w
    denom = va + vb + vc
    if denom > 0.0 and math.isfinite(denom):
        v = vb / denom
        w = vc / denom
        return 1.0 - v - w, v, w
    # Degenerate triangle: best of the three edge projections.
    best_sq = math.inf
    b0 = 1.0
    b1 = 0.0
    b2 = 0.0
    for e in range(3):
        if e == 0:
            u0, u1 = a, b
        elif e == 1:
            u0, u1 = b, c
        else:
            u0, u1 = c, a
        dd = 0.0
        dn = 0.0
        for k in range(n):
            ev = u1[k] - u0[k]
            dd += ev * ev
            dn += ev * (p[k] - u0[k])
        t = 0.0
        if dd > 0.0:
            t = dn / dd
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
        sq = 0.0
        for k in range(n):
            q = u0[k] + t * (u1[k] - u0[k])
            r = p[k] - q
            sq += r * r
        if sq < best_sq:
            best_sq = sq
            if e == 0:
                b0, b1, b2 = 1.0 - t, t, 0.0
            elif e == 1:
                b0, b1, b2 = 0.0, 1.0 - t, t
            else:
                b0, b1, b2 = t, 0.0, 1.0 - t
    return b0, b1, b2


def _make_project_points(closest_point):
    def project(points, coords, faces, out_face, out_bary, out_sq):
        npts = points.shape[0]
        nf = faces.shape[0]
        n = points.shape[1]
        for ip in range(npts):
            p = points[ip]
            best = math.inf
            best_f = -1
            bb0 = 0.0
            bb1 = 0.0
            bb2 = 0.0
            for f in range(nf):
                a = coords[faces[f, 0]]
                b = coords[faces[f, 1]]
                c = coords[faces[f, 2]]
                b0, b1, b2 = closest_point(p, a, b, c)
                sq = 0.0
                for k in range(n):
                    q = b0 * a[k] + b1 * b[k] + b2 * c[k]
                    r = p[k] - q
                    sq += r * r
                if sq < best:
                    best = sq
                    best_f = f
                    bb0 = b0
                    bb1 = b1
                    bb2 = b2
            out_face[ip] = best_f
            out_bary[ip, 0] = bb0
            out_bary[ip, 1] = bb1
            out_bary[ip, 2] = bb2
            out_sq[ip] = best
        return 0

    return project


closest_point_py = _closest_point_single
_project_points_loop_py = _make_project_points(_closest_point_single)

if NUMBA_IMPORTABLE:
    closest_point_nb = njit(cache=True, error_model="numpy")(_closest_point_single)
    project_points_nb = njit(cache=True, error_model="numpy")(
        _make_project_points(closest_point_nb)
    )
else:  # pragma: no cover
    closest_point_nb = None
    project_points_nb = None


def project_points_numpy(points, coords, faces, out_face, out_bary, out_sq):
    """Vectorized fallback for the all-points x all-faces projection scan.

    Mirrors the branch order of ``_closest_point_single`` exactly via a
    first-true-wins select, so both paths agree bitwise on the chosen
    region and tie-break to the lowest face index through argmin.
    """
    a = coords[faces[:, 0]]  # (F, n)
    b = coords[faces[:, 1]]
    c = coords[faces[:, 2]]
    ab = b - a
    ac = c - a
    npts = points.shape[0]
    nf = faces.shape[0]
    for ip in range(npts):
        p = points[ip]
        ap = p[None, :] - a
        bp = p[None, :] - b
        cp = p[None, :] - c
        d1 = np.einsum("fk,fk->f", ab, ap)
        d2 = np.einsum("fk,fk->f", ac, ap)
        d3 = np.einsum("fk,fk->f", ab, bp)
        d4 = np.einsum("fk,fk->f", ac, bp)
        d5 = np.einsum("fk,fk->f", ab, cp)
        d6 = np.einsum("fk,fk->f", ac, cp)
        vc = d1 * d4 - d3 * d2
        vb = d5 * d2 - d1 * d6
        va = d3 * d6 - d4 * d5
        with np.errstate(divide="ignore", invalid="ignore"):
            v_ab = np.where(d1 != d3, d1 / (d1 - d3), 0.0)
            w_ac = np.where(d2 != d6, d2 / (d2 - d6), 0.0)
            den_bc = (d4 - d3) + (d5 - d6)
            w_bc = np.where(den_bc != 0.0, (d4 - d3) / den_bc, 0.0)
            denom = va + vb + vc
            v_in = np.where(denom != 0.0, vb / denom, 0.0)
            w_in = np.where(denom != 0.0, vc / denom, 0.0)
        conds = [
            (d1 <= 0.0) & (d2 <= 0.0),
            (d3 >= 0.0) & (d4 <= d3),
            (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0),
            (d6 >= 0.0) & (d5 <= d6),
            (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0),
            (va <= 0.0) & (d4 - d3 >= 0.0) & (d5 - d6 >= 0.0),
        ]
        ones = np.ones(nf)
        zeros = np.zeros(nf)
        b0 = np.select(conds, [ones, zeros, 1.0 - v_ab, zeros, 1.0 - w_ac, zeros], 1.0 - v_in - w_in)
        b1 = np.select(conds, [zeros, ones, v_ab, zeros, zeros, 1.0 - w_bc], v_in)
        b2 = np.select(conds, [zeros, zeros, zeros, ones, w_ac, w_bc], w_in)
        interior = ~(conds[0] | conds[1] | conds[2] | conds[3] | conds[4] | conds[5])
        bad = interior & ~((denom > 0.0) & np.isfinite(denom))
        if np.any(bad):
            for f in np.flatnonzero(bad):
                b0[f], b1[f], b2[f] = _closest_point_single(p, a[f], b[f], c[f])
        q = b0[:, None] * a + b1[:, None] * b + b2[:, None] * c
        sq = np.einsum("fk,fk->f", p[None, :] - q, p[None, :] - q)
        f_best = int(np.argmin(sq))
        out_face[ip] = f_best
        out_bary[ip, 0] = b0[f_best]
        out_bary[ip, 1] = b1[f_best]
        out_bary[ip, 2] = b2[f_best]
        out_sq[ip] = sq[f_best]
    return 0


project_points_py = project_points_numpy
project_points = project_points_nb if USING_NUMBA else project_points_numpy
