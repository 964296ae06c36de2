"""Post-training dynamics analysis.

Covers the eigenspectrum of the recurrent matrix (who left the unit circle),
projection of probe-driven activity onto the top-3 variance axes, grouping of
the 8 memory states into centroids, and the cube geometry of those centroids
(12 edges : 12 face diagonals : 4 body diagonals, lengths 1 : sqrt2 : sqrt3).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .linalg import eigenvalues, pca_top_k
from .model import ModelConfig, RnnParams, forward
from .task import Trial

IDEAL_RATIOS = (1.0, np.sqrt(2.0), np.sqrt(3.0))
CUBE_GROUP_SIZES = (12, 12, 4)


@dataclass
class Spectrum:
    eigenvalues: np.ndarray  # complex128
    n_outside: int
    radius_min: float
    radius_max: float
    radius_mean: float
    eps_circle: float


@dataclass
class ProjectionResult:
    points: np.ndarray                     # (t_steps - prefix) x 3
    explained_variance_ratio: np.ndarray   # 3
    components: np.ndarray                 # 3 x n_units
    start_step: int = 0                    # probe step of points[0]


@dataclass
class CubeReport:
    state_labels: list                     # 8 sign triples, sorted
    centroids: np.ndarray                  # 8 x 3
    edge_group: tuple | None = None        # (count, mean length)
    face_group: tuple | None = None
    body_group: tuple | None = None
    within_state_spread: float = 0.0
    separation_ratio: float = 0.0
    missing_states: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.missing_states

    def group_ratios(self):
        """Mean lengths normalized by the edge mean (ideal: 1, sqrt2, sqrt3)."""
        if not self.complete:
            raise ValueError("cube metrics unavailable: missing states")
        edge = self.edge_group[1]
        return (1.0, self.face_group[1] / edge, self.body_group[1] / edge)

    def to_dict(self) -> dict:
        # separation_ratio is infinite when clusters have zero spread; JSON
        # carries that as null
        sep = self.separation_ratio
        out = {
            "state_labels": [list(map(int, s)) for s in self.state_labels],
            "centroids": np.asarray(self.centroids).tolist(),
            "missing_states": [list(map(int, s)) for s in self.missing_states],
            "within_state_spread": self.within_state_spread,
            "separation_ratio": sep if np.isfinite(sep) else None,
        }
        for name in ("edge_group", "face_group", "body_group"):
            g = getattr(self, name)
            out[name] = None if g is None else {"count": g[0], "mean_length": g[1]}
        return out


def spectrum(w_rec: np.ndarray, eps_circle: float = 0.05) -> Spectrum:
    """Eigenvalues of the recurrent matrix plus unit-circle statistics."""
    vals = eigenvalues(w_rec)
    radii = np.abs(vals)
    return Spectrum(
        eigenvalues=vals,
        n_outside=int(np.sum(radii > 1.0 + eps_circle)),
        radius_min=float(radii.min()),
        radius_max=float(radii.max()),
        radius_mean=float(radii.mean()),
        eps_circle=eps_circle,
    )


def committed_mask(targets: np.ndarray) -> np.ndarray:
    return np.all(np.abs(targets) == 1.0, axis=1)


def settle_step(targets: np.ndarray) -> int:
    """First step at which every channel holds a committed +-1 value."""
    mask = committed_mask(targets)
    return int(np.argmax(mask)) if mask.any() else 0


def collect_and_project(params: RnnParams, model_cfg: ModelConfig,
                        probe: Trial) -> ProjectionResult:
    """Run the probe, drop the settle-in prefix, project onto top-3 axes."""
    trace = forward(params, model_cfg, probe.inputs)
    prefix = settle_step(probe.targets)
    activity = trace.h[prefix:]
    components, projected, ratios = pca_top_k(activity, 3)
    return ProjectionResult(points=projected, explained_variance_ratio=ratios,
                            components=components, start_step=prefix)


def _hold_mask(targets: np.ndarray, start_step: int, hold_margin: int) -> np.ndarray:
    """Steps in a settled hold: committed on all channels, at least
    hold_margin steps past the most recent target change, at/after start."""
    t_steps = targets.shape[0]
    mask = committed_mask(targets)
    mask[:start_step] = False
    changed = np.nonzero(np.any(targets[1:] != targets[:-1], axis=1))[0] + 1
    for t_c in changed:
        mask[t_c:min(t_steps, t_c + hold_margin)] = False
    return mask


def memory_states(projection: ProjectionResult, probe: Trial,
                  hold_margin: int = 10) -> CubeReport:
    """Centroid per memory state plus the cube-distance geometry.

    Projected points are grouped by the probe target's sign triple over the
    settled hold windows. The 28 pairwise centroid distances are sorted and
    split by ideal-cube multiplicity into 12 edges, 12 face diagonals and 4
    body diagonals. When fewer than 8 states appear the report only carries
    the missing-state list.
    """
    targets = probe.targets
    mask = _hold_mask(targets, projection.start_step, hold_margin)

    groups: dict = {}
    for step in np.nonzero(mask)[0]:
        idx = step - projection.start_step
        if idx < 0 or idx >= len(projection.points):
            continue
        label = tuple(int(v) for v in targets[step])
        groups.setdefault(label, []).append(projection.points[idx])

    all_labels = sorted(product((-1, 1), repeat=3))
    missing = [s for s in all_labels if s not in groups]
    present = [s for s in all_labels if s in groups]
    centroids = np.array([np.mean(groups[s], axis=0) for s in present]) \
        if present else np.zeros((0, 3))
    if missing:
        return CubeReport(state_labels=present, centroids=centroids,
                          missing_states=missing)

    spreads = [
        float(np.sqrt(np.mean(np.sum((np.asarray(groups[s]) - c) ** 2, axis=1))))
        for s, c in zip(present, centroids)
    ]
    within = float(np.mean(spreads))

    dists = sorted(
        float(np.linalg.norm(centroids[i] - centroids[j]))
        for i in range(8) for j in range(i + 1, 8)
    )
    e, f = CUBE_GROUP_SIZES[0], CUBE_GROUP_SIZES[0] + CUBE_GROUP_SIZES[1]
    edge_group = (e, float(np.mean(dists[:e])))
    face_group = (CUBE_GROUP_SIZES[1], float(np.mean(dists[e:f])))
    body_group = (CUBE_GROUP_SIZES[2], float(np.mean(dists[f:])))
    separation = dists[0] / within if within > 0 else float("inf")
    return CubeReport(state_labels=present, centroids=centroids,
                      edge_group=edge_group, face_group=face_group,
                      body_group=body_group, within_state_spread=within,
                      separation_ratio=float(separation))


@dataclass
class ConnectivityGrid:
    values: np.ndarray
    vmin: float
    vmax: float


def export_connectivity(w_rec: np.ndarray) -> ConnectivityGrid:
    """Raw matrix values plus the range for color scaling; no transform."""
    w = np.asarray(w_rec, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"connectivity matrix must be square, got {w.shape}")
    return ConnectivityGrid(values=w, vmin=float(w.min()), vmax=float(w.max()))


def procrustes_align(a: np.ndarray, b: np.ndarray):
    """Best orthogonal map (rotation/reflection, no scaling) of centered a
    onto centered b; returns (transform, residual norm)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"point sets differ in shape: {a.shape} vs {b.shape}")
    a_c = a - a.mean(axis=0)
    b_c = b - b.mean(axis=0)
    u, _, vt = np.linalg.svd(a_c.T @ b_c)
    rot = u @ vt
    residual = float(np.linalg.norm(a_c @ rot - b_c))
    return rot, residual


@dataclass
class RealizationSummary:
    per_report: list   # dicts: separation_ratio, group means, ratio errors
    pairwise: list     # dicts: i, j, raw_diff, procrustes_residual


def compare_realizations(reports: list) -> RealizationSummary:
    """Cross-realization table: cube quality per report and pairwise
    centroid alignment (raw distance vs best-rotation residual)."""
    if len(reports) < 2:
        raise ValueError("need at least 2 reports to compare")
    labels = reports[0].state_labels
    for r in reports:
        if not r.complete:
            raise ValueError("cannot compare reports with missing states")
        if r.state_labels != labels:
            raise ValueError("state labels do not match across reports")

    per_report = []
    for r in reports:
        ratios = r.group_ratios()
        per_report.append({
            "separation_ratio": r.separation_ratio,
            "edge_mean": r.edge_group[1],
            "face_mean": r.face_group[1],
            "body_mean": r.body_group[1],
            "face_ratio_error": abs(ratios[1] - IDEAL_RATIOS[1]) / IDEAL_RATIOS[1],
            "body_ratio_error": abs(ratios[2] - IDEAL_RATIOS[2]) / IDEAL_RATIOS[2],
        })

    pairwise = []
    for i in range(len(reports)):
        for j in range(i + 1, len(reports)):
            a, b = reports[i].centroids, reports[j].centroids
            raw = float(np.linalg.norm(a - b))
            _, residual = procrustes_align(a, b)
            pairwise.append({"i": i, "j": j, "raw_diff": raw,
                             "procrustes_residual": residual})
    return RealizationSummary(per_report=per_report, pairwise=pairwise)


# ---------------------------------------------------------------------------
# CSV emission (canonical text outputs; 32-bit value precision)

F32_FMT = "%.9g"


def write_spectrum_csv(path, spec: Spectrum) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["re", "im"])
        for lam in spec.eigenvalues:
            writer.writerow([F32_FMT % lam.real, F32_FMT % lam.imag])


def state_label_int(target_row) -> int:
    """Committed sign triple encoded as 0..7 (channel 0 = MSB); -1 otherwise."""
    if not np.all(np.abs(target_row) == 1.0):
        return -1
    bits = [(1 if v > 0 else 0) for v in target_row]
    return (bits[0] << 2) | (bits[1] << 1) | bits[2]


def write_projection_csv(path, projection: ProjectionResult, probe: Trial) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "pc1", "pc2", "pc3", "state_label"])
        for i, point in enumerate(projection.points):
            step = projection.start_step + i
            writer.writerow(
                [step] + [F32_FMT % v for v in point]
                + [state_label_int(probe.targets[step])]
            )


def write_connectivity_csv(path, grid: ConnectivityGrid) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in grid.values:
            writer.writerow([F32_FMT % v for v in row])


def read_connectivity_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return np.asarray(rows)
