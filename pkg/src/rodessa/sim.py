"""Monte Carlo comparison of robust MSSA variants on harmonic signals.

Each series is ``A_j cos(2 pi i / 10 + C_j)`` plus Gaussian noise, with
outliers of size ``gamma * sigma`` added to randomly chosen cells
(cellwise) or to every component of randomly chosen time points
(casewise). Methods are compared by the mean squared reconstruction error
against the clean signal (RE) and the mean squared 20-step forecast error
against its continuation (FE).
"""
import csv
import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .calibration import calibrate_cs_tuning
from .fit import RodessaConfig, irls_fit
from .forecast import forecast, recurrence_coefficients
from .lowrank import (
    biweight_lowrank,
    l1_lowrank,
    pcp_lowrank,
    svd_lowrank,
)
from .series import EmbeddingSpec, MultivariateSeries, diagonal_average, embed

METHODS = ("CMSSA", "RLM", "CHENG", "CS", "RODESSA")
MODES = ("none", "cellwise", "casewise")
PERIOD = 10


@dataclass(frozen=True)
class Scenario:
    amplitudes: tuple
    phases: tuple
    sigma: float = 20.0
    N: int = 70
    name: str = ""

    def __post_init__(self):
        if len(self.amplitudes) != len(self.phases):
            raise ValueError("amplitudes and phases must have the same length")
        if not self.sigma >= 0:
            raise ValueError("noise scale must be non-negative")

    @property
    def p(self):
        return len(self.amplitudes)

    def signal(self, i):
        """Clean signal at 1-based times ``i``; shape ``(len(i), p)``."""
        i = np.asarray(i, dtype=float)[:, None]
        A = np.asarray(self.amplitudes, dtype=float)
        C = np.asarray(self.phases, dtype=float)
        return A * np.cos(2 * np.pi * i / PERIOD + C)


SCENARIOS = {
    1: Scenario((20, 30, 40, 50), (0, 0, 0, 0), name="S1"),
    2: Scenario((35, 35, 35, 35), (0, np.pi / 5, 0, np.pi / 5), name="S2"),
    3: Scenario((20, 30, 40, 50), (0, np.pi / 5, 0, np.pi / 5), name="S3"),
}


@dataclass(frozen=True)
class Contamination:
    mode: str = "none"
    fraction: float = 0.0
    gamma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown contamination mode {self.mode!r}")
        if self.mode != "none" and not 0 < self.fraction < 1:
            raise ValueError(f"contamination fraction must lie in (0, 1), got {self.fraction}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")


def generate(scenario, seed, shared_noise=False):
    """Noisy series and the clean signal it was drawn around.

    Noise is drawn independently for every (time, series) cell unless
    ``shared_noise`` is set, in which case one draw per time point is added
    to all series.
    """
    rng = np.random.default_rng(seed)
    N, p = scenario.N, scenario.p
    clean = scenario.signal(np.arange(1, N + 1))
    if shared_noise:
        noise = scenario.sigma * rng.standard_normal((N, 1))
    else:
        noise = scenario.sigma * rng.standard_normal((N, p))
    return MultivariateSeries(clean + noise), clean


def n_outliers(contamination, N, p):
    if contamination.mode == "cellwise":
        return int(math.floor(contamination.fraction * p * N + 1e-9))
    if contamination.mode == "casewise":
        return int(math.floor(contamination.fraction * N + 1e-9))
    return 0


def contaminate(series, contamination, sigma):
    """Shift randomly chosen cells or cases by ``gamma * sigma``.

    Returns the contaminated series and the 0-based positions that were
    modified: ``(time, series)`` pairs for cellwise contamination, time
    indices for casewise.
    """
    N, p = series.N, series.p
    k = n_outliers(contamination, N, p)
    shift = contamination.gamma * sigma
    rng = np.random.default_rng(contamination.seed)
    values = np.array(series.values)
    if contamination.mode == "cellwise":
        flat = np.sort(rng.choice(N * p, size=k, replace=False))
        rows, cols = np.divmod(flat, p)
        values[rows, cols] += shift
        positions = list(zip(rows.tolist(), cols.tolist()))
    elif contamination.mode == "casewise":
        rows = np.sort(rng.choice(N, size=k, replace=False))
        values[rows, :] += shift
        positions = rows.tolist()
    else:
        positions = []
    if shift == 0:
        return series, positions
    return series.with_values(values), positions


def metrics(reconstruction, forecasts, clean_signal, extended_signal):
    """Mean squared reconstruction and forecast errors (RE, FE)."""
    rec = getattr(reconstruction, "values", reconstruction)
    re = float(np.mean((np.asarray(rec) - clean_signal) ** 2))
    fe = float(np.mean((np.asarray(forecasts) - extended_signal) ** 2))
    return re, fe


def method_fit(method, series, spec, q, config=None):
    """Rank-q factor pair of ``method`` on the trajectory matrix of ``series``."""
    traj = embed(series, spec)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if method == "CMSSA":
            return svd_lowrank(traj, q)
        if method == "RLM":
            return l1_lowrank(traj, q)
        if method == "CHENG":
            return pcp_lowrank(traj, q)
        if method == "CS":
            cfg = config if config is not None else RodessaConfig(q)
            c = calibrate_cs_tuning(series.N, series.p, spec.L, cfg.delta_c,
                                    cfg.calibration_replications, cfg.seed)
            return biweight_lowrank(traj, q, c, init=svd_lowrank(traj, q))
        if method == "RODESSA":
            cfg = config if config is not None else RodessaConfig(q)
            return irls_fit(series, spec, cfg).fit
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def run_method(method, series, spec, q, config=None, h=20):
    """Reconstruction (N x p) and h-step forecasts (h x p) of ``method``."""
    fit = method_fit(method, series, spec, q, config)
    rec = diagonal_average(fit.product, spec, series.p, like=series)
    model = recurrence_coefficients(fit)
    return rec, forecast(model, rec, h)


# --- study ------------------------------------------------------------------

@dataclass(frozen=True)
class StudyGrid:
    scenarios: tuple = (3,)
    modes: tuple = ("cellwise",)
    fractions: tuple = (0.2,)
    gammas: tuple = (0.0, 8.0)
    methods: tuple = METHODS
    L: int = 35
    q: int = 2
    h: int = 20
    shared_noise: bool = False
    delta_c: float = 0.9
    delta_r: float = 0.9

    def cells(self):
        for s in self.scenarios:
            for mode in self.modes:
                for eps in self.fractions:
                    for gamma in self.gammas:
                        yield s, mode, eps, gamma


_MODE_CODE = {"none": 0, "cellwise": 1, "casewise": 2}


def replication_seed(base_seed, scenario_id, mode, fraction, gamma, rep):
    """Seed of one replication of one grid cell; independent of run order."""
    ss = np.random.SeedSequence([base_seed, scenario_id, _MODE_CODE[mode],
                                 int(round(fraction * 1e6)), int(round(gamma * 1e6)), rep])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _run_replication(args):
    grid, scenario_id, mode, fraction, gamma, rep, base_seed = args
    scenario = SCENARIOS[scenario_id]
    seed = replication_seed(base_seed, scenario_id, mode, fraction, gamma, rep)
    noise_seed, cont_seed = np.random.SeedSequence(seed).generate_state(2)
    series, clean = generate(scenario, int(noise_seed), grid.shared_noise)
    cont = Contamination(mode, fraction, gamma, int(cont_seed))
    series, _ = contaminate(series, cont, scenario.sigma)
    spec = EmbeddingSpec(scenario.N, grid.L)
    extended = scenario.signal(np.arange(scenario.N + 1, scenario.N + grid.h + 1))
    config = RodessaConfig(grid.q, delta_c=grid.delta_c, delta_r=grid.delta_r, seed=base_seed)
    out = {}
    for method in grid.methods:
        rec, fc = run_method(method, series, spec, grid.q, config, grid.h)
        out[method] = metrics(rec, fc, clean, extended)
    return out


@dataclass
class StudyReport:
    """Mean RE/FE per (scenario, mode, fraction, gamma, method)."""

    rows: list = field(default_factory=list)
    replications: int = 0
    base_seed: int = 0

    FIELDS = ("scenario", "mode", "fraction", "gamma", "method", "RE", "FE", "replications",
              "base_seed")

    def lookup(self, scenario, mode, fraction, gamma, method):
        for r in self.rows:
            if (r["scenario"], r["mode"], r["fraction"], r["gamma"], r["method"]) == (
                    scenario, mode, fraction, gamma, method):
                return r
        raise KeyError((scenario, mode, fraction, gamma, method))

    def to_csv(self, comment=None):
        buf = io.StringIO()
        if comment:
            for line in comment.splitlines():
                buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.FIELDS)
        for r in self.rows:
            writer.writerow([r["scenario"], r["mode"], repr(r["fraction"]), repr(r["gamma"]),
                             r["method"], repr(r["RE"]), repr(r["FE"]), r["replications"],
                             r["base_seed"]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        rows = []
        for rec in csv.DictReader(lines):
            rows.append({
                "scenario": int(rec["scenario"]), "mode": rec["mode"],
                "fraction": float(rec["fraction"]), "gamma": float(rec["gamma"]),
                "method": rec["method"], "RE": float(rec["RE"]), "FE": float(rec["FE"]),
                "replications": int(rec["replications"]), "base_seed": int(rec["base_seed"]),
            })
        reps = rows[0]["replications"] if rows else 0
        seed = rows[0]["base_seed"] if rows else 0
        return cls(rows, reps, seed)


def run_study(grid, replications, base_seed, jobs=1):
    """Average RE and FE over ``replications`` for every grid cell and method.

    Results depend only on ``base_seed`` and the grid, not on ``jobs``.
    """
    if replications < 1:
        raise ValueError("need at least one replication")
    tasks = [(grid, s, mode, eps, gamma, rep, base_seed)
             for s, mode, eps, gamma in grid.cells() for rep in range(replications)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_replication, tasks, chunksize=4))
    else:
        results = [_run_replication(t) for t in tasks]
    report = StudyReport(replications=replications, base_seed=base_seed)
    for c, (s, mode, eps, gamma) in enumerate(grid.cells()):
        chunk = results[c * replications:(c + 1) * replications]
        for method in grid.methods:
            re = math.fsum(r[method][0] for r in chunk) / replications
            fe = math.fsum(r[method][1] for r in chunk) / replications
            report.rows.append({"scenario": s, "mode": mode, "fraction": eps, "gamma": gamma,
                                "method": method, "RE": re, "FE": fe,
                                "replications": replications, "base_seed": base_seed})
    return report
