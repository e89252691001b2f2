"""Monte Carlo experiment harness: seeded sweeps, table emission, 2D demo.

Recovery sweeps use a burst ensemble: in-band signals concentrated on a
short active window at the end of the record, with the long quiet prefix
staying inside the Voronoi cell. This is the periodic analogue of the
finite-energy tails that make the time-domain support restriction of the
out-of-band solver meaningful; the per-oversampling active-window lengths
below are calibrated so the recovery thresholds probe the interesting SNR
and bit-depth range.
"""

from __future__ import annotations

import json
import math
import time
import zlib
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.linalg import eigh

from .channels import FoldedRecord, add_noise, fold_signal, lattice_quantize, scalar_quantize
from .lattices import (A2, DN, E8, ZN, ConfigurationError, ScaledLattice,
                       in_voronoi_cell, make_lattice, voronoi_cell_polygon)
from .recovery import (B2R2Options, LassoOptions, b2r2_recover,
                       build_oob_operator, check_recovery, hod_recover,
                       lasso_b2r2_recover)
from .signals import SignalConfig, make_test_signal

SCHEMA_VERSION = 1

# (active samples of the signal, active samples assumed by the solver,
# margin leak budget as a fraction of the peak) per oversampling factor,
# for the 8-channel study at duration 2 s and occupied band <= 9.5 Hz
ACTIVE_SCHEDULE = {
    2: (20, 20, 0.06),
    4: (18, 38, 0.06),
    6: (28, 28, 0.06),
    8: (48, 48, 0.03),
}

ARCHITECTURES = {
    # additive-noise architectures: fold lattice only
    "square": {"fold": ZN, "quantizer": None},
    "e8": {"fold": E8, "quantizer": None},
    # quantization architectures
    "sq+sqq": {"fold": ZN, "quantizer": "scalar"},
    "e8+sqq": {"fold": E8, "quantizer": "scalar"},
    "e8+e8q": {"fold": E8, "quantizer": "lattice"},
}


class DemoRecoveryError(RuntimeError):
    """2D demo failed to reconstruct; carries diagnostics."""


# ---------------------------------------------------------------------------
# burst ensemble


_modes_cache: dict = {}


def concentration_modes(K: int, m_max: int, margin: int):
    """In-band (bins 1..m_max) sequences ordered by margin energy fraction.

    Returns ``(leak_fraction, modes)`` with modes as unit-peak columns. The
    leading columns are the most concentrated on the active window
    ``[margin, K)``.
    """
    key = (K, m_max, margin)
    if key not in _modes_cache:
        k = np.arange(K)
        cols = []
        for m in range(1, m_max + 1):
            cols.append(np.cos(2 * np.pi * m * k / K))
            cols.append(np.sin(2 * np.pi * m * k / K))
        W = np.stack(cols, axis=1)
        G = W.T @ W
        Gm = W[:margin].T @ W[:margin]
        vals, vecs = eigh(Gm, G)
        modes = W @ vecs
        modes = modes / np.abs(modes).max(axis=0, keepdims=True)
        _modes_cache[key] = (np.maximum(vals, 0.0), modes)
    return _modes_cache[key]


def burst_signal(rng: np.random.Generator, n_ch: int, K: int, m_max: int,
                 margin: int, gamma: float, lam: float,
                 leak_amp: float = 0.06, min_modes: int = 2) -> np.ndarray:
    """One draw from the burst ensemble (peak normalized to gamma*lam).

    Uses the concentrated modes whose margin amplitude is below
    ``leak_amp`` (at least ``min_modes``); the caller is responsible for
    the fold-free margin check, which depends on the folding lattice.
    """
    _, modes = concentration_modes(K, m_max, margin)
    lk = np.abs(modes[:margin]).max(axis=0)
    n_modes = max(min_modes, int((lk <= leak_amp).sum()))
    coef = rng.standard_normal((n_modes, n_ch))
    f = modes[:, :n_modes] @ coef
    return f * (gamma * lam / np.abs(f).max())


def draw_margin_trial(seed_seq: np.random.SeedSequence, lattice: ScaledLattice,
                      n_ch: int, K: int, m_max: int, margin: int,
                      gamma: float, leak_amp: float, max_tries: int = 80):
    """Draw burst signals until the margin folds to zero for this lattice."""
    from .lattices import fold as _fold
    rng = np.random.default_rng(seed_seq)
    for _ in range(max_tries):
        f = burst_signal(rng, n_ch, K, m_max, margin, gamma, lattice.lam, leak_amp)
        _, p = _fold(f[:margin], lattice)
        if np.all(p == 0):
            return f
    raise ConfigurationError("could not draw a fold-free margin signal")


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """Declarative sweep description; serializes to versioned JSON."""

    name: str = "study8d"
    n_channels: int = 8
    omega_max: float = 10.0
    duration: float = 2.0
    lam: float = 0.1
    dr_factor: float = 10.0
    of_list: tuple = (2, 4, 6, 8)
    snr_db_list: tuple = ()            # finite SNRs; None entry means noiseless
    bits_list: tuple = ()
    architectures: tuple = ("square", "e8")
    algorithm: str = "b2r2"
    hod_order: int = 2
    lasso_mu: Optional[float] = None
    guard: float = 0.04
    tol: float = 1e-10
    max_iters: int = 5000
    noise_law: str = "gaussian"
    n_trials: int = 50
    master_seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = SCHEMA_VERSION
        for key in ("of_list", "snr_db_list", "bits_list", "architectures"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported config schema {version}")
        for key in ("of_list", "snr_db_list", "bits_list", "architectures"):
            if key in d and d[key] is not None:
                d[key] = tuple(d[key])
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def table3_config(n_trials: int = 50, master_seed: int = 0) -> ExperimentConfig:
    """Additive-noise recovery-rate sweep (square vs E8)."""
    return ExperimentConfig(name="additive", snr_db_list=(10, 15, 20, 25, 30, 35, None),
                            bits_list=(), architectures=("square", "e8"),
                            n_trials=n_trials, master_seed=master_seed)


def table4_config(n_trials: int = 50, master_seed: int = 0) -> ExperimentConfig:
    """Quantization recovery-rate sweep (three architectures)."""
    return ExperimentConfig(name="quantization", snr_db_list=(),
                            bits_list=(2, 4, 6, 8, 10, None),
                            architectures=("sq+sqq", "e8+sqq", "e8+e8q"),
                            n_trials=n_trials, master_seed=master_seed)


# ---------------------------------------------------------------------------
# sweep


@dataclass(frozen=True)
class CellResult:
    of: float
    level_kind: str                # "snr", "bits" or "clean"
    level: Optional[float]
    architecture: str
    algorithm: str
    n_trials: int
    n_success: int
    rate: float
    mse_mean: Optional[float]      # over successful trials
    wall_time: float
    error: Optional[str] = None

    @property
    def mse_db(self) -> Optional[float]:
        if self.mse_mean is None or self.mse_mean <= 0:
            return None
        return 10.0 * math.log10(self.mse_mean)


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    cells: tuple


def _level_code(kind: str, level) -> int:
    if level is None:
        return 999999999
    return int(round(float(level) * 1000.0)) & 0xFFFFFFFF


def trial_seed(master_seed: int, of, kind: str, level, trial: int) -> np.random.SeedSequence:
    """Stable per-trial seed from cell coordinates, not grid position."""
    parts = [int(master_seed), int(round(float(of) * 10)),
             zlib.crc32(kind.encode()), _level_code(kind, level), int(trial)]
    return np.random.SeedSequence([p & 0xFFFFFFFF for p in parts])


def _run_trial(cfg: ExperimentConfig, of, kind: str, level, arch_name: str,
               trial: int):
    arch = ARCHITECTURES[arch_name]
    lattice = make_lattice(arch["fold"],
                           cfg.n_channels if arch["fold"] != E8 else 8, cfg.lam)
    fs = of * 2.0 * cfg.omega_max
    K = int(round(fs * cfg.duration))
    m_max = int(math.floor(cfg.omega_max * cfg.duration)) - 1
    band = m_max / cfg.duration
    sig_act, solver_act, leak_amp = ACTIVE_SCHEDULE[int(of)]
    margin = K - sig_act

    # signal and noise seeds are independent of the architecture so that
    # square/E8 cells see paired trials
    sig_seed = trial_seed(cfg.master_seed, of, kind, level, trial)
    f = draw_margin_trial(sig_seed, lattice, cfg.n_channels, K, m_max, margin,
                          cfg.dr_factor, leak_amp)
    rec, p_true = fold_signal(f, lattice)
    clean = rec.samples

    if kind == "snr" and level is not None:
        noise_seed = np.random.SeedSequence([(int(cfg.master_seed) + 7) & 0xFFFFFFFF,
                                             int(round(float(of) * 10)),
                                             _level_code(kind, level), int(trial)])
        rec = add_noise(rec, float(level), noise_seed, law=cfg.noise_law)
    elif kind == "bits" and level is not None:
        if arch["quantizer"] == "scalar":
            rec = scalar_quantize(rec, int(level), cfg.lam)
        elif arch["quantizer"] == "lattice":
            rec = lattice_quantize(rec, lattice, int(level))
        else:
            raise ConfigurationError(f"architecture {arch_name} has no quantizer")

    oob = build_oob_operator(K, band, fs, cfg.guard)
    if cfg.algorithm == "b2r2":
        opts = B2R2Options(support_margin=K - solver_act,
                           bound=cfg.dr_factor * cfg.lam + lattice.d_min,
                           tol=cfg.tol, max_iters=cfg.max_iters)
        result = b2r2_recover(rec, lattice, oob, opts)
    elif cfg.algorithm == "lasso":
        result = lasso_b2r2_recover(rec, lattice, oob, mu=cfg.lasso_mu,
                                    opts=LassoOptions(max_iters=cfg.max_iters))
    elif cfg.algorithm == "hod":
        result = hod_recover(rec, lattice, cfg.hod_order)
    else:
        raise ConfigurationError(f"unknown algorithm {cfg.algorithm!r}")

    chk = check_recovery(result.p_hat, p_true, lattice,
                         f_hat=result.f_hat, f_true=f)
    mse = float(((rec.samples - clean) ** 2).sum() / clean.size)
    return chk.full_success, mse


def _run_cell_trials(cfg: ExperimentConfig, of, kind: str, level, arch: str) -> CellResult:
    eff_kind = "clean" if level is None else kind
    t0 = time.perf_counter()
    try:
        outcomes = [_run_trial(cfg, of, eff_kind if level is None else kind,
                               level, arch, t)
                    for t in range(cfg.n_trials)]
        succ = [m for ok, m in outcomes if ok]
        return CellResult(
            of=float(of), level_kind=eff_kind,
            level=None if level is None else float(level),
            architecture=arch, algorithm=cfg.algorithm,
            n_trials=cfg.n_trials, n_success=len(succ),
            rate=len(succ) / cfg.n_trials,
            mse_mean=(sum(succ) / len(succ)) if succ else None,
            wall_time=time.perf_counter() - t0)
    except Exception as exc:               # per-cell failure, sweep continues
        return CellResult(
            of=float(of), level_kind=eff_kind,
            level=None if level is None else float(level),
            architecture=arch, algorithm=cfg.algorithm,
            n_trials=cfg.n_trials, n_success=0, rate=0.0,
            mse_mean=None, wall_time=time.perf_counter() - t0,
            error=f"{type(exc).__name__}: {exc}")


def run_sweep(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Run every (OF, level, architecture) cell of the sweep.

    Per-trial seeds hash the cell coordinates and the trial index, so adding
    grid cells never perturbs existing ones. Cells are independent tasks;
    results are assembled in grid order, so the outcome is identical for any
    worker count.
    """
    levels = [("snr", s) for s in cfg.snr_db_list] + \
             [("bits", b) for b in cfg.bits_list]
    if not levels:
        levels = [("clean", None)]
    grid = [(of, kind, level, arch)
            for of in cfg.of_list
            for kind, level in levels
            for arch in cfg.architectures]
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as ex:
            cells = list(ex.map(lambda g: _run_cell_trials(cfg, *g), grid))
    else:
        cells = [_run_cell_trials(cfg, *g) for g in grid]
    return ExperimentResult(config=cfg, cells=tuple(cells))


# ---------------------------------------------------------------------------
# emission


def _cell_row(c: CellResult) -> dict:
    return {
        "of": f"{c.of:g}",
        "level_kind": c.level_kind,
        "level": "" if c.level is None else f"{c.level:g}",
        "architecture": c.architecture,
        "algorithm": c.algorithm,
        "n_trials": str(c.n_trials),
        "rate": f"{c.rate:.4f}",
        "mse": "" if c.mse_mean is None else f"{c.mse_mean:.6e}",
        "mse_db": "" if c.mse_db is None else f"{c.mse_db:.3f}",
        "seed": str(_seed_label(c)),
        "error": c.error or "",
    }


def _seed_label(c: CellResult) -> int:
    return zlib.crc32(f"{c.of:g}/{c.level_kind}/{c.level}/{c.architecture}".encode())


def emit_tables(result: ExperimentResult, fmt: str = "csv",
                path: Optional[str] = None) -> str:
    """Render the sweep as csv / json / aligned text; byte-stable per config."""
    rows = [_cell_row(c) for c in result.cells]
    cols = ["of", "level_kind", "level", "architecture", "algorithm",
            "n_trials", "rate", "mse", "mse_db", "seed", "error"]
    if fmt == "csv":
        out = ",".join(cols) + "\n"
        out += "".join(",".join(r[c] for c in cols) + "\n" for r in rows)
    elif fmt == "json":
        payload = {"config": result.config.to_dict(), "cells": rows}
        out = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    elif fmt == "text":
        widths = {c: max(len(c), *(len(r[c]) for r in rows)) if rows else len(c)
                  for c in cols}
        out = " ".join(c.ljust(widths[c]) for c in cols) + "\n"
        out += "".join(" ".join(r[c].ljust(widths[c]) for c in cols) + "\n"
                       for r in rows)
    else:
        raise ConfigurationError(f"unknown format {fmt!r}")
    if path is not None:
        Path(path).write_text(out)
    return out


# ---------------------------------------------------------------------------
# 2D trajectory demo


def demo2d_config(seed: int = 0) -> SignalConfig:
    return SignalConfig(n_channels=2, n_components=14, omega_max=10.0, of=6.0,
                        duration=1.0, dr_factor=3.0, seed=seed, complex_pair=True)


def _start_in_cell_signal(cfg: SignalConfig, lattice: ScaledLattice,
                          max_tries: int = 500):
    """Regenerate until the first sample folds to zero (demo anchor)."""
    from .lattices import fold as _fold
    seed = cfg.seed
    for _ in range(max_tries):
        trial_cfg = SignalConfig(**{**asdict(cfg), "seed": seed})
        handle, sampled = make_test_signal(trial_cfg, lattice.lam)
        _, p0 = _fold(sampled.samples[:1], lattice)
        if np.all(p0 == 0):
            return handle, sampled
        seed += 7919
    raise DemoRecoveryError("no start-in-cell signal found")


def emit_trajectory_demo(outdir, seed: int = 0, lam: float = 1.0,
                         power_trials: int = 200) -> dict:
    """Square vs hexagon folding of the 2D complex demo signal.

    Writes per-geometry trajectory CSVs (original, folded, recovered), the
    Voronoi cell outlines, and returns a summary including the folded-power
    ratio over a fresh ensemble. Raises DemoRecoveryError if either
    geometry misses machine-precision reconstruction.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cfg = demo2d_config(seed)
    fs = cfg.fs
    K = int(round(cfg.duration * fs))
    band = (math.floor(cfg.omega_max * cfg.duration) - 0) / cfg.duration
    summary = {}
    for name, family in (("square", ZN), ("hexagon", A2)):
        lattice = make_lattice(family, 2, lam)
        handle, sampled = _start_in_cell_signal(cfg, lattice)
        f = sampled.samples
        rec, p_true = fold_signal(f, lattice)
        if not in_voronoi_cell(lattice, rec.samples):
            raise DemoRecoveryError(f"{name}: folded samples left the cell")
        oob = build_oob_operator(K, handle.occupied_band_hz, fs, 0.05)
        result = lasso_b2r2_recover(rec, lattice, oob)
        err = float(np.abs(result.f_hat - f).max())
        peak = float(np.abs(f).max())
        if err > 1e-8 * peak:
            raise DemoRecoveryError(
                f"{name}: reconstruction error {err:.3e} exceeds 1e-8 * peak "
                f"(peak {peak:.3f}, iterations {result.iterations})")
        t = sampled.times
        data = np.column_stack([t, f, rec.samples, result.f_hat])
        header = "t,orig0,orig1,folded0,folded1,rec0,rec1"
        np.savetxt(outdir / f"demo2d_{name}.csv", data, delimiter=",",
                   header=header, comments="", fmt="%.12g")
        poly = voronoi_cell_polygon(lattice)
        np.savetxt(outdir / f"cell_{name}.csv", poly, delimiter=",",
                   header="x,y", comments="", fmt="%.12g")
        summary[name] = {"max_error": err, "peak": peak,
                         "iterations": result.iterations}

    summary["power_ratio"] = demo_power_ratio(lam=lam, n_trials=power_trials,
                                              seed=seed)
    (outdir / "demo2d_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def demo_power_ratio(lam: float = 1.0, n_trials: int = 200, seed: int = 0) -> float:
    """Hexagon / square folded-power ratio over the 2D demo ensemble."""
    hexl = make_lattice(A2, 2, lam)
    sq = make_lattice(ZN, 2, lam)
    p_hex = p_sq = 0.0
    for i in range(n_trials):
        cfg = demo2d_config(seed + i)
        _, sampled = make_test_signal(cfg, lam)
        rh, _ = fold_signal(sampled.samples, hexl)
        rs, _ = fold_signal(sampled.samples, sq)
        p_hex += (rh.samples**2).sum()
        p_sq += (rs.samples**2).sum()
    return float(p_hex / p_sq)


# ---------------------------------------------------------------------------
# quantizer bench


def quantize_bench(n_samples: int = 200000, seed: int = 0,
                   bits: tuple = (2, 4, 6)) -> dict:
    """Matched-quantizer scaling law and the mismatched-quantizer null.

    For each supported lattice, compares empirical matched-quantizer MSE on
    uniform cell samples against the per-cell MSE scaled by 4^-B, and
    checks that a common scalar quantizer yields the same MSE on cube- and
    E8-folded data.
    """
    from .moments import sample_uniform_cell
    rng = np.random.default_rng(seed)
    report = {"matched": {}, "mismatched": {}}
    plan = [("z", ZN, 1), ("a2", A2, 2), ("d4", DN, 4), ("e8", E8, 8)]
    for name, family, n in plan:
        lat = make_lattice(family, n, 1.0)
        r = sample_uniform_cell(lat, rng, n_samples)
        base = float((r**2).sum(axis=1).mean())
        rows = {}
        for b in bits:
            rec = FoldedRecord(samples=r, lattice=lat)
            q = lattice_quantize(rec, lat, b)
            mse = float(((r - q.samples) ** 2).sum(axis=1).mean())
            rows[int(b)] = {"mse": mse, "predicted": base * 4.0 ** (-b),
                            "ratio": mse / (base * 4.0 ** (-b))}
        report["matched"][name] = rows
    cube = make_lattice(ZN, 8, 1.0)
    e8 = make_lattice(E8, 8, 1.0)
    r_sq = sample_uniform_cell(cube, rng, n_samples)
    r_e8 = sample_uniform_cell(e8, rng, n_samples)
    for b in (6, 8):
        m_sq = scalar_quantize(FoldedRecord(r_sq, cube), b, 1.0).samples
        m_e8 = scalar_quantize(FoldedRecord(r_e8, e8), b, 1.0).samples
        mse_sq = float(((r_sq - m_sq) ** 2).sum(axis=1).mean())
        mse_e8 = float(((r_e8 - m_e8) ** 2).sum(axis=1).mean())
        report["mismatched"][int(b)] = {"cube_folded": mse_sq,
                                        "e8_folded": mse_e8,
                                        "ratio": mse_e8 / mse_sq}
    return report
