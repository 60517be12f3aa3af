"""Reproducible experiment runner: scheme cycling, chunked ensembles, export.

A run cycles, per true phase and per trajectory index, through the
detection schemes: the adaptive shot is simulated first and its emitted
phase program is captured, the replay shot replays that program against
fresh noise, and the heterodyne shot runs independently.  Homodyne is
available as a standalone scheme.

Work is split into fixed-size chunks of trajectories.  Chunk boundaries,
per-trajectory noise streams and reduction order are all independent of
the worker count, so identical configurations produce bitwise-identical
per-shot outputs whether run serially or on a process pool.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .analysis import EnsembleResult, histogram_64, summarize, validate_filter
from .controllers import (Controller, ControllerConfig, phase_condition_error,
                          wrap_angle)
from .engine import EnsembleRun, SimParams, filter_from_record, simulate_ensemble
from .modeshape import (GammaSchedule, ModeShape, export_mode_csv, flat_gamma,
                        mode_shape_from_gamma)
from .noise import SCHEME_CODES, make_generator, noise_block, trajectory_key
from .states import DensityMatrix, TimeGrid, rho_from_bloch, superposition_state
from .iolib import write_shots_csv

CHUNK_SIZE = 1024  # fixed: chunking must not depend on the worker count

CLIFFORD_BLOCH = np.array([
    [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0], [0.0, -1.0, 0.0],
    [0.0, 0.0, 1.0], [0.0, 0.0, -1.0],
])


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    eta: float = 0.4
    gamma_t2: float = 60e3  # plain rate, 1/s
    gamma_max: float = 1.4e6  # plain rate, 1/s
    gamma_max_is_cyclic: bool = False  # interpret gamma_max as omega/2pi
    tau: float = 10e-6
    t_total: float = 13e-6
    dt: float = 1e-9
    delay: float = 374e-9
    filter_tau: float = 128e-9
    f_het: float = 0.5e6
    phi0: float = 0.0
    randomize_phi0: bool = False
    n_traj: int = 1000
    theta_count: int = 8
    master_seed: int = 0
    schemes: tuple = ("adaptive", "replay", "heterodyne")
    out_dir: str = "runs/latest"
    workers: int = 1
    sample_count: int = 64  # trajectory-probe times per run, 0 disables
    sample_traj: int = 1024  # trajectories (theta index 0) carrying probes

    def __post_init__(self):
        if self.n_traj < 1:
            raise ConfigError("n_traj must be >= 1")
        if self.theta_count < 1:
            raise ConfigError("theta_count must be >= 1")
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError(f"eta must be in (0, 1], got {self.eta}")
        bad = [s for s in self.schemes if s not in SCHEME_CODES]
        if bad:
            raise ConfigError(f"unknown schemes {bad}")
        if "replay" in self.schemes and "adaptive" not in self.schemes:
            raise ConfigError("replay requires adaptive in the same run")

    @property
    def theta_true_set(self) -> np.ndarray:
        return wrap_angle(np.arange(self.theta_count) * 2.0 * np.pi
                          / self.theta_count)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(dt=self.dt, n_steps=int(round(self.t_total / self.dt)))

    @property
    def gamma_max_rate(self) -> float:
        return self.gamma_max * (2.0 * np.pi if self.gamma_max_is_cyclic else 1.0)


_BOOL_KEYS = {"gamma_max_is_cyclic", "randomize_phi0"}
_INT_KEYS = {"n_traj", "theta_count", "master_seed", "workers",
             "sample_count", "sample_traj"}


def parse_config(path) -> ExperimentConfig:
    """Flat key=value config file; SI units; '#' starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in ExperimentConfig.__dataclass_fields__:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if key == "schemes":
                values[key] = tuple(s.strip() for s in raw.split(","))
            elif key == "out_dir":
                values[key] = raw
            elif key in _BOOL_KEYS:
                values[key] = raw.lower() in ("1", "true", "yes")
            elif key in _INT_KEYS:
                values[key] = int(raw)
            else:
                values[key] = float(raw)
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def write_config(config: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        for key, val in asdict(config).items():
            if key == "schemes":
                val = ",".join(val)
            fh.write(f"{key}={val}\n")


def build_model(config: ExperimentConfig):
    """(SimParams, ModeShape) for one configuration."""
    sched = flat_gamma(config.tau, config.gamma_max_rate, config.grid)
    params = SimParams(eta=config.eta, gamma_t2=config.gamma_t2, sched=sched)
    return params, mode_shape_from_gamma(sched)


def controller_config(config: ExperimentConfig, scheme: str,
                      replay_source=None) -> ControllerConfig:
    return ControllerConfig(
        scheme=scheme,
        phi0=config.phi0,
        f_het=config.f_het if scheme == "heterodyne" else 0.0,
        delay=config.delay,
        filter_tau=config.filter_tau,
        replay_source=replay_source,
    )


def _ordered_schemes(config: ExperimentConfig):
    """Canonical execution order; adaptive must precede replay (capture)."""
    order = ("adaptive", "replay", "heterodyne", "homodyne")
    return [s for s in order if s in config.schemes]


def _phi0_block(config: ExperimentConfig, theta_index: int, keys):
    if not config.randomize_phi0:
        return None
    out = np.empty(len(keys))
    for i, key in enumerate(keys):
        out[i] = make_generator(config.master_seed, key + (1,)).uniform(
            -np.pi, np.pi)
    return out


def simulate_scheme_chunk(
    params: SimParams,
    mode: ModeShape,
    cfg: ControllerConfig,
    config: ExperimentConfig,
    theta_index: int,
    start: int,
    count: int,
    initial: DensityMatrix | None = None,
    sample_indices=None,
    record_phi: bool = False,
    record_v: bool = False,
) -> EnsembleRun:
    """One chunk of one scheme with the canonical seeding layout."""
    theta_true = float(config.theta_true_set[theta_index])
    keys = [trajectory_key(theta_index, cfg.scheme, start + j)
            for j in range(count)]
    dW = noise_block(params.grid, config.master_seed, keys)
    phi0 = _phi0_block(config, theta_index, keys)
    ctrl = Controller(cfg, mode, batch=count, phi0=phi0)
    rho0 = initial if initial is not None else superposition_state(theta_true)
    return simulate_ensemble(
        params, ctrl, rho0, dW,
        mode=mode,
        sample_indices=sample_indices,
        record_phi=record_phi,
        record_v=record_v,
    )


def _sample_indices(config: ExperimentConfig):
    if config.sample_count <= 0:
        return None
    n = config.grid.n_steps
    return np.unique(np.linspace(0, n - 1, config.sample_count).astype(int))


def _chunk_task(config: ExperimentConfig, theta_index: int, start: int,
                count: int, collect_samples: bool) -> dict:
    """All schemes for one trajectory chunk; returns plain arrays."""
    params, mode = build_model(config)
    samples = _sample_indices(config) if collect_samples else None
    out = {"theta_index": theta_index, "start": start}

    adaptive_phi = None
    for scheme in _ordered_schemes(config):
        if scheme == "replay":
            cfg = controller_config(config, "replay",
                                    replay_source=adaptive_phi)
        else:
            cfg = controller_config(config, scheme)
        run = simulate_scheme_chunk(
            params, mode, cfg, config, theta_index, start, count,
            sample_indices=samples,
            record_phi=(scheme == "adaptive" and "replay" in config.schemes),
        )
        if scheme == "adaptive" and run.phi is not None:
            adaptive_phi = run.phi
        out[scheme] = {
            "theta_hat": np.angle(run.R_final),
            "r_mag": np.abs(run.R_final),
            "r2_max_err": run.r2_max_err,
        }
        if samples is not None:
            out[scheme]["bloch_samples"] = run.bloch_samples
            out[scheme]["R_samples"] = run.R_samples
            out[scheme]["phi_samples"] = run.phi_samples
            out[scheme]["sample_indices"] = run.sample_indices
    return out


@dataclass
class RunManifest:
    config: dict
    version: str
    wallclock_s: float
    rng: dict
    summaries: dict
    files: dict
    out_dir: str

    def to_json(self) -> str:
        return json.dumps({
            "config": self.config,
            "version": self.version,
            "wallclock_s": self.wallclock_s,
            "rng": self.rng,
            "summaries": self.summaries,
            "files": self.files,
        }, indent=2, sort_keys=True)


def run_experiment(config: ExperimentConfig) -> RunManifest:
    """Full scheme-cycling run; writes per-shot CSVs, summaries, manifest."""
    t_start = time.time()
    os.makedirs(config.out_dir, exist_ok=True)

    tasks = []
    for ti in range(config.theta_count):
        for start in range(0, config.n_traj, CHUNK_SIZE):
            count = min(CHUNK_SIZE, config.n_traj - start)
            collect = (ti == 0 and start < config.sample_traj
                       and config.sample_count > 0)
            tasks.append((ti, start, count, collect))

    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_chunk_task, config, *task) for task in tasks]
            results = [f.result() for f in futures]
    else:
        results = [_chunk_task(config, *task) for task in tasks]

    theta_set = config.theta_true_set
    files = {}
    summaries = {}
    for scheme in config.schemes:
        rows = []
        theta_hat, theta_true, r_mag = [], [], []
        sample_blobs = []
        for res in results:
            ti, start = res["theta_index"], res["start"]
            data = res[scheme]
            n = data["theta_hat"].size
            for j in range(n):
                rows.append((ti, start + j, theta_set[ti],
                             data["theta_hat"][j], data["r_mag"][j],
                             data["r2_max_err"][j]))
            theta_hat.append(data["theta_hat"])
            theta_true.append(np.full(n, theta_set[ti]))
            r_mag.append(data["r_mag"])
            if "bloch_samples" in data:
                sample_blobs.append(data)

        shots_path = os.path.join(config.out_dir, f"shots_{scheme}.csv")
        write_shots_csv(shots_path, rows)
        files[f"shots_{scheme}"] = shots_path

        result = summarize(scheme, np.concatenate(theta_hat),
                           np.concatenate(theta_true), np.concatenate(r_mag),
                           seed=config.master_seed)
        summaries[scheme] = {
            "scheme": scheme,
            "n": result.n_total,
            "n_null": result.n_null,
            "holevo": result.holevo,
            "holevo_ci": list(result.holevo_ci),
            "sharpness": result.sharpness,
            "efficiency": result.efficiency,
        }

        if sample_blobs:
            npz_path = os.path.join(config.out_dir, f"samples_{scheme}.npz")
            np.savez_compressed(
                npz_path,
                sample_indices=sample_blobs[0]["sample_indices"],
                bloch=np.concatenate([b["bloch_samples"] for b in sample_blobs]),
                R=np.concatenate([b["R_samples"] for b in sample_blobs]),
                phi=np.concatenate([b["phi_samples"] for b in sample_blobs]),
            )
            files[f"samples_{scheme}"] = npz_path

    manifest = RunManifest(
        config=_config_dict(config),
        version=__version__,
        wallclock_s=time.time() - t_start,
        rng={
            "master_seed": config.master_seed,
            "stream": "SeedSequence(entropy=master_seed, "
                      "spawn_key=(theta_index, scheme_code, traj_index)) -> Philox",
            "scheme_codes": dict(SCHEME_CODES),
        },
        summaries=summaries,
        files=files,
        out_dir=config.out_dir,
    )
    summary_path = os.path.join(config.out_dir, "summary.json")
    with open(summary_path, "w") as fh:
        json.dump(summaries, fh, indent=2, sort_keys=True)
    manifest.files["summary"] = summary_path
    manifest_path = os.path.join(config.out_dir, "manifest.json")
    with open(manifest_path, "w") as fh:
        fh.write(manifest.to_json())
    manifest.files["manifest"] = manifest_path
    return manifest


def _config_dict(config: ExperimentConfig) -> dict:
    d = asdict(config)
    d["schemes"] = list(config.schemes)
    return d


# ---------------------------------------------------------------------------
# heterodyne-frequency sweep
# ---------------------------------------------------------------------------

def sweep_heterodyne(config: ExperimentConfig, f_set) -> list:
    """Intrinsic efficiency versus heterodyne frequency.

    Noise streams are shared between frequencies (common random numbers),
    which makes the saturation curve smooth at moderate shot counts.
    """
    out = []
    for f in f_set:
        cfg_f = replace(config, f_het=float(f), schemes=("heterodyne",),
                        sample_count=0)
        theta_hat, theta_true, r_mag = _collect_scheme(cfg_f, "heterodyne")
        result = summarize("heterodyne", theta_hat, theta_true, r_mag,
                           seed=config.master_seed)
        s_lo, s_hi = _sharpness_se(theta_hat - theta_true)
        out.append({
            "f_het": float(f),
            "efficiency": result.efficiency,
            "efficiency_se": 2.0 * s_lo,
            "holevo": result.holevo,
            "n": result.n_total,
        })
    return out


def _collect_scheme(config: ExperimentConfig, scheme: str):
    params, mode = build_model(config)
    cfg = controller_config(config, scheme)
    theta_hat, theta_true, r_mag = [], [], []
    for ti in range(config.theta_count):
        for start in range(0, config.n_traj, CHUNK_SIZE):
            count = min(CHUNK_SIZE, config.n_traj - start)
            run = simulate_scheme_chunk(params, mode, cfg, config, ti, start,
                                        count)
            theta_hat.append(np.angle(run.R_final))
            r_mag.append(np.abs(run.R_final))
            theta_true.append(np.full(count, config.theta_true_set[ti]))
    return (np.concatenate(theta_hat), np.concatenate(theta_true),
            np.concatenate(r_mag))


def _sharpness_se(deltas) -> tuple:
    """Delta-method standard error of the sharpness estimate."""
    z = np.exp(1j * np.asarray(deltas))
    n = z.size
    s = abs(z.mean())
    var = max(np.mean(np.abs(z - z.mean()) ** 2).real, 0.0)
    se = math.sqrt(var / (2.0 * n)) if n > 1 else math.inf
    return se, se


# ---------------------------------------------------------------------------
# conditional-tomography validation harness
# ---------------------------------------------------------------------------

def truncate_schedule(sched: GammaSchedule, n_steps: int) -> GammaSchedule:
    grid = TimeGrid(dt=sched.grid.dt, n_steps=n_steps)
    return GammaSchedule(grid=grid, gamma=sched.gamma[: n_steps + 1],
                         gamma_max=sched.gamma_max, tau=sched.tau)


def run_validation(config: ExperimentConfig, t_f_list, schemes=None,
                   filter_eta_factor: float = 1.0, n_bins: int = 5,
                   n_min: int = 100) -> dict:
    """Mixed-prior filter validation against simulated tomography.

    For every scheme and stop time the ensemble cycles through the six
    Bloch-axis eigenstates, the conditioned state is re-estimated from the
    record alone starting from the maximally mixed state, and binned
    tomography agreement is scored.  ``filter_eta_factor != 1`` mis-sets
    the filter's efficiency on purpose (negative control).
    """
    schemes = schemes or ("adaptive", "heterodyne", "homodyne")
    params_full, mode_full = build_model(config)
    reports = {}
    for t_f in t_f_list:
        n_steps = int(round(t_f / config.dt))
        sched = truncate_schedule(params_full.sched, n_steps)
        params = SimParams(eta=config.eta, gamma_t2=config.gamma_t2,
                           sched=sched)
        mode = mode_shape_from_gamma(sched)
        filter_params = SimParams(
            eta=min(config.eta * filter_eta_factor, 1.0),
            gamma_t2=config.gamma_t2, sched=sched)
        for scheme in schemes:
            cfg = controller_config(config, scheme)
            true_b, est_b = [], []
            for start in range(0, config.n_traj, CHUNK_SIZE):
                count = min(CHUNK_SIZE, config.n_traj - start)
                keys = [trajectory_key(0, scheme, start + j)
                        for j in range(count)]
                dW = noise_block(params.grid, config.master_seed, keys)
                bloch0 = CLIFFORD_BLOCH[(start + np.arange(count)) % 6]
                rho0 = (0.5 * (1.0 - bloch0[:, 2]),
                        0.5 * (1.0 + bloch0[:, 2]),
                        0.5 * (bloch0[:, 0] - 1j * bloch0[:, 1]))
                ctrl = Controller(cfg, mode, batch=count)
                run = simulate_ensemble(params, ctrl, rho0, dW, mode=mode,
                                        record_phi=True, record_v=True)
                true_b.append(run.bloch_final())
                est = filter_from_record(filter_params, run.v_dt, run.phi,
                                         DensityMatrix(0.5, 0.5, 0.0j))
                est_b.append(est.bloch_final())
            rng = make_generator(config.master_seed, (7, int(round(t_f * 1e9)),
                                                      SCHEME_CODES[scheme]))
            reports[(scheme, t_f)] = validate_filter(
                np.concatenate(true_b), np.concatenate(est_b), rng,
                n_bins=n_bins, n_min=n_min)
    return reports


# ---------------------------------------------------------------------------
# figure-data export
# ---------------------------------------------------------------------------

FIGURES = ("fig1c", "fig3b", "fig3c", "fig3d", "fig4a", "fig4b", "fig4c")


def export_figure_data(manifest: RunManifest, figure_id: str, out_dir=None):
    """Write plot-ready CSVs for one figure analogue; no plotting here."""
    if figure_id not in FIGURES:
        raise ConfigError(f"unknown figure {figure_id!r}; pick from {FIGURES}")
    out_dir = out_dir or manifest.out_dir
    os.makedirs(out_dir, exist_ok=True)
    config = ExperimentConfig(**{**manifest.config,
                                 "schemes": tuple(manifest.config["schemes"])})
    written = []

    if figure_id == "fig1c":
        _, mode = build_model(config)
        path = os.path.join(out_dir, "fig1c_modeshape.csv")
        export_mode_csv(mode, path)
        return [path]

    if figure_id in ("fig4a", "fig4c"):
        for scheme in config.schemes:
            shots = _load_shots(manifest, scheme)
            if figure_id == "fig4a":
                deltas = wrap_angle(shots["theta_hat"] - shots["theta_true"])
                centers, counts = histogram_64(deltas)
                path = os.path.join(out_dir, f"fig4a_hist_{scheme}.csv")
                _write_hist(path, "delta_theta_rad", centers, counts)
            else:
                centers, counts = histogram_64(shots["r_mag"], lo=0.0, hi=2.0)
                path = os.path.join(out_dir, f"fig4c_rmag_{scheme}.csv")
                _write_hist(path, "r_mag", centers, counts)
            written.append(path)
        return written

    if figure_id == "fig4b":
        path = os.path.join(out_dir, "fig4b_holevo.csv")
        with open(path, "w") as fh:
            fh.write("scheme,n,holevo,ci_lo,ci_hi,sharpness,efficiency\n")
            for scheme in config.schemes:
                s = manifest.summaries[scheme]
                fh.write("%s,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n" % (
                    scheme, s["n"], s["holevo"], s["holevo_ci"][0],
                    s["holevo_ci"][1], s["sharpness"], s["efficiency"]))
        return [path]

    # sampled-trajectory figures
    for scheme in config.schemes:
        key = f"samples_{scheme}"
        if key not in manifest.files:
            raise ConfigError(f"run holds no trajectory samples for {scheme}")
        blob = np.load(manifest.files[key])
        t = (blob["sample_indices"] + 1) * config.dt
        if figure_id == "fig3b":
            err = phase_condition_error(blob["phi"], np.angle(blob["R"]))
            med = np.median(np.abs(err), axis=0)
            path = os.path.join(out_dir, f"fig3b_phase_error_{scheme}.csv")
            with open(path, "w") as fh:
                fh.write("t_s,median_abs_phase_error_rad\n")
                for ti, mi in zip(t, med):
                    fh.write("%.17g,%.17g\n" % (ti, mi))
        elif figure_id == "fig3c":
            i = int(np.argmin(np.abs(t - 10e-6)))
            bloch = blob["bloch"][:, i, :]
            path = os.path.join(out_dir, f"fig3c_bloch_{scheme}.csv")
            with open(path, "w") as fh:
                fh.write("x,y,z\n")
                for row in bloch:
                    fh.write("%.17g,%.17g,%.17g\n" % tuple(row))
        else:  # fig3d
            from .analysis import backaction_stats
            windows = [(w * 1e-6, (w + 1) * 1e-6)
                       for w in range(int(config.t_total * 1e6))]
            stats_list = backaction_stats(blob["bloch"], t, windows)
            path = os.path.join(out_dir, f"fig3d_backaction_{scheme}.csv")
            with open(path, "w") as fh:
                fh.write("t_center_s,rms_dtheta_rad,rms_arc,rms_dz,n_pairs\n")
                for w in stats_list:
                    fh.write("%.17g,%.17g,%.17g,%.17g,%d\n" % (
                        w.t_center, w.rms_dtheta, w.rms_arc, w.rms_dz,
                        w.n_pairs))
        written.append(path)
    return written


def load_manifest(path) -> RunManifest:
    with open(path) as fh:
        raw = json.load(fh)
    return RunManifest(config=raw["config"], version=raw["version"],
                       wallclock_s=raw["wallclock_s"], rng=raw["rng"],
                       summaries=raw["summaries"], files=raw["files"],
                       out_dir=os.path.dirname(os.path.abspath(path)))


def _load_shots(manifest: RunManifest, scheme: str) -> dict:
    path = manifest.files.get(f"shots_{scheme}")
    if path is None:
        raise ConfigError(f"run holds no shots for scheme {scheme!r}")
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


def _write_hist(path, label, centers, counts) -> None:
    with open(path, "w") as fh:
        fh.write(f"{label},count\n")
        for c, n in zip(centers, counts):
            fh.write("%.17g,%d\n" % (c, n))
