"""Simulation experiments: config files, sweeps, replicate runs, result tables.

An experiment config is a flat ``key = value`` text file.  ``#`` starts a
comment.  Recognised keys::

    simulation   preset id 1..8 (optional; explicit keys override it)
    n, L, m, K   sizes
    d            expected average degree per layer
    d_per_n      if set, d = d_per_n * n at every sweep point
    alpha        out-in ratio q/p
    replicates   Monte-Carlo replicates per sweep point
    seed         base seed
    methods      comma list from twist, hosvd_tucker, sum_adj, m3_sc
    metrics      comma list from global, layer
    layer_method kmeans or supnorm (TWIST layer step)
    iter_max     power-iteration cap
    self_loops   true/false

Exactly one of ``n, L, m, K, d, alpha`` may be swept, written either as a
comma list ``2,6,10`` or an inclusive range ``start:stop:step``.  A preset's
swept key given a single value becomes a one-point sweep.  Without a preset
and without a list, the sweep is the single point of ``d``.
"""

import csv
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _rng
from .baselines import hosvd_tucker, m3_spectral, sum_adj
from .clustering import KmeansConfig, Partition, kmeans, misclustering
from .errors import ContractError, ParameterError, ParseError
from .model import MmsbmParams, planted_params, sample_labels, sample_tensor
from .twist import TwistConfig, twist_pipeline

SWEEPABLE = ("n", "L", "m", "K", "d", "alpha")
INT_KEYS = ("n", "L", "m", "K")
METHODS = ("twist", "hosvd_tucker", "sum_adj", "m3_sc")
METRICS = ("global", "layer")
APPLICABLE = {
    "twist": ("global", "layer"),
    "hosvd_tucker": ("global", "layer"),
    "sum_adj": ("global",),
    "m3_sc": ("layer",),
}
FAST_REPLICATES = 20
CSV_COLUMNS = ("sweep_param", "value", "method", "metric", "mean", "stderr", "replicates")


def _grid(start, stop, step):
    count = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, 10) for i in range(count))


_GLOBAL = dict(methods=("twist", "hosvd_tucker", "sum_adj"), metrics=("global",))
_LAYER = dict(methods=("twist", "hosvd_tucker", "m3_sc"), metrics=("layer",))
_SIM12 = dict(n=600, L=20, m=3, K=2, d=10.0, alpha=0.4)
_SIM56 = dict(n=600, L=20, m=3, K=3, d=10.0, alpha=0.6)

PRESETS = {
    1: dict(_SIM12, **_GLOBAL, sweep=("d", _grid(2, 20, 1))),
    2: dict(_SIM12, **_GLOBAL, sweep=("alpha", _grid(0.1, 0.8, 0.1))),
    3: dict(_SIM12, **_GLOBAL, alpha=0.6, sweep=("L", _grid(10, 60, 10))),
    4: dict(_SIM12, **_GLOBAL, alpha=0.6, sweep=("n", _grid(100, 1200, 100))),
    5: dict(_SIM56, **_LAYER, sweep=("d", _grid(3, 30, 3))),
    6: dict(_SIM56, **_LAYER, L=30, sweep=("alpha", _grid(0.1, 0.9, 0.1))),
    7: dict(_SIM56, **_LAYER, L=30, sweep=("L", _grid(20, 80, 10))),
    8: dict(_SIM56, **_LAYER, L=30, d_per_n=0.02, sweep=("n", _grid(100, 1200, 100))),
}


@dataclass(frozen=True)
class ExperimentConfig:
    sweep_param: str
    values: tuple
    n: int = 600
    L: int = 20
    m: int = 3
    K: int = 2
    d: float = 10.0
    alpha: float = 0.4
    d_per_n: float = None
    replicates: int = 100
    seed: int = 0
    methods: tuple = ("twist",)
    metrics: tuple = METRICS
    layer_method: str = "kmeans"
    iter_max: int = 30
    self_loops: bool = False
    simulation: int = None

    def __post_init__(self):
        if self.sweep_param not in SWEEPABLE:
            raise ContractError(f"cannot sweep {self.sweep_param!r}")
        if not self.values:
            raise ContractError("sweep has no points")
        if self.replicates < 1:
            raise ContractError("replicates must be >= 1")
        if self.d_per_n is not None and self.sweep_param == "d":
            raise ContractError("d cannot be swept when d_per_n is set")
        for name in self.methods:
            if name not in METHODS:
                raise ContractError(f"unknown method {name!r}")
        for name in self.metrics:
            if name not in METRICS:
                raise ContractError(f"unknown metric {name!r}")
        if self.layer_method not in ("kmeans", "supnorm"):
            raise ContractError(f"unknown layer method {self.layer_method!r}")
        for point in self.points():
            check_point(point)

    def point(self, value):
        """Model settings at one sweep value."""
        p = {key: getattr(self, key) for key in SWEEPABLE}
        p[self.sweep_param] = value
        for key in INT_KEYS:
            p[key] = int(p[key])
        if self.d_per_n is not None:
            p["d"] = self.d_per_n * p["n"]
        return p

    def points(self):
        return [self.point(v) for v in self.values]

    def cells(self):
        return [
            (method, metric)
            for method in self.methods
            for metric in self.metrics
            if metric in APPLICABLE[method]
        ]


def check_point(p):
    if p["n"] < 2 or p["L"] < 1 or p["m"] < 1 or p["K"] < 1 or p["K"] > p["n"]:
        raise ParameterError(f"invalid sizes at sweep point {p}")
    if p["m"] > p["L"]:
        raise ParameterError(f"m={p['m']} exceeds L={p['L']}")
    scale = p["n"] * (1.0 + (p["K"] - 1) * p["alpha"])
    if not 0.0 <= p["alpha"] <= 1.0 or p["d"] * p["K"] > scale:
        raise ParameterError(
            f"infeasible point {p}: the largest feasible average degree is {scale / p['K']:.6g}"
        )


def parse_keyvalue(lines, source="<config>"):
    """Parse ``key = value`` lines into an ordered dict of strings."""
    out = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{source}: expected 'key = value'", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ParseError(f"{source}: empty key or value", lineno)
        if key in out:
            raise ParseError(f"{source}: duplicate key {key!r}", lineno)
        out[key] = value
    return out


def read_keyvalue(path):
    with open(path, encoding="utf-8") as fh:
        return parse_keyvalue(fh, str(path))


def parse_number(key, text):
    try:
        value = float(text)
    except ValueError:
        raise ParameterError(f"{key}: not a number: {text!r}") from None
    if key in INT_KEYS:
        if value != int(value):
            raise ParameterError(f"{key} must be an integer, got {text!r}")
        return int(value)
    return value


def parse_int(key, text):
    try:
        return int(text)
    except ValueError:
        raise ParameterError(f"{key}: not an integer: {text!r}") from None


def parse_flag(key, text):
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ParameterError(f"{key}: expected a boolean, got {text!r}")


def parse_sweep(key, text):
    """Values of ``key``: a scalar, a comma list, or ``start:stop:step``."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ParameterError(f"{key}: range must be start:stop:step")
        start, stop, step = (float(parse_number("range", s)) for s in parts)
        if step <= 0 or stop < start:
            raise ParameterError(f"{key}: empty or descending range {text!r}")
        return tuple(parse_number(key, repr(v)) for v in _grid(start, stop, step))
    return tuple(parse_number(key, s.strip()) for s in text.split(","))


def config_from_mapping(entries):
    """Build an :class:`ExperimentConfig` from parsed key/value strings."""
    entries = dict(entries)
    fields_ = {}
    sweep = None
    if "simulation" in entries:
        sim = parse_int("simulation", entries.pop("simulation"))
        if sim not in PRESETS:
            raise ParameterError(f"simulation must be 1..8, got {sim}")
        preset = dict(PRESETS[sim])
        sweep = preset.pop("sweep")
        fields_.update(preset, simulation=sim)

    explicit_sweep = None
    for key, text in entries.items():
        if key in SWEEPABLE:
            values = parse_sweep(key, text)
            if len(values) > 1:
                if explicit_sweep is not None:
                    raise ParameterError(
                        f"only one parameter may be swept, got {explicit_sweep} and {key}"
                    )
                explicit_sweep = (key, values)
            elif sweep is not None and key == sweep[0]:
                sweep = (key, values)
            else:
                fields_[key] = values[0]
        elif key in ("replicates", "seed", "iter_max"):
            fields_[key] = parse_int(key, text)
        elif key == "d_per_n":
            fields_[key] = float(parse_number(key, text))
        elif key in ("methods", "metrics"):
            fields_[key] = tuple(s.strip() for s in text.split(",") if s.strip())
        elif key == "layer_method":
            fields_[key] = text
        elif key == "self_loops":
            fields_[key] = parse_flag(key, text)
        else:
            raise ParameterError(f"unknown config key {key!r}")

    if explicit_sweep is not None:
        sweep = explicit_sweep
    elif sweep is None:
        sweep = ("d", (fields_.get("d", ExperimentConfig.d),))
    try:
        return ExperimentConfig(sweep_param=sweep[0], values=tuple(sweep[1]), **fields_)
    except ContractError as exc:
        raise ParameterError(str(exc)) from None


def load_config(path):
    return config_from_mapping(read_keyvalue(path))


def fast(cfg):
    """The CI variant of a config: at most 20 replicates per point."""
    return replace(cfg, replicates=min(cfg.replicates, FAST_REPLICATES))


@dataclass
class Instance:
    params: MmsbmParams
    labels: np.ndarray
    tensor: np.ndarray
    global_truth: Partition = field(repr=False)
    layer_truth: Partition = field(repr=False)
    r: int = 0


def make_instance(point, seed, self_loops=False):
    """Sample one planted MMSBM instance for the given model settings.

    Ground truth covers only the classes that received layers, since absent
    classes leave no trace in the tensor.
    """
    params = planted_params(point["n"], point["m"], point["K"], point["d"], point["alpha"], seed)
    labels = sample_labels(params, point["L"], seed)
    A = sample_tensor(params, labels, seed, self_loops)
    present = [j for j in range(params.m) if np.any(labels == j)]
    stacked = np.column_stack([params.memberships[j] for j in present])
    zbar = params.Zbar(present)
    s = np.linalg.svd(zbar, compute_uv=False)
    r = int(np.sum(s / s[0] > 1e-10))
    return Instance(
        params=params,
        labels=labels,
        tensor=A,
        global_truth=Partition.from_labels(stacked),
        layer_truth=Partition.from_labels(labels),
        r=r,
    )


def run_methods(inst, cells, seed, layer_method="kmeans", iter_max=30):
    """Misclustering rate per ``(method, metric)`` cell; failures give NaN."""
    A = inst.tensor
    m = inst.layer_truth.n_clusters
    kbar = inst.global_truth.n_clusters
    km = KmeansConfig(seed=_rng.derive_seed(seed, _rng.KMEANS))
    config = TwistConfig(r=max(inst.r, m), m=m, iter_max=iter_max)
    wanted = {method for method, _ in cells}
    out = {}

    def record(method, fn):
        try:
            parts = fn()
        except (ArithmeticError, ValueError) as exc:
            warnings.warn(f"{method} failed: {exc}")
            parts = {}
        for metric in APPLICABLE[method]:
            if (method, metric) in cells:
                part = parts.get(metric)
                out[(method, metric)] = (
                    misclustering(part, _truth(inst, metric))[1] if part is not None else math.nan
                )

    if "twist" in wanted:

        def twist():
            res = twist_pipeline(A, config, kbar, layer_method=layer_method, kmeans_config=km)
            return {"global": res.global_partition, "layer": res.layer_partition}

        record("twist", twist)
    if "hosvd_tucker" in wanted:

        def tucker():
            emb = hosvd_tucker(A, config)
            return {"global": kmeans(emb.U, kbar, km), "layer": kmeans(emb.W, m, km)}

        record("hosvd_tucker", tucker)
    if "sum_adj" in wanted:
        record("sum_adj", lambda: {"global": sum_adj(A, kbar, km, min(kbar, config.r))})
    if "m3_sc" in wanted:
        record("m3_sc", lambda: {"layer": m3_spectral(A, m, km)})
    return out


def _truth(inst, metric):
    return inst.global_truth if metric == "global" else inst.layer_truth


def replicate_seed(seed, point_index, rep):
    return _rng.derive_seed(seed, _rng.EXPERIMENT, point_index, rep)


def run_replicate(cfg, point_index, rep):
    seed = replicate_seed(cfg.seed, point_index, rep)
    inst = make_instance(cfg.point(cfg.values[point_index]), seed, cfg.self_loops)
    return run_methods(inst, cfg.cells(), seed, cfg.layer_method, cfg.iter_max)


def summarize(values):
    """``(mean, stderr, count)`` over the finite entries; stderr is NaN below two."""
    x = np.asarray(values, dtype=np.float64)
    x = x[np.isfinite(x)]
    if x.size == 0:
        return math.nan, math.nan, 0
    stderr = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan
    return float(x.mean()), stderr, int(x.size)


def run_experiment(cfg, threads=1, raw=False):
    """Run every (sweep point, replicate) and aggregate into result rows.

    Each task draws from its own seed, so the table does not depend on
    ``threads``.  With ``raw`` the per-replicate rates are returned as well,
    keyed by ``(point_index, method, metric)``.
    """
    tasks = [(i, rep) for i in range(len(cfg.values)) for rep in range(cfg.replicates)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(lambda t: run_replicate(cfg, *t), tasks))
    else:
        outcomes = [run_replicate(cfg, *t) for t in tasks]

    per_cell = {}
    for (i, rep), outcome in zip(tasks, outcomes):
        for cell, rate in outcome.items():
            per_cell.setdefault((i,) + cell, [math.nan] * cfg.replicates)[rep] = rate

    rows = []
    for i, value in enumerate(cfg.values):
        for method, metric in cfg.cells():
            mean, stderr, count = summarize(per_cell.get((i, method, metric), []))
            rows.append(
                dict(
                    sweep_param=cfg.sweep_param,
                    value=value,
                    method=method,
                    metric=metric,
                    mean=mean,
                    stderr=stderr,
                    replicates=count,
                )
            )
    return (rows, per_cell) if raw else rows


def rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row[k]) for k in CSV_COLUMNS})
    return buf.getvalue()


def rows_to_json(rows):
    clean = [{k: (None if _isnan(v) else v) for k, v in row.items()} for row in rows]
    return json.dumps(clean, indent=2) + "\n"


def _isnan(v):
    return isinstance(v, float) and math.isnan(v)


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)
