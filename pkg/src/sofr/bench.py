"""Monte Carlo size and power studies.

Every replicate draws its data from a random stream keyed by the master seed,
the replicate index and the index of the departure value, so the outcome of a
study never depends on how replicates are spread over worker processes.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .basis import fgam_design
from .datagen import (
    DESIGNS,
    NULLITY_SETTINGS,
    RngStream,
    SimulationSetting,
    default_deltas,
    generate,
    sparsify,
)
from .exceptions import InvalidArgument, ParseError, SofrError
from .flm import default_basis_dim
from .fpca import fit_sparse_fpca, reconstruct
from .funcdata import FunctionalDataset
from .ggf import ggf_test
from .hr import hr_test
from .ksm import ksm_test
from .mhr import mhr_linearity, mhr_nullity

METHODS = ("GGF", "MHR", "HR", "KSM")
LINEARITY_METHODS = ("GGF", "MHR", "HR")
NULLITY_METHODS = ("GGF", "MHR", "KSM")
CSV_HEADER = ["setting", "design", "method", "n", "alpha", "delta", "rate", "se", "R", "failures"]
FAILURE_LIMIT = 0.02

# per-test settings a study may override
DEFAULT_CONFIG = {
    "B": 500,
    "n_proj": 1000,
    "ggf_route": "monte_carlo",
    "ggf_p": None,  # None: 4 for the M settings, else 7; capped for imputed curves
    "n_null": 2000,
    "hr_p": 3,
    "ksm_pve": 0.95,
    "ksm_scores": "imputed",  # or "conditional" for sparse designs
    "impute_pve": 0.99,
    "impute_bandwidth": None,  # None: domain length / 5
}


@dataclass(frozen=True)
class StudySpec:
    kind: str
    setting: str
    design: str = "dense"
    n: int = 100
    methods: tuple = ()
    alphas: tuple = (0.05,)
    deltas: tuple = (0.0,)
    R: int = 1000
    seed: int = 1
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("size", "power"):
            raise InvalidArgument("kind must be 'size' or 'power'")
        if self.design not in DESIGNS:
            raise InvalidArgument(f"unknown design {self.design!r}")
        allowed = NULLITY_METHODS if self.setting in NULLITY_SETTINGS else LINEARITY_METHODS
        methods = tuple(m.upper() for m in self.methods) or allowed
        bad = [m for m in methods if m not in allowed]
        if bad:
            raise InvalidArgument(f"methods {bad} do not test the hypothesis of {self.setting}")
        object.__setattr__(self, "methods", methods)
        if self.kind == "size":
            object.__setattr__(self, "deltas", (0.0,))
        if not self.deltas:
            raise InvalidArgument("delta grid is empty")
        if self.R < 1:
            raise InvalidArgument("R must be positive")
        if any(not 0 < a < 1 for a in self.alphas):
            raise InvalidArgument("alpha levels must lie in (0, 1)")
        unknown = set(self.config) - set(DEFAULT_CONFIG)
        if unknown:
            raise InvalidArgument(f"unknown config keys {sorted(unknown)}")
        SimulationSetting(self.setting, max(self.deltas), self.n, self.design)

    @property
    def options(self) -> dict:
        return {**DEFAULT_CONFIG, **self.config}


@dataclass(frozen=True)
class ResultRow:
    setting: str
    design: str
    method: str
    n: int
    alpha: float
    delta: float
    rate: float
    se: float
    R: int
    failures: int
    unreliable: bool = False


def prepare_dataset(spec: StudySpec, delta: float, stream: RngStream):
    """Generate one dataset; sparse designs are sparsified and imputed.

    Returns the dense (possibly imputed) dataset and the sparse FPCA fit, or
    ``None`` for dense designs.
    """
    setting = SimulationSetting(spec.setting, delta, spec.n, spec.design)
    ds = generate(setting, stream.substream(0))
    if spec.design == "dense":
        return ds, None
    sds = sparsify(ds, spec.setting, spec.design, stream.substream(1))
    opts = spec.options
    fit = fit_sparse_fpca(sds, ds.grid, opts["impute_pve"], opts["impute_bandwidth"])
    return FunctionalDataset(ds.y, reconstruct(fit), ds.grid), fit


def run_method(method, ds, hypothesis, opts, setting_id, rng, design=None, sparse_fit=None):
    if method == "GGF":
        p = opts["ggf_p"]
        if p is None:
            p = default_basis_dim(setting_id)
            if sparse_fit is not None and hypothesis == "H01":
                # imputed curves span only the retained components, so a
                # larger basis makes the linear fit rank deficient
                p = min(p, sparse_fit.n_components)
        return ggf_test(ds, hypothesis, opts["B"], p, rng, opts["ggf_route"], opts["n_proj"])
    if method == "MHR":
        fn = mhr_nullity if hypothesis == "H02" else mhr_linearity
        return fn(ds, opts["n_null"], rng, design=design)
    if method == "HR":
        return hr_test(ds, opts["hr_p"])
    if method == "KSM":
        if sparse_fit is not None and opts["ksm_scores"] == "conditional":
            return ksm_test(fit=sparse_fit, y=ds.y, pve=opts["ksm_pve"])
        return ksm_test(ds, pve=opts["ksm_pve"])
    raise InvalidArgument(f"unknown method {method!r}")


def run_replicate(spec: StudySpec, r: int, delta_index: int) -> dict:
    """p-value of every method for replicate ``r``; ``None`` marks a failure."""
    stream = RngStream(spec.seed, r, (delta_index,))
    hypothesis = "H02" if spec.setting in NULLITY_SETTINGS else "H01"
    opts = spec.options
    out = {}
    try:
        ds, sparse_fit = prepare_dataset(spec, spec.deltas[delta_index], stream)
    except (SofrError, np.linalg.LinAlgError):
        return {m: None for m in spec.methods}
    design = None
    if "MHR" in spec.methods:
        try:
            design = fgam_design(ds)
        except (SofrError, np.linalg.LinAlgError):
            design = None
    for j, m in enumerate(spec.methods):
        if m == "MHR" and design is None:
            out[m] = None
            continue
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = run_method(
                    m,
                    ds,
                    hypothesis,
                    opts,
                    spec.setting,
                    stream.substream(2 + j),
                    design,
                    sparse_fit,
                )
            out[m] = float(res.p_value)
        except (SofrError, np.linalg.LinAlgError):
            out[m] = None
    return out


def _task(args):
    spec, r, k = args
    return run_replicate(spec, r, k)


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("SOFR_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise InvalidArgument("SOFR_THREADS must be an integer") from None
    return max(1, n)


def run_replicates(spec: StudySpec, workers: int | None = None) -> list[list[dict]]:
    """Raw outcomes indexed ``[delta_index][replicate]``."""
    tasks = [(spec, r, k) for k in range(len(spec.deltas)) for r in range(spec.R)]
    n_workers = worker_count(workers)
    if n_workers == 1:
        flat = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(n_workers) as pool:
            flat = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (8 * n_workers))))
    return [flat[k * spec.R : (k + 1) * spec.R] for k in range(len(spec.deltas))]


def summarize(spec: StudySpec, outcomes) -> list[ResultRow]:
    rows = []
    for method in spec.methods:
        for k, delta in enumerate(spec.deltas):
            pvals = [o[method] for o in outcomes[k]]
            ok = np.array([p for p in pvals if p is not None])
            failures = len(pvals) - ok.size
            for alpha in spec.alphas:
                if ok.size:
                    rate = float(np.mean(ok <= alpha))
                    se = math.sqrt(rate * (1 - rate) / ok.size)
                else:
                    rate, se = float("nan"), float("nan")
                rows.append(
                    ResultRow(
                        spec.setting,
                        spec.design,
                        method,
                        spec.n,
                        float(alpha),
                        float(delta),
                        rate,
                        se,
                        int(ok.size),
                        failures,
                        failures > FAILURE_LIMIT * len(pvals),
                    )
                )
    return rows


def run_study(spec: StudySpec, workers: int | None = None) -> list[ResultRow]:
    return summarize(spec, run_replicates(spec, workers))


def power_curve(spec: StudySpec, workers: int | None = None) -> list[ResultRow]:
    """Rows of a power study ordered by method, then departure value."""
    if spec.kind != "power":
        raise InvalidArgument("power_curve needs a power study")
    rows = run_study(spec, workers)
    return sorted(rows, key=lambda row: (spec.methods.index(row.method), row.delta, row.alpha))


def write_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in rows:
            w.writerow([getattr(row, c) for c in CSV_HEADER])


def write_summary(spec: StudySpec, rows, path, wall_clock: float) -> None:
    payload = {
        "spec": {**asdict(spec), "config": spec.options},
        "wall_clock_seconds": wall_clock,
        "unreliable_rows": [asdict(r) for r in rows if r.unreliable],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, default=str)
        fh.write("\n")


def study_name(spec: StudySpec) -> str:
    return f"{spec.kind}_{spec.setting}_{spec.design}_n{spec.n}"


def execute(spec: StudySpec, out_dir, workers: int | None = None) -> Path:
    """Run a study and write ``<name>.csv`` plus a ``<name>.json`` sidecar."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    rows = power_curve(spec, workers) if spec.kind == "power" else run_study(spec, workers)
    name = study_name(spec)
    write_csv(rows, out / f"{name}.csv")
    write_summary(spec, rows, out / f"{name}.json", time.perf_counter() - start)
    return out / f"{name}.csv"


# ---------------------------------------------------------------------------
# study files


def _split(value):
    return tuple(v.strip() for v in value.split(",") if v.strip())


def parse_spec_text(text: str) -> StudySpec:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Recognized keys are the :class:`StudySpec` fields (``alpha``/``delta``
    may be used for the lists; ``delta = default`` picks eight values over
    the setting's range plus zero) and the keys of ``DEFAULT_CONFIG``.
    """
    fields, config = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected key = value", row=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key in ("kind", "setting", "design"):
                fields[key] = value
            elif key in ("n", "R", "seed"):
                fields[key] = int(value)
            elif key == "methods":
                fields["methods"] = _split(value)
            elif key in ("alpha", "alphas"):
                fields["alphas"] = tuple(float(v) for v in _split(value))
            elif key in ("delta", "deltas"):
                fields["deltas"] = value
            elif key in DEFAULT_CONFIG:
                config[key] = _config_value(key, value)
            else:
                raise ParseError(f"unknown key {key!r}", row=lineno)
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"bad value for {key!r}: {value!r}", row=lineno) from None
    if "kind" not in fields or "setting" not in fields:
        raise ParseError("study file needs 'kind' and 'setting'")
    deltas = fields.pop("deltas", None)
    if deltas is None:
        fields["deltas"] = (0.0,)
    elif deltas == "default":
        fields["deltas"] = (0.0,) + tuple(float(d) for d in default_deltas(fields["setting"]))
    else:
        try:
            fields["deltas"] = tuple(float(v) for v in _split(deltas))
        except ValueError:
            raise ParseError(f"bad delta list {deltas!r}") from None
    return StudySpec(config=config, **fields)


def _config_value(key, value):
    default = DEFAULT_CONFIG[key]
    if value.lower() == "none":
        return None
    if isinstance(default, int) or key == "ggf_p":
        return int(value)
    if isinstance(default, float) or key == "impute_bandwidth":
        return float(value)
    return value


def parse_spec_file(path) -> StudySpec:
    return parse_spec_text(Path(path).read_text(encoding="utf-8"))
