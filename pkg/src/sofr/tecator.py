"""Tecator meat spectra: file ingestion and the nine-test analysis.

The expected CSV has a header row, 100 absorbance columns (850-1048 nm in
steps of 2 nm) and the columns ``fat``, ``water`` and ``protein``; one row per
meat sample, 215 rows. :func:`convert_statlib` turns the original StatLib
distribution into this layout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .basis import fgam_design
from .datagen import RngStream
from .exceptions import ParseError, ShapeError, SofrError
from .flm import select_basis_dim
from .funcdata import FunctionalDataset, center_curves, make_uniform_grid
from .ggf import ggf_test
from .hr import hr_test
from .ksm import ksm_test
from .mhr import mhr_linearity, mhr_nullity

N_SAMPLES = 215
N_CHANNELS = 100
RESPONSES = ("fat", "water", "protein")
BONFERRONI_ALPHA = 0.05 / 3


@dataclass(frozen=True)
class TecatorDataset:
    absorbance: np.ndarray
    fat: np.ndarray
    water: np.ndarray
    protein: np.ndarray
    wavelengths: np.ndarray

    @property
    def n(self) -> int:
        return self.absorbance.shape[0]

    def response(self, name: str) -> np.ndarray:
        if name not in RESPONSES:
            raise KeyError(name)
        return getattr(self, name)

    def functional(self, name: str, center: bool = True) -> FunctionalDataset:
        """Curves on a uniform grid over [0, 1] paired with one response."""
        ds = FunctionalDataset(
            self.response(name), self.absorbance, make_uniform_grid(N_CHANNELS, 0, 1)
        )
        return center_curves(ds)[0] if center else ds


def parse_tecator(path) -> TecatorDataset:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip().lower() for h in rows[0]]
    missing = [r for r in RESPONSES if r not in header]
    if missing:
        raise ParseError(f"{path}: header lacks columns {missing}", row=0)
    resp_cols = [header.index(r) for r in RESPONSES]
    chan_cols = [j for j in range(len(header)) if j not in resp_cols]
    if len(chan_cols) != N_CHANNELS:
        raise ShapeError(
            f"{path}: expected {N_CHANNELS} absorbance channels, found {len(chan_cols)}"
        )
    data = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise ParseError(f"{path}: expected {len(header)} fields, found {len(row)}", row=i)
        for j, cell in enumerate(row):
            try:
                data[i - 1, j] = float(cell)
            except ValueError:
                raise ParseError(f"{path}: non-numeric cell {cell!r}", row=i, column=j) from None
            if not np.isfinite(data[i - 1, j]):
                raise ParseError(f"{path}: non-finite cell {cell!r}", row=i, column=j)
    if data.shape[0] != N_SAMPLES:
        raise ShapeError(f"{path}: expected {N_SAMPLES} samples, found {data.shape[0]}")
    try:
        wl = np.array([float(header[j]) for j in chan_cols])
    except ValueError:
        wl = np.arange(850.0, 1050.0, 2.0)
    return TecatorDataset(
        absorbance=data[:, chan_cols],
        fat=data[:, resp_cols[0]],
        water=data[:, resp_cols[1]],
        protein=data[:, resp_cols[2]],
        wavelengths=wl,
    )


def convert_statlib(src, dst) -> None:
    """Convert the StatLib ``tecator`` text file into the CSV layout above.

    The StatLib file stores each of 240 samples as 125 numbers (100
    absorbances, 22 principal components, moisture, fat, protein) wrapped
    five per line, after a free-text preamble. The first 215 samples are the
    training, monitoring and test sets; the remaining 25 are dropped.
    """
    numbers = []
    for line in Path(src).read_text(encoding="latin-1").splitlines():
        parts = line.split()
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            continue
        if len(vals) == 5 or (numbers and 0 < len(vals) < 5):
            numbers.extend(vals)
    per = 125
    if len(numbers) < N_SAMPLES * per:
        raise ShapeError(f"{src}: found {len(numbers)} numbers, need {N_SAMPLES * per}")
    block = np.array(numbers[: N_SAMPLES * per]).reshape(N_SAMPLES, per)
    with open(dst, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([str(850 + 2 * k) for k in range(N_CHANNELS)] + list(RESPONSES))
        for row in block:
            # StatLib order is moisture, fat, protein
            values = list(row[:N_CHANNELS]) + [row[123], row[122], row[124]]
            w.writerow([repr(float(v)) for v in values])


@dataclass(frozen=True)
class TecatorCell:
    response: str
    hypothesis: str
    method: str
    p_value: float | None
    error: str | None = None

    @property
    def significant(self) -> bool | None:
        return None if self.p_value is None else self.p_value < BONFERRONI_ALPHA


TABLE_LAYOUT = (("H02", ("GGF", "MHR", "KSM")), ("H01", ("GGF", "MHR", "HR")))


def analyze_tecator(
    td: TecatorDataset,
    seed: int = 1,
    B: int = 5000,
    n_null: int = 10000,
    ggf_p: int | None = None,
    hr_p: int = 3,
    ksm_pve: float = 0.95,
) -> list[TecatorCell]:
    """Nullity and linearity p-values for each response.

    ``ggf_p=None`` selects the GGF basis size per response with
    :func:`select_basis_dim`. A failing test is reported in its cell and
    does not stop the analysis.
    """
    cells = []
    for r_idx, name in enumerate(RESPONSES):
        ds = td.functional(name)
        design = fgam_design(ds)
        p = ggf_p or select_basis_dim(ds)
        for h_idx, (hyp, methods) in enumerate(TABLE_LAYOUT):
            for m_idx, method in enumerate(methods):
                rng = RngStream(seed, r_idx, (h_idx, m_idx))
                try:
                    if method == "GGF":
                        res = ggf_test(ds, hyp, B, p, rng)
                    elif method == "MHR":
                        fn = mhr_nullity if hyp == "H02" else mhr_linearity
                        res = fn(ds, n_null, rng, design=design)
                    elif method == "HR":
                        res = hr_test(ds, hr_p)
                    else:
                        res = ksm_test(ds, pve=ksm_pve)
                    cells.append(TecatorCell(name, hyp, method, float(res.p_value)))
                except (SofrError, np.linalg.LinAlgError) as exc:
                    cells.append(
                        TecatorCell(name, hyp, method, None, f"{type(exc).__name__}: {exc}")
                    )
    return cells


def write_cells(cells, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["response", "hypothesis", "method", "p_value", "significant", "error"])
        for c in cells:
            w.writerow(
                [
                    c.response,
                    c.hypothesis,
                    c.method,
                    "" if c.p_value is None else repr(c.p_value),
                    "" if c.significant is None else str(c.significant).lower(),
                    c.error or "",
                ]
            )
