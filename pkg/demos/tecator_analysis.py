"""
Meat spectra
============

Fat, water and protein content of 215 meat samples against their
near-infrared absorbance spectra.
"""

from pathlib import Path

from sofr.tecator import BONFERRONI_ALPHA, analyze_tecator, parse_tecator

############################################################
# Loading
# -------
# The bundled CSV has 100 absorbance columns followed by the three
# responses.

data = Path(__file__).resolve().parents[1] / "data" / "tecator.csv"
td = parse_tecator(data)
print(td.absorbance.shape, td.wavelengths[[0, -1]])

############################################################
# Six tests per response
# ----------------------
# Reduced bootstrap and null-simulation sizes keep this under a minute;
# ``sofr tecator`` uses 5,000 and 10,000.

cells = analyze_tecator(td, seed=1, B=1000, n_null=2000)
for c in cells:
    flag = "*" if c.significant else ""
    print(f"{c.response:8s} {c.hypothesis} {c.method:4s} {c.p_value:.4f}{flag}")
print(f"* below {BONFERRONI_ALPHA:.4f}")

############################################################
# Every response depends on the spectrum, and for every response the
# mixed-model and quadratic tests reject linearity outright. GGF is less
# emphatic on linearity, most of all for fat.
