"""Constant-covector calibrations for single-sink networks.

A certificate is one constant 1-form per component together with the finite
set of multiplicity patterns that competitors may use.  Constant forms are
closed, so only the pointwise bound on the admissible patterns and the
equality on the candidate have to be checked numerically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .currents import MultiplicityCurrent, PsiNorm, psi_mass

REL_TOL = 1e-12


class CalibrationError(ValueError):
    """A calibration condition failed; ``report`` holds the full check."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True, eq=False)
class CalibrationCert:
    forms: np.ndarray
    admissible_multiplicities: np.ndarray
    psi: PsiNorm

    def __post_init__(self):
        forms = np.array(self.forms, dtype=float)
        G = np.array(self.admissible_multiplicities, dtype=np.int64)
        if forms.ndim != 2 or forms.shape[0] < 1:
            raise ValueError("forms must be a (N-1, n) array")
        if G.ndim != 2 or len(G) == 0:
            raise ValueError("the admissible multiplicity set must be nonempty")
        if G.shape[1] != forms.shape[0]:
            raise ValueError("multiplicity vectors must have one entry per form")
        forms.setflags(write=False)
        G.setflags(write=False)
        object.__setattr__(self, "forms", forms)
        object.__setattr__(self, "admissible_multiplicities", G)

    @property
    def N(self) -> int:
        return self.forms.shape[0] + 1

    @property
    def n(self) -> int:
        return self.forms.shape[1]

    def rotated(self, R) -> "CalibrationCert":
        return CalibrationCert(self.forms @ np.asarray(R).T, self.admissible_multiplicities, self.psi)

    def to_json(self) -> dict:
        return {
            "forms": self.forms.tolist(),
            "admissible": self.admissible_multiplicities.tolist(),
            "alpha": self.psi.alpha,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CalibrationCert":
        try:
            return cls(doc["forms"], doc["admissible"], PsiNorm(float(doc["alpha"])))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed certificate: {exc}") from exc

    @classmethod
    def load(cls, path) -> "CalibrationCert":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def bundled(name: str) -> dict:
    """Load one of the JSON fixtures shipped in ``glsteiner/data``."""
    with resources.files("glsteiner").joinpath("data", name).open() as fh:
        return json.load(fh)


def four_point_example() -> tuple[CalibrationCert, MultiplicityCurrent]:
    """The bundled four-point certificate and its calibrated candidate."""
    doc = bundled("four_point_certificate.json")
    cert = CalibrationCert.from_json(doc)
    cand = MultiplicityCurrent.from_json(doc["candidate"])
    return cert, cand


def phi_eval(cert: CalibrationCert, c: MultiplicityCurrent) -> float:
    """``sum_k len(S_k) sum_i g_i <omega_i, tau_k>``."""
    if not len(c):
        return 0.0
    if c.n != cert.n or c.N != cert.N:
        raise ValueError("certificate and current dimensions differ")
    # len * tau = b - a
    return float(np.einsum("ki,ij,kj->", c.g.astype(float), cert.forms, c.b - c.a))


@dataclass
class CalibrationReport:
    phi: float
    mass: float
    equality_gap: float
    condition_i: bool
    condition_ii: bool
    condition_iii: bool
    witness_norms: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    condition_ii_note: str = "holds by construction: constant forms are closed"

    @property
    def all_hold(self) -> bool:
        return self.condition_i and self.condition_ii and self.condition_iii

    def summary(self) -> str:
        if self.all_hold:
            return "all conditions hold"
        bad = [k for k, ok in (("i", self.condition_i), ("ii", self.condition_ii),
                               ("iii", self.condition_iii)) if not ok]
        return "failed: " + ", ".join(f"({k})" for k in bad)

    def to_json(self) -> dict:
        return {
            "status": self.summary(),
            "phi": self.phi,
            "mass": self.mass,
            "equality_gap": self.equality_gap,
            "conditions": {"i": self.condition_i, "ii": self.condition_ii, "iii": self.condition_iii},
            "condition_ii_note": self.condition_ii_note,
            "witness_norms": [{"g": [int(x) for x in g], "norm": v, "psi": p} for g, v, p in self.witness_norms],
            "violations": [{"g": [int(x) for x in g], "gap": gap} for g, gap in self.violations],
        }


def check_calibration(cert: CalibrationCert, candidate: MultiplicityCurrent,
                      strict: bool = False) -> CalibrationReport:
    """Check the three calibration conditions of ``cert`` for ``candidate``.

    (iii) is checked as ``|sum_i g_i omega_i| <= Psi(g)`` for every admissible
    ``g``, which bounds the pairing of any competitor edge by its cost.  With
    ``strict`` a failed condition raises ``CalibrationError``.
    """
    if len(candidate):
        used = {tuple(g) for g in candidate.g}
        allowed = {tuple(g) for g in cert.admissible_multiplicities}
        extra = used - allowed
        if extra:
            raise ValueError(f"candidate uses non-admissible multiplicities {sorted(extra)}")
    phi = phi_eval(cert, candidate)
    mass = psi_mass(candidate, cert.psi)
    gap = abs(phi - mass)
    ok_i = gap <= REL_TOL * (1.0 + mass)

    witnesses, violations = [], []
    for g in cert.admissible_multiplicities:
        v = float(np.linalg.norm(g @ cert.forms))
        p = float(cert.psi(g))
        witnesses.append((g.copy(), v, p))
        if v > p + REL_TOL:
            violations.append((g.copy(), v - p))
    report = CalibrationReport(phi, mass, gap, bool(ok_i), True, not violations, witnesses, violations)
    if strict and not report.all_hold:
        if violations:
            g, d = max(violations, key=lambda t: t[1])
            raise CalibrationError(f"condition (iii) fails at g={g.tolist()} with gap {d:.6g}", report)
        raise CalibrationError(f"condition (i) fails: |phi - mass| = {gap:.6g}", report)
    return report
