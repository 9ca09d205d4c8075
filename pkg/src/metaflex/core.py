"""Datasets, log odds ratio effects and the model/result vocabulary."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .distributions import DistSpec

__all__ = [
    "DataError",
    "StudyExclusionError",
    "DatasetTooSmallError",
    "ArmData",
    "MetaDataset",
    "EffectRow",
    "ModelSpec",
    "FitResult",
    "MODEL_SPECS",
    "MODEL_IDS",
    "BAYES_MODEL_IDS",
    "FREQ_MODEL_IDS",
    "get_model_spec",
    "compute_effects",
    "effect_arrays",
    "validate_dataset",
    "read_arm_csv",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("study_id", "events_trt", "n_trt", "events_ctrl", "n_ctrl")


class DataError(ValueError):
    """Invalid or unusable study data; ``study_id`` names the culprit when known."""

    def __init__(self, message: str, study_id: str | None = None):
        super().__init__(message)
        self.study_id = study_id


class StudyExclusionError(DataError):
    """A study with zero (or all) events in both arms reached effect computation."""


class DatasetTooSmallError(DataError):
    """Fewer than two studies remain after exclusions."""


@dataclass(frozen=True)
class ArmData:
    study_id: str
    events_trt: int
    n_trt: int
    events_ctrl: int
    n_ctrl: int

    def __post_init__(self):
        for name in ("events_trt", "n_trt", "events_ctrl", "n_ctrl"):
            value = getattr(self, name)
            if int(value) != value:
                raise DataError(f"{name}={value!r} is not an integer count", self.study_id)
            object.__setattr__(self, name, int(value))
        if self.n_trt < 1 or self.n_ctrl < 1:
            raise DataError("arm sizes must be at least 1", self.study_id)
        if not 0 <= self.events_trt <= self.n_trt:
            raise DataError("treatment events outside [0, n_trt]", self.study_id)
        if not 0 <= self.events_ctrl <= self.n_ctrl:
            raise DataError("control events outside [0, n_ctrl]", self.study_id)

    @property
    def double_zero(self) -> bool:
        return self.events_trt == 0 and self.events_ctrl == 0

    @property
    def double_full(self) -> bool:
        return self.events_trt == self.n_trt and self.events_ctrl == self.n_ctrl


@dataclass(frozen=True)
class MetaDataset:
    """Arm-level binary outcome data, optionally with the generating true effects."""

    studies: tuple[ArmData, ...]
    true_effects: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "studies", tuple(self.studies))
        ids = [s.study_id for s in self.studies]
        if len(set(ids)) != len(ids):
            raise DataError("study_id values must be unique")
        if self.true_effects is not None:
            te = np.asarray(self.true_effects, dtype=float)
            if te.shape != (len(self.studies),):
                raise DataError("true_effects must have one entry per study")
            object.__setattr__(self, "true_effects", te)

    def __len__(self):
        return len(self.studies)

    @property
    def study_ids(self) -> list[str]:
        return [s.study_id for s in self.studies]

    def arrays(self):
        """``(events_trt, n_trt, events_ctrl, n_ctrl)`` as float arrays."""
        a = np.array(
            [(s.events_trt, s.n_trt, s.events_ctrl, s.n_ctrl) for s in self.studies], dtype=float
        ).reshape(-1, 4)
        return a[:, 0], a[:, 1], a[:, 2], a[:, 3]

    @classmethod
    def from_arrays(cls, events_trt, n_trt, events_ctrl, n_ctrl, study_ids=None, true_effects=None):
        n = len(events_trt)
        if study_ids is None:
            study_ids = [str(i + 1) for i in range(n)]
        studies = [
            ArmData(str(sid), int(t), int(mt), int(c), int(mc))
            for sid, t, mt, c, mc in zip(study_ids, events_trt, n_trt, events_ctrl, n_ctrl)
        ]
        return cls(tuple(studies), true_effects)


@dataclass(frozen=True)
class EffectRow:
    study_id: str
    y: float
    v: float
    continuity_corrected: bool = False


def compute_effects(d: MetaDataset, cc: float = 0.5) -> list[EffectRow]:
    """Log odds ratios and their large-sample variances.

    When any of a study's four cells is zero, ``cc`` is added to all four.

    Raises
    ------
    StudyExclusionError
        For a study with no events (or only events) in both arms.
    """
    if cc < 0:
        raise ValueError("continuity correction must be non-negative")
    rows = []
    for s in d.studies:
        if s.double_zero or s.double_full:
            kind = "zero" if s.double_zero else "all"
            raise StudyExclusionError(
                f"study {s.study_id!r} has {kind} events in both arms", s.study_id
            )
        cells = [s.events_trt, s.n_trt - s.events_trt, s.events_ctrl, s.n_ctrl - s.events_ctrl]
        corrected = min(cells) == 0
        if corrected:
            if cc == 0:
                raise StudyExclusionError(
                    f"study {s.study_id!r} has a zero cell and cc=0", s.study_id
                )
            cells = [x + cc for x in cells]
        a, b, c, e = (float(x) for x in cells)
        y = math.log(a * e / (b * c))
        v = 1.0 / a + 1.0 / b + 1.0 / c + 1.0 / e
        rows.append(EffectRow(s.study_id, y, v, corrected))
    return rows


def effect_arrays(effects) -> tuple[np.ndarray, np.ndarray]:
    """Accept a list of :class:`EffectRow` or a ``(y, v)`` pair; return float arrays."""
    if isinstance(effects, tuple) and len(effects) == 2 and not isinstance(effects[0], EffectRow):
        y, v = effects
    else:
        y = [r.y for r in effects]
        v = [r.v for r in effects]
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    if y.shape != v.shape or y.ndim != 1:
        raise ValueError("y and v must be 1-D arrays of equal length")
    if np.any(~(v > 0)):
        raise ValueError("within-study variances must be positive")
    return y, v


def validate_dataset(d: MetaDataset) -> tuple[MetaDataset, list[dict]]:
    """Drop studies with zero (or all) events in both arms; they are not replaced."""
    keep, report = [], []
    for i, s in enumerate(d.studies):
        if s.double_zero:
            report.append({"study_id": s.study_id, "reason": "zero events in both arms"})
        elif s.double_full:
            report.append({"study_id": s.study_id, "reason": "all events in both arms"})
        else:
            keep.append(i)
    if len(keep) < 2:
        raise DatasetTooSmallError(
            f"{len(keep)} usable studies remain after excluding {len(report)}; need at least 2"
        )
    if not report:
        return d, report
    te = None if d.true_effects is None else d.true_effects[keep]
    return MetaDataset(tuple(d.studies[i] for i in keep), te), report


def read_arm_csv(path) -> MetaDataset:
    """Read ``study_id,events_trt,n_trt,events_ctrl,n_ctrl`` (header required)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in CSV_COLUMNS):
            raise DataError(f"{path}: header must contain {','.join(CSV_COLUMNS)}")
        studies = []
        for lineno, row in enumerate(reader, start=2):
            sid = (row.get("study_id") or "").strip()
            try:
                counts = [int(row[c].strip()) for c in CSV_COLUMNS[1:]]
            except (TypeError, ValueError, AttributeError):
                raise DataError(
                    f"{path}, line {lineno} (study {sid!r}): counts must be integers", sid or None
                ) from None
            try:
                studies.append(ArmData(sid, *counts))
            except DataError as exc:
                raise DataError(f"{path}, line {lineno} (study {sid!r}): {exc}", sid) from None
    return MetaDataset(tuple(studies))


# ----------------------------------------------------------------------------
# model registry
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """One evaluated model: likelihood, random-effects family and priors.

    ``dp_truncation`` is an atom count, the string ``"n"`` (one atom per
    study), or ``None`` for non-DP models.
    """

    model_id: str
    likelihood: str
    re_family: str
    priors: dict[str, DistSpec] = field(default_factory=dict)
    dp_truncation: int | str | None = None
    estimator: str = "bayes"

    @property
    def is_bayesian(self) -> bool:
        return self.estimator == "bayes"


def _n(mean, var):
    return DistSpec("normal", (mean, math.sqrt(var)))


_VAGUE = _n(0.0, 1e4)
_HN = DistSpec("half-normal", (1.0,))
_UNIF = DistSpec("uniform", (0.0, 10.0))
_NU = DistSpec("exponential", (0.10, 2.0))
_SCALE = {"HN": _HN, "Unif": _UNIF}


def _registry() -> dict[str, ModelSpec]:
    specs = []
    for tag in ("HN", "Unif"):
        specs.append(
            ModelSpec(f"binomial-normal({tag})", "binomial", "normal", {"mu": _VAGUE, "tau": _SCALE[tag]})
        )
    for tag in ("HN", "Unif"):
        specs.append(
            ModelSpec(
                f"binomial-t({tag})", "binomial", "t",
                {"mu": _VAGUE, "omega": _SCALE[tag], "nu": _NU},
            )
        )
    for tag in ("HN", "Unif"):
        specs.append(
            ModelSpec(
                f"binomial-SN({tag})", "binomial", "skew-normal",
                {"xi": _VAGUE, "omega": _SCALE[tag], "gamma": _n(0.0, 25.0)},
            )
        )
    for tau_tag in ("HN", "Unif"):
        for amax, n_atoms in ((5.0, 26), (10.0, 51)):
            specs.append(
                ModelSpec(
                    f"binomial-DP-{n_atoms}({tau_tag}/Unif)", "binomial", "dp-points",
                    {
                        "mu_b": _VAGUE,
                        "tau_b": _SCALE[tau_tag],
                        "alpha": DistSpec("uniform", (0.3, amax)),
                    },
                    dp_truncation=n_atoms,
                )
            )
    specs.append(
        ModelSpec(
            "binomial-DP-n(Unif/Gamma)", "binomial", "dp-points",
            {"mu_b": _VAGUE, "tau_b": _UNIF, "alpha": DistSpec("gamma", (1.0, 1.0))},
            dp_truncation="n",
        )
    )
    specs += [
        ModelSpec("binomial-normal(ML)", "binomial", "normal", estimator="ML"),
        ModelSpec("normal-normal(REML)", "normal-approximation", "normal", estimator="REML"),
        ModelSpec("normal-t", "normal-approximation", "t", estimator="ML"),
        ModelSpec(
            "normal-common-mean-mixture", "normal-approximation", "common-mean-mixture",
            estimator="ML",
        ),
    ]
    return {s.model_id: s for s in specs}


MODEL_SPECS: dict[str, ModelSpec] = _registry()
MODEL_IDS: tuple[str, ...] = tuple(MODEL_SPECS)
BAYES_MODEL_IDS = tuple(k for k, s in MODEL_SPECS.items() if s.is_bayesian)
FREQ_MODEL_IDS = tuple(k for k, s in MODEL_SPECS.items() if not s.is_bayesian)


def _norm_id(model_id: str) -> str:
    return "".join(model_id.split()).lower()


_BY_NORM = {_norm_id(k): k for k in MODEL_SPECS}


def get_model_spec(model_id: str) -> ModelSpec:
    """Look up a model; matching ignores case and whitespace."""
    try:
        return MODEL_SPECS[_BY_NORM[_norm_id(model_id)]]
    except KeyError:
        raise KeyError(f"unknown model {model_id!r}; choose from {', '.join(MODEL_IDS)}") from None


# ----------------------------------------------------------------------------
# fit results
# ----------------------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


@dataclass
class FitResult:
    """Point estimates and 95% intervals on the log odds ratio scale.

    ``tau2`` is the between-study variance (log-OR squared).  ``theta`` and
    ``theta_ci`` hold shrinkage estimates per study when the model provides
    them.  Model-specific quantities go in ``extras``.
    """

    model_id: str
    mu: float
    mu_ci: tuple[float, float] | None = None
    tau2: float | None = None
    tau2_ci: tuple[float, float] | None = None
    theta: np.ndarray | None = None
    theta_ci: np.ndarray | None = None
    study_ids: list[str] | None = None
    extras: dict[str, Any] = field(default_factory=dict)
    converged: bool = True
    diagnostics: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.tau2 is not None and self.tau2 < 0:
            if self.tau2 > -1e-12:
                self.tau2 = 0.0
            else:
                raise ValueError(f"tau2 must be non-negative, got {self.tau2}")
        for name in ("mu_ci", "tau2_ci"):
            ci = getattr(self, name)
            if ci is not None:
                lo, hi = float(ci[0]), float(ci[1])
                if lo > hi:
                    raise ValueError(f"{name} lower bound exceeds upper bound")
                setattr(self, name, (lo, hi))
        if self.theta is not None:
            self.theta = np.asarray(self.theta, dtype=float)
        if self.theta_ci is not None:
            self.theta_ci = np.asarray(self.theta_ci, dtype=float).reshape(-1, 2)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "mu": self.mu,
            "mu_ci": self.mu_ci,
            "tau2": self.tau2,
            "tau2_ci": self.tau2_ci,
            "theta": self.theta,
            "theta_ci": self.theta_ci,
            "study_ids": self.study_ids,
            "extras": self.extras,
            "converged": self.converged,
            "diagnostics": self.diagnostics,
            "notes": self.notes,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(_jsonable(self.to_dict()), **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        d = dict(d)
        for name in ("mu_ci", "tau2_ci"):
            if d.get(name) is not None:
                d[name] = tuple(d[name])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        return cls.from_dict(json.loads(text))


def as_effect_rows(study_ids: Sequence[str], y: Iterable[float], v: Iterable[float]) -> list[EffectRow]:
    return [EffectRow(str(s), float(a), float(b)) for s, a, b in zip(study_ids, y, v)]
