"""Assembly of Bayesian model instances from a :class:`ModelSpec` and data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import MetaDataset, ModelSpec, compute_effects, effect_arrays, get_model_spec
from ..distributions import DistSpec

__all__ = ["ModelInstance", "build_model", "ZETA_PRIOR", "HYPER_NAMES"]

#: Control-arm log odds prior, N(0, 10^4) in variance form.
ZETA_PRIOR = DistSpec("normal", (0.0, 100.0))

HYPER_NAMES = {
    "normal": ("mu", "tau"),
    "t": ("mu", "omega", "nu"),
    "skew-normal": ("xi", "omega", "gamma"),
    "dp-points": ("mu_b", "tau_b", "alpha"),
}


@dataclass(frozen=True)
class ModelInstance:
    """Data plus everything needed to evaluate the log posterior.

    Binomial models carry arm-level counts (``t, mt, c, mc``); the normal
    approximation carries ``y`` and ``v``.  ``fixed`` pins hyperparameters
    to constants, which the samplers then skip.
    """

    spec: ModelSpec
    study_ids: tuple[str, ...]
    likelihood: str
    t: np.ndarray | None = None
    mt: np.ndarray | None = None
    c: np.ndarray | None = None
    mc: np.ndarray | None = None
    y: np.ndarray | None = None
    v: np.ndarray | None = None
    n_atoms: int | None = None
    fixed: dict[str, float] = field(default_factory=dict)
    # crude per-study log OR and variance, for initial values and step sizes
    y0: np.ndarray | None = None
    v0: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.study_ids)

    @property
    def family(self) -> str:
        return self.spec.re_family

    @property
    def priors(self) -> dict[str, DistSpec]:
        return self.spec.priors

    @property
    def free_hypers(self) -> tuple[str, ...]:
        return tuple(h for h in HYPER_NAMES[self.family] if h not in self.fixed)


def build_model(spec: ModelSpec | str, data, fixed: dict[str, float] | None = None) -> ModelInstance:
    """Bind a Bayesian model specification to data.

    ``data`` is a :class:`MetaDataset` for binomial likelihoods, or effect rows
    (or a ``(y, v)`` pair) for the normal approximation.
    """
    if isinstance(spec, str):
        spec = get_model_spec(spec)
    if not spec.is_bayesian:
        raise ValueError(f"{spec.model_id} is not a Bayesian model")
    if spec.re_family not in HYPER_NAMES:
        raise ValueError(f"unsupported random-effects family {spec.re_family!r}")
    fixed = dict(fixed or {})
    unknown = set(fixed) - set(HYPER_NAMES[spec.re_family])
    if unknown:
        raise ValueError(f"cannot fix unknown parameters {sorted(unknown)}")
    missing = [h for h in HYPER_NAMES[spec.re_family] if h not in spec.priors and h not in fixed]
    if missing:
        raise ValueError(f"{spec.model_id}: no prior for {missing}")

    if spec.likelihood == "binomial":
        if not isinstance(data, MetaDataset):
            raise TypeError("binomial models need a MetaDataset")
        t, mt, c, mc = data.arrays()
        y0, v0 = effect_arrays(compute_effects(data))
        kw = dict(t=t, mt=mt, c=c, mc=mc, y0=y0, v0=v0)
        ids = tuple(data.study_ids)
    elif spec.likelihood == "normal-approximation":
        y, v = effect_arrays(data)
        kw = dict(y=y, v=v, y0=y, v0=v)
        try:
            ids = tuple(r.study_id for r in data)
        except AttributeError:
            ids = tuple(str(i + 1) for i in range(y.size))
    else:
        raise ValueError(f"unknown likelihood {spec.likelihood!r}")

    n = len(ids)
    n_atoms = None
    if spec.re_family == "dp-points":
        n_atoms = n if spec.dp_truncation == "n" else int(spec.dp_truncation)
        if n_atoms < 1:
            raise ValueError("DP truncation must be at least 1")
    for name, value in fixed.items():
        if not math.isfinite(value):
            raise ValueError(f"fixed value for {name} must be finite")
    return ModelInstance(
        spec=spec, study_ids=ids, likelihood=spec.likelihood, n_atoms=n_atoms, fixed=fixed, **kw
    )
