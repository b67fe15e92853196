#!/usr/bin/env python3
"""
Self-supervised objectives on paired view embeddings Za, Zb (n x d).

The VICReg family (variance / invariance / covariance, optionally with the HSIC
covariance penalty) follows the centered-covariance formulation: center each
view, then C = Z^T Z / (n - 1). Barlow Twins, HSIC and NT-Xent are the
comparison objectives.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        def __str__(self) -> str:
            return str(self.value)

import numpy as np

from . import tensor as T
from .tensor import Tensor

logger = logging.getLogger(__name__)


class DegenerateBatchError(ValueError):
    """The batch cannot define the loss (too few rows, constant columns, mismatched views)."""


class CovarianceMode(StrEnum):
    VICREG = "vicreg"
    HSIC = "hsic"


class LossKind(StrEnum):
    VICREG = "vicreg"
    VICREG_HSIC = "vicreghsic"
    BARLOW = "barlow"
    HSIC = "hsic"
    NT_XENT = "ntxent"

    @classmethod
    def parse(cls, text: str) -> LossKind:
        key = text.strip().lower().replace("_", "").replace("-", "")
        aliases = {
            "infonce": cls.NT_XENT,
            "simclr": cls.NT_XENT,
            "barlowtwins": cls.BARLOW,
            "bt": cls.BARLOW,
            "gbt": cls.BARLOW,
        }
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            msg = f"unknown loss {text!r} (choose from {choices})"
            raise ValueError(msg) from None


@dataclass(frozen=True)
class LossParams:
    """Every hyperparameter of the implemented objectives."""

    lambda_: float = 25.0
    mu: float = 25.0
    nu: float = 1.0
    gamma: float = 1.0
    epsilon: float = 1e-4
    p: float = 2.0
    covariance_mode: CovarianceMode = CovarianceMode.VICREG
    temperature: float = 0.5
    lambda_bt: float = 5e-3

    def __post_init__(self):
        object.__setattr__(self, "covariance_mode", CovarianceMode(self.covariance_mode))
        if self.epsilon <= 0:
            msg = f"epsilon must be > 0, got {self.epsilon}"
            raise ValueError(msg)
        if self.gamma <= 0:
            msg = f"gamma must be > 0, got {self.gamma}"
            raise ValueError(msg)
        if self.temperature <= 0:
            msg = f"temperature must be > 0, got {self.temperature}"
            raise ValueError(msg)
        if self.p < 1:
            msg = f"p must be >= 1, got {self.p}"
            raise ValueError(msg)


def _check_pair(za: Tensor, zb: Tensor, min_rows: int) -> tuple[int, int]:
    if za.shape != zb.shape or len(za.shape) != 2:
        msg = f"view embeddings must be matrices of equal shape, got {za.shape} and {zb.shape}"
        raise DegenerateBatchError(msg)
    return _check_rows(za, min_rows)


def _check_rows(z: Tensor, min_rows: int) -> tuple[int, int]:
    if len(z.shape) != 2:
        msg = f"embeddings must be a matrix, got shape {z.shape}"
        raise DegenerateBatchError(msg)
    n, d = z.shape
    if n < min_rows:
        msg = f"loss needs at least {min_rows} rows, got {n}"
        raise DegenerateBatchError(msg)
    return n, d


def _off_diagonal_mask(d: int) -> np.ndarray:
    return 1.0 - np.eye(d)


def invariance_term(za: Tensor, zb: Tensor, p: float = 2.0) -> Tensor:
    """(1/n) sum_i ||za_i - zb_i||_p^2."""
    n, _ = _check_pair(za, zb, 1)
    difference = T.subtract(za, zb)
    if p == 2:
        squared_norms = T.sum(T.power(difference, 2), axis=1)
    else:
        p_sums = T.sum(T.power(T.absolute(difference), p), axis=1)
        squared_norms = T.power(p_sums, 2.0 / p)
    return T.scale(T.sum(squared_norms), 1.0 / n)


def variance_term(z: Tensor, gamma: float = 1.0, epsilon: float = 1e-4) -> Tensor:
    """(1/d) sum_j max(0, gamma - sqrt(Var(z_j) + epsilon)), unbiased variance."""
    _, d = _check_rows(z, 2)
    std = T.sqrt(T.add(T.var_axis0(z), epsilon))
    hinge = T.relu(T.add(T.scale(std, -1.0), gamma))
    return T.scale(T.sum(hinge), 1.0 / d)


def center(z: Tensor) -> Tensor:
    return T.subtract(z, T.mean_axis0(z))


def covariance_matrix(z: Tensor) -> Tensor:
    """C = (1/(n-1)) sum_i (z_i - mean)(z_i - mean)^T, shape d x d."""
    n, _ = _check_rows(z, 2)
    centered = center(z)
    return T.scale(T.matmul(T.transpose(centered), centered), 1.0 / (n - 1))


def covariance_term(z: Tensor, mode: CovarianceMode | str = CovarianceMode.VICREG) -> Tensor:
    """
    Off-diagonal covariance penalty.

    vicreg: (1/d) sum_{i!=j} C_ij^2; hsic: (1/d) sum_{i!=j} (1 + C_ij)^2.
    """
    _, d = _check_rows(z, 2)
    cov = covariance_matrix(z)
    if CovarianceMode(mode) is CovarianceMode.HSIC:
        cov = T.add(cov, 1.0)
    penalty = T.multiply(T.power(cov, 2), _off_diagonal_mask(d))
    return T.scale(T.sum(penalty), 1.0 / d)


def vicreg_family_terms(za: Tensor, zb: Tensor, params: LossParams) -> dict[str, Tensor]:
    """The three weighted-sum components: invariance, variance (both views), covariance (both views)."""
    _check_pair(za, zb, 2)
    return {
        "invariance": invariance_term(za, zb, params.p),
        "variance": T.add(
            variance_term(za, params.gamma, params.epsilon), variance_term(zb, params.gamma, params.epsilon)
        ),
        "covariance": T.add(
            covariance_term(za, params.covariance_mode), covariance_term(zb, params.covariance_mode)
        ),
    }


def combine_vicreg_terms(terms: dict[str, Tensor], params: LossParams) -> Tensor:
    return T.add(
        T.add(T.scale(terms["invariance"], params.lambda_), T.scale(terms["variance"], params.mu)),
        T.scale(terms["covariance"], params.nu),
    )


def vicreg_family_loss(za: Tensor, zb: Tensor, params: LossParams) -> Tensor:
    """lambda * s(Za, Zb) + mu * [v(Za) + v(Zb)] + nu * [c(Za) + c(Zb)]."""
    return combine_vicreg_terms(vicreg_family_terms(za, zb, params), params)


def _standardize(z: Tensor, which: str) -> Tensor:
    var = T.var_axis0(z)
    if np.any(var.values <= 0):
        column = int(np.flatnonzero(var.values.reshape(-1) <= 0)[0])
        msg = f"{which} column {column} has zero variance; cross-correlation is undefined"
        raise DegenerateBatchError(msg)
    return T.multiply(center(z), T.power(T.sqrt(var), -1.0))


def cross_correlation(za: Tensor, zb: Tensor) -> Tensor:
    """R = Za~^T Zb~ / (n - 1) for column-standardized views (R_ii = 1 when Za == Zb)."""
    n, _ = _check_pair(za, zb, 2)
    a = _standardize(za, "view A")
    b = _standardize(zb, "view B")
    return T.scale(T.matmul(T.transpose(a), b), 1.0 / (n - 1))


def _correlation_loss(za: Tensor, zb: Tensor, weight: float, shift: float) -> Tensor:
    _, d = _check_pair(za, zb, 2)
    r = cross_correlation(za, zb)
    eye = np.eye(d)
    on_diagonal = T.sum(T.multiply(T.power(T.add(T.scale(r, -1.0), 1.0), 2), eye))
    shifted = T.add(r, shift) if shift else r
    off_diagonal = T.sum(T.multiply(T.power(shifted, 2), 1.0 - eye))
    return T.add(on_diagonal, T.scale(off_diagonal, weight))


def barlow_twins_loss(za: Tensor, zb: Tensor, lambda_bt: float = 5e-3) -> Tensor:
    """sum_i (1 - R_ii)^2 + lambda_bt * sum_{i!=j} R_ij^2."""
    return _correlation_loss(za, zb, lambda_bt, 0.0)


def hsic_loss(za: Tensor, zb: Tensor, lambda_bt: float = 5e-3) -> Tensor:
    """sum_i (1 - R_ii)^2 + lambda_bt * sum_{i!=j} (1 + R_ij)^2."""
    return _correlation_loss(za, zb, lambda_bt, 1.0)


def nt_xent_loss(za: Tensor, zb: Tensor, temperature: float = 0.5) -> Tensor:
    """
    Normalized-temperature cross entropy over 2n anchors.

    The positive of row i is its counterpart in the other view; the remaining
    2n - 2 rows are negatives. Averaged over both directions.
    """
    n, _ = _check_pair(za, zb, 2)
    z = T.l2_row_normalize(T.concat_rows([za, zb]))
    logits = T.scale(T.matmul(z, T.transpose(z)), 1.0 / temperature)

    size = 2 * n
    not_self = ~np.eye(size, dtype=bool)
    positives = np.zeros((size, size))
    positives[np.arange(n), np.arange(n) + n] = 1.0
    positives[np.arange(n) + n, np.arange(n)] = 1.0

    log_probs = T.log_softmax_rows(logits, mask=not_self)
    return T.scale(T.sum(T.multiply(log_probs, positives)), -1.0 / size)


def params_for(kind: LossKind, params: LossParams) -> LossParams:
    """LossParams with the covariance mode implied by the VICReg-family selector."""
    if kind is LossKind.VICREG:
        return replace(params, covariance_mode=CovarianceMode.VICREG)
    if kind is LossKind.VICREG_HSIC:
        return replace(params, covariance_mode=CovarianceMode.HSIC)
    return params


def compute_loss(kind: LossKind, za: Tensor, zb: Tensor, params: LossParams) -> tuple[Tensor, dict[str, float]]:
    """
    Evaluate the selected objective.

    Returns:
        (loss tensor, component values for diagnostics)
    """
    kind = LossKind(kind)
    if kind in (LossKind.VICREG, LossKind.VICREG_HSIC):
        resolved = params_for(kind, params)
        terms = vicreg_family_terms(za, zb, resolved)
        loss = combine_vicreg_terms(terms, resolved)
        components = {name: term.item() for name, term in terms.items()}
    elif kind is LossKind.BARLOW:
        loss = barlow_twins_loss(za, zb, params.lambda_bt)
        components = {}
    elif kind is LossKind.HSIC:
        loss = hsic_loss(za, zb, params.lambda_bt)
        components = {}
    else:
        loss = nt_xent_loss(za, zb, params.temperature)
        components = {}
    components["loss"] = loss.item()
    return loss, components
