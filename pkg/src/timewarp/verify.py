"""Numerical verification of the alignment objectives on toy inputs.

Implements the KL-regularized expected-reward objective and the DPO
logistic loss (with analytic gradients) so the math the datasets feed can
be tested without a training run. Natural log throughout: the zero-margin
loss anchor is ln 2.
"""

import math
from dataclasses import dataclass

from .errors import DivergenceInfinite, InvalidInput


@dataclass(frozen=True)
class PolicyLogProbs:
    logp_w_theta: float
    logp_l_theta: float
    logp_w_ref: float
    logp_l_ref: float
    lam: float = 1.0

    def validate(self):
        for name in ("logp_w_theta", "logp_l_theta", "logp_w_ref", "logp_l_ref"):
            value = getattr(self, name)
            if value > 0:
                raise InvalidInput(f"{name} = {value} must be <= 0 (log-probability)")
        if self.lam <= 0:
            raise InvalidInput(f"lambda = {self.lam} must be > 0")

    def margin(self) -> float:
        """t = lambda * [(chosen log-ratio) - (rejected log-ratio)]."""
        return self.lam * (
            (self.logp_w_theta - self.logp_w_ref) - (self.logp_l_theta - self.logp_l_ref)
        )


def from_jsonl_row(row: dict) -> PolicyLogProbs:
    return PolicyLogProbs(
        logp_w_theta=float(row["lw_t"]),
        logp_l_theta=float(row["ll_t"]),
        logp_w_ref=float(row["lw_r"]),
        logp_l_ref=float(row["ll_r"]),
        lam=float(row.get("lambda", 1.0)),
    )


def logistic_loss(t: float) -> float:
    """log(1 + exp(-t)), overflow-safe on both tails."""
    if t < -30.0:
        return -t + math.log1p(math.exp(t))
    if t > 30.0:
        return math.log1p(math.exp(-t))
    return math.log1p(math.exp(-t))


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def dpo_loss(batch) -> float:
    """Mean logistic loss over the preference margins."""
    batch = list(batch)
    if not batch:
        raise InvalidInput("empty batch")
    for example in batch:
        example.validate()
    return sum(logistic_loss(example.margin()) for example in batch) / len(batch)


def dpo_grad(batch) -> list:
    """Per-example gradients of dpo_loss w.r.t. the four log-prob fields.

    d loss/d logp_w_theta = -lam * sigma(-t) / N, the rejected-side theta
    gradient is its negative, and reference-side gradients negate the
    corresponding theta gradients.
    """
    batch = list(batch)
    if not batch:
        raise InvalidInput("empty batch")
    n = len(batch)
    grads = []
    for example in batch:
        example.validate()
        s = _sigmoid(-example.margin())
        g_w = -example.lam * s / n
        grads.append(
            {
                "logp_w_theta": g_w,
                "logp_l_theta": -g_w,
                "logp_w_ref": -g_w,
                "logp_l_ref": g_w,
            }
        )
    return grads


@dataclass(frozen=True)
class CategoricalToy:
    rewards: tuple
    p_theta: tuple
    p_ref: tuple

    def validate(self, tol: float = 1e-9):
        if not (len(self.rewards) == len(self.p_theta) == len(self.p_ref)):
            raise InvalidInput("rewards and probability vectors must share a length")
        for name, vec in (("p_theta", self.p_theta), ("p_ref", self.p_ref)):
            if any(p < 0 for p in vec):
                raise InvalidInput(f"{name} has a negative entry")
            if abs(sum(vec) - 1.0) > tol:
                raise InvalidInput(f"{name} sums to {sum(vec)}, not 1")


def kl_divergence(p, q) -> float:
    """KL(p || q) with the 0*log0 := 0 convention."""
    total = 0.0
    for pi, qi in zip(p, q):
        if pi == 0.0:
            continue
        if qi == 0.0:
            raise DivergenceInfinite("reference probability is zero where policy is positive")
        total += pi * math.log(pi / qi)
    return total


def rlhf_objective(toy: CategoricalToy, lam: float) -> dict:
    """Expected reward minus lam * KL(p_theta || p_ref); components included."""
    toy.validate()
    if lam < 0:
        raise InvalidInput(f"lambda = {lam} must be >= 0")
    expected_reward = sum(p * r for p, r in zip(toy.p_theta, toy.rewards))
    kl = kl_divergence(toy.p_theta, toy.p_ref)
    return {
        "objective": expected_reward - lam * kl,
        "expected_reward": expected_reward,
        "kl": kl,
        "lambda": lam,
    }
