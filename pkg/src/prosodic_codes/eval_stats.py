"""Statistics for same/different listening-test judgements.

Exact binomial tests against chance, Holm-Bonferroni step-down correction
across all tested pairs, and Wilson score intervals for plotting.
"""
from __future__ import annotations

import enum
import math
import operator
from dataclasses import dataclass
from statistics import NormalDist

from .errors import FormatError, InvalidCounts, InvalidP


class System(enum.Enum):
    AE_KMEANS = "ae_kmeans"
    VAE_VAMP = "vae_vamp"

    @classmethod
    def parse(cls, text: str) -> "System":
        key = text.strip().lower().replace("-", "_")
        aliases = {"ae": cls.AE_KMEANS, "aekmeans": cls.AE_KMEANS, "ae_kmeans": cls.AE_KMEANS,
                   "vae": cls.VAE_VAMP, "vamp": cls.VAE_VAMP, "vaevamp": cls.VAE_VAMP,
                   "vae_vamp": cls.VAE_VAMP}
        if key not in aliases:
            raise ValueError(f"unknown system {text!r}")
        return aliases[key]


@dataclass(frozen=True)
class JudgmentRecord:
    system: System
    pair_id: str
    listener_id: str
    judged_different: bool

    def __post_init__(self):
        if not self.pair_id or not self.listener_id:
            raise ValueError("pair and listener ids must be non-empty")


def _check_counts(k, n):
    try:
        k, n = operator.index(k), operator.index(n)
    except TypeError:
        raise InvalidCounts(f"counts must be integers, got k={k!r}, n={n!r}") from None
    if n < 0 or not 0 <= k <= n:
        raise InvalidCounts(f"need 0 <= k <= n, got k={k}, n={n}")
    return k, n


def _log_binom_pmf(i, n, logp, logq):
    return (math.lgamma(n + 1) - math.lgamma(i + 1) - math.lgamma(n - i + 1)
            + i * logp + (n - i) * logq)


def _logsumexp(values):
    top = max(values)
    if top == -math.inf:
        return -math.inf
    return top + math.log(sum(math.exp(v - top) for v in values))


def _tail(k, n, p0, upper=True):
    if upper and k == 0 or not upper and k == n:
        return 1.0
    if p0 in (0.0, 1.0):
        # degenerate null: all mass on one outcome
        atom = 0 if p0 == 0.0 else n
        return 1.0 if (atom >= k if upper else atom <= k) else 0.0
    logp, logq = math.log(p0), math.log1p(-p0)
    idx = range(k, n + 1) if upper else range(0, k + 1)
    return min(1.0, math.exp(_logsumexp([_log_binom_pmf(i, n, logp, logq) for i in idx])))


def binomial_test(k: int, n: int, p0: float = 0.5, alternative: str = "greater") -> float:
    """Exact binomial test p-value.

    ``alternative="greater"`` gives ``P(X >= k)`` under ``Binomial(n, p0)``;
    ``"two-sided"`` sums all outcomes no more likely than ``k`` (with a small
    relative tolerance, as is conventional).
    """
    k, n = _check_counts(k, n)
    if not 0.0 <= p0 <= 1.0:
        raise InvalidCounts(f"p0 must be in [0, 1], got {p0}")
    if alternative == "greater":
        return _tail(k, n, p0, upper=True)
    if alternative == "less":
        return _tail(k, n, p0, upper=False)
    if alternative != "two-sided":
        raise ValueError(f"unknown alternative {alternative!r}")
    if n == 0:
        return 1.0
    if p0 in (0.0, 1.0):
        return 1.0 if k == round(p0 * n) else 0.0
    logp, logq = math.log(p0), math.log1p(-p0)
    logs = [_log_binom_pmf(i, n, logp, logq) for i in range(n + 1)]
    cut = logs[k] + 1e-7
    return min(1.0, math.exp(_logsumexp([v for v in logs if v <= cut])))


def binomial_test_one_sided(k: int, n: int, p0: float = 0.5) -> float:
    return binomial_test(k, n, p0, "greater")


@dataclass
class HolmResult:
    reject: list
    adjusted: list


def holm_bonferroni(pvalues, alpha: float = 0.05) -> HolmResult:
    """Holm's step-down procedure.

    Sorted ascending, ``p_(i)`` is rejected while ``p_(i) <= alpha/(m-i+1)``;
    testing stops at the first failure.  Adjusted p-values use the running
    maximum of ``(m-i+1) p_(i)`` clipped to 1.  Both lists are in input order.
    """
    ps = [float(p) for p in pvalues]
    for p in ps:
        if not 0.0 <= p <= 1.0 or math.isnan(p):
            raise InvalidP(f"p-value {p} outside [0, 1]")
    m = len(ps)
    order = sorted(range(m), key=lambda i: (ps[i], i))
    reject = [False] * m
    adjusted = [1.0] * m
    running = 0.0
    stopped = False
    for rank, i in enumerate(order):
        factor = m - rank
        running = max(running, min(1.0, factor * ps[i]))
        adjusted[i] = running
        if not stopped and ps[i] <= alpha / factor:
            reject[i] = True
        else:
            stopped = True
    return HolmResult(reject, adjusted)


def binomial_ci(k: int, n: int, confidence: float = 0.95):
    """Wilson score interval for a binomial proportion."""
    k, n = _check_counts(k, n)
    if n < 1:
        raise InvalidCounts("n must be >= 1 for a confidence interval")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    phat = k / n
    denom = 1.0 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, min(phat, centre - half))
    hi = 1.0 if k == n else min(1.0, max(phat, centre + half))
    return lo, hi


@dataclass
class PairRow:
    system: System
    pair_id: str
    k: int
    n: int
    p_value: float
    p_adjusted: float
    significant: bool


REPORT_COLUMNS = ("system", "pair_id", "k", "n", "p_value", "p_adjusted", "significant")


def per_pair_report(records, alpha: float = 0.005, p0: float = 0.5,
                    alternative: str = "greater") -> list[PairRow]:
    """Test each (system, pair) group, then correct jointly across all groups."""
    counts = {}
    for r in records:
        key = (r.system, r.pair_id)
        k, n = counts.get(key, (0, 0))
        counts[key] = (k + int(bool(r.judged_different)), n + 1)
    keys = sorted(counts, key=lambda key: (key[0].value, key[1]))
    pvals = [binomial_test(*counts[key], p0=p0, alternative=alternative) for key in keys]
    holm = holm_bonferroni(pvals, alpha)
    return [PairRow(key[0], key[1], counts[key][0], counts[key][1], p, adj, rej)
            for key, p, adj, rej in zip(keys, pvals, holm.adjusted, holm.reject)]


@dataclass
class SystemRow:
    system: System
    k: int
    n: int
    rate: float
    ci_low: float
    ci_high: float
    p_value: float


def per_system_report(records, p0: float = 0.5, confidence: float = 0.95,
                      alternative: str = "greater") -> list[SystemRow]:
    """Pool every judgement of a system into one binomial test and interval."""
    pooled = {}
    for r in records:
        k, n = pooled.get(r.system, (0, 0))
        pooled[r.system] = (k + int(bool(r.judged_different)), n + 1)
    rows = []
    for system in sorted(pooled, key=lambda s: s.value):
        k, n = pooled[system]
        lo, hi = binomial_ci(k, n, confidence)
        rows.append(SystemRow(system, k, n, k / n, lo, hi,
                              binomial_test(k, n, p0, alternative)))
    return rows


def read_judgments(path) -> list[JudgmentRecord]:
    """Tab-separated ``system pair_id listener_id judged_different`` rows.

    A first line starting with ``system`` is treated as a header.
    """
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if lineno == 1 and cols[0].strip().lower() == "system":
                continue
            if len(cols) != 4:
                raise FormatError("expected 4 tab-separated columns", path, lineno)
            if cols[3].strip() not in ("0", "1"):
                raise FormatError("judged_different must be 0 or 1", path, lineno)
            try:
                out.append(JudgmentRecord(System.parse(cols[0]), cols[1].strip(),
                                          cols[2].strip(), cols[3].strip() == "1"))
            except ValueError as exc:
                raise FormatError(str(exc), path, lineno) from None
    return out


def format_report(rows) -> str:
    lines = ["\t".join(REPORT_COLUMNS)]
    for r in rows:
        lines.append("\t".join([r.system.value, r.pair_id, str(r.k), str(r.n), repr(r.p_value),
                                repr(r.p_adjusted), "1" if r.significant else "0"]))
    return "\n".join(lines) + "\n"


def format_system_report(rows) -> str:
    lines = ["system\tk\tn\trate\tci_low\tci_high\tp_value"]
    for r in rows:
        lines.append("\t".join([r.system.value, str(r.k), str(r.n), repr(r.rate),
                                repr(r.ci_low), repr(r.ci_high), repr(r.p_value)]))
    return "\n".join(lines) + "\n"
