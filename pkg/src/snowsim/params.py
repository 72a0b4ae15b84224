"""Protocol parameters, the discrete time base, and parameter validation.

Time is a bare non-negative integer timeslot counter.  The delivery bound
``delta`` and the optional clock-skew bound ``delta_star`` are integer
multiples of one timeslot, which keeps every run replayable.
"""

from __future__ import annotations

from dataclasses import dataclass, field


Timeslot = int


@dataclass(frozen=True)
class ProtocolParams:
    """The tuple governing every protocol instance.

    ``alpha1`` is the flip threshold, ``alpha2`` the lock/finality
    threshold and ``beta`` the consecutive-round output threshold.
    ``delta_star`` is the optional clock-skew bound; when unset, local
    clocks may be offset by arbitrary constants.
    """

    n: int
    f: int
    k: int
    alpha1: int
    alpha2: int
    beta: int
    delta: int
    delta_star: int | None = None

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "f": self.f,
            "k": self.k,
            "alpha1": self.alpha1,
            "alpha2": self.alpha2,
            "beta": self.beta,
            "delta": self.delta,
            "delta_star": self.delta_star,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProtocolParams":
        return cls(
            n=int(d["n"]),
            f=int(d["f"]),
            k=int(d["k"]),
            alpha1=int(d["alpha1"]),
            alpha2=int(d["alpha2"]),
            beta=int(d["beta"]),
            delta=int(d["delta"]),
            delta_star=None if d.get("delta_star") is None else int(d["delta_star"]),
        )


@dataclass
class ValidationReport:
    """Outcome of checking a parameter tuple against the standing constraints."""

    checks: list[tuple[str, bool]] = field(default_factory=list)
    strict_regime: bool = False

    @property
    def ok(self) -> bool:
        return all(passed for _, passed in self.checks)

    def failed(self) -> list[str]:
        return [name for name, passed in self.checks if not passed]

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "checks": [{"name": n, "ok": p} for n, p in self.checks],
            "strict_regime": self.strict_regime,
        }


def validate_params(params: ProtocolParams) -> ValidationReport:
    """Check the constraints a parameter tuple must satisfy.

    Pure and deterministic.  ``strict_regime`` is true iff ``f < n/5`` and
    ``n >= 250``, the precondition under which the published error bounds
    for the default parameter set apply.
    """
    p = params
    report = ValidationReport()
    report.checks.append(("n >= 1", p.n >= 1))
    report.checks.append(("0 <= f", p.f >= 0))
    report.checks.append(("k <= n", 1 <= p.k <= p.n))
    report.checks.append(("alpha1 > k/2", 2 * p.alpha1 > p.k))
    report.checks.append(("alpha2 >= alpha1", p.alpha2 >= p.alpha1))
    report.checks.append(("alpha2 <= k", p.alpha2 <= p.k))
    report.checks.append(("beta >= 1", p.beta >= 1))
    report.checks.append(("delta >= 1", p.delta >= 1))
    report.checks.append(
        ("delta_star >= 0", p.delta_star is None or p.delta_star >= 0)
    )
    report.strict_regime = (5 * p.f < p.n) and (p.n >= 250)
    return report


def parse_params_text(text: str) -> ProtocolParams:
    """Parse a plain-text ``key=value`` parameter file.

    Blank lines and ``#`` comments are ignored.  Unknown keys are an
    error so typos never silently fall back to defaults.
    """
    known = {"n", "f", "k", "alpha1", "alpha2", "beta", "delta", "delta_star"}
    values: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in known:
            raise ValueError(f"line {lineno}: unknown parameter {key!r}")
        values[key] = int(val.strip())
    missing = {"n", "f", "k", "alpha1", "alpha2", "beta", "delta"} - set(values)
    if missing:
        raise ValueError(f"missing parameters: {sorted(missing)}")
    return ProtocolParams.from_dict(values)


def load_params_file(path: str) -> ProtocolParams:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_params_text(fh.read())
