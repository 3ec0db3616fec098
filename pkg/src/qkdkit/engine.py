"""Unified simulation pipeline: dispatch a configured protocol run, apply
post-processing accounting, and assemble a deterministic report.

Reports are pure functions of (config, seed); wall-clock timing lives on
the Report object but stays outside the canonical serialization so that
two identical runs serialize byte-identically.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from ._version import __version__
from .channel import Detector, FiberLink, LinkModel, OpticalQuality, qber_model
from .cv import (
    I_AB_CONVENTIONS,
    CvParams,
    cv_holevo,
    cv_mutual_info,
    simulate_cv_session,
)
from .decoy import (
    ESTIMATOR_IDS,
    DecoyEstimate,
    GainEntry,
    GainTable,
    IntensitySet,
    decoy_key_rate,
    estimate_decoy,
    gains_from_model,
)
from .exceptions import ConfigError, ParameterError
from .mathutils import ConfidenceInterval, SecurityBudget, binary_entropy
from .postprocessing import (
    DEFAULT_AUTH_TAG_BITS,
    KeyAccounting,
    ReconciliationModel,
    epsilon_total,
    final_key_length,
    reconciliation_leakage,
)
from .protocols import (
    CHSH_MAX_ANGLES_DEG,
    chsh_s,
    run_bb84,
    simulate_e91,
)
from .rates import (
    GainTable2D,
    TfSlice,
    TfSliceData,
    mdi_bounds,
    mdi_rate,
    rrdps_rate,
    tf_rate,
)
from .rates import cow_rate as _cow_rate
from .rates import dps_rate as _dps_rate
from .rng import derive_seed, stream

__all__ = [
    "PROTOCOLS",
    "RunConfig",
    "Report",
    "config_from_dict",
    "config_to_dict",
    "load_config",
    "set_config_value",
    "canonical_json",
    "run_pipeline",
    "sweep",
    "optimize_intensities",
]

PROTOCOLS = ("bb84", "bb84-decoy", "e91", "mdi", "tf", "dps", "cow", "rrdps", "cv")

ABORT_INSECURE = "insecure channel"
ABORT_NO_BELL = "Bell violation not detected"
ABORT_LOW_RATE = "insufficient key rate"
ABORT_NO_PAIR_YIELD = "no single-photon-pair yield"
ABORT_NOISY_CV = "channel too noisy"

_DEFAULT_BUDGET = SecurityBudget(eps_sec=1e-9, eps_cor=1e-15, eps_pe=1e-10, eps_auth=1e-10)

# blocks each protocol requires / additionally accepts in its config
_REQUIRED_BLOCKS = {
    "bb84": (),
    "bb84-decoy": ("intensities",),
    "e91": (),
    "mdi": ("intensities", "mdi"),
    "tf": ("tf",),
    "dps": (),
    "cow": ("cow",),
    "rrdps": ("rrdps",),
    "cv": ("cv",),
}
_OPTIONAL_BLOCKS = {
    "bb84": (),
    "bb84-decoy": (),
    "e91": ("e91",),
    "mdi": (),
    "tf": (),
    "dps": (),
    "cow": (),
    "rrdps": (),
    "cv": (),
}
_ALL_BLOCKS = ("intensities", "cv", "e91", "mdi", "tf", "cow", "rrdps")


@dataclass(frozen=True)
class E91Block:
    angles_deg: tuple[float, float, float, float] = CHSH_MAX_ANGLES_DEG


@dataclass(frozen=True)
class MdiBlock:
    """Observed two-party gain table; rows are (a, b, gain, qber)."""

    gains: GainTable2D


@dataclass(frozen=True)
class TfBlock:
    slices: tuple[TfSlice, ...]


@dataclass(frozen=True)
class CowBlock:
    monitor_fraction: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.monitor_fraction < 1.0:
            raise ConfigError("monitor_fraction must be in [0, 1)")


@dataclass(frozen=True)
class RrdpsBlock:
    block_length: int

    def __post_init__(self) -> None:
        if self.block_length < 2:
            raise ConfigError("block_length must be >= 2")


@dataclass(frozen=True)
class RunConfig:
    protocol: str
    link: LinkModel
    n_pulses: int
    seed: int
    mode: str = "analytic"
    intensities: IntensitySet | None = None
    cv: CvParams | None = None
    budget: SecurityBudget = _DEFAULT_BUDGET
    reconciliation: ReconciliationModel = field(default_factory=ReconciliationModel)
    estimator_id: str = "lmc-reference"
    sample_fraction: float = 0.1
    repetition_rate_hz: float = 1e8
    auth_bits: int = DEFAULT_AUTH_TAG_BITS
    i_ab_convention: str = "chi-tot"
    e91: E91Block | None = None
    mdi: MdiBlock | None = None
    tf: TfBlock | None = None
    cow: CowBlock | None = None
    rrdps: RrdpsBlock | None = None

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.mode not in ("analytic", "monte-carlo"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.n_pulses < 1:
            raise ConfigError("n_pulses must be >= 1")
        if self.estimator_id not in ESTIMATOR_IDS:
            raise ConfigError(f"unknown estimator {self.estimator_id!r}")
        if not 0.0 < self.sample_fraction < 1.0:
            raise ConfigError("sample_fraction must be in (0, 1)")
        if self.repetition_rate_hz < 0.0:
            raise ConfigError("repetition_rate_hz must be >= 0")
        if self.auth_bits < 0:
            raise ConfigError("auth_bits must be >= 0")
        if self.i_ab_convention not in I_AB_CONVENTIONS:
            raise ConfigError(f"unknown i_ab_convention {self.i_ab_convention!r}")
        required = _REQUIRED_BLOCKS[self.protocol]
        allowed = set(required) | set(_OPTIONAL_BLOCKS[self.protocol])
        for name in _ALL_BLOCKS:
            present = getattr(self, name) is not None
            if name in required and not present:
                raise ConfigError(f"protocol {self.protocol!r} requires block {name!r}")
            if present and name not in allowed:
                raise ConfigError(
                    f"block {name!r} is not used by protocol {self.protocol!r}"
                )


@dataclass(frozen=True)
class Report:
    """One pipeline outcome; canonical JSON excludes timing metadata."""

    protocol: str
    config: dict[str, Any]
    aborted: bool
    abort_reason: str | None
    rate_per_pulse: float | None
    rate_bits_per_second: float | None
    qber: float | None
    qber_ci: dict[str, float] | None
    sift_fraction: float | None
    sections: dict[str, Any]
    accounting: dict[str, Any] | None
    eps: dict[str, float]
    notes: dict[str, Any]
    elapsed_seconds: float

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "toolkit_version": __version__,
            "protocol": self.protocol,
            "aborted": self.aborted,
            "abort_reason": self.abort_reason,
            "rate_per_pulse": self.rate_per_pulse,
            "rate_bits_per_second": self.rate_bits_per_second,
            "qber": self.qber,
            "qber_ci": self.qber_ci,
            "sift_fraction": self.sift_fraction,
        }
        for key in sorted(self.sections):
            out[key] = self.sections[key]
        out["accounting"] = self.accounting
        out["eps"] = self.eps
        out["notes"] = self.notes
        out["config"] = self.config
        return out

    def to_json(self, precision: int = 9) -> str:
        return canonical_json(self.to_dict(), precision)


def _format_float(x: float, precision: int) -> str:
    if not math.isfinite(x):
        raise ParameterError("report fields must be finite")
    if x == 0.0:
        return "0"
    return format(x, f".{precision}g")


def canonical_json(obj: Any, precision: int = 9) -> str:
    """Deterministic JSON: insertion-ordered keys, fixed float precision.

    Idempotent under parse/re-serialize at the same precision, which makes
    report round-trips byte-identical.
    """
    if not 1 <= precision <= 17:
        raise ParameterError("precision must be in [1, 17]")

    def ser(o: Any) -> str:
        if o is None or o is True or o is False:
            return json.dumps(o)
        if isinstance(o, bool | np.bool_):
            return json.dumps(bool(o))
        if isinstance(o, int | np.integer):
            return str(int(o))
        if isinstance(o, float | np.floating):
            return _format_float(float(o), precision)
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, dict):
            return "{" + ",".join(f"{json.dumps(str(k))}:{ser(v)}" for k, v in o.items()) + "}"
        if isinstance(o, list | tuple | np.ndarray):
            return "[" + ",".join(ser(v) for v in o) + "]"
        raise ParameterError(f"cannot serialize {type(o).__name__}")

    return ser(obj)


# --- config (de)serialization ------------------------------------------------


def _require_keys(d: dict, allowed: set[str], required: set[str], where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown field(s) in {where}: {sorted(unknown)}")
    missing = required - set(d)
    if missing:
        raise ConfigError(f"missing field(s) in {where}: {sorted(missing)}")


def _link_from_dict(d: dict) -> LinkModel:
    _require_keys(
        d,
        {"fiber", "detector", "optics", "mean_photon_number"},
        {"fiber", "detector", "optics", "mean_photon_number"},
        "link",
    )
    fiber = d["fiber"]
    _require_keys(
        fiber,
        {"attenuation_db_per_km", "length_km", "extra_loss_db"},
        {"attenuation_db_per_km", "length_km"},
        "link.fiber",
    )
    det = d["detector"]
    _require_keys(
        det, {"efficiency", "dark_count_prob"}, {"efficiency", "dark_count_prob"}, "link.detector"
    )
    opt = d["optics"]
    _require_keys(opt, {"visibility", "misalignment_qber"}, {"visibility"}, "link.optics")
    return LinkModel(
        fiber=FiberLink(
            attenuation_db_per_km=float(fiber["attenuation_db_per_km"]),
            length_km=float(fiber["length_km"]),
            extra_loss_db=float(fiber.get("extra_loss_db", 0.0)),
        ),
        detector=Detector(
            efficiency=float(det["efficiency"]),
            dark_count_prob=float(det["dark_count_prob"]),
        ),
        optics=OpticalQuality(
            visibility=float(opt["visibility"]),
            misalignment_qber=float(opt.get("misalignment_qber", 0.0)),
        ),
        mean_photon_number=float(d["mean_photon_number"]),
    )


def config_from_dict(d: dict) -> RunConfig:
    """Parse and validate a config mapping; unknown fields are errors."""
    if "wdm" in d:
        raise ConfigError("WDM coexistence is reserved but not implemented")
    d = {k: v for k, v in d.items() if v is not None}  # null means absent
    allowed = {
        "protocol",
        "link",
        "n_pulses",
        "seed",
        "mode",
        "intensities",
        "cv",
        "budget",
        "reconciliation",
        "estimator",
        "sample_fraction",
        "repetition_rate_hz",
        "auth_bits",
        "i_ab_convention",
        "e91",
        "mdi",
        "tf",
        "cow",
        "rrdps",
    }
    _require_keys(d, allowed, {"protocol", "link", "n_pulses"}, "config")
    if "seed" not in d:
        raise ConfigError("config carries no seed; pass one explicitly")

    kwargs: dict[str, Any] = {
        "protocol": str(d["protocol"]),
        "link": _link_from_dict(d["link"]),
        "n_pulses": int(d["n_pulses"]),
        "seed": int(d["seed"]),
        "mode": str(d.get("mode", "analytic")),
        "estimator_id": str(d.get("estimator", "lmc-reference")),
        "sample_fraction": float(d.get("sample_fraction", 0.1)),
        "repetition_rate_hz": float(d.get("repetition_rate_hz", 1e8)),
        "auth_bits": int(d.get("auth_bits", DEFAULT_AUTH_TAG_BITS)),
        "i_ab_convention": str(d.get("i_ab_convention", "chi-tot")),
    }
    if "intensities" in d:
        i = d["intensities"]
        _require_keys(
            i,
            {"signal_mu", "decoy_nu", "vacuum_omega", "usage_fractions"},
            {"signal_mu", "decoy_nu"},
            "intensities",
        )
        kwargs["intensities"] = IntensitySet(
            signal_mu=float(i["signal_mu"]),
            decoy_nu=float(i["decoy_nu"]),
            vacuum_omega=float(i.get("vacuum_omega", 0.0)),
            usage_fractions=tuple(i.get("usage_fractions", (0.8, 0.15, 0.05))),
        )
    if "cv" in d:
        c = d["cv"]
        _require_keys(
            c,
            {
                "modulation_variance",
                "transmittance",
                "excess_noise",
                "reconciliation_efficiency",
            },
            {
                "modulation_variance",
                "transmittance",
                "excess_noise",
                "reconciliation_efficiency",
            },
            "cv",
        )
        kwargs["cv"] = CvParams(
            modulation_variance=float(c["modulation_variance"]),
            transmittance=float(c["transmittance"]),
            excess_noise=float(c["excess_noise"]),
            reconciliation_efficiency=float(c["reconciliation_efficiency"]),
        )
    if "budget" in d:
        b = d["budget"]
        _require_keys(
            b,
            {"eps_sec", "eps_cor", "eps_pe", "eps_auth"},
            {"eps_sec", "eps_cor", "eps_pe", "eps_auth"},
            "budget",
        )
        kwargs["budget"] = SecurityBudget(
            eps_sec=float(b["eps_sec"]),
            eps_cor=float(b["eps_cor"]),
            eps_pe=float(b["eps_pe"]),
            eps_auth=float(b["eps_auth"]),
        )
    if "reconciliation" in d:
        r = d["reconciliation"]
        _require_keys(r, {"efficiency_f"}, {"efficiency_f"}, "reconciliation")
        kwargs["reconciliation"] = ReconciliationModel(efficiency_f=float(r["efficiency_f"]))
    if "e91" in d:
        e = d["e91"]
        _require_keys(e, {"angles_deg"}, set(), "e91")
        angles = tuple(float(x) for x in e.get("angles_deg", CHSH_MAX_ANGLES_DEG))
        if len(angles) != 4:
            raise ConfigError("e91.angles_deg must have four entries")
        kwargs["e91"] = E91Block(angles_deg=angles)
    if "mdi" in d:
        m = d["mdi"]
        _require_keys(m, {"gains"}, {"gains"}, "mdi")
        entries: dict[tuple[float, float], tuple[float, float]] = {}
        for row in m["gains"]:
            if len(row) != 4:
                raise ConfigError("mdi.gains rows must be [a, b, gain, qber]")
            a, b, gain, qber = (float(x) for x in row)
            entries[(a, b)] = (gain, qber)
        kwargs["mdi"] = MdiBlock(gains=GainTable2D(entries=entries))
    if "tf" in d:
        t = d["tf"]
        _require_keys(t, {"slices"}, {"slices"}, "tf")
        slices = []
        for s in t["slices"]:
            _require_keys(
                s,
                {"n_k", "y11", "e11_phase", "q_mumu", "e_mumu"},
                {"n_k", "y11", "e11_phase", "q_mumu", "e_mumu"},
                "tf.slices[]",
            )
            slices.append(
                TfSlice(
                    n_k=int(s["n_k"]),
                    y11=float(s["y11"]),
                    e11_phase=float(s["e11_phase"]),
                    q_mumu=float(s["q_mumu"]),
                    e_mumu=float(s["e_mumu"]),
                )
            )
        kwargs["tf"] = TfBlock(slices=tuple(slices))
    if "cow" in d:
        c = d["cow"]
        _require_keys(c, {"monitor_fraction"}, {"monitor_fraction"}, "cow")
        kwargs["cow"] = CowBlock(monitor_fraction=float(c["monitor_fraction"]))
    if "rrdps" in d:
        r = d["rrdps"]
        _require_keys(r, {"block_length"}, {"block_length"}, "rrdps")
        kwargs["rrdps"] = RrdpsBlock(block_length=int(r["block_length"]))

    try:
        return RunConfig(**kwargs)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(config: RunConfig) -> dict[str, Any]:
    """Normalized config echo (fixed key order, defaults materialized)."""
    out: dict[str, Any] = {
        "protocol": config.protocol,
        "link": {
            "fiber": {
                "attenuation_db_per_km": config.link.fiber.attenuation_db_per_km,
                "length_km": config.link.fiber.length_km,
                "extra_loss_db": config.link.fiber.extra_loss_db,
            },
            "detector": {
                "efficiency": config.link.detector.efficiency,
                "dark_count_prob": config.link.detector.dark_count_prob,
            },
            "optics": {
                "visibility": config.link.optics.visibility,
                "misalignment_qber": config.link.optics.misalignment_qber,
            },
            "mean_photon_number": config.link.mean_photon_number,
        },
        "n_pulses": config.n_pulses,
        "seed": config.seed,
        "mode": config.mode,
        "sample_fraction": config.sample_fraction,
        "repetition_rate_hz": config.repetition_rate_hz,
        "estimator": config.estimator_id,
        "auth_bits": config.auth_bits,
        "i_ab_convention": config.i_ab_convention,
        "budget": {
            "eps_sec": config.budget.eps_sec,
            "eps_cor": config.budget.eps_cor,
            "eps_pe": config.budget.eps_pe,
            "eps_auth": config.budget.eps_auth,
        },
        "reconciliation": {"efficiency_f": config.reconciliation.efficiency_f},
    }
    if config.intensities is not None:
        out["intensities"] = {
            "signal_mu": config.intensities.signal_mu,
            "decoy_nu": config.intensities.decoy_nu,
            "vacuum_omega": config.intensities.vacuum_omega,
            "usage_fractions": list(config.intensities.usage_fractions),
        }
    if config.cv is not None:
        out["cv"] = {
            "modulation_variance": config.cv.modulation_variance,
            "transmittance": config.cv.transmittance,
            "excess_noise": config.cv.excess_noise,
            "reconciliation_efficiency": config.cv.reconciliation_efficiency,
        }
    if config.e91 is not None:
        out["e91"] = {"angles_deg": list(config.e91.angles_deg)}
    if config.mdi is not None:
        out["mdi"] = {
            "gains": [
                [a, b, gain, qber]
                for (a, b), (gain, qber) in sorted(config.mdi.gains.entries.items())
            ]
        }
    if config.tf is not None:
        out["tf"] = {
            "slices": [
                {
                    "n_k": s.n_k,
                    "y11": s.y11,
                    "e11_phase": s.e11_phase,
                    "q_mumu": s.q_mumu,
                    "e_mumu": s.e_mumu,
                }
                for s in config.tf.slices
            ]
        }
    if config.cow is not None:
        out["cow"] = {"monitor_fraction": config.cow.monitor_fraction}
    if config.rrdps is not None:
        out["rrdps"] = {"block_length": config.rrdps.block_length}
    return out


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return config_from_dict(data)


def set_config_value(config: RunConfig, path: str, value: Any) -> RunConfig:
    """Return a new config with the dotted field `path` replaced.

    Paths resolve against the config root first, then against the link
    (so both "link.fiber.length_km" and "fiber.length_km" work).
    """
    parts = path.split(".")
    if not hasattr(config, parts[0]) and hasattr(config.link, parts[0]):
        parts = ["link", *parts]

    def rebuild(obj: Any, chain: list[str]) -> Any:
        name = chain[0]
        if not hasattr(obj, name):
            raise ConfigError(f"cannot resolve field path {path!r} at {name!r}")
        if len(chain) == 1:
            current = getattr(obj, name)
            if isinstance(current, bool) or not isinstance(current, int | float):
                raise ConfigError(f"field {path!r} is not numeric")
            new_value = int(value) if isinstance(current, int) else float(value)
            return replace(obj, **{name: new_value})
        return replace(obj, **{name: rebuild(getattr(obj, name), chain[1:])})

    try:
        return rebuild(config, parts)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


# --- pipeline -----------------------------------------------------------------


def _ci_dict(ci: ConfidenceInterval) -> dict[str, float]:
    return {
        "lower": ci.lower,
        "upper": ci.upper,
        "confidence": ci.confidence,
        "method": "hoeffding",
    }


def _estimate_to_dict(est: DecoyEstimate) -> dict[str, Any]:
    return {
        "y1_raw": est.y1_raw,
        "y1": est.y1,
        "q1": est.q1,
        "e1_raw": est.e1_raw,
        "e1": est.e1,
        "sound": est.sound,
    }


def _accounting(
    config: RunConfig,
    sifted_len: int,
    qber: float,
    phase_error: float,
) -> dict[str, Any]:
    """Test-sample removal, leakage, and net length for session protocols."""
    sampled = math.ceil(config.sample_fraction * sifted_len) if sifted_len else 0
    remaining = max(0, sifted_len - sampled)
    leak_ec = reconciliation_leakage(remaining, qber, config.reconciliation)
    phase = min(max(phase_error, 0.0), 0.5)
    acct = KeyAccounting(
        sifted_len=remaining,
        leak_ec=leak_ec,
        leak_auth=config.auth_bits,
        phase_error=phase,
        budget=config.budget,
    )
    final_len = final_key_length(acct)
    return {
        "sifted_len": sifted_len,
        "sampled_len": sampled,
        "remaining_len": remaining,
        "phase_error": phase,
        "leak_ec": leak_ec,
        "leak_auth": config.auth_bits,
        "final_len": final_len,
    }


def _report(
    config: RunConfig,
    *,
    aborted: bool,
    abort_reason: str | None,
    rate_per_pulse: float | None,
    qber: float | None,
    qber_ci: dict[str, float] | None,
    sift_fraction: float | None,
    sections: dict[str, Any],
    accounting: dict[str, Any] | None,
    notes: dict[str, Any],
    started: float,
) -> Report:
    rate_bps = None
    if rate_per_pulse is not None:
        rate_bps = rate_per_pulse * config.repetition_rate_hz
    return Report(
        protocol=config.protocol,
        config=config_to_dict(config),
        aborted=aborted,
        abort_reason=abort_reason,
        rate_per_pulse=rate_per_pulse,
        rate_bits_per_second=rate_bps,
        qber=qber,
        qber_ci=qber_ci,
        sift_fraction=sift_fraction,
        sections=sections,
        accounting=accounting,
        eps={
            "eps_sec": config.budget.eps_sec,
            "eps_cor": config.budget.eps_cor,
            "eps_pe": config.budget.eps_pe,
            "eps_auth": config.budget.eps_auth,
            "eps_tot": epsilon_total(config.budget),
        },
        notes=notes,
        elapsed_seconds=time.perf_counter() - started,
    )


def _run_bb84(config: RunConfig, started: float) -> Report:
    confidence = 1.0 - config.budget.eps_pe
    result = run_bb84(
        config.link,
        config.n_pulses,
        config.sample_fraction,
        config.seed,
        config.mode,
        confidence=confidence,
    )
    notes = {
        "phase_error_proxy": "sampled QBER upper confidence bound",
        "rate_convention": "q*[1-2*h2(Q)] scaled by detection probability",
    }
    sections = {"session": {"raw_key_bits": result.raw_key_bits, "detection_prob": result.detection_prob}}
    if result.aborted:
        return _report(
            config,
            aborted=True,
            abort_reason=result.abort_reason,
            rate_per_pulse=None,
            qber=result.qber,
            qber_ci=_ci_dict(result.qber_ci),
            sift_fraction=result.sift_fraction,
            sections=sections,
            accounting=None,
            notes=notes,
            started=started,
        )
    accounting = _accounting(
        config, result.raw_key_bits, result.qber, result.qber_ci.upper
    )
    rate = result.asymptotic_rate * result.detection_prob
    return _report(
        config,
        aborted=False,
        abort_reason=None,
        rate_per_pulse=rate,
        qber=result.qber,
        qber_ci=_ci_dict(result.qber_ci),
        sift_fraction=result.sift_fraction,
        sections=sections,
        accounting=accounting,
        notes=notes,
        started=started,
    )


def _sample_gain_table(config: RunConfig, model_table: GainTable) -> tuple[GainTable, float]:
    """Monte Carlo per-intensity tally following the session stream contract.

    Each pulse draws an intensity by usage fraction, clicks with the model
    gain, and (when clicked and basis-matched) errs with the model QBER.
    Returns the sampled table and the observed basis-match fraction.
    """
    n = config.n_pulses
    intensities = config.intensities
    levels = intensities.levels
    fractions = np.asarray(intensities.usage_fractions, dtype=np.float64)

    idx = stream(config.seed, "intensity").choice(3, size=n, p=fractions)
    alice_bases = stream(config.seed, "alice_bases").integers(0, 2, n, dtype=np.uint8)
    bob_bases = stream(config.seed, "bob_bases").integers(0, 2, n, dtype=np.uint8)
    chan = stream(config.seed, "channel")
    click_u = chan.random(n)
    error_u = chan.random(n)

    gains = np.array([model_table.gain(lam) for lam in levels])
    qbers = np.array([model_table.qber(lam) for lam in levels])
    clicked = click_u < gains[idx]
    match = alice_bases == bob_bases
    observed = clicked & match
    erred = observed & (error_u < qbers[idx])

    entries = []
    for k, lam in enumerate(levels):
        sel = idx == k
        trials = int(np.count_nonzero(sel))
        clicks = int(np.count_nonzero(clicked & sel))
        n_obs = int(np.count_nonzero(observed & sel))
        n_err = int(np.count_nonzero(erred & sel))
        entries.append(
            GainEntry(
                intensity=lam,
                gain=clicks / trials if trials else 0.0,
                qber=n_err / n_obs if n_obs else 0.0,
                trials=trials,
            )
        )
    return GainTable(entries=tuple(entries)), float(np.count_nonzero(match) / n)


def _decoy_details(config: RunConfig) -> dict[str, Any]:
    """Gain table, all three estimates, and the signed rate for decoy BB84."""
    intensities = config.intensities
    model_table = gains_from_model(config.link, intensities)
    if config.mode == "analytic":
        table, q_sift = model_table, 0.5
    else:
        table, q_sift = _sample_gain_table(config, model_table)

    estimates = {
        est_id: estimate_decoy(table, intensities, est_id) for est_id in ESTIMATOR_IDS
    }
    chosen = estimates[config.estimator_id]
    mu = intensities.signal_mu
    e1 = chosen.e1 if chosen.e1 is not None else 0.5
    rate = decoy_key_rate(
        q_sift,
        table.gain(mu),
        table.qber(mu),
        chosen.q1,
        e1,
        config.reconciliation.efficiency_f,
    )
    return {
        "table": table,
        "q_sift": q_sift,
        "estimates": estimates,
        "chosen": chosen,
        "signed_rate": rate,
    }


def _run_decoy(config: RunConfig, started: float) -> Report:
    details = _decoy_details(config)
    table: GainTable = details["table"]
    chosen: DecoyEstimate = details["chosen"]
    estimates: dict[str, DecoyEstimate] = details["estimates"]
    mu = config.intensities.signal_mu
    q_mu = table.gain(mu)
    e_mu = table.qber(mu)
    rate = details["signed_rate"]

    section = {
        "estimator": config.estimator_id,
        "y0": chosen.y0,
        "y1": chosen.y1,
        "q1": chosen.q1,
        "e1": chosen.e1 if chosen.e1 is not None else 0.5,
        "sound": chosen.sound,
        "estimates": {k: _estimate_to_dict(v) for k, v in sorted(estimates.items())},
        "gains": [
            {"intensity": e.intensity, "gain": e.gain, "qber": e.qber, "trials": e.trials}
            for e in table.entries
        ],
        "signed_rate": rate,
    }
    notes = {
        "phase_error_proxy": "single-photon error upper bound e1",
        "rate_convention": "decoy rate formula; no usage-fraction scaling",
    }
    qber_ci = {"lower": e_mu, "upper": e_mu, "confidence": 1.0 - config.budget.eps_pe, "method": "hoeffding"}
    if rate <= 0.0:
        return _report(
            config,
            aborted=True,
            abort_reason=ABORT_LOW_RATE,
            rate_per_pulse=None,
            qber=e_mu,
            qber_ci=qber_ci,
            sift_fraction=details["q_sift"],
            sections={"decoy": section},
            accounting=None,
            notes=notes,
            started=started,
        )
    signal_fraction = config.intensities.usage_fractions[0]
    sifted_len = int(config.n_pulses * signal_fraction * q_mu * details["q_sift"])
    e1 = chosen.e1 if chosen.e1 is not None else 0.5
    accounting = _accounting(config, sifted_len, e_mu, e1)
    return _report(
        config,
        aborted=False,
        abort_reason=None,
        rate_per_pulse=rate,
        qber=e_mu,
        qber_ci=qber_ci,
        sift_fraction=details["q_sift"],
        sections={"decoy": section},
        accounting=accounting,
        notes=notes,
        started=started,
    )


def _run_e91(config: RunConfig, started: float) -> Report:
    block = config.e91 or E91Block()
    n_per_cell = max(1, config.n_pulses // 4)
    stats, bell_abort = simulate_e91(
        block.angles_deg,
        config.link.optics.visibility,
        n_per_cell,
        config.seed,
        config.mode,
    )
    s = chsh_s(stats)
    section = {
        "chsh": {
            "s": s,
            "angles_deg": list(block.angles_deg),
            "n_per_cell": n_per_cell if config.mode == "monte-carlo" else 0,
            "cells": {
                f"{a}{b}": {"e": cell.e_value, "count": cell.count}
                for (a, b), cell in sorted(stats.correlations.items())
            },
        }
    }
    notes = {
        "rate_convention": "key rounds treated as entanglement-based BB84",
        "phase_error_proxy": "model QBER",
    }
    q_model, p_det = qber_model(config.link)
    qber_ci = {
        "lower": q_model,
        "upper": q_model,
        "confidence": 1.0 - config.budget.eps_pe,
        "method": "hoeffding",
    }
    if bell_abort:
        return _report(
            config,
            aborted=True,
            abort_reason=ABORT_NO_BELL,
            rate_per_pulse=None,
            qber=q_model,
            qber_ci=qber_ci,
            sift_fraction=0.5,
            sections=section,
            accounting=None,
            notes=notes,
            started=started,
        )
    rate_session = max(0.0, 0.5 * (1.0 - 2.0 * binary_entropy(q_model)))
    sifted_len = int(config.n_pulses * p_det * 0.5)
    accounting = _accounting(config, sifted_len, q_model, q_model)
    return _report(
        config,
        aborted=False,
        abort_reason=None,
        rate_per_pulse=rate_session * p_det,
        qber=q_model,
        qber_ci=qber_ci,
        sift_fraction=0.5,
        sections=section,
        accounting=accounting,
        notes=notes,
        started=started,
    )


def _run_mdi(config: RunConfig, started: float) -> Report:
    intensities = config.intensities
    mu, nu, omega = intensities.levels
    gains = config.mdi.gains
    est = mdi_bounds(gains, mu, nu, omega)
    q_mm = gains.gain(mu, mu)
    e_mm = gains.qber(mu, mu)
    section = {
        "mdi": {
            "s11_raw": est.s11_raw,
            "s11": est.s11,
            "e11_raw": est.e11_raw,
            "e11": est.e11,
            "sound": est.sound,
        }
    }
    notes = {"finite_key": "penalty sqrt(ln(2/eps_sec)/N)"}
    qber_ci = {
        "lower": e_mm,
        "upper": e_mm,
        "confidence": 1.0 - config.budget.eps_pe,
        "method": "hoeffding",
    }
    if est.s11 <= 0.0:
        return _report(
            config,
            aborted=True,
            abort_reason=ABORT_NO_PAIR_YIELD,
            rate_per_pulse=None,
            qber=e_mm,
            qber_ci=qber_ci,
            sift_fraction=None,
            sections=section,
            accounting=None,
            notes=notes,
            started=started,
        )
    rate = mdi_rate(
        est,
        q_mm,
        e_mm,
        config.reconciliation.efficiency_f,
        config.n_pulses,
        config.budget.eps_sec,
    )
    section["mdi"]["signed_rate"] = rate
    if rate <= 0.0:
        return _report(
            config,
            aborted=True,
            abort_reason=ABORT_LOW_RATE,
            rate_per_pulse=None,
            qber=e_mm,
            qber_ci=qber_ci,
            sift_fraction=None,
            sections=section,
            accounting=None,
            notes=notes,
            started=started,
        )
    return _report(
        config,
        aborted=False,
        abort_reason=None,
        rate_per_pulse=rate,
        qber=e_mm,
        qber_ci=qber_ci,
        sift_fraction=None,
        sections=section,
        accounting=None,
        notes=notes,
        started=started,
    )


def _run_tf(config: RunConfig, started: float) -> Report:
    data = TfSliceData(slices=config.tf.slices, total_n=config.n_pulses)
    rate = tf_rate(data, config.reconciliation.efficiency_f, config.budget.eps_sec)
    weights = sum(s.n_k for s in data.slices)
    qber = (
        sum(s.n_k * s.e_mumu for s in data.slices) / weights if weights else 0.0
    )
    section = {"tf": {"num_slices": data.num_slices, "signed_rate": rate}}
    notes = {"slice_inputs": "per-slice yields/errors are config inputs"}
    if rate <= 0.0:
        return _report(
            config,
            aborted=True,
            abort_reason=ABORT_LOW_RATE,
            rate_per_pulse=None,
            qber=qber,
            qber_ci=None,
            sift_fraction=None,
            sections=section,
            accounting=None,
            notes=notes,
            started=started,
        )
    return _report(
        config,
        aborted=False,
        abort_reason=None,
        rate_per_pulse=rate,
        qber=qber,
        qber_ci=None,
        sift_fraction=None,
        sections=section,
        accounting=None,
        notes=notes,
        started=started,
    )


def _run_differential(config: RunConfig, started: float) -> Report:
    """DPS, COW, and RRDPS share the link-derived parameter plumbing."""
    link = config.link
    eta = link.eta_total
    mu = link.mean_photon_number
    v = link.optics.visibility
    y0 = link.detector.dark_count_prob
    sections: dict[str, Any] = {}
    if config.protocol == "dps":
        rate = _dps_rate(eta, mu, v, y0)
        qber = (1.0 - v) / 2.0
    elif config.protocol == "cow":
        rate = _cow_rate(eta, mu, v, y0, config.cow.monitor_fraction)
        qber = (1.0 - math.sqrt(v)) / 2.0
    else:
        q_model, _ = qber_model(link)
        rate, info = rrdps_rate(eta, mu, q_model, y0, config.rrdps.block_length)
        qber = q_model
        sections["rrdps"] = {
            "adversary_info": info,
            "block_length": config.rrdps.block_length,
        }
    notes = {"eta_convention": "channel transmissivity times detector efficiency"}
    if rate <= 0.0:
        return _report(
            config,
            aborted=True,
            abort_reason=ABORT_LOW_RATE,
            rate_per_pulse=None,
            qber=qber,
            qber_ci=None,
            sift_fraction=None,
            sections=sections,
            accounting=None,
            notes=notes,
            started=started,
        )
    return _report(
        config,
        aborted=False,
        abort_reason=None,
        rate_per_pulse=rate,
        qber=qber,
        qber_ci=None,
        sift_fraction=None,
        sections=sections,
        accounting=None,
        notes=notes,
        started=started,
    )


def _run_cv(config: RunConfig, started: float) -> Report:
    params = config.cv
    if config.mode == "monte-carlo":
        _session, t_hat, xi_hat = simulate_cv_session(params, config.n_pulses, config.seed)
        eval_params = CvParams(
            modulation_variance=params.modulation_variance,
            transmittance=min(max(t_hat, 1e-12), 1.0),
            excess_noise=max(xi_hat, 0.0),
            reconciliation_efficiency=params.reconciliation_efficiency,
        )
    else:
        t_hat, xi_hat = params.transmittance, params.excess_noise
        eval_params = params
    i_ab = cv_mutual_info(eval_params, config.i_ab_convention)
    chi_be = cv_holevo(eval_params)
    k = params.reconciliation_efficiency * i_ab - chi_be
    section = {
        "cv": {
            "i_ab": i_ab,
            "chi_be": chi_be,
            "k": k,
            "estimated_t": t_hat,
            "estimated_xi": xi_hat,
            "beta": params.reconciliation_efficiency,
            "i_ab_convention": config.i_ab_convention,
        }
    }
    notes = {
        "i_ab_convention": "chi-tot keeps the vacuum unit in the numerator; "
        "chi-line is the consistent SNR form"
    }
    if k <= 0.0:
        return _report(
            config,
            aborted=True,
            abort_reason=ABORT_NOISY_CV,
            rate_per_pulse=None,
            qber=None,
            qber_ci=None,
            sift_fraction=None,
            sections=section,
            accounting=None,
            notes=notes,
            started=started,
        )
    return _report(
        config,
        aborted=False,
        abort_reason=None,
        rate_per_pulse=k,
        qber=None,
        qber_ci=None,
        sift_fraction=None,
        sections=section,
        accounting=None,
        notes=notes,
        started=started,
    )


_RUNNERS = {
    "bb84": _run_bb84,
    "bb84-decoy": _run_decoy,
    "e91": _run_e91,
    "mdi": _run_mdi,
    "tf": _run_tf,
    "dps": _run_differential,
    "cow": _run_differential,
    "rrdps": _run_differential,
    "cv": _run_cv,
}


def run_pipeline(config: RunConfig) -> Report:
    """Dispatch one configured run and assemble its report."""
    started = time.perf_counter()
    return _RUNNERS[config.protocol](config, started)


def sweep(
    config: RunConfig, variable: str, values: list[float]
) -> list[tuple[float, Report]]:
    """One pipeline run per value, input order preserved.

    Per-point seeds derive deterministically from (base seed, index) so the
    points are pairwise independent yet reproducible.
    """
    if values:
        set_config_value(config, variable, values[0])  # fail fast on bad paths
    curve = []
    for index, value in enumerate(values):
        point = set_config_value(config, variable, value)
        point = replace(point, seed=derive_seed(config.seed, index))
        curve.append((float(value), run_pipeline(point)))
    return curve


def _signed_decoy_rate(config: RunConfig) -> float:
    return _decoy_details(config)["signed_rate"]


def optimize_intensities(
    config: RunConfig,
    bounds: dict[str, tuple[float, float]],
    grid_points: int = 8,
    refine_rounds: int = 3,
    shrink: float = 0.5,
    allow_monte_carlo: bool = False,
) -> tuple[IntensitySet, float, int]:
    """Coarse grid search plus coordinate descent over (signal_mu, decoy_nu).

    Evaluates the analytic signed rate; ties break toward larger mu, then
    larger nu. Returns (best set, best rate, evaluation count). Monte Carlo
    optimization is rejected (noise destabilizes the argmax) unless
    explicitly allowed with n_pulses >= 1e6.
    """
    if config.protocol != "bb84-decoy":
        raise ConfigError(f"protocol {config.protocol!r} has no intensities to optimize")
    if config.mode != "analytic":
        if not allow_monte_carlo:
            raise ConfigError("monte-carlo optimization needs allow_monte_carlo=True")
        if config.n_pulses < 10**6:
            raise ConfigError("monte-carlo optimization needs n_pulses >= 1e6")
    unknown = set(bounds) - {"signal_mu", "decoy_nu"}
    if unknown:
        raise ConfigError(f"unknown bound parameter(s): {sorted(unknown)}")
    base = config.intensities
    omega = base.vacuum_omega
    mu_lo, mu_hi = bounds.get("signal_mu", (base.signal_mu, base.signal_mu))
    nu_lo, nu_hi = bounds.get("decoy_nu", (base.decoy_nu, base.decoy_nu))
    if mu_lo > mu_hi or nu_lo > nu_hi:
        raise ConfigError("bounds must satisfy low <= high")

    evaluations = 0

    def feasible(mu: float, nu: float) -> bool:
        return mu > nu > omega

    def rate_at(mu: float, nu: float) -> float:
        nonlocal evaluations
        evaluations += 1
        intensities = IntensitySet(
            signal_mu=mu,
            decoy_nu=nu,
            vacuum_omega=omega,
            usage_fractions=base.usage_fractions,
        )
        return _signed_decoy_rate(replace(config, intensities=intensities))

    def axis(lo: float, hi: float) -> np.ndarray:
        if hi == lo:
            return np.array([lo])
        return np.linspace(lo, hi, grid_points)

    best: tuple[float, float, float] | None = None  # (rate, mu, nu)
    for mu in axis(mu_lo, mu_hi):
        for nu in axis(nu_lo, nu_hi):
            if not feasible(mu, nu):
                continue
            candidate = (rate_at(mu, nu), float(mu), float(nu))
            if best is None or candidate > best:
                best = candidate
    if best is None:
        raise ConfigError("empty feasible region: mu <= nu everywhere in bounds")

    mu_width = (mu_hi - mu_lo) / 2.0
    nu_width = (nu_hi - nu_lo) / 2.0
    for round_idx in range(refine_rounds):
        factor = shrink ** (round_idx + 1)
        _, best_mu, best_nu = best
        for mu in axis(
            max(mu_lo, best_mu - mu_width * factor),
            min(mu_hi, best_mu + mu_width * factor),
        ):
            if feasible(mu, best_nu):
                candidate = (rate_at(mu, best_nu), float(mu), best_nu)
                if candidate > best:
                    best = candidate
        _, best_mu, best_nu = best
        for nu in axis(
            max(nu_lo, best_nu - nu_width * factor),
            min(nu_hi, best_nu + nu_width * factor),
        ):
            if feasible(best_mu, nu):
                candidate = (rate_at(best_mu, nu), best_mu, float(nu))
                if candidate > best:
                    best = candidate

    best_rate, best_mu, best_nu = best
    return (
        IntensitySet(
            signal_mu=best_mu,
            decoy_nu=best_nu,
            vacuum_omega=omega,
            usage_fractions=base.usage_fractions,
        ),
        best_rate,
        evaluations,
    )
