"""Synthetic fault recordings for a three-phase induction machine.

Generates labeled stator-current and bearing-vibration signals over a fixed
condition grid: healthy operation, air-gap eccentricity (static, dynamic,
mixed), broken rotor bars (1 to 3), and bearing defects (ball, inner race,
outer race), each at several load levels and severities.

Fault signatures are injected at their characteristic frequencies:

* broken bars: current sidebands at ``(1 +/- 2s) * f_s``,
* eccentricity: current components at ``f_s +/- f_r`` where
  ``f_r = f_s * (1 - s) / p`` is the rotor mechanical frequency,
* bearing defects: vibration tones at ``|f_s +/- m * f_v|``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidConfigValue, InvalidFv, InvalidSlip, NonFinite
from .numerics import derive_seed, make_rng

CHANNEL_NAMES = ("phase_a", "phase_b", "phase_c", "vibration")
PHASE_OFFSETS = (0.0, -2.0 * np.pi / 3.0, 2.0 * np.pi / 3.0)

LOAD_SLIP = {0.0: 0.01, 10.0: 0.02, 30.0: 0.04, 40.0: 0.05}
LOAD_GRID = (0.0, 10.0, 30.0, 40.0)

ECCENTRICITY_SUBTYPES = ("static", "dynamic", "mixed")
ECCENTRICITY_SEVERITIES = (0.25, 0.5, 0.75, 1.0)
BEARING_SITES = ("ball", "inner", "outer")
BEARING_SEVERITIES = (1.0 / 3.0, 2.0 / 3.0, 1.0)
BROKEN_BAR_COUNTS = (1, 2, 3)

# Characteristic vibration frequencies per defect site, Hz. The geometry
# behind them is not modeled; only the spectral placement matters here.
BEARING_FV = {"ball": 60.0, "inner": 120.0, "outer": 90.0}

# Fault amplitudes relative to the carrier (rated current for current-borne
# faults, baseline vibration tone for bearing faults).
KAPPA_BRB = 0.05
KAPPA_ECC = 0.04
KAPPA_BEARING = 0.5

# Baseline vibration: a unit tone at the rotor frequency so the vibration
# channel is never silent on a healthy machine.
VIBRATION_BASELINE = 1.0
BEARING_HARMONICS = 3


@dataclass(frozen=True)
class MachineSpec:
    """Electrical and sampling parameters of the machine under test.

    Args:
        supply_frequency: Stator supply frequency f_s in Hz.
        pole_pairs: Number of pole pairs p.
        rated_current: Phase current amplitude in A.
        sample_rate: Sampling frequency in Hz; must be at least 10 * f_s.
        duration: Recording length in seconds.
    """

    supply_frequency: float = 50.0
    pole_pairs: int = 2
    rated_current: float = 10.0
    sample_rate: float = 10_000.0
    duration: float = 1.0

    def __post_init__(self):
        if self.supply_frequency <= 0:
            raise InvalidConfigValue(f"supply_frequency must be positive, got {self.supply_frequency}")
        if self.pole_pairs < 1:
            raise InvalidConfigValue(f"pole_pairs must be >= 1, got {self.pole_pairs}")
        if self.sample_rate < 10 * self.supply_frequency:
            raise InvalidConfigValue(
                f"sample_rate {self.sample_rate} Hz is below 10x the supply frequency "
                f"{self.supply_frequency} Hz"
            )
        if self.duration <= 0:
            raise InvalidConfigValue(f"duration must be positive, got {self.duration}")

    @property
    def n_samples(self) -> int:
        return round(self.sample_rate * self.duration)


@dataclass(frozen=True)
class OperatingPoint:
    """Load torque in N.m and the per-unit slip it produces."""

    load_torque: float
    slip: float

    def __post_init__(self):
        if not 0 <= self.slip < 1:
            raise InvalidSlip(f"slip must lie in [0, 1), got {self.slip}")

    @classmethod
    def from_load(cls, load_torque: float) -> "OperatingPoint":
        """Look up the slip for one of the grid loads {0, 10, 30, 40} N.m."""
        if load_torque not in LOAD_SLIP:
            raise InvalidConfigValue(
                f"load_torque must be one of {sorted(LOAD_SLIP)}, got {load_torque}"
            )
        return cls(load_torque=load_torque, slip=LOAD_SLIP[load_torque])

    def rotor_frequency(self, machine: MachineSpec) -> float:
        """Rotor mechanical frequency f_r = f_s * (1 - s) / p in Hz."""
        return machine.supply_frequency * (1.0 - self.slip) / machine.pole_pairs


@dataclass(frozen=True)
class FaultSpec:
    """Fault label: kind, optional variant, normalized severity.

    Args:
        kind: One of "healthy", "eccentricity", "broken_bars", "bearing".
        severity: Normalized severity in [0, 1]; 0 for healthy.
        subtype: Eccentricity variant ("static", "dynamic", "mixed").
        bar_count: Number of broken bars (1..3) for broken_bars.
        site: Bearing defect site ("ball", "inner", "outer").
        fv: Bearing characteristic vibration frequency in Hz; defaults to
            the per-site value when left as None.
    """

    kind: str
    severity: float = 0.0
    subtype: str | None = None
    bar_count: int | None = None
    site: str | None = None
    fv: float | None = None

    def __post_init__(self):
        if self.kind not in ("healthy", "eccentricity", "broken_bars", "bearing"):
            raise InvalidConfigValue(f"unknown fault kind {self.kind!r}")
        if not 0 <= self.severity <= 1:
            raise InvalidConfigValue(f"severity must lie in [0, 1], got {self.severity}")
        if self.kind == "healthy" and self.severity != 0:
            raise InvalidConfigValue("healthy recordings must have severity 0")
        if self.kind == "eccentricity" and self.subtype not in ECCENTRICITY_SUBTYPES:
            raise InvalidConfigValue(
                f"eccentricity subtype must be one of {ECCENTRICITY_SUBTYPES}, got {self.subtype!r}"
            )
        if self.kind == "broken_bars" and self.bar_count not in BROKEN_BAR_COUNTS:
            raise InvalidConfigValue(f"bar_count must be in {BROKEN_BAR_COUNTS}, got {self.bar_count}")
        if self.kind == "bearing":
            if self.site not in BEARING_SITES:
                raise InvalidConfigValue(
                    f"bearing site must be one of {BEARING_SITES}, got {self.site!r}"
                )
            if self.fv is None:
                object.__setattr__(self, "fv", BEARING_FV[self.site])
            if self.fv <= 0:
                raise InvalidFv(f"fv must be positive, got {self.fv}")

    @property
    def is_faulty(self) -> bool:
        return self.kind != "healthy"

    def name(self) -> str:
        """Compact identifier used for filenames and derived seeds."""
        if self.kind == "healthy":
            return "healthy"
        if self.kind == "eccentricity":
            return f"ecc-{self.subtype}-sev{round(self.severity * 100)}"
        if self.kind == "broken_bars":
            return f"brb-{self.bar_count}"
        return f"bearing-{self.site}-sev{round(self.severity * 100)}"


@dataclass
class Recording:
    """One synthesized multi-channel measurement with its ground truth."""

    channels: dict[str, np.ndarray]
    sample_rate: float
    label: FaultSpec
    operating_point: OperatingPoint
    seed: int
    name: str = ""

    def __post_init__(self):
        lengths = {key: len(sig) for key, sig in self.channels.items()}
        if len(set(lengths.values())) > 1:
            raise InvalidConfigValue(f"channel lengths differ: {lengths}")

    @property
    def n_samples(self) -> int:
        return len(next(iter(self.channels.values())))


def brb_frequency(f_s: float, s: float, p: int, k: int = 1) -> tuple[float, float]:
    """Broken-rotor-bar characteristic frequency pair.

    Computes ``f_s * (k * (1 - s) / p +/- s)``, clamped at zero.

    Args:
        f_s: Supply frequency in Hz.
        s: Per-unit slip in [0, 1).
        p: Pole pairs, >= 1.
        k: Harmonic index, >= 1.

    Returns:
        (upper, lower) frequency pair in Hz.

    Raises:
        InvalidSlip: If s lies outside [0, 1).
    """
    if not 0 <= s < 1:
        raise InvalidSlip(f"slip must lie in [0, 1), got {s}")
    if k < 1 or p < 1:
        raise InvalidConfigValue(f"k and p must be >= 1, got k={k}, p={p}")
    base = k * (1.0 - s) / p
    return max(0.0, f_s * (base + s)), max(0.0, f_s * (base - s))


def brb_sidebands(f_s: float, s: float) -> tuple[float, float]:
    """Current sidebands ``(1 +/- 2s) * f_s`` flanking the supply line.

    Raises:
        InvalidSlip: If s lies outside [0, 1).
    """
    if not 0 <= s < 1:
        raise InvalidSlip(f"slip must lie in [0, 1), got {s}")
    # Distributed form: f_s +/- 2*s*f_s keeps grid values like 55.0 exactly
    # representable, where (1 + 2s) * f_s rounds one ulp away.
    return f_s + 2.0 * s * f_s, f_s - 2.0 * s * f_s


def bearing_frequencies(f_s: float, fv: float, m_max: int = BEARING_HARMONICS) -> set[float]:
    """Bearing-defect frequencies ``|f_s +/- m * fv|`` for m = 1..m_max.

    Raises:
        InvalidFv: If fv is not positive.
    """
    if fv <= 0:
        raise InvalidFv(f"fv must be positive, got {fv}")
    if m_max < 1:
        raise InvalidConfigValue(f"m_max must be >= 1, got {m_max}")
    out: set[float] = set()
    for m in range(1, m_max + 1):
        out.add(abs(f_s + m * fv))
        out.add(abs(f_s - m * fv))
    return out


def _tone(t: np.ndarray, amplitude: float, frequency: float, phase: float = 0.0) -> np.ndarray:
    return amplitude * np.cos(2.0 * np.pi * frequency * t + phase)


def synthesize(
    machine: MachineSpec,
    op: OperatingPoint,
    fault: FaultSpec,
    noise_snr_db: float | None = 30.0,
    seed: int = 0,
    kappa_brb: float = KAPPA_BRB,
    kappa_ecc: float = KAPPA_ECC,
    kappa_bearing: float = KAPPA_BEARING,
) -> Recording:
    """Synthesize one labeled recording.

    Phase currents are rated-amplitude cosines at the supply frequency with
    0 / -120 / +120 degree offsets. The vibration channel carries a unit
    tone at the rotor frequency. Fault components are added on top:

    * broken_bars: sidebands at ``(1 +/- 2s) * f_s`` on every phase, each
      with amplitude ``severity * kappa_brb * rated_current``;
    * eccentricity: components at ``f_s +/- f_r`` with amplitude
      ``severity * kappa_ecc * rated_current`` — plain tones for the static
      subtype, slip-frequency amplitude modulation for dynamic, the sum of
      both for mixed;
    * bearing: vibration tones at ``|f_s +/- m * fv|`` for m = 1..3 with
      amplitude ``severity * kappa_bearing * baseline / m``.

    Independent Gaussian noise is then added to every channel, scaled so
    each channel individually meets ``noise_snr_db``; pass None to disable.

    Args:
        machine: Machine under test.
        op: Load point; supplies the slip.
        fault: Fault label to inject.
        noise_snr_db: Per-channel SNR in dB, or None for noise-free output.
        seed: Seed for the noise generator; the clean signal ignores it.

    Returns:
        Recording with channels phase_a, phase_b, phase_c, vibration.
    """
    if noise_snr_db is not None and not np.isfinite(noise_snr_db):
        raise NonFinite(f"noise_snr_db must be finite or None, got {noise_snr_db}")
    n = machine.n_samples
    t = np.arange(n) / machine.sample_rate
    f_s = machine.supply_frequency
    amp = machine.rated_current

    phases = [_tone(t, amp, f_s, off) for off in PHASE_OFFSETS]
    vibration = _tone(t, VIBRATION_BASELINE, op.rotor_frequency(machine))

    if fault.kind == "broken_bars":
        level = fault.severity * kappa_brb * amp
        for f in brb_sidebands(f_s, op.slip):
            for i, off in enumerate(PHASE_OFFSETS):
                phases[i] += _tone(t, level, f, off)
    elif fault.kind == "eccentricity":
        level = fault.severity * kappa_ecc * amp
        f_r = op.rotor_frequency(machine)
        # Slow amplitude modulation at the slip frequency marks the dynamic
        # subtype; mixed carries both the steady and the modulated part.
        envelope = 0.5 + 0.5 * np.cos(2.0 * np.pi * op.slip * f_s * t)
        for f in (f_s + f_r, f_s - f_r):
            for i, off in enumerate(PHASE_OFFSETS):
                component = _tone(t, level, f, off)
                if fault.subtype == "static":
                    phases[i] += component
                elif fault.subtype == "dynamic":
                    phases[i] += envelope * component
                else:
                    phases[i] += component + envelope * component
    elif fault.kind == "bearing":
        for m in range(1, BEARING_HARMONICS + 1):
            level = fault.severity * kappa_bearing * VIBRATION_BASELINE / m
            vibration += _tone(t, level, abs(f_s + m * fault.fv))
            vibration += _tone(t, level, abs(f_s - m * fault.fv))

    channels = dict(zip(CHANNEL_NAMES, [*phases, vibration]))
    if noise_snr_db is not None:
        rng = make_rng(seed)
        factor = 10.0 ** (-noise_snr_db / 20.0)
        for key in CHANNEL_NAMES:
            clean = channels[key]
            sigma = float(np.sqrt(np.mean(clean**2))) * factor
            channels[key] = clean + rng.normal(0.0, sigma, size=n)

    return Recording(
        channels=channels,
        sample_rate=machine.sample_rate,
        label=fault,
        operating_point=op,
        seed=seed,
        name=f"{fault.name()}-load{round(op.load_torque)}",
    )


def catalog_faults() -> list[FaultSpec]:
    """The fault grid: 1 healthy + 12 eccentricity + 3 bar + 9 bearing specs."""
    faults = [FaultSpec(kind="healthy")]
    for subtype in ECCENTRICITY_SUBTYPES:
        for severity in ECCENTRICITY_SEVERITIES:
            faults.append(FaultSpec(kind="eccentricity", subtype=subtype, severity=severity))
    for count in BROKEN_BAR_COUNTS:
        faults.append(FaultSpec(kind="broken_bars", bar_count=count, severity=count / 3.0))
    for site in BEARING_SITES:
        for severity in BEARING_SEVERITIES:
            faults.append(FaultSpec(kind="bearing", site=site, severity=severity))
    return faults


def generate_catalog(
    machine: MachineSpec,
    seed: int,
    noise_snr_db: float | None = 30.0,
) -> list[Recording]:
    """Generate the full 100-recording condition grid.

    Every fault spec is crossed with the four load points. Each recording
    gets its own seed derived from the master seed and the recording name,
    so the catalog is reproducible as a whole and per item.
    """
    recordings = []
    for fault in catalog_faults():
        for load in LOAD_GRID:
            op = OperatingPoint.from_load(load)
            name = f"{fault.name()}-load{round(load)}"
            rec_seed = derive_seed(seed, "recording", name)
            recordings.append(synthesize(machine, op, fault, noise_snr_db, rec_seed))
    return recordings


def _fault_to_json(fault: FaultSpec) -> dict:
    return {
        "kind": fault.kind,
        "severity": fault.severity,
        "subtype": fault.subtype,
        "bar_count": fault.bar_count,
        "site": fault.site,
        "fv": fault.fv,
    }


def _fault_from_json(blob: dict) -> FaultSpec:
    return FaultSpec(
        kind=blob["kind"],
        severity=blob["severity"],
        subtype=blob.get("subtype"),
        bar_count=blob.get("bar_count"),
        site=blob.get("site"),
        fv=blob.get("fv"),
    )


def machine_to_json(machine: MachineSpec) -> dict:
    return {
        "supply_frequency": machine.supply_frequency,
        "pole_pairs": machine.pole_pairs,
        "rated_current": machine.rated_current,
        "sample_rate": machine.sample_rate,
        "duration": machine.duration,
    }


def machine_from_json(blob: dict) -> MachineSpec:
    return MachineSpec(**blob)


def save_catalog(
    recordings: list[Recording],
    directory: str | Path,
    machine: MachineSpec,
    seed: int,
    noise_snr_db: float | None,
) -> Path:
    """Write one CSV per recording plus a manifest.json into ``directory``.

    Floats are written with repr() so a load/save cycle is byte-identical.

    Returns:
        Path of the manifest file.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in recordings:
        filename = f"{rec.name}.csv"
        t = np.arange(rec.n_samples) / rec.sample_rate
        columns = [t] + [rec.channels[key] for key in CHANNEL_NAMES]
        with open(directory / filename, "w") as fh:
            fh.write("t," + ",".join(CHANNEL_NAMES) + "\n")
            for row in zip(*columns):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        entries.append(
            {
                "name": rec.name,
                "file": filename,
                "fault": _fault_to_json(rec.label),
                "operating_point": {
                    "load_torque": rec.operating_point.load_torque,
                    "slip": rec.operating_point.slip,
                },
                "seed": rec.seed,
            }
        )
    manifest = {
        "machine": machine_to_json(machine),
        "seed": seed,
        "noise_snr_db": noise_snr_db,
        "recordings": entries,
    }
    manifest_path = directory / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest_path


def load_catalog(directory: str | Path) -> tuple[list[Recording], MachineSpec, dict]:
    """Read a catalog directory written by save_catalog.

    Returns:
        (recordings, machine, manifest) with recordings in manifest order.
    """
    directory = Path(directory)
    with open(directory / "manifest.json") as fh:
        manifest = json.load(fh)
    machine = machine_from_json(manifest["machine"])
    recordings = []
    for entry in manifest["recordings"]:
        data = np.loadtxt(directory / entry["file"], delimiter=",", skiprows=1)
        channels = {key: data[:, i + 1].copy() for i, key in enumerate(CHANNEL_NAMES)}
        recordings.append(
            Recording(
                channels=channels,
                sample_rate=machine.sample_rate,
                label=_fault_from_json(entry["fault"]),
                operating_point=OperatingPoint(**entry["operating_point"]),
                seed=entry["seed"],
                name=entry["name"],
            )
        )
    return recordings, machine, manifest
