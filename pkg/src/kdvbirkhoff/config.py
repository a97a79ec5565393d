"""Run configuration: INI parsing, validation, defaults, potential presets.

A run is fully determined by (config, seed): every random draw goes through
one seeded generator, so reports are byte-identical across repeated runs.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .phase_space import SYMMETRIC, ModeSequence

__all__ = ["ConfigError", "RunConfig", "DEFAULT_INI", "load_config",
           "build_potential", "default_tolerances"]


class ConfigError(ValueError):
    """Invalid configuration or input file (exit code 2 in the CLI)."""


DEFAULT_INI = """\
[run]
# ambient truncations: modes (J), polynomial degree (N), half-mode cutoff (K)
modes = 16
degree = 3
half_modes = 128
seed = 1
samples = 20

[potential]
# preset: zero | single-mode | two-mode | random | pairs
preset = random
# target L2 norm of the potential over one period
amplitude = 0.05
# random preset draws mode j with scale j^(-decay)
decay = 2.0
# pairs preset: semicolon-separated  j:re,im  entries, e.g.  1:0.03,0.01; 2:0,-0.02
pairs =

[tolerances]
gap_identity = 1e-8
kernel_z2 = 1e-6
kernel_z3 = 1e-4
z2_slope_dev = 0.15
z3_slope_dev = 0.2
smoothing_slope_dev = 0.1
symplectic = 1e-9
action_invariance = 1e-10
step1_average = 1e-10
closeness_degree2 = 1e-12
commutation_germ = 1e-8
commutation_nu = 1e-6
moser = 1e-12
projection_fit_r2 = 0.95
eigen_convergence = 1e-10
single_mode_gap = 1e-4
"""


def default_tolerances() -> dict:
    cfg = configparser.ConfigParser()
    cfg.read_string(DEFAULT_INI)
    return {k: float(v) for k, v in cfg["tolerances"].items()}


@dataclass
class RunConfig:
    modes: int = 16
    degree: int = 3
    half_modes: int = 128
    seed: int = 1
    samples: int = 20
    preset: str = "random"
    amplitude: float = 0.05
    decay: float = 2.0
    pairs: str = ""
    tolerances: dict = field(default_factory=default_tolerances)

    def validate(self) -> "RunConfig":
        if self.modes < 2:
            raise ConfigError("modes must be >= 2")
        if not 2 <= self.degree <= 6:
            raise ConfigError("degree must be in 2..6")
        if self.half_modes < 4 * self.modes:
            raise ConfigError("half_modes must be at least 4 * modes")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")
        if self.samples < 1:
            raise ConfigError("samples must be positive")
        if self.preset not in ("zero", "single-mode", "two-mode", "random",
                               "pairs"):
            raise ConfigError(f"unknown potential preset {self.preset!r}")
        if self.amplitude < 0:
            raise ConfigError("amplitude must be nonnegative")
        return self

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


def load_config(path: str | None, seed_override: int | None = None) -> RunConfig:
    cfg = configparser.ConfigParser()
    cfg.read_string(DEFAULT_INI)
    if path is not None:
        read = cfg.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path!r}")
    try:
        run = cfg["run"]
        pot = cfg["potential"]
        rc = RunConfig(
            modes=run.getint("modes"),
            degree=run.getint("degree"),
            half_modes=run.getint("half_modes"),
            seed=run.getint("seed"),
            samples=run.getint("samples"),
            preset=pot.get("preset").strip(),
            amplitude=pot.getfloat("amplitude"),
            decay=pot.getfloat("decay"),
            pairs=pot.get("pairs", "").strip(),
            tolerances={k: float(v) for k, v in cfg["tolerances"].items()},
        )
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    if seed_override is not None:
        rc.seed = int(seed_override)
    return rc.validate()


def dump_defaults() -> str:
    return DEFAULT_INI


def _parse_pairs(text: str, modes: int) -> dict:
    out = {}
    if not text:
        raise ConfigError("preset 'pairs' needs a nonempty pairs entry")
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            jtxt, val = chunk.split(":")
            re_txt, im_txt = val.split(",")
            j = int(jtxt)
            w = complex(float(re_txt), float(im_txt))
        except ValueError as exc:
            raise ConfigError(f"bad pairs entry {chunk!r} "
                              "(expected j:re,im)") from exc
        if not 1 <= j <= modes:
            raise ConfigError(f"pairs mode {j} outside 1..{modes}")
        out[j] = w
    return out


def build_potential(config: RunConfig,
                    rng: np.random.Generator | None = None) -> ModeSequence:
    """Real-class potential modes over the symmetric index set.

    The entries for positive modes are drawn (or set by the preset) and
    extended by conjugation; the result is scaled so the L2 norm of the
    potential over one period equals ``amplitude``.
    """
    J = config.modes
    pos = np.zeros(J, dtype=complex)
    if config.preset == "zero":
        pass
    elif config.preset == "single-mode":
        pos[0] = 1.0
    elif config.preset == "two-mode":
        pos[0] = 1.0
        pos[1] = 0.5 + 0.5j
    elif config.preset == "random":
        if rng is None:
            rng = config.rng()
        scale = np.arange(1, J + 1, dtype=float) ** (-config.decay)
        pos = scale * (rng.standard_normal(J) + 1j * rng.standard_normal(J))
    elif config.preset == "pairs":
        for j, w in _parse_pairs(config.pairs, J).items():
            pos[j - 1] = w
    # || u ||_{L2(0,2pi)}^2 == sum_{j>=1} |w_j|^2 for the real class
    nrm = math.sqrt(float(np.sum(np.abs(pos) ** 2)))
    if nrm > 0 and config.amplitude > 0:
        pos *= config.amplitude / nrm
    entries = np.concatenate([pos[::-1].conj(), pos])
    return ModeSequence(entries, SYMMETRIC, J)
