"""Application settings and run configuration."""
import os
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Mapping, Optional

import yaml
from dotenv import load_dotenv

from .exceptions import ConfigError, LineNarrowingError
from .lgcp import StudentTPrior
from .models import Family
from .priors import PriorSpec
from .sbc import SbcConfig
from .smc import SmcConfig

load_dotenv()

ENV_PREFIX = "LINENARROW_"
INPUT_FORMATS = ("text", "rruff")


class SimpleConfig:
    """Process-wide settings read from the environment."""

    def __init__(self):
        # Logging
        self.log_level = self._validate_log_level(os.getenv("LOG_LEVEL", "INFO"))
        self.log_file = os.getenv("LOG_FILE")

        # Execution
        self.threads = int(os.getenv("THREADS", "1"))
        self.output_dir = os.getenv("OUTPUT_DIR", "output")

    def _validate_log_level(self, level: str) -> str:
        """Validate and return log level."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        level = level.upper()
        return level if level in valid_levels else "INFO"


def _optional_float(value: Any) -> Optional[float]:
    if value is None or (isinstance(value, str) and value.strip().lower() in ("", "none", "auto")):
        return None
    return float(value)


def _flag(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _noise(value: Any) -> str:
    if isinstance(value, str) and value.strip().lower() == "estimate":
        return "estimate"
    return repr(float(value))


@dataclass
class RunConfig:
    """
    Settings of one narrow/sbc run.

    Layering: defaults < flat YAML file < LINENARROW_<KEY> environment < flags.
    """

    input_path: str = ""
    input_format: str = "text"
    family: str = "lorentz"

    # priors
    gamma_lo: float = 1.0
    gamma_hi: float = 30.0
    m_lo: int = 10
    m_hi: int = 80
    sigma_mean_multiplier: float = 0.5
    sigma_sd_multiplier: float = 0.05

    # sampler
    j_particles: int = 1000
    j_min_fraction: float = 0.5
    eta: float = 0.9
    n_mcmc: int = 5
    target_accept: float = 0.30
    seed: int = 0
    noise_sd: str = "estimate"

    # LGCP
    length_scale: Optional[float] = None
    c_scale: Optional[float] = None
    log_sigma_mean: Optional[float] = None
    log_sigma_variance: float = 100.0 ** 2
    log_sigma_dof: float = 10.0
    n_peak_samples: int = 20000
    min_peak_intensity: float = 1.0
    lgcp_max_iter: int = 2000
    strict: bool = False

    # calibration
    sbc_replicates: int = 100
    sbc_k: int = 512
    sbc_h: float = 1.0
    sbc_length_scale: float = 0.025
    sbc_noise_sd: float = 0.025
    sbc_amplitude_lo: float = 0.5
    sbc_amplitude_hi: float = 2.0
    sbc_amplitude_mode: str = "area"
    n_bins: int = 20

    output_dir: str = "output"
    threads: int = 1

    @classmethod
    def _coercers(cls) -> Dict[str, Any]:
        coercers = {}
        for f in fields(cls):
            if f.name == "noise_sd":
                coercers[f.name] = _noise
            elif f.type is bool:
                coercers[f.name] = _flag
            elif f.type is int:
                coercers[f.name] = int
            elif f.type is float:
                coercers[f.name] = float
            elif f.type is str:
                coercers[f.name] = str
            else:
                coercers[f.name] = _optional_float
        return coercers

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], source: str = "configuration") -> "RunConfig":
        """Build from defaults overlaid with values; unknown keys are rejected."""
        return cls().merged(values, source)

    def merged(self, values: Mapping[str, Any], source: str) -> "RunConfig":
        coercers = self._coercers()
        unknown = sorted(set(values) - set(coercers))
        if unknown:
            raise ConfigError(f"Unknown keys in {source}: {', '.join(unknown)}")
        current = asdict(self)
        for key, value in values.items():
            try:
                current[key] = coercers[key](value)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"Invalid value for {key} in {source}: {value!r}") from e
        return RunConfig(**current)

    @classmethod
    def load(
        cls,
        config_file: Optional[str] = None,
        overrides: Optional[Mapping[str, Any]] = None,
        environ: Optional[Mapping[str, str]] = None,
    ) -> "RunConfig":
        """Resolve the layered configuration."""
        # process settings act as defaults
        run_config = cls(output_dir=config.output_dir, threads=config.threads)

        if config_file:
            try:
                with open(config_file, "r") as f:
                    document = yaml.safe_load(f) or {}
            except (OSError, yaml.YAMLError) as e:
                raise ConfigError(f"Cannot read config file {config_file}: {e}") from e
            if not isinstance(document, dict) or any(isinstance(v, (dict, list)) for v in document.values()):
                raise ConfigError(f"Config file {config_file} must be a flat key-value mapping")
            run_config = run_config.merged(document, config_file)

        environ = os.environ if environ is None else environ
        known = {f.name for f in fields(cls)}
        from_env = {}
        for name, value in environ.items():
            if name.startswith(ENV_PREFIX):
                key = name[len(ENV_PREFIX):].lower()
                if key in known:
                    from_env[key] = value
        run_config = run_config.merged(from_env, "environment")

        flags = {k: v for k, v in (overrides or {}).items() if v is not None}
        run_config = run_config.merged(flags, "command line")
        run_config.validate()
        return run_config

    def validate(self, require_input: bool = False) -> None:
        """Check ordering of bounds and ranges of every setting."""
        checks = [
            (self.family in {f.value for f in Family}, f"family must be lorentz or voigt, got {self.family!r}"),
            (self.input_format in INPUT_FORMATS, f"input_format must be one of {INPUT_FORMATS}"),
            (0 < self.gamma_lo <= self.gamma_hi, "gamma bounds must satisfy 0 < gamma_lo <= gamma_hi"),
            (3 <= self.m_lo <= self.m_hi, "M bounds must satisfy 3 <= m_lo <= m_hi"),
            (self.sigma_mean_multiplier > 0 and self.sigma_sd_multiplier > 0, "sigma multipliers must be positive"),
            (self.j_particles >= 2, "j_particles must be at least 2"),
            (0 <= self.j_min_fraction < 1, "j_min_fraction must lie in [0, 1)"),
            (0 < self.eta < 1, "eta must lie in (0, 1)"),
            (self.n_mcmc >= 1, "n_mcmc must be at least 1"),
            (0 < self.target_accept < 1, "target_accept must lie in (0, 1)"),
            (self.noise_sd == "estimate" or float(self.noise_sd) > 0, "noise_sd must be positive or 'estimate'"),
            (self.length_scale is None or self.length_scale > 0, "length_scale must be positive"),
            (self.c_scale is None or self.c_scale > 0, "c_scale must be positive"),
            (self.log_sigma_variance > 0 and self.log_sigma_dof > 2, "log sigma prior needs variance > 0, dof > 2"),
            (self.n_peak_samples >= 1, "n_peak_samples must be at least 1"),
            (self.min_peak_intensity > 0, "min_peak_intensity must be positive"),
            (self.lgcp_max_iter >= 1, "lgcp_max_iter must be at least 1"),
            (self.sbc_replicates >= 1 and self.n_bins >= 1, "sbc_replicates and n_bins must be positive"),
            (0 < self.sbc_amplitude_lo <= self.sbc_amplitude_hi, "SBC amplitude bounds must be ordered"),
            (self.sbc_amplitude_mode in ("area", "height"), "sbc_amplitude_mode must be area or height"),
            (bool(self.output_dir), "output_dir must be nonempty"),
            (self.threads >= 1, "threads must be at least 1"),
        ]
        if require_input:
            checks.append((bool(self.input_path), "input_path must be nonempty"))
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    @property
    def family_enum(self) -> Family:
        return Family(self.family)

    def priors(self) -> PriorSpec:
        try:
            if self.family_enum is Family.VOIGT:
                return PriorSpec.voigt(
                    (self.gamma_lo, self.gamma_hi),
                    (self.m_lo, self.m_hi),
                    (self.sigma_mean_multiplier, self.sigma_sd_multiplier),
                )
            return PriorSpec.lorentz((self.gamma_lo, self.gamma_hi), (self.m_lo, self.m_hi))
        except LineNarrowingError as e:
            raise ConfigError(str(e)) from e

    def smc_config(self, noise_sd: float) -> SmcConfig:
        return SmcConfig(
            j_particles=self.j_particles,
            j_min=int(self.j_min_fraction * self.j_particles),
            eta=self.eta,
            n_mcmc=self.n_mcmc,
            target_accept=self.target_accept,
            noise_sd=noise_sd,
            rng_seed=self.seed,
            threads=self.threads,
        )

    def log_sigma_prior(self) -> StudentTPrior:
        mean = self.log_sigma_mean
        if mean is None:
            mean = StudentTPrior.voigt().mean if self.family_enum is Family.VOIGT else 0.0
        return StudentTPrior(mean=mean, variance=self.log_sigma_variance, dof=self.log_sigma_dof)

    def sbc_config(self) -> SbcConfig:
        try:
            return SbcConfig(
                n_replicates=self.sbc_replicates,
                j_particles=self.j_particles,
                n_peak_samples=self.n_peak_samples,
                k=self.sbc_k,
                h=self.sbc_h,
                length_scale=self.sbc_length_scale,
                noise_sd=self.sbc_noise_sd,
                amplitude_range=(self.sbc_amplitude_lo, self.sbc_amplitude_hi),
                amplitude_mode=self.sbc_amplitude_mode,
                family=self.family_enum,
                gamma_range=(self.gamma_lo, self.gamma_hi),
                m_range=(self.m_lo, self.m_hi),
                sigma_multipliers=(self.sigma_mean_multiplier, self.sigma_sd_multiplier),
                log_sigma_prior=self.log_sigma_prior(),
                c_scale=self.c_scale,
                min_peak_intensity=self.min_peak_intensity,
                n_bins=self.n_bins,
                eta=self.eta,
                n_mcmc=self.n_mcmc,
                seed=self.seed,
                threads=self.threads,
            )
        except LineNarrowingError as e:
            raise ConfigError(str(e)) from e

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# Global configuration instance
config = SimpleConfig()
