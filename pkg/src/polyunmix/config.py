"""Run configuration: defaults, JSON loading, validation and snapshotting."""
import json
from dataclasses import asdict, dataclass, fields
from typing import Optional

CLUSTER_METHODS = ("gmm", "kmeans", "external")


class ConfigError(ValueError):
    """Invalid user-supplied configuration."""


@dataclass
class RunConfig:
    num_materials: Optional[int] = None
    sphere_normalize: bool = True
    reduce: bool = True
    pca_dim: Optional[int] = None        # None -> num_materials
    cluster_method: str = "gmm"
    cluster_fraction: float = 0.25
    cluster_seed: int = 0
    svm_c: float = 1.0
    svm_fraction: float = 0.20
    svm_seed: int = 0
    saturation: Optional[float] = None   # None -> 1 / (2 std(D'))
    lam: Optional[float] = None          # None -> 0, escalated when ill-conditioned
    tikhonov_fallback: bool = False
    simplex_abundances: bool = False
    input: Optional[str] = None
    labels: Optional[str] = None
    output: Optional[str] = None

    def validate(self):
        if self.saturation is not None and not self.saturation > 0:
            raise ConfigError("saturation must be positive")
        if self.lam is not None and not self.lam >= 0:
            raise ConfigError("lambda must be nonnegative")
        for name in ("cluster_fraction", "svm_fraction"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ConfigError(f"{name} must be in (0, 1], got {v}")
        if self.svm_c <= 0:
            raise ConfigError("svm_c must be positive")
        if self.cluster_method not in CLUSTER_METHODS:
            raise ConfigError(f"cluster_method must be one of {', '.join(CLUSTER_METHODS)}")
        if self.cluster_method == "external" and not self.labels:
            raise ConfigError("cluster_method 'external' needs a labels path")
        if self.num_materials is not None and self.num_materials < 2:
            raise ConfigError("num_materials must be >= 2")
        if self.pca_dim is not None and self.pca_dim < 1:
            raise ConfigError("pca_dim must be >= 1")
        return self

    def to_dict(self):
        out = asdict(self)
        out["saturation"] = "auto" if self.saturation is None else self.saturation
        out["lambda"] = "auto" if self.lam is None else self.lam
        del out["lam"]
        return out

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw)
        if "lambda" in raw:
            raw["lam"] = raw.pop("lambda")
        for key in ("saturation", "lam"):
            if raw.get(key) == "auto":
                raw[key] = None
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None

    def updated(self, **overrides):
        """Copy with every non-None override applied (flags win over the file)."""
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig(**data)
