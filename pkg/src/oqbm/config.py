"""Experiment configuration loading and validation.

Configurations are JSON documents. Complex numbers are written as
two-element ``[re, im]`` arrays and matrices as row-major nested arrays of
such pairs. Validation runs in two layers: the schema shipped with the
package pins structure and types, then a semantic pass checks what a schema
cannot express, such as square matrices of one shared dimension, strictly
decreasing tau sweeps, and vertex indices staying inside the graph. Every
failure raises ConfigError carrying a dotted path to the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources

import jsonschema
import numpy as np

from .errors import ConfigError, ContractViolation, DimensionError

EXPERIMENT_KINDS = (
    "trajectory-convergence",
    "channel-convergence",
    "dilation-audit",
    "regime-map",
    "consistency-audit",
    "oqw-simulation",
    "belavkin-simulation",
    "lindblad-solve",
)

# top-level fields an experiment kind cannot run without
REQUIRED_FIELDS = {
    "trajectory-convergence": ("model", "sweep", "n_paths"),
    "channel-convergence": ("model", "sweep"),
    "dilation-audit": ("model",),
    "regime-map": ("regime",),
    "consistency-audit": (),
    "oqw-simulation": ("oqw", "n_steps", "n_paths"),
    "belavkin-simulation": ("model", "t_final", "n_paths"),
    "lindblad-solve": ("model", "t_final", "dt"),
}

_schema_cache: dict | None = None


def experiment_schema() -> dict:
    """The JSON schema shipped with the package, parsed once."""
    global _schema_cache
    if _schema_cache is None:
        text = (
            resources.files("oqbm").joinpath("schema").joinpath("experiment.json").read_text()
        )
        _schema_cache = json.loads(text)
    return _schema_cache


def _schema_path(err: jsonschema.ValidationError) -> str:
    parts = []
    for p in err.absolute_path:
        parts.append(f"[{p}]" if isinstance(p, int) else f".{p}")
    return "$" + "".join(parts)


def parse_matrix(rows, path: str) -> np.ndarray:
    """Row-major nested [re, im] arrays to a complex matrix.

    The schema already pins the nesting and entry shape; this adds the
    rectangularity check a JSON schema cannot make and builds the array.
    """
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ConfigError(f"rows have unequal lengths {sorted(widths)}", path)
    out = np.empty((len(rows), widths.pop()), dtype=complex)
    for i, row in enumerate(rows):
        for j, pair in enumerate(row):
            out[i, j] = complex(pair[0], pair[1])
    return out


def parse_square_matrix(rows, path: str, dim: int | None = None) -> np.ndarray:
    m = parse_matrix(rows, path)
    if m.shape[0] != m.shape[1]:
        raise ConfigError(f"matrix is {m.shape[0]}x{m.shape[1]}, not square", path)
    if dim is not None and m.shape[0] != dim:
        raise ConfigError(f"matrix dimension {m.shape[0]} does not match {dim}", path)
    return m


@dataclass(frozen=True)
class ExperimentConfig:
    """A schema-valid, semantically checked experiment document.

    ``doc`` is the raw JSON object; typed accessors below pull values with
    defaults so the experiment runners stay free of dict plumbing. Parsed
    model matrices are cached at construction.
    """

    kind: str
    seed: int
    doc: dict
    source: str = "<memory>"

    def with_seed(self, seed: int) -> "ExperimentConfig":
        doc = dict(self.doc)
        doc["seed"] = int(seed)
        return replace(self, seed=int(seed), doc=doc)

    def number(self, key: str, default: float | None = None) -> float:
        if key in self.doc:
            return float(self.doc[key])
        if default is None:
            raise ConfigError(f"missing required number for kind {self.kind!r}", f"$.{key}")
        return float(default)

    def integer(self, key: str, default: int | None = None) -> int:
        if key in self.doc:
            return int(self.doc[key])
        if default is None:
            raise ConfigError(f"missing required integer for kind {self.kind!r}", f"$.{key}")
        return int(default)

    def flag(self, key: str, default: bool) -> bool:
        return bool(self.doc.get(key, default))

    def section(self, key: str) -> dict:
        return self.doc.get(key, {})

    def tolerance(self, name: str, default: float) -> float:
        return float(self.doc.get("tolerances", {}).get(name, default))

    def model_matrices(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(N, H, M) with absent H and M defaulting to zero."""
        model = self.doc.get("model")
        if model is None:
            raise ConfigError(f"kind {self.kind!r} requires a model", "$.model")
        n = parse_square_matrix(model["N"], "$.model.N")
        d = n.shape[0]
        h = (
            parse_square_matrix(model["H"], "$.model.H", d)
            if "H" in model
            else np.zeros((d, d), dtype=complex)
        )
        m = (
            parse_square_matrix(model["M"], "$.model.M", d)
            if "M" in model
            else np.zeros((d, d), dtype=complex)
        )
        return n, h, m

    def model_generator(self):
        from .lindblad import LindbladGenerator

        n, h, _ = self.model_matrices()
        try:
            return LindbladGenerator(N=n, H=h)
        except (ContractViolation, DimensionError) as exc:
            raise ConfigError(str(exc), "$.model") from exc

    def rho0(self, dim: int) -> np.ndarray:
        """Initial gyroscope state; the maximally mixed state by default."""
        if "rho0" not in self.doc:
            return np.eye(dim, dtype=complex) / dim
        rho = parse_square_matrix(self.doc["rho0"], "$.rho0", dim)
        if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
            raise ConfigError("initial state is not Hermitian", "$.rho0")
        tr = float(np.trace(rho).real)
        if abs(tr - 1.0) > 1e-10:
            raise ConfigError(f"initial state has trace {tr:.12f}, expected 1", "$.rho0")
        if float(np.linalg.eigvalsh(rho).min()) < -1e-12:
            raise ConfigError("initial state is not positive semidefinite", "$.rho0")
        return rho

    def tau_sweep(self) -> list[float]:
        sweep = self.doc.get("sweep")
        if sweep is None:
            raise ConfigError(f"kind {self.kind!r} requires a sweep", "$.sweep")
        return [float(t) for t in sweep["tau"]]


def parse_config(doc, source: str = "<memory>") -> ExperimentConfig:
    """Validate a decoded JSON document and wrap it.

    Schema violations and semantic violations both raise ConfigError with
    the field path; the document is never mutated.
    """
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object", "$")
    validator = jsonschema.Draft7Validator(experiment_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        raise ConfigError(best.message, _schema_path(best))

    kind = doc["kind"]
    for field in REQUIRED_FIELDS[kind]:
        if field not in doc:
            raise ConfigError(f"kind {kind!r} requires this field", f"$.{field}")

    cfg = ExperimentConfig(kind=kind, seed=int(doc["seed"]), doc=doc, source=source)

    if "model" in doc:
        n, h, m = cfg.model_matrices()
        if np.max(np.abs(h - h.conj().T)) > 1e-12:
            raise ConfigError("H must be Hermitian", "$.model.H")
        if kind == "trajectory-convergence" and np.any(m != 0):
            raise ConfigError(
                "the diffusive reference dynamics has no M term; set M to zero",
                "$.model.M",
            )
    if "rho0" in doc:
        d = None
        if "model" in doc:
            d = parse_square_matrix(doc["model"]["N"], "$.model.N").shape[0]
        cfg.rho0(d if d is not None else len(doc["rho0"]))
    if "sweep" in doc:
        taus = cfg.tau_sweep()
        if any(b >= a for a, b in zip(taus, taus[1:])):
            raise ConfigError("tau sweep must be strictly decreasing", "$.sweep.tau")
    if "oqw" in doc:
        sec = doc["oqw"]
        n_v = sec["vertices"]
        if sec["start"] >= n_v:
            raise ConfigError(f"start vertex {sec['start']} outside 0..{n_v - 1}", "$.oqw.start")
        dims = set()
        for i, e in enumerate(sec["edges"]):
            for end in ("from", "to"):
                if e[end] >= n_v:
                    raise ConfigError(
                        f"vertex {e[end]} outside 0..{n_v - 1}", f"$.oqw.edges[{i}].{end}"
                    )
            k = parse_square_matrix(e["kraus"], f"$.oqw.edges[{i}].kraus")
            dims.add(k.shape[0])
        if len(dims) != 1:
            raise ConfigError(
                f"edge operators mix dimensions {sorted(dims)}", "$.oqw.edges"
            )
    if "dt" in doc and "t_final" in doc and float(doc["dt"]) > float(doc["t_final"]):
        raise ConfigError("dt exceeds t_final", "$.dt")
    return cfg


def load_config(path) -> ExperimentConfig:
    """Read, decode, and validate a configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc}", str(path)) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"invalid JSON: {exc.msg}", f"{path}:{exc.lineno}:{exc.colno}"
        ) from exc
    return parse_config(doc, source=str(path))
