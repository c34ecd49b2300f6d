"""Experiment configuration: JSON documents validated against a bundled schema."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from ..errors import ConfigError, FHLabError
from ..transforms import Charge, FunctionSpec

SEED_ENV = "FHLAB_SEED"

DEFAULTS = {
    "N": [100],
    "samples": 10000,
    "n_batches": 50,
    "workers": 1,
    "method": "spectral",
    "tolerance": {"abs_floor": 0.1, "n_sigma": 3.0, "kernel_tol": 1e-9},
    "predictor": {"separation_exponent": 0.15, "gamma5_reading": "covariance"},
    "output": "fhlab-out",
}


def load_schema() -> dict:
    return json.loads(resources.files("fhlab.harness").joinpath("schema.json").read_text())


def _pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path) or "/"


@dataclass
class ExperimentConfig:
    """A validated configuration; ``raw`` keeps the document with defaults filled in."""

    experiment: str
    seed: int
    N: list
    charges: list
    samples: int
    n_batches: int
    workers: int
    method: str
    tolerance: dict
    predictor: dict
    output: str
    sections: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})


def parse_config(doc: dict, seed: int | None = None, workers: int | None = None,
                 output: str | None = None, env: dict | None = None) -> ExperimentConfig:
    """Validate ``doc`` and apply overrides.

    Precedence for the seed: ``FHLAB_SEED`` in the environment, then the
    ``seed`` argument, then the document.

    Raises
    ------
    ConfigError
        With the JSON pointer of the first violation.
    """
    doc = copy.deepcopy(doc)
    env = os.environ if env is None else env
    if seed is not None:
        doc["seed"] = int(seed)
    if env.get(SEED_ENV):
        try:
            doc["seed"] = int(env[SEED_ENV], 0)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env[SEED_ENV]!r} is not an integer", "/seed") from None
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, _pointer(e.absolute_path))
    for key, val in DEFAULTS.items():
        if isinstance(val, dict):
            doc[key] = {**val, **doc.get(key, {})}
        else:
            doc.setdefault(key, copy.deepcopy(val))
    if workers is not None:
        doc["workers"] = int(workers)
    if output is not None:
        doc["output"] = output
    charges = []
    if "charge" in doc and "charges" in doc:
        raise ConfigError("give either 'charge' or 'charges'", "/charges")
    raw_charges = doc.get("charges", [doc["charge"]] if "charge" in doc else [])
    base = "/charges" if "charges" in doc else "/charge"
    for i, c in enumerate(raw_charges):
        where = f"{base}/{i}" if "charges" in doc else base
        try:
            charges.append(Charge.from_dict(c))
        except FHLabError as exc:
            raise ConfigError(str(exc), where) from None
    for name in ("kernel", "gmc"):
        sec = doc.get(name, {})
        for j, sym in enumerate(sec.get("symbols", [])):
            _check_function(sym["f"], f"/{name}/symbols/{j}/f")
        if "psi" in sec:
            _check_function(sec["psi"], f"/{name}/psi")
    sections = {k: doc.get(k, {}) for k in ("kernel", "gmc", "maxstat", "selftest")}
    return ExperimentConfig(
        experiment=doc["experiment"], seed=int(doc["seed"]), N=list(doc["N"]), charges=charges,
        samples=int(doc["samples"]), n_batches=int(doc["n_batches"]), workers=int(doc["workers"]),
        method=doc["method"], tolerance=doc["tolerance"], predictor=doc["predictor"],
        output=doc["output"], sections=sections, raw=doc,
    )


def _check_function(d: dict, pointer: str) -> FunctionSpec:
    try:
        return FunctionSpec.from_dict(d)
    except (FHLabError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc), pointer) from None


def load_config(path: str, **overrides) -> ExperimentConfig:
    """Read and validate a JSON config file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", "/") from None
    return parse_config(doc, **overrides)


def grid(spec: dict) -> np.ndarray:
    return np.linspace(spec["start"], spec["stop"], spec["num"])


def derive_seed(master: int, *keys: int) -> int:
    """Independent 64-bit seed for a sub-task, a pure function of the keys."""
    ss = np.random.SeedSequence([int(master) & (2**64 - 1), *map(int, keys)])
    return int(ss.generate_state(1, np.uint64)[0])
