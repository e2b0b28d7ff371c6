"""Run-configuration loading and validation against the bundled JSON schema."""
from __future__ import annotations

import copy
import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

from jsonschema import Draft202012Validator, validators

EXPERIMENTS = ("ops", "dns", "carleman-sweep", "regimes-map", "spectrum", "toy-radius")


class ConfigError(ValueError):
    """Configuration is unreadable or violates the schema.

    ``violations`` holds one ``{"path", "message"}`` entry per problem.
    """

    def __init__(self, violations: list[dict]):
        self.violations = violations
        lines = "; ".join(f"{v['path']}: {v['message']}" for v in violations)
        super().__init__(f"invalid configuration: {lines}")


def _with_defaults(base):
    """Validator class that also inserts ``default`` values for absent properties."""
    validate_properties = base.VALIDATORS["properties"]

    def set_defaults(validator, properties, instance, schema):
        if validator.is_type(instance, "object"):
            for name, sub in properties.items():
                if "default" in sub and name not in instance:
                    instance[name] = copy.deepcopy(sub["default"])
        yield from validate_properties(validator, properties, instance, schema)

    return validators.extend(base, {"properties": set_defaults})


FillingValidator = _with_defaults(Draft202012Validator)


@lru_cache(maxsize=1)
def schema() -> dict:
    text = resources.files("carleman_lab").joinpath("schemas/run_config.json").read_text()
    return json.loads(text)


def _problem_def(experiment: str, problem) -> str:
    if experiment != "carleman-sweep":
        return experiment
    system = problem.get("system") if isinstance(problem, dict) else None
    return "carleman-sweep-burgers" if system == "burgers" else "carleman-sweep-toy"


def _path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    # name the missing field itself
    if err.validator == "required":
        missing = err.message.split("'")[1] if "'" in err.message else ""
        parts.append(missing)
    return "/".join(parts) or "<root>"


def validate_config(doc: dict, experiment: str | None = None) -> dict:
    """Return a defaults-filled copy of ``doc`` or raise ``ConfigError``."""
    if not isinstance(doc, dict):
        raise ConfigError([{"path": "<root>", "message": "configuration must be a JSON object"}])
    doc = copy.deepcopy(doc)
    if experiment is None:
        experiment = doc.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError([{"path": "experiment", "message": f"unknown experiment {experiment!r}"}])
    if doc.get("experiment", experiment) != experiment:
        raise ConfigError([{
            "path": "experiment",
            "message": f"config is for {doc['experiment']!r}, not {experiment!r}",
        }])
    doc["experiment"] = experiment
    full = copy.deepcopy(schema())
    full["properties"]["problem"] = {"$ref": f"#/$defs/{_problem_def(experiment, doc.get('problem'))}"}
    errors = sorted(FillingValidator(full).iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigError([{"path": _path(e), "message": e.message} for e in errors])
    return doc


def load_config(path: str | Path, experiment: str | None = None) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError([{"path": str(path), "message": "file not found"}]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([{"path": str(path), "message": f"not valid JSON: {exc}"}]) from None
    return validate_config(doc, experiment)
