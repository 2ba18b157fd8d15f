"""JSON scenarios: schema validation, cross-validation and construction."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema
import numpy as np

from .errors import ConfigError, GeometryError
from .norms import norm_from_dict
from .surfaces import QuadratureSpec, SphereBump, perturb, wulff_patch
from .verify import DEFAULT_TOLERANCES, VerificationScenario
from .wedge import Wedge, solve_k_vector

SUITES = (
    "duality",
    "energy",
    "variation",
    "minkowski",
    "flux",
    "hk",
    "reduction",
    "flow",
    "monotonicity",
    "coverage",
    "elliptic",
    "alexandrov",
    "oracle",
)


@lru_cache(maxsize=None)
def load_schema(name="scenario"):
    text = resources.files("wedgewulff").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def _pointer(path):
    return "/" + "/".join(str(p) for p in path) if path else ""


def validate(data, schema="scenario"):
    """Raise ConfigError pointing at the first schema violation (deterministic order)."""
    validator = jsonschema.Draft202012Validator(load_schema(schema))
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, pointer=_pointer(err.absolute_path))


def _build(data):
    where = "/norm"
    try:
        norm = norm_from_dict(data["norm"])
        where = "/wedge"
        wedge = Wedge.from_dict(data["wedge"])
    except (ValueError, GeometryError) as exc:
        raise ConfigError(str(exc), pointer=where) from None
    if norm.dim != wedge.dim:
        raise ConfigError(f"norm acts on R^{norm.dim} but the wedge lives in R^{wedge.dim}", "/wedge/n1")
    omega0 = np.asarray(data.get("omega0", [0.0, 0.0]), dtype=float)
    k = data.get("k")
    if k is not None:
        k = np.asarray(k, dtype=float)
        if k.shape != (wedge.dim,):
            raise ConfigError("k has the wrong dimension", "/k")
        if np.abs(wedge.normals @ k - omega0).max() > 1e-10:
            raise ConfigError("<k, n_i> must equal omega0^i", "/k")
    else:
        try:
            k = solve_k_vector(norm, wedge, omega0)
        except GeometryError as exc:
            raise ConfigError(str(exc), "/omega0") from None
    spec = data["patch"]
    radius = float(spec["radius"])
    center = np.asarray(spec["center"], float) if "center" in spec else -radius * k
    if center.shape != (wedge.dim,):
        raise ConfigError("center has the wrong dimension", "/patch/center")
    q = spec.get("quadrature", {})
    n = wedge.dim - 1
    quad = QuadratureSpec(int(q.get("order", 8)), tuple(q.get("cells", [2] * n)))
    if len(quad.cells) != n:
        raise ConfigError(f"expected {n} cell counts", "/patch/quadrature/cells")
    try:
        patch = wulff_patch(norm, wedge, center, radius, quad)
    except GeometryError as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}", "/patch") from None
    kind = spec.get("kind", "perturbed" if "bump" in spec else "wulff")
    if kind == "perturbed":
        if "bump" not in spec:
            raise ConfigError("a perturbed patch needs a bump", "/patch")
        b = spec["bump"]
        try:
            bump = SphereBump(
                patch,
                b.get("profile", "edge"),
                int(b.get("order", 2)),
                axis=b.get("axis"),
                kappa=float(b.get("kappa", 0.0)),
            )
            patch = perturb(patch, bump, float(b["amplitude"]), b.get("along", "anisotropic"))
        except (ValueError, GeometryError) as exc:
            raise ConfigError(f"{type(exc).__name__}: {exc}", "/patch/bump") from None
    omegas_geom = [-(center @ wedge.normal(i)) / radius for i in (1, 2)]
    if kind == "wulff":
        # a Wulff patch is capillary exactly when its centre encodes omega0
        touched = [om < norm.value(wedge.normal(i + 1)) for i, om in enumerate(omegas_geom)]
        for i in (0, 1):
            if touched[i] and abs(omegas_geom[i] - omega0[i]) > 1e-9:
                raise ConfigError(
                    f"the patch meets P{i + 1} at angle {omegas_geom[i]:.6g}, not omega0 = {omega0[i]:.6g}",
                    "/patch/center",
                )
    return norm, wedge, omega0, k, patch


def scenario_from_dict(data) -> VerificationScenario:
    """Validate ``data`` against the scenario schema and build the scenario."""
    validate(data)
    for key in data.get("tolerances", {}):
        if key not in DEFAULT_TOLERANCES:
            raise ConfigError(f"unknown tolerance {key!r}", f"/tolerances/{key}")
    norm, wedge, omega0, k, patch = _build(data)
    return VerificationScenario(
        name=data["name"],
        norm=norm,
        wedge=wedge,
        patch=patch,
        omega0=omega0,
        k=k,
        suites=tuple(data.get("suites", SUITES)),
        tolerances=dict(data.get("tolerances", {})),
        expect=dict(data.get("expect", {})),
        hk_expect=data.get("hk_expect"),
        levels=tuple(data.get("levels", (0, 1, 2))),
        description=data.get("description", ""),
    )


def load_scenario_file(path) -> tuple[dict, VerificationScenario]:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return data, scenario_from_dict(data)
