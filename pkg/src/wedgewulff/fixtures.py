"""Built-in scenario catalog (JSON-compatible dictionaries)."""

from __future__ import annotations

import copy
import math

RIGHT_3D = {"n1": [1.0, 0.0, 0.0], "n2": [0.0, 1.0, 0.0]}
RIGHT_2D = {"n1": [1.0, 0.0], "n2": [0.0, 1.0]}


def _opening(degrees, dim):
    """Wedge normals whose faces meet at the given interior angle."""
    a = math.radians(degrees)
    n1 = [1.0] + [0.0] * (dim - 1)
    n2 = [-math.cos(a), math.sin(a)] + [0.0] * (dim - 2)
    return {"n1": n1, "n2": n2}


ISO_3D = {"family": "isotropic", "dim": 3}
ISO_2D = {"family": "isotropic", "dim": 2}
ELLIP_3D = {"family": "ellipsoidal", "params": {"A": [[1.5, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.6]]}}
ELLIP_2D = {"family": "ellipsoidal", "params": {"A": [[2.0, 0.0], [0.0, 0.5]]}}
BLEND_3D = {"family": "superquadric_blend", "dim": 3, "params": {"eps": 0.3}}
BLEND_2D = {"family": "superquadric_blend", "dim": 2, "params": {"eps": 0.2}}

WULFF_REJECTED = {"wulff_fit": "Fail", "alexandrov_r1": "Fail", "alexandrov_r2": "Fail"}

ALL_SUITES = [
    "duality", "energy", "variation", "minkowski", "flux", "hk", "reduction",
    "flow", "monotonicity", "coverage", "elliptic", "alexandrov", "oracle",
]
CLOSED_SUITES = [s for s in ALL_SUITES if s != "flux"]


def _edge_bump(amplitude, order=2):
    return {"profile": "edge", "order": order, "amplitude": amplitude, "along": "anisotropic"}


_CATALOG = [
    {
        "name": "quarter_sphere",
        "description": "unit sphere about a point of L in a right-angle wedge; free boundary, isotropic",
        "norm": ISO_3D,
        "wedge": RIGHT_3D,
        "patch": {"radius": 1.0, "center": [0.0, 0.0, 0.0]},
        "hk_expect": "equality",
    },
    {
        "name": "ellipsoidal_free",
        "description": "truncated ellipsoidal Wulff shape centred on L in a 100 degree wedge",
        "norm": ELLIP_3D,
        "wedge": _opening(100, 3),
        "patch": {"radius": 1.0, "center": [0.0, 0.0, 0.2]},
        "hk_expect": "equality",
    },
    {
        "name": "blend_free",
        "description": "truncated Wulff shape of a non-quadratic blend norm; free boundary",
        "norm": BLEND_3D,
        "wedge": RIGHT_3D,
        "patch": {"radius": 1.0, "center": [0.0, 0.0, 0.1]},
        "hk_expect": "equality",
    },
    {
        "name": "isotropic_capillary",
        "description": "spherical cap wetting both faces of a 100 degree wedge at constant angles",
        "norm": ISO_3D,
        "wedge": _opening(100, 3),
        "omega0": [-0.2, 0.1],
        "patch": {"radius": 1.3},
        "hk_expect": "equality",
    },
    {
        "name": "ellipsoidal_capillary",
        "description": "capillary truncated ellipsoidal Wulff shape W_r(-r k)",
        "norm": ELLIP_3D,
        "wedge": RIGHT_3D,
        "omega0": [-0.2, 0.1],
        "patch": {"radius": 1.3},
        "hk_expect": "equality",
    },
    {
        "name": "blend_capillary",
        "description": "capillary truncated Wulff shape of the blend norm; numerical dual",
        "norm": BLEND_3D,
        "wedge": _opening(100, 3),
        "omega0": [-0.2, 0.1],
        "patch": {"radius": 1.3},
        "hk_expect": "equality",
    },
    {
        "name": "shifted_free",
        "description": "free-boundary Wulff shape of the shifted norm |xi| - <k0, xi> (a translated sphere)",
        "norm": {"family": "shifted", "dim": 3, "params": {"k0": [0.3, 0.0, 0.0]}},
        "wedge": RIGHT_3D,
        "patch": {"radius": 1.0, "center": [0.0, 0.0, 0.0]},
        "hk_expect": "equality",
    },
    {
        "name": "closed_ellipsoid",
        "description": "ellipsoid with semi-axes 1, 2, 3 strictly inside the wedge",
        "norm": {"family": "ellipsoidal", "params": {"A": [[1.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 9.0]]}},
        "wedge": RIGHT_3D,
        "patch": {"radius": 1.0, "center": [-5.0, -5.0, 0.0]},
        "suites": CLOSED_SUITES,
        "levels": [1, 2, 3],
        "hk_expect": "equality",
    },
    {
        "name": "perturbed_free",
        "description": "quarter sphere pushed out by a bump vanishing to second order on the boundary",
        "norm": ISO_3D,
        "wedge": RIGHT_3D,
        "patch": {"radius": 1.0, "center": [0.0, 0.0, 0.0], "bump": _edge_bump(0.05)},
        "hk_expect": "strict",
        "expect": WULFF_REJECTED,
    },
    {
        "name": "perturbed_capillary",
        "description": "capillary ellipsoidal Wulff shape with a boundary-flat bump; capillary data preserved",
        "norm": ELLIP_3D,
        "wedge": RIGHT_3D,
        "omega0": [-0.2, 0.1],
        "patch": {"radius": 1.3, "bump": _edge_bump(0.05)},
        "hk_expect": "strict",
        "expect": WULFF_REJECTED,
    },
    {
        "name": "dented_free",
        "description": "bump of order one pulled inward: non-constant contact angles with omega <= 0",
        "norm": ISO_3D,
        "wedge": RIGHT_3D,
        "patch": {"radius": 1.0, "center": [0.0, 0.0, 0.1], "bump": _edge_bump(-0.1, order=1)},
        "hk_expect": "strict",
        "expect": {
            **WULFF_REJECTED,
            "minkowski_r1": "Inconclusive",
            "minkowski_r2": "Inconclusive",
            "flux": "Fail",
            "elliptic_point": "Fail",
        },
    },
    {
        "name": "tilted_free",
        "description": "bump of order one pushed outward: contact angles leave the admissible sign (expected fail)",
        "norm": ISO_3D,
        "wedge": RIGHT_3D,
        "patch": {"radius": 1.0, "center": [0.0, 0.0, 0.1], "bump": _edge_bump(0.1, order=1)},
        "suites": ["minkowski", "flux", "hk", "reduction"],
        "expect": {
            "minkowski_r1": "Inconclusive",
            "minkowski_r2": "Inconclusive",
            "flux": "Fail",
            "hk": "Fail",
            "reduction": "Fail",
        },
    },
    {
        "name": "waisted_ellipsoid",
        "description": "closed prolate ellipsoid with a waist pinched by an axial bump; mean convex, not Wulff",
        "norm": {"family": "ellipsoidal", "params": {"A": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 4.0]]}},
        "wedge": RIGHT_3D,
        "patch": {
            "radius": 1.0,
            "center": [-3.0, -3.0, 0.0],
            "bump": {"profile": "waist", "amplitude": 0.15, "along": "anisotropic", "axis": [0.0, 0.0, 1.0]},
        },
        "suites": CLOSED_SUITES,
        "levels": [1, 2, 3],
        "hk_expect": "strict",
        "expect": WULFF_REJECTED,
    },
    {
        "name": "quarter_circle",
        "description": "unit circle about the apex of a right-angle sector; free boundary",
        "norm": ISO_2D,
        "wedge": RIGHT_2D,
        "patch": {"radius": 1.0, "center": [0.0, 0.0]},
        "hk_expect": "equality",
    },
    {
        "name": "ellipse_arc_capillary",
        "description": "capillary arc of an ellipsoidal Wulff curve in a 110 degree sector",
        "norm": ELLIP_2D,
        "wedge": _opening(110, 2),
        "omega0": [-0.2, 0.3],
        "patch": {"radius": 1.2},
        "hk_expect": "equality",
    },
    {
        "name": "blend_arc",
        "description": "free-boundary Wulff arc of the planar blend norm about the apex",
        "norm": BLEND_2D,
        "wedge": _opening(110, 2),
        "patch": {"radius": 1.2, "center": [0.0, 0.0]},
        "hk_expect": "equality",
    },
    {
        "name": "perturbed_arc",
        "description": "capillary ellipsoidal arc with a boundary-flat bump",
        "norm": ELLIP_2D,
        "wedge": _opening(110, 2),
        "omega0": [-0.2, 0.3],
        "patch": {"radius": 1.2, "bump": _edge_bump(0.05)},
        "hk_expect": "strict",
        "expect": {"wulff_fit": "Fail", "alexandrov_r1": "Fail"},
    },
    {
        "name": "perturbed_blend_arc",
        "description": "free blend arc with a boundary-flat bump",
        "norm": BLEND_2D,
        "wedge": _opening(110, 2),
        "patch": {"radius": 1.2, "center": [0.0, 0.0], "bump": _edge_bump(0.05)},
        "hk_expect": "strict",
        "expect": {"wulff_fit": "Fail", "alexandrov_r1": "Fail"},
    },
    {
        "name": "shifted_arc",
        "description": "free-boundary arc of a shifted planar norm: a translated circle",
        "norm": {"family": "shifted", "dim": 2, "params": {"k0": [0.2, 0.1]}},
        "wedge": RIGHT_2D,
        "patch": {"radius": 1.0, "center": [0.0, 0.0]},
        "hk_expect": "equality",
    },
]


def catalog(suite=None):
    """Deep copies of the built-in scenarios, optionally only those running ``suite``."""
    out = []
    for entry in _CATALOG:
        entry = copy.deepcopy(entry)
        entry.setdefault("suites", list(ALL_SUITES))
        if suite is None or suite in entry["suites"]:
            out.append(entry)
    return out


def fixture(name):
    for entry in catalog():
        if entry["name"] == name:
            return entry
    raise KeyError(f"no built-in scenario named {name!r}")


def names():
    return [entry["name"] for entry in _CATALOG]
