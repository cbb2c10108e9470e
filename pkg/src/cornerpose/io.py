"""File formats: meshes (OBJ subset, JSON), intrinsics, symmetry specs, JSON lines."""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import FormatError, MeshError
from .geometry import CameraIntrinsics, MeshModel
from .symmetry import SymmetrySpec


def load_obj(path, name=None):
    """Read ``v`` and triangle ``f`` lines of an ASCII OBJ file.

    Face entries may carry ``/vt/vn`` suffixes; only the vertex index is
    used. Other line types are ignored.
    """
    verts, tris = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            try:
                if parts[0] == "v":
                    verts.append([float(x) for x in parts[1:4]])
                elif parts[0] == "f":
                    idx = [int(p.split("/")[0]) for p in parts[1:]]
                    if len(idx) != 3:
                        raise FormatError("only triangle faces are supported")
                    tris.append([i - 1 if i > 0 else len(verts) + i for i in idx])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return _make_mesh(verts, tris, name or _stem(path))


def load_mesh_json(path, name=None):
    with open(path) as fh:
        try:
            d = json.load(fh)
            verts, tris = d["vertices"], d.get("triangles", [])
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"{path}: {exc}") from exc
    return _make_mesh(verts, tris, name or d.get("name") or _stem(path))


def _make_mesh(verts, tris, name):
    if len(verts) == 0:
        raise MeshError("mesh has no vertices")
    return MeshModel(np.asarray(verts, dtype=float), np.asarray(tris, dtype=np.int64).reshape(-1, 3), name)


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


def load_mesh(path, name=None):
    if str(path).lower().endswith(".obj"):
        return load_obj(path, name)
    return load_mesh_json(path, name)


def save_mesh_json(mesh: MeshModel, path):
    with open(path, "w") as fh:
        json.dump({"name": mesh.name, "vertices": mesh.vertices.tolist(),
                   "triangles": mesh.triangles.tolist()}, fh)
        fh.write("\n")


def save_obj(mesh: MeshModel, path):
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write("v {!r} {!r} {!r}\n".format(*map(float, v)))
        for f in mesh.triangles:
            fh.write("f {} {} {}\n".format(*(int(i) + 1 for i in f)))


def intrinsics_from_dict(d):
    try:
        return CameraIntrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                                int(d["width"]), int(d["height"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad intrinsics {d!r}: {exc}") from exc


def load_intrinsics(path):
    with open(path) as fh:
        try:
            d = json.load(fh)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from exc
    return intrinsics_from_dict(d)


def save_intrinsics(K: CameraIntrinsics, path):
    with open(path, "w") as fh:
        json.dump(K.as_dict(), fh)
        fh.write("\n")


def load_symmetry(source):
    """A :class:`SymmetrySpec` from a dict or a JSON file path."""
    if isinstance(source, dict):
        return SymmetrySpec.from_dict(source)
    with open(source) as fh:
        try:
            d = json.load(fh)
        except ValueError as exc:
            raise FormatError(f"{source}: {exc}") from exc
    return SymmetrySpec.from_dict(d)


def dumps_line(obj):
    return json.dumps(obj, separators=(",", ":"))


def read_jsonl(path):
    """Parsed records of a JSON lines file, skipping blank lines."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_jsonl(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(dumps_line(rec))
            fh.write("\n")
