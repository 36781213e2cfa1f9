"""On-disk store format (.ngf) and JSON-lines entity interchange.

File layout, all integers little-endian::

    b"NGF\\0"  u32 format_version
    3 x section:  4-byte tag  u64 length  payload  u32 crc32c(payload)
        MANI  canonical JSON: format version, schemas, registries, counts, replication
        BODY  canonical JSON: vertices, edges, virtual nodes, cells, lattices
        TENS  tensor payloads: per tensor u64 element count + float64 values

Canonical JSON means sorted keys, no whitespace and Python's shortest
round-trip float repr, so saving the same store twice gives identical bytes.
"""

from __future__ import annotations

import io
import json
import os
import struct
from typing import Any, Dict, List, Optional, Tuple

import crc32c
import numpy as np

from .calibration import CalibrationResult
from .equality import EqualityType, KernelDescriptor, ObserverScope
from .flow import TopologyKind
from .graph import EmbeddingProvenance, ReplicationMeta, Store
from .hypergram import CellKind, HypergramCell, Lattice
from .ids import EntityId
from .metrics import MetricDescriptor
from .schema import Side, TypeSchema, ValueDictionary, ValueKind
from .superposition import DirectionAmplitudes, SuperpositionDescriptor, VirtualNode
from .values import Histogram, Tensor

MAGIC = b"NGF\x00"
FORMAT_VERSION = 1
SECTION_TAGS = (b"MANI", b"BODY", b"TENS")
INLINE_TENSOR_LIMIT = 1024


class StoreFormatError(ValueError):
    pass


class VersionMismatch(StoreFormatError):
    pass


class ChecksumError(StoreFormatError):
    pass


class TruncatedFile(StoreFormatError):
    pass


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False).encode("utf-8")


# tensor pool ---------------------------------------------------------------

class TensorPool:
    """Collects float64 arrays for the binary section; references are indices."""

    def __init__(self, arrays: Optional[List[np.ndarray]] = None):
        self.arrays: List[np.ndarray] = arrays or []

    def put(self, arr: np.ndarray) -> int:
        self.arrays.append(np.ascontiguousarray(arr, dtype="<f8").ravel())
        return len(self.arrays) - 1

    def get(self, ref: int) -> np.ndarray:
        try:
            return self.arrays[ref]
        except (IndexError, TypeError):
            raise StoreFormatError(f"dangling tensor reference {ref!r}") from None

    def to_bytes(self) -> bytes:
        out = io.BytesIO()
        for a in self.arrays:
            out.write(struct.pack("<Q", a.size))
            out.write(a.astype("<f8").tobytes())
        return out.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "TensorPool":
        arrays, pos = [], 0
        while pos < len(data):
            if pos + 8 > len(data):
                raise TruncatedFile("tensor section ends inside a length prefix")
            (n,) = struct.unpack_from("<Q", data, pos)
            pos += 8
            if pos + 8 * n > len(data):
                raise TruncatedFile("tensor section ends inside a payload")
            arrays.append(np.frombuffer(data, dtype="<f8", count=n, offset=pos).astype(np.float64))
            pos += 8 * n
        return cls(arrays)


# value codec -----------------------------------------------------------------

def encode_value(value: Any, pool: Optional[TensorPool], inline_limit: int = 0) -> Any:
    """JSON form of an attribute value.

    Tensors go to ``pool`` unless they have fewer than ``inline_limit`` entries.
    """
    if isinstance(value, Tensor):
        out = {"shape": list(value.shape),
               "axes": [a.value for a in value.axes] if value.axes is not None else None}
        if pool is None or value.data.size < inline_limit:
            out["$tensor"] = value.data.ravel().tolist()
        else:
            out["$tensor_ref"] = pool.put(value.data)
        return out
    if isinstance(value, Histogram):
        return {"$hist": value.counts.tolist(), "normalized": value.normalized}
    if isinstance(value, dict):
        return {"$map": {k: encode_value(v, pool, inline_limit) for k, v in value.items()}}
    if isinstance(value, bool):
        raise StoreFormatError("booleans are not attribute values")
    if isinstance(value, (int, float, str)):
        return value
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    raise StoreFormatError(f"cannot encode {type(value).__name__}")


def decode_value(obj: Any, pool: Optional[TensorPool]) -> Any:
    if isinstance(obj, dict):
        if "$tensor" in obj or "$tensor_ref" in obj:
            if "$tensor" in obj:
                data = obj["$tensor"]
            elif pool is None:
                raise StoreFormatError("tensor reference without a tensor section")
            else:
                data = pool.get(obj["$tensor_ref"])
            return Tensor(data, shape=obj.get("shape"), axes=obj.get("axes"))
        if "$hist" in obj:
            return Histogram(obj["$hist"], normalized=obj.get("normalized", False))
        if "$map" in obj:
            return {k: decode_value(v, pool) for k, v in obj["$map"].items()}
        raise StoreFormatError(f"unknown value encoding {sorted(obj)}")
    return obj


def encode_array(arr, pool: TensorPool) -> Any:
    if isinstance(arr, np.ndarray):
        return {"$tensor_ref": pool.put(arr), "shape": list(arr.shape)}
    return arr


def decode_array(obj, pool: TensorPool):
    if isinstance(obj, dict):
        return pool.get(obj["$tensor_ref"]).reshape(obj["shape"]).copy()
    return obj


# schema / registry codecs -------------------------------------------------------

def encode_dictionary(d: ValueDictionary) -> dict:
    out = {"kind": d.kind.value, "units": d.units}
    if d.kind is ValueKind.SCALAR:
        out["range"] = list(d.range) if d.range is not None else None
        out["quantization"] = d.quantization
    elif d.kind is ValueKind.ENUM:
        out["tokens"] = sorted(d.tokens)
    elif d.kind is ValueKind.HISTOGRAM:
        out["bins"] = d.bins
    elif d.kind is ValueKind.TENSOR:
        out["shape"] = list(d.shape)
        out["axes"] = [a.value for a in d.axes]
    else:
        out["fields"] = {k: encode_dictionary(v) for k, v in d.fields}
    return out


def decode_dictionary(obj: dict) -> ValueDictionary:
    kind = ValueKind(obj["kind"])
    units = obj.get("units")
    if kind is ValueKind.SCALAR:
        return ValueDictionary.scalar(obj.get("range"), obj.get("quantization"), units)
    if kind is ValueKind.ENUM:
        return ValueDictionary.enum(obj["tokens"], units)
    if kind is ValueKind.STRING:
        return ValueDictionary.string(units)
    if kind is ValueKind.HISTOGRAM:
        return ValueDictionary.histogram(obj["bins"], units)
    if kind is ValueKind.TENSOR:
        return ValueDictionary.tensor(obj["shape"], obj.get("axes", ()), units)
    return ValueDictionary.composite(
        {k: decode_dictionary(v) for k, v in obj["fields"].items()}, units)


def encode_schema(schema: TypeSchema) -> dict:
    return {k: encode_dictionary(v) for k, v in schema.keys.items()}


def decode_schema(name: str, obj: dict) -> TypeSchema:
    return TypeSchema(name, {k: decode_dictionary(v) for k, v in obj.items()})


def encode_kernel(k: KernelDescriptor) -> dict:
    return {
        "sigma": list(k.sigma) if isinstance(k.sigma, tuple) else k.sigma,
        "equality_type": k.equality_type.value,
        "observer": None if k.observer is None else {
            "observer_id": k.observer.observer_id,
            "field_mask": sorted(k.observer.field_mask),
        },
    }


def decode_kernel(obj: dict) -> KernelDescriptor:
    sigma = obj["sigma"]
    obs = obj.get("observer")
    return KernelDescriptor(
        tuple(sigma) if isinstance(sigma, list) else sigma,
        EqualityType(obj["equality_type"]),
        None if obs is None else ObserverScope(obs["observer_id"], frozenset(obs["field_mask"])),
    )


def _prov(p: Dict[str, EmbeddingProvenance]) -> dict:
    return {k: {"map_id": v.map_id, "version": v.version} for k, v in p.items()}


def _unprov(obj: dict) -> Dict[str, EmbeddingProvenance]:
    return {k: EmbeddingProvenance(v["map_id"], v.get("version", "")) for k, v in obj.items()}


def _point_out(p):
    return list(p) if isinstance(p, tuple) else p


def _point_in(p):
    return tuple(p) if isinstance(p, list) else p


# whole-store encoding ---------------------------------------------------------------

def _encode_store(store: Store) -> Tuple[dict, dict, TensorPool]:
    pool = TensorPool()
    vertices = [{
        "id": v.id.hex, "type": v.type_name,
        "attributes": {k: encode_value(x, pool) for k, x in v.attributes.items()},
        "provenance": _prov(v.provenance),
    } for v in store.iter_vertices()]
    virtual = [{
        "id": vid.hex,
        "constituents": [[c.hex, w] for c, w in store.virtual_nodes[vid].constituents],
    } for vid in sorted(store.virtual_nodes)]
    edges = []
    for e in store.iter_edges():
        sp = None
        if e.superposition is not None:
            d = e.superposition.direction
            sp = [d.forward, d.backward, d.bidirectional]
        edges.append({
            "id": e.id.hex, "type": e.type_name,
            "source": e.source.hex, "target": e.target.hex,
            "attributes": {k: encode_value(x, pool) for k, x in e.attributes.items()},
            "superposition": sp,
            "provenance": _prov(e.provenance),
        })
    cells = []
    for cid in sorted(store.cells):
        c = store.cells[cid]
        cells.append({
            "id": cid.hex, "kind": c.kind.value, "shape": list(c.shape),
            "encoding": c.encoding, "version": c.version,
            "reconciled": encode_array(c.reconciled, pool),
            "residues": [encode_array(r, pool) for r in c.residues],
            "pending": list(c.pending),
        })
    lattices = []
    for name in sorted(store.lattices):
        lat = store.lattices[name]
        t = lat.topology
        lattices.append({
            "name": name,
            "topology": {"kind": t.kind, "extents": list(t.extents), "size": t.size},
            "cells": [[_point_out(p), cid.hex] for p, cid in lat.cells.items()],
            "links": [[_point_out(a), _point_out(b)] for a, b in lat.links],
            "metric_dimensionality": lat.metric_dimensionality,
            "notes": dict(lat.notes),
        })
    body = {"vertices": vertices, "edges": edges, "virtual_nodes": virtual,
            "cells": cells, "lattices": lattices}
    manifest = {
        "format_version": FORMAT_VERSION,
        "metric_registry": list(store.metric_registry),
        "schemas": {
            "vertex": {n: encode_schema(s) for n, s in store.vertex_schemas.items()},
            "edge": {n: encode_schema(s) for n, s in store.edge_schemas.items()},
        },
        "metrics": {n: {"metric_id": m.metric_id, "field": m.field, "params": dict(m.params)}
                    for n, m in store.metrics.items()},
        "kernels": {n: encode_kernel(k) for n, k in store.kernels.items()},
        "calibrations": {n: c.to_dict() for n, c in store.calibrations.items()},
        "replication": {"replicas": store.replication.replicas,
                        "durability": store.replication.durability},
        "counts": {"vertices": len(vertices), "edges": len(edges),
                   "virtual_nodes": len(virtual), "cells": len(cells),
                   "lattices": len(lattices), "tensors": len(pool.arrays)},
    }
    return manifest, body, pool


def _decode_store(manifest: dict, body: dict, pool: TensorPool) -> Store:
    if manifest.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(f"unsupported format version {manifest.get('format_version')!r}")
    counts = manifest["counts"]
    for key in ("vertices", "edges", "virtual_nodes", "cells", "lattices"):
        if counts.get(key) != len(body.get(key, ())):
            raise StoreFormatError(f"manifest count for {key} does not match body")
    if counts.get("tensors") != len(pool.arrays):
        raise StoreFormatError("manifest tensor count does not match tensor section")

    store = Store(metric_registry=manifest["metric_registry"])
    for side in ("vertex", "edge"):
        for name, keys in manifest["schemas"][side].items():
            store.register_schema(decode_schema(name, keys), Side(side))
    store.metrics = {n: MetricDescriptor(m["metric_id"], m["field"], m.get("params", {}))
                     for n, m in manifest["metrics"].items()}
    store.kernels = {n: decode_kernel(k) for n, k in manifest["kernels"].items()}
    store.calibrations = {n: CalibrationResult.from_dict(c)
                          for n, c in manifest["calibrations"].items()}
    rep = manifest.get("replication", {})
    store.replication = ReplicationMeta(rep.get("replicas", 1), rep.get("durability", ""))

    for v in body["vertices"]:
        store.add_vertex(v["type"], {k: decode_value(x, pool) for k, x in v["attributes"].items()},
                         _unprov(v["provenance"]), vertex_id=EntityId.parse(v["id"]))
    for vn in body["virtual_nodes"]:
        node = VirtualNode(EntityId.parse(vn["id"]),
                           tuple((EntityId.parse(c), w) for c, w in vn["constituents"]))
        for c, _ in node.constituents:
            if c not in store.vertices:
                raise StoreFormatError(f"virtual node constituent {c} missing")
        store.virtual_nodes[node.id] = node
        store._incident[node.id] = set()
    for e in body["edges"]:
        sp = e.get("superposition")
        store.add_edge(
            e["type"], EntityId.parse(e["source"]), EntityId.parse(e["target"]),
            {k: decode_value(x, pool) for k, x in e["attributes"].items()},
            superposition=None if sp is None else SuperpositionDescriptor(DirectionAmplitudes(*sp)),
            provenance=_unprov(e["provenance"]), edge_id=EntityId.parse(e["id"]))
    for c in body["cells"]:
        cell = HypergramCell(EntityId.parse(c["id"]), CellKind(c["kind"]), c["shape"],
                             len(c["residues"]), c["encoding"])
        cell.version = c["version"]
        cell.reconciled = decode_array(c["reconciled"], pool)
        cell.residues = [decode_array(r, pool) for r in c["residues"]]
        cell.pending = list(c["pending"])
        store.cells[cell.cell_id] = cell
    for lat in body["lattices"]:
        t = lat["topology"]
        lattice = Lattice(
            lat["name"], TopologyKind(t["kind"], tuple(t["extents"]), t["size"]),
            cells={_point_in(p): EntityId.parse(cid) for p, cid in lat["cells"]},
            links=[(_point_in(a), _point_in(b)) for a, b in lat["links"]],
            metric_dimensionality=lat["metric_dimensionality"],
            notes=dict(lat["notes"]))
        for cid in lattice.cells.values():
            if cid not in store.cells:
                raise StoreFormatError(f"lattice {lattice.name!r} references missing cell {cid}")
        store.lattices[lattice.name] = lattice
    return store


# container ---------------------------------------------------------------------------

def dumps(store: Store) -> bytes:
    manifest, body, pool = _encode_store(store)
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", FORMAT_VERSION))
    for tag, payload in zip(SECTION_TAGS, (canonical_json(manifest), canonical_json(body),
                                           pool.to_bytes())):
        out.write(tag)
        out.write(struct.pack("<Q", len(payload)))
        out.write(payload)
        out.write(struct.pack("<I", crc32c.crc32c(payload)))
    return out.getvalue()


def loads(data: bytes) -> Store:
    if len(data) < 8:
        raise TruncatedFile("file shorter than its header")
    if data[:4] != MAGIC:
        raise StoreFormatError("not a store file (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"format version {version}, expected {FORMAT_VERSION}")
    pos = 8
    sections = []
    for tag in SECTION_TAGS:
        if pos + 12 > len(data):
            raise TruncatedFile(f"file ends before section {tag.decode()}")
        if data[pos:pos + 4] != tag:
            raise StoreFormatError(f"expected section {tag.decode()} at offset {pos}")
        (length,) = struct.unpack_from("<Q", data, pos + 4)
        pos += 12
        if pos + length + 4 > len(data):
            raise TruncatedFile(f"section {tag.decode()} is truncated")
        payload = data[pos:pos + length]
        (crc,) = struct.unpack_from("<I", data, pos + length)
        if crc32c.crc32c(payload) != crc:
            raise ChecksumError(f"checksum mismatch in section {tag.decode()}")
        sections.append(payload)
        pos += length + 4
    if pos != len(data):
        raise StoreFormatError("trailing bytes after the last section")
    try:
        manifest = json.loads(sections[0])
        body = json.loads(sections[1])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StoreFormatError(f"malformed JSON section: {exc}") from None
    return _decode_store(manifest, body, TensorPool.from_bytes(sections[2]))


def save(store: Store, path: str | os.PathLike) -> None:
    data = dumps(store)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def load(path: str | os.PathLike) -> Store:
    with open(path, "rb") as fh:
        return loads(fh.read())


# JSON-lines interchange ------------------------------------------------------------------

def _sidecar(path) -> str:
    return f"{os.fspath(path)}.bin"


def export_jsonl(store: Store, path: str | os.PathLike) -> int:
    """Write schemas, vertices, virtual nodes and edges one per line.

    Tensors with at least 1024 entries go to ``<path>.bin`` (same framing as the
    store's tensor section) and are referenced by index. Returns the line count.
    """
    pool = TensorPool()
    lines = []
    for side, registry in (("vertex", store.vertex_schemas), ("edge", store.edge_schemas)):
        for name in sorted(registry):
            lines.append({"entity": "schema", "side": side, "type": name,
                          "keys": encode_schema(registry[name])})
    for v in store.iter_vertices():
        lines.append({"entity": "vertex", "id": v.id.hex, "type": v.type_name,
                      "attributes": {k: encode_value(x, pool, INLINE_TENSOR_LIMIT)
                                     for k, x in v.attributes.items()},
                      "provenance": _prov(v.provenance)})
    for vid in sorted(store.virtual_nodes):
        lines.append({"entity": "virtual_node", "id": vid.hex,
                      "constituents": [[c.hex, w] for c, w in
                                       store.virtual_nodes[vid].constituents]})
    for e in store.iter_edges():
        d = e.superposition.direction if e.superposition else None
        lines.append({"entity": "edge", "id": e.id.hex, "type": e.type_name,
                      "source": e.source.hex, "target": e.target.hex,
                      "attributes": {k: encode_value(x, pool, INLINE_TENSOR_LIMIT)
                                     for k, x in e.attributes.items()},
                      "superposition": None if d is None else
                      [d.forward, d.backward, d.bidirectional],
                      "provenance": _prov(e.provenance)})
    with open(path, "wb") as fh:
        for obj in lines:
            fh.write(canonical_json(obj) + b"\n")
    side = _sidecar(path)
    if pool.arrays:
        with open(side, "wb") as fh:
            fh.write(pool.to_bytes())
    elif os.path.exists(side):
        os.remove(side)
    return len(lines)


def import_jsonl(store: Store, path: str | os.PathLike) -> Dict[str, EntityId]:
    """Ingest a JSON-lines entity file; returns file id -> store id.

    Ids from the file are kept when free; otherwise fresh ids are drawn and
    edge endpoints are remapped. Schemas already registered are skipped if
    identical and rejected if different.
    """
    side = _sidecar(path)
    pool = None
    if os.path.exists(side):
        with open(side, "rb") as fh:
            pool = TensorPool.from_bytes(fh.read())
    mapping: Dict[str, EntityId] = {}

    def own_id(text: Optional[str]) -> Optional[EntityId]:
        if not text:
            return None
        eid = EntityId.parse(text)
        return None if store._taken(eid) else eid

    def ref(text: str) -> EntityId:
        return mapping[text] if text in mapping else EntityId.parse(text)

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise StoreFormatError(f"line {lineno}: {exc}") from None
            kind = obj.get("entity")
            if kind == "schema":
                schema = decode_schema(obj["type"], obj["keys"])
                registry = store.vertex_schemas if obj["side"] == "vertex" else store.edge_schemas
                existing = registry.get(schema.type_name)
                if existing is None:
                    store.register_schema(schema, Side(obj["side"]))
                elif existing.keys != schema.keys:
                    raise StoreFormatError(
                        f"line {lineno}: schema {schema.type_name!r} conflicts with the store")
            elif kind == "vertex":
                attrs = {k: decode_value(x, pool) for k, x in obj.get("attributes", {}).items()}
                vid = store.add_vertex(obj["type"], attrs, _unprov(obj.get("provenance", {})),
                                       vertex_id=own_id(obj.get("id")))
                if obj.get("id"):
                    mapping[obj["id"]] = vid
            elif kind == "virtual_node":
                vn = store.add_virtual_node([(ref(c), w) for c, w in obj["constituents"]],
                                            node_id=own_id(obj.get("id")))
                if obj.get("id"):
                    mapping[obj["id"]] = vn.id
            elif kind == "edge":
                attrs = {k: decode_value(x, pool) for k, x in obj.get("attributes", {}).items()}
                sp = obj.get("superposition")
                eid = store.add_edge(
                    obj["type"], ref(obj["source"]), ref(obj["target"]), attrs,
                    superposition=None if sp is None else
                    SuperpositionDescriptor(DirectionAmplitudes(*sp)),
                    provenance=_unprov(obj.get("provenance", {})),
                    edge_id=own_id(obj.get("id")))
                if obj.get("id"):
                    mapping[obj["id"]] = eid
            else:
                raise StoreFormatError(f"line {lineno}: unknown entity kind {kind!r}")
    return mapping
