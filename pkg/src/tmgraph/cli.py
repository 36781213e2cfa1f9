"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

import numpy as np

from . import calibration, derive, equality, flow, storage
from .graph import ReplicationMeta, Store
from .hypergram import TopologyDescriptor
from .ids import EntityId
from .metrics import METRIC_IDS, MetricDescriptor
from .schema import Side
from .superposition import DirectionAmplitudes, SuperpositionDescriptor

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("tmgraph")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True, indent=2))


def _json_arg(text: Optional[str], what: str):
    if text is None:
        return {}
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what} is not valid JSON: {exc}") from None


def _eid(text: str) -> EntityId:
    try:
        return EntityId.parse(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _floats(text: Optional[str]):
    if text is None:
        return None
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _point(lattice, text: str):
    try:
        parts = tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"bad lattice point {text!r}") from None
    if parts not in lattice.cells and len(parts) == 1:
        return parts[0]  # sparse lattices use plain integers
    return parts


def _load(args) -> Store:
    store = storage.load(args.store)
    if args.seed is not None:
        store.rng.seed(args.seed)  # reproducible id payloads
    return store


# commands --------------------------------------------------------------------

def cmd_init(args) -> int:
    store = Store(seed=args.seed, metric_registry=args.metrics.split(",") if args.metrics else METRIC_IDS)
    store.replication = ReplicationMeta(args.replicas, args.durability)
    storage.save(store, args.path)
    return EXIT_OK


def cmd_schema_add(args) -> int:
    store = _load(args)
    keys = _json_arg(args.keys, "--keys")
    store.register_schema(storage.decode_schema(args.type, keys), Side(args.side))
    storage.save(store, args.store)
    return EXIT_OK


def cmd_vertex_add(args) -> int:
    store = _load(args)
    attrs = {k: storage.decode_value(v, None)
             for k, v in _json_arg(args.attributes, "--attributes").items()}
    vid = store.add_vertex(args.type, attrs)
    storage.save(store, args.store)
    print(vid.hex)
    return EXIT_OK


def cmd_edge_add(args) -> int:
    store = _load(args)
    attrs = {k: storage.decode_value(v, None)
             for k, v in _json_arg(args.attributes, "--attributes").items()}
    amps = _floats(args.amplitudes)
    sp = SuperpositionDescriptor(DirectionAmplitudes(*amps)) if amps else None
    eid = store.add_edge(args.type, _eid(args.source), _eid(args.target), attrs, superposition=sp)
    storage.save(store, args.store)
    print(eid.hex)
    return EXIT_OK


def cmd_import(args) -> int:
    store = _load(args)
    mapping = storage.import_jsonl(store, args.file)
    storage.save(store, args.store)
    _emit({"imported": len(mapping)})
    return EXIT_OK


def cmd_export(args) -> int:
    store = _load(args)
    _emit({"lines": storage.export_jsonl(store, args.file)})
    return EXIT_OK


def cmd_calibrate(args) -> int:
    with open(args.pairs, newline="") as fh:
        pairs = calibration.read_pairs_csv(fh)
    metric = MetricDescriptor(args.metric, args.field) if args.metric and args.field else None
    result = calibration.calibrate(pairs, args.alpha, args.beta, metric)
    text = calibration.result_to_json(result)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text + "\n")
    if args.store and args.name:
        store = _load(args)
        store.calibrations[args.name] = result
        storage.save(store, args.store)
    print(text)
    return EXIT_OK


def cmd_infer_similarity(args) -> int:
    store = _load(args)
    metric = MetricDescriptor(args.metric, args.field, _json_arg(args.params, "--params"))
    if args.calibration in store.calibrations:
        cal = store.calibrations[args.calibration]
    else:
        with open(args.calibration) as fh:
            cal = calibration.CalibrationResult.from_dict(json.load(fh))
    ids = [v.id for v in store.query(args.type)]
    out = calibration.infer_similarity_edges(store, ids, metric, cal)
    storage.save(store, args.store)
    _emit({"edges": [e.hex for e in out.edges], "skipped": len(out.skipped)})
    return EXIT_OK


def cmd_kernel_compare(args) -> int:
    store = _load(args)
    kernel = equality.KernelDescriptor(
        _floats(args.sigma) if args.sigma and "," in args.sigma else float(args.sigma or 0.0),
        equality.EqualityType(args.equality_type))
    scope = equality.ObserverScope(args.observer, frozenset(args.fields.split(",")))
    a, b = store.get_vertex(_eid(args.a)), store.get_vertex(_eid(args.b))
    j = equality.kernel_compare(a, b, kernel, args.epsilon, scope)
    out = {"verdict": j.verdict, "score": j.score, "epsilon": j.epsilon,
           "discrepancies": dict(j.discrepancies)}
    if args.annotate and j.verdict:
        out["edge"] = equality.annotate_equality_edge(store, a.id, b.id, j).hex
        storage.save(store, args.store)
    _emit(out)
    return EXIT_OK


def _scenario(args) -> flow.FlowScenario:
    with open(args.scenario) as fh:
        doc = json.load(fh)
    view = _load(args).graph_view(hex_ids=True) if args.store else None
    return flow.scenario_from_json(doc, view)


def cmd_flow_check(args) -> int:
    sc = _scenario(args)
    report = flow.check_kirchhoff(sc.view, sc.assignment, sc.sources, sc.sinks)
    _emit(report.to_dict())
    return EXIT_OK if report.passed else EXIT_DATA


def cmd_flow_maxflow(args) -> int:
    sc = _scenario(args)
    value, witness = flow.max_flow(sc.view, sc.assignment.cargo, args.source, args.sink,
                                   sc.assignment.capacities)
    _emit({"cargo": witness.cargo.cargo_id, "value": value,
           "flux": {str(e): f for e, f in witness.flux.items()}})
    return EXIT_OK


def _cell_value(v):
    return v.tolist() if isinstance(v, np.ndarray) else v


def cmd_hypergram_accumulate(args) -> int:
    store = _load(args)
    cell = store.cell(args.lattice, _point(store.lattice(args.lattice), args.point))
    shard = cell.accumulate(_json_arg(args.delta, "--delta"), args.shard)
    storage.save(store, args.store)
    _emit({"cell": cell.cell_id.hex, "shard": shard})
    return EXIT_OK


def cmd_hypergram_reconcile(args) -> int:
    store = _load(args)
    lattice = store.lattice(args.lattice)
    points = [_point(lattice, args.point)] if args.point else list(lattice.cells)
    out = {}
    for p in points:
        cell = store.cell(args.lattice, p)
        out[",".join(map(str, p)) if isinstance(p, tuple) else str(p)] = {
            "value": _cell_value(cell.reconcile()), "version": cell.version}
    storage.save(store, args.store)
    _emit(out)
    return EXIT_OK


def _descriptor(d: TopologyDescriptor) -> dict:
    return {"metric_dimensionality": d.metric_dimensionality,
            "connectional_dimensionality": d.connectional_dimensionality,
            "density": d.density, "notes": d.notes}


def cmd_topology_generate(args) -> int:
    if (args.dense is None) == (args.sparse is None):
        raise UsageError("give exactly one of --dense or --sparse")
    kind = (flow.TopologyKind.dense(*map(int, args.dense.split(",")))
            if args.dense else flow.TopologyKind.sparse(args.sparse))
    store = _load(args)
    shape = tuple(int(x) for x in args.shape.split(",")) if args.shape else ()
    store.register_lattice(args.name, kind, args.cell_kind, shape, args.shards)
    storage.save(store, args.store)
    _emit(_descriptor(store.describe_topology(args.name)))
    return EXIT_OK


def cmd_query(args) -> int:
    store = _load(args)
    where = {}
    for cond in args.where or []:
        key, sep, value = cond.partition("=")
        if not sep:
            raise UsageError(f"--where expects key=value, got {cond!r}")
        where[key] = json.loads(value) if value and value[0] in "[{0123456789-\"" else value

    def match(v):
        return all(v.attributes.get(k) == x for k, x in where.items())

    for v in store.query(args.type, match):
        print(storage.canonical_json({
            "id": v.id.hex, "type": v.type_name,
            "attributes": {k: storage.encode_value(x, None) for k, x in v.attributes.items()},
        }).decode())
    return EXIT_OK


def cmd_derive(args) -> int:
    store = _load(args)
    ids = [v.id for v in store.query(args.type)]
    if args.template == "HAPPENS_BEFORE":
        made = derive.derive_all_happens_before(store, ids, args.clock_key)
    else:
        made = derive.derive_comparison_edges(store, ids, args.template,
                                              _json_arg(args.params, "--params"))
    storage.save(store, args.store)
    _emit({"edges": [e.hex for e in made]})
    return EXIT_OK


# parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tmgraph", description=__doc__.splitlines()[0])
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--seed", type=int, help="seed for entity id generation")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def store_arg(sp):
        sp.add_argument("--store", required=True, help="path of the .ngf store")

    sp = sub.add_parser("init", help="create an empty store")
    sp.add_argument("path")
    sp.add_argument("--replicas", type=int, default=1)
    sp.add_argument("--durability", default="")
    sp.add_argument("--metrics", help="comma-separated metric registry")
    sp.set_defaults(func=cmd_init)

    schema = sub.add_parser("schema").add_subparsers(dest="action", parser_class=_Parser,
                                                     required=True)
    sp = schema.add_parser("add", help="register a vertex or edge type")
    store_arg(sp)
    sp.add_argument("--side", choices=["vertex", "edge"], default="vertex")
    sp.add_argument("--type", required=True)
    sp.add_argument("--keys", help='JSON: {"key": {"kind": "tensor", "shape": [128]}}')
    sp.set_defaults(func=cmd_schema_add)

    vertex = sub.add_parser("vertex").add_subparsers(dest="action", parser_class=_Parser,
                                                     required=True)
    sp = vertex.add_parser("add")
    store_arg(sp)
    sp.add_argument("--type", required=True)
    sp.add_argument("--attributes", help="JSON object of attribute values")
    sp.set_defaults(func=cmd_vertex_add)

    edge = sub.add_parser("edge").add_subparsers(dest="action", parser_class=_Parser,
                                                 required=True)
    sp = edge.add_parser("add")
    store_arg(sp)
    sp.add_argument("--type", required=True)
    sp.add_argument("--source", required=True)
    sp.add_argument("--target", required=True)
    sp.add_argument("--attributes")
    sp.add_argument("--amplitudes", help="forward,backward,bidirectional")
    sp.set_defaults(func=cmd_edge_add)

    sp = sub.add_parser("import", help="ingest entity JSON-lines")
    store_arg(sp)
    sp.add_argument("file")
    sp.set_defaults(func=cmd_import)

    sp = sub.add_parser("export", help="write entity JSON-lines")
    store_arg(sp)
    sp.add_argument("file")
    sp.set_defaults(func=cmd_export)

    sp = sub.add_parser("calibrate", help="threshold from a distance,label CSV")
    sp.add_argument("pairs")
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--beta", type=float, default=0.0)
    sp.add_argument("--metric", choices=METRIC_IDS)
    sp.add_argument("--field")
    sp.add_argument("--output")
    sp.add_argument("--store")
    sp.add_argument("--name", help="store the result under this name")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("infer-similarity")
    store_arg(sp)
    sp.add_argument("--metric", required=True, choices=METRIC_IDS)
    sp.add_argument("--field", required=True)
    sp.add_argument("--calibration", required=True,
                    help="name of a stored calibration or path of a result JSON")
    sp.add_argument("--type")
    sp.add_argument("--params")
    sp.set_defaults(func=cmd_infer_similarity)

    sp = sub.add_parser("kernel-compare")
    store_arg(sp)
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--fields", required=True, help="observer field mask, comma-separated")
    sp.add_argument("--sigma", default="0")
    sp.add_argument("--epsilon", type=float, default=0.0)
    sp.add_argument("--observer", default="cli")
    sp.add_argument("--equality-type", default="representation",
                    choices=[t.value for t in equality.EqualityType])
    sp.add_argument("--annotate", action="store_true", help="record an EQUALS_* edge")
    sp.set_defaults(func=cmd_kernel_compare)

    fl = sub.add_parser("flow").add_subparsers(dest="action", parser_class=_Parser,
                                               required=True)
    sp = fl.add_parser("check")
    sp.add_argument("scenario")
    sp.add_argument("--store")
    sp.set_defaults(func=cmd_flow_check)
    sp = fl.add_parser("maxflow")
    sp.add_argument("scenario")
    sp.add_argument("--store")
    sp.add_argument("--source", required=True)
    sp.add_argument("--sink", required=True)
    sp.set_defaults(func=cmd_flow_maxflow)

    hg = sub.add_parser("hypergram").add_subparsers(dest="action", parser_class=_Parser,
                                                    required=True)
    sp = hg.add_parser("accumulate")
    store_arg(sp)
    sp.add_argument("--lattice", required=True)
    sp.add_argument("--point", required=True, help="lattice point, e.g. 0,1")
    sp.add_argument("--delta", required=True, help="JSON number or array")
    sp.add_argument("--shard", type=int)
    sp.set_defaults(func=cmd_hypergram_accumulate)
    sp = hg.add_parser("reconcile")
    store_arg(sp)
    sp.add_argument("--lattice", required=True)
    sp.add_argument("--point")
    sp.set_defaults(func=cmd_hypergram_reconcile)

    tp = sub.add_parser("topology").add_subparsers(dest="action", parser_class=_Parser,
                                                   required=True)
    sp = tp.add_parser("generate")
    store_arg(sp)
    sp.add_argument("--name", required=True)
    sp.add_argument("--dense", help="extents, e.g. 3,3")
    sp.add_argument("--sparse", type=int, help="number of cells")
    sp.add_argument("--cell-kind", default="scalar", choices=["scalar", "histogram", "tensor"])
    sp.add_argument("--shape")
    sp.add_argument("--shards", type=int, default=8)
    sp.set_defaults(func=cmd_topology_generate)

    sp = sub.add_parser("query", help="list vertices by type and attribute equality")
    store_arg(sp)
    sp.add_argument("--type")
    sp.add_argument("--where", action="append", help="key=value (value parsed as JSON if it looks like it)")
    sp.set_defaults(func=cmd_query)

    sp = sub.add_parser("derive", help="materialize template edges over vertices of a type")
    store_arg(sp)
    sp.add_argument("template")
    sp.add_argument("--type")
    sp.add_argument("--params")
    sp.add_argument("--clock-key", default="clock")
    sp.set_defaults(func=cmd_derive)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"tmgraph: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"tmgraph: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (storage.StoreFormatError, OSError) as exc:
        print(f"tmgraph: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, TypeError) as exc:
        print(f"tmgraph: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
