"""Line-oriented text format for graphs.

One node per line::

    <id> = <Kind>(<args>) inputs=[<ids>] domain=<User|Item|Cross|none> \
        layout=[(dom,width),...] data=[...]

``domain`` appears on Input lines, ``layout`` on Concat lines and ``data``
on Weight lines (flat row-major float64 values, full precision). ``#``
starts a comment. Files are UTF-8. ``parse(serialize(g))`` reproduces the
graph structurally, including weight payloads.
"""

from __future__ import annotations

import re

import numpy as np

from .errors import GraphParseError
from .graph import FeatureDomain, FeatureLayout, Graph, Node, build_graph

_ID = r"[A-Za-z_][A-Za-z0-9_.]*"
_LINE_RE = re.compile(
    rf"^(?P<id>{_ID})\s*=\s*(?P<kind>[A-Za-z]+)\((?P<args>.*?)\)"
    rf"\s*inputs=\[(?P<inputs>[^\]]*)\]"
    rf"(?:\s+domain=(?P<domain>\w+))?"
    rf"(?:\s+layout=\[(?P<layout>[^\]]*)\])?"
    rf"(?:\s+data=\[(?P<data>[^\]]*)\])?\s*$"
)
_SEG_RE = re.compile(r"\((User|Item|Cross)\s*,\s*(\d+)\)")


def _fmt_args(node: Node) -> str:
    k = node.kind
    if k == "Input":
        parts = [f"width={node.width}"]
        if node.seq_len is not None:
            parts.append(f"seq={node.seq_len}")
        parts.append(f"batched={'true' if node.batched else 'false'}")
        return ", ".join(parts)
    if k == "Weight":
        return f"rows={node.rows}, cols={node.cols}"
    if k == "MatMul":
        return f"chunk={node.chunk}" if node.chunk is not None else ""
    if k == "MatMulMaRI":
        return "split=({},{},{})".format(*node.split)
    if k == "Reshape":
        return "dims=({})".format(",".join(str(d) for d in node.dims))
    if k == "CrossAttention":
        return f"d_q={node.d_q}, d_kv={node.d_kv}, d_hidden={node.d_hidden}"
    return ""


def serialize(g: Graph) -> str:
    """Render a graph in the line format, nodes in declaration order."""
    lines = []
    for node in g.nodes.values():
        line = f"{node.id} = {node.kind}({_fmt_args(node)})"
        line += " inputs=[{}]".format(", ".join(node.inputs))
        if node.kind == "Input":
            line += f" domain={node.domain.value}"
        if node.layout is not None:
            segs = ",".join(f"({d.value},{w})" for d, w in node.layout.segments)
            line += f" layout=[{segs}]"
        if node.data is not None:
            line += " data=[{}]".format(
                ", ".join(repr(float(v)) for v in node.data.ravel())
            )
        lines.append(line)
    return "\n".join(lines) + "\n"


def _parse_kv(args: str, line_no: int) -> dict[str, str]:
    out: dict[str, str] = {}
    depth = 0
    current = ""
    pieces = []
    for ch in args:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            pieces.append(current)
            current = ""
        else:
            current += ch
    if current.strip():
        pieces.append(current)
    for piece in pieces:
        if "=" not in piece:
            raise GraphParseError(line_no, f"bad argument {piece.strip()!r}")
        key, _, value = piece.partition("=")
        out[key.strip()] = value.strip()
    return out


def _int(kv: dict, key: str, line_no: int) -> int:
    try:
        return int(kv[key])
    except (KeyError, ValueError):
        raise GraphParseError(line_no, f"missing or bad integer argument {key!r}")


def _parse_node(line_no: int, m: re.Match) -> Node:
    node_id = m["id"]
    kind = m["kind"]
    inputs = tuple(s.strip() for s in m["inputs"].split(",") if s.strip())
    kv = _parse_kv(m["args"], line_no)
    if kind != "Input" and m["domain"] not in (None, "none"):
        raise GraphParseError(line_no, f"{kind} lines carry no domain")

    layout = None
    if m["layout"] is not None:
        segs = [
            (FeatureDomain(sm.group(1)), int(sm.group(2)))
            for sm in _SEG_RE.finditer(m["layout"])
        ]
        if not segs:
            raise GraphParseError(line_no, "empty or malformed layout")
        layout = FeatureLayout(tuple(segs))

    if kind == "Input":
        if m["domain"] is None or m["domain"] == "none":
            raise GraphParseError(line_no, "Input line needs domain=")
        try:
            domain = FeatureDomain(m["domain"])
        except ValueError:
            raise GraphParseError(line_no, f"unknown domain {m['domain']!r}")
        return Node(
            node_id,
            "Input",
            inputs,
            domain=domain,
            width=_int(kv, "width", line_no),
            seq_len=_int(kv, "seq", line_no) if "seq" in kv else None,
            batched=kv.get("batched", "true") == "true",
        )
    if kind == "Weight":
        rows = _int(kv, "rows", line_no)
        cols = _int(kv, "cols", line_no)
        if m["data"] is None:
            raise GraphParseError(line_no, "Weight line needs data=[...]")
        try:
            flat = np.array(
                [float(v) for v in m["data"].split(",") if v.strip()],
                dtype=np.float64,
            )
        except ValueError:
            raise GraphParseError(line_no, "bad float in weight data")
        if flat.size != rows * cols:
            raise GraphParseError(
                line_no, f"weight data has {flat.size} values, expected {rows * cols}"
            )
        data = flat.reshape(rows, cols)
        data.flags.writeable = False
        return Node(node_id, "Weight", inputs, rows=rows, cols=cols, data=data)
    if kind == "MatMul":
        chunk = _int(kv, "chunk", line_no) if "chunk" in kv else None
        return Node(node_id, "MatMul", inputs, chunk=chunk)
    if kind == "MatMulMaRI":
        raw = kv.get("split", "")
        nums = re.findall(r"-?\d+", raw)
        if len(nums) != 3:
            raise GraphParseError(line_no, f"bad split {raw!r}")
        return Node(node_id, "MatMulMaRI", inputs, split=tuple(int(v) for v in nums))
    if kind == "Concat":
        if layout is None:
            raise GraphParseError(line_no, "Concat line needs layout=[...]")
        return Node(node_id, "Concat", inputs, layout=layout)
    if kind == "Reshape":
        nums = re.findall(r"\d+", kv.get("dims", ""))
        if not nums:
            raise GraphParseError(line_no, "Reshape line needs dims=(...)")
        return Node(node_id, "Reshape", inputs, dims=tuple(int(v) for v in nums))
    if kind == "CrossAttention":
        return Node(
            node_id,
            "CrossAttention",
            inputs,
            d_q=_int(kv, "d_q", line_no),
            d_kv=_int(kv, "d_kv", line_no),
            d_hidden=_int(kv, "d_hidden", line_no),
        )
    if kind in ("Tile", "Add", "Relu", "Softmax", "Identity", "Output"):
        return Node(node_id, kind, inputs)
    raise GraphParseError(line_no, f"unknown node kind {kind!r}")


def parse(text: str) -> Graph:
    """Parse the line format back into a validated graph."""
    nodes = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE_RE.match(line)
        if m is None:
            raise GraphParseError(line_no, f"unparseable node line: {raw.strip()!r}")
        nodes.append(_parse_node(line_no, m))
    if not nodes:
        raise GraphParseError(1, "no nodes in graph text")
    try:
        return build_graph(nodes)
    except Exception as exc:
        raise GraphParseError(0, f"graph validation failed: {exc}") from exc
