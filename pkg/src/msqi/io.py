"""File formats: PGM images in and out, SVG log-log plots, grid CSVs."""
from __future__ import annotations

import json
import math
from xml.sax.saxutils import escape

import numpy as np

from .errors import MsqiError


class PgmFormatError(MsqiError):
    """Malformed PGM input; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"PGM parse error at byte {offset}: {message}")


# -- PGM --------------------------------------------------------------------------

def _header_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens after the magic number."""
    pos, tokens = 2, []
    n = len(data)
    while len(tokens) < count:
        while pos < n and (data[pos:pos + 1].isspace() or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < n and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise PgmFormatError("unexpected end of header", start)
        tok = data[start:pos]
        if not tok.isdigit():
            raise PgmFormatError(f"expected an integer, found {tok[:16]!r}", start)
        tokens.append((int(tok), start))
    return tokens, pos


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Pixel array ``(H, W)`` (row 0 at the top) and maxval of a P2 or P5 file."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] not in (b"P2", b"P5"):
        raise PgmFormatError(f"bad magic number {data[:2]!r}; expected P2 or P5", 0)
    tokens, pos = _header_tokens(data, 3)
    (w, w_at), (h, h_at), (maxval, m_at) = tokens
    if w < 1:
        raise PgmFormatError("width must be positive", w_at)
    if h < 1:
        raise PgmFormatError("height must be positive", h_at)
    if not (1 <= maxval <= 65535):
        raise PgmFormatError(f"maxval {maxval} outside 1..65535", m_at)
    if data[:2] == b"P5":
        if pos >= len(data) or not data[pos:pos + 1].isspace():
            raise PgmFormatError("missing whitespace after maxval", pos)
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = w * h * dtype.itemsize
        if len(data) - pos < need:
            raise PgmFormatError(f"raster truncated: need {need} bytes, have {len(data) - pos}",
                                 len(data))
        pix = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).astype(np.int64)
    else:
        body = data[pos:]
        parts = body.split()
        if len(parts) < w * h:
            raise PgmFormatError(f"raster truncated: need {w * h} values, have {len(parts)}",
                                 len(data))
        try:
            pix = np.array([int(p) for p in parts[:w * h]], dtype=np.int64)
        except ValueError:
            bad = next(p for p in parts if not p.isdigit())
            raise PgmFormatError(f"non-integer pixel {bad[:16]!r}", pos + body.find(bad)) from None
    if pix.max(initial=0) > maxval:
        raise PgmFormatError(f"pixel value exceeds maxval {maxval}", pos)
    return pix.reshape(h, w), maxval


def write_pgm(path, values, maxval: int = 255) -> None:
    """Write intensities in ``[0, 1]`` as a binary PGM (row 0 at the top)."""
    v = np.clip(np.nan_to_num(np.asarray(values, dtype=float)), 0.0, 1.0)
    q = np.rint(v * maxval).astype(">u2" if maxval > 255 else "u1")
    h, w = q.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode())
        fh.write(q.tobytes())


class PgmField:
    """Bilinear oracle over ``[-1, 1]^2`` built from a PGM image.

    Corner pixels sit exactly on the corners of the square; the top image
    row maps to ``y = 1``.  Points outside the square are clamped to it.
    """

    def __init__(self, pixels: np.ndarray, maxval: int):
        self.image = np.asarray(pixels, dtype=float) / maxval
        self.height, self.width = self.image.shape

    def __call__(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float).reshape(-1, 2)
        u = np.clip((p[:, 0] + 1.0) / 2.0, 0.0, 1.0) * (self.width - 1)
        v = np.clip((1.0 - p[:, 1]) / 2.0, 0.0, 1.0) * (self.height - 1)
        c0 = np.minimum(np.floor(u).astype(int), max(self.width - 2, 0))
        r0 = np.minimum(np.floor(v).astype(int), max(self.height - 2, 0))
        c1 = np.minimum(c0 + 1, self.width - 1)
        r1 = np.minimum(r0 + 1, self.height - 1)
        fu, fv = u - c0, v - r0
        img = self.image
        top = (1 - fu) * img[r0, c0] + fu * img[r0, c1]
        bot = (1 - fu) * img[r1, c0] + fu * img[r1, c1]
        return (1 - fv) * top + fv * bot


def load_pgm(path) -> PgmField:
    return PgmField(*read_pgm(path))


# -- CSV ----------------------------------------------------------------------------

def write_grid_csv(path, points, values, column: str) -> None:
    values = np.asarray(values, dtype=float).ravel()
    with open(path, "w") as fh:
        fh.write(f"x,y,{column}\n")
        for (x, y), v in zip(points, values):
            fh.write(f"{x:.17g},{y:.17g},{v:.17g}\n")


# -- SVG -----------------------------------------------------------------------------

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


class LogLogAxes:
    """Affine map between ``(log10 x, log10 y)`` and SVG pixel coordinates."""

    def __init__(self, lx0, lx1, ly0, ly1, left=70.0, top=30.0, width=460.0, height=320.0):
        self.lx0, self.lx1, self.ly0, self.ly1 = lx0, lx1, ly0, ly1
        self.left, self.top, self.width, self.height = left, top, width, height

    def to_px(self, x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        px = self.left + (np.log10(x) - self.lx0) / (self.lx1 - self.lx0) * self.width
        py = self.top + (1.0 - (np.log10(y) - self.ly0) / (self.ly1 - self.ly0)) * self.height
        return px, py

    def from_px(self, px, py):
        px, py = np.asarray(px, dtype=float), np.asarray(py, dtype=float)
        lx = self.lx0 + (px - self.left) / self.width * (self.lx1 - self.lx0)
        ly = self.ly0 + (1.0 - (py - self.top) / self.height) * (self.ly1 - self.ly0)
        return 10.0 ** lx, 10.0 ** ly

    def as_dict(self):
        return {k: getattr(self, k) for k in ("lx0", "lx1", "ly0", "ly1", "left", "top",
                                              "width", "height")}


def _bounds(vals):
    lo, hi = math.log10(min(vals)), math.log10(max(vals))
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def loglog_svg(series: dict, xlabel: str = "h", ylabel: str = "max error",
               title: str = "") -> str:
    """SVG text with one polyline per series ``name -> (x, y)``.

    The axis transform is embedded as JSON in ``<metadata>`` so the data can be
    recovered from the pixel coordinates.
    """
    xs = [float(v) for x, _ in series.values() for v in x]
    ys = [float(v) for _, y in series.values() for v in y]
    if not xs or min(xs) <= 0 or min(ys) <= 0:
        raise ValueError("log-log plot needs positive data")
    ax = LogLogAxes(*_bounds(xs), *_bounds(ys))
    W, H = ax.left + ax.width + 140, ax.top + ax.height + 50
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}" '
           f'viewBox="0 0 {W:.0f} {H:.0f}">',
           f"<metadata>{escape(json.dumps({'axes': ax.as_dict()}, sort_keys=True))}</metadata>",
           f'<rect x="{ax.left}" y="{ax.top}" width="{ax.width}" height="{ax.height}" '
           f'fill="none" stroke="black"/>']
    if title:
        out.append(f'<text x="{ax.left + ax.width / 2}" y="18" text-anchor="middle" '
                   f'font-size="14">{escape(title)}</text>')
    out.append(f'<text x="{ax.left + ax.width / 2}" y="{H - 10}" text-anchor="middle" '
               f'font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{ax.top + ax.height / 2}" font-size="12" '
               f'transform="rotate(-90 16 {ax.top + ax.height / 2})" text-anchor="middle">'
               f"{escape(ylabel)}</text>")
    for d in range(math.ceil(ax.ly0), math.floor(ax.ly1) + 1):
        _, py = ax.to_px(10.0 ** ax.lx0, 10.0 ** d)
        out.append(f'<text x="{ax.left - 6}" y="{float(py) + 4:.2f}" text-anchor="end" '
                   f'font-size="10">1e{d}</text>')
    for i, (name, (x, y)) in enumerate(series.items()):
        px, py = ax.to_px(x, y)
        pts = " ".join(f"{a:.6f},{b:.6f}" for a, b in zip(px, py))
        color = _COLORS[i % len(_COLORS)]
        out.append(f'<polyline data-series="{escape(name)}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5" points="{pts}"/>')
        ly = ax.top + 16 * (i + 1)
        out.append(f'<text x="{ax.left + ax.width + 10}" y="{ly}" font-size="11" '
                   f'fill="{color}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def read_svg_series(text: str) -> dict:
    """Recover ``name -> (x, y)`` data from an SVG written by :func:`loglog_svg`."""
    import re
    meta = re.search(r"<metadata>(.*?)</metadata>", text, re.S).group(1)
    meta = meta.replace("&quot;", '"').replace("&lt;", "<").replace("&gt;", ">")
    ax = LogLogAxes(**json.loads(meta.replace("&amp;", "&"))["axes"])
    out = {}
    for name, pts in re.findall(r'<polyline data-series="([^"]*)"[^>]*points="([^"]*)"', text):
        arr = np.array([[float(v) for v in p.split(",")] for p in pts.split()])
        out[name] = ax.from_px(arr[:, 0], arr[:, 1])
    return out
