"""Run configuration files, CSV reports and binary PGM/PPM images."""

from __future__ import annotations

import csv
import io as _io
import math
from dataclasses import dataclass, fields, replace
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigParseError, FormatError, InvalidInputError
from .experiments import SyntheticSpec
from .solvers import (SOLVERS, BarzilaiBorwein, FixedStep, SolverConfig, TheoryGuided,
                      canonical_name)

# ---------------------------------------------------------------------------
# configuration

AUTO = "auto"


@dataclass(frozen=True)
class RunConfig:
    solver: str = "svrg"
    solvers: tuple[str, ...] = ("svrg", "stoiht")
    n1: int = 50
    n2: int = 50
    rank: int = 4
    ratio: float = 0.5
    sigma: float = 0.0
    outer: int = 100
    inner: int | None = None
    tol: float = 1e-8
    batch: int = 1
    init: str = "zero"
    step: str = "bb"
    eta: float = 0.5
    eta0: float | None = None
    clamp_min: float = 1e-6
    clamp_max: float = 1e2
    delta: float = 0.0
    placement: float = 0.5
    tau: float | None = None
    step_delta: float | None = None
    match_budget: bool = True
    trials: int = 20
    ranks: tuple[int, ...] = tuple(range(1, 9))
    ratios: tuple[float, ...] = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    sigmas: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4)
    observed: float = 0.5
    image_rank: int = 30
    mode: str = "luminance"


def _int(v: str) -> int:
    try:
        return int(v, 10)
    except ValueError:
        raise ValueError(f"expected an integer, got '{v}'") from None


def _float(v: str) -> float:
    try:
        x = float(v)
    except ValueError:
        raise ValueError(f"expected a number, got '{v}'") from None
    if not math.isfinite(x):
        raise ValueError(f"expected a finite number, got '{v}'")
    return x


def _optional(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    def inner(v: str):
        return None if v.lower() == AUTO else parse(v)
    return inner


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true/false, got '{v}'")


def _choice(*options: str) -> Callable[[str], str]:
    def inner(v: str) -> str:
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got '{v}'")
        return v
    return inner


def _solver(v: str) -> str:
    try:
        return canonical_name(v)
    except Exception:
        raise ValueError(f"unknown solver '{v}' (known: {', '.join(sorted(SOLVERS))})") from None


def _solver_list(v: str) -> tuple[str, ...]:
    items = [s.strip() for s in v.split(",") if s.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of solvers")
    return tuple(_solver(s) for s in items)


def parse_int_list(v: str) -> tuple[int, ...]:
    """``"1..5"`` (inclusive), ``"1,3,7"`` or a mix such as ``"1..3,8"``."""
    out: list[int] = []
    for part in (p.strip() for p in v.split(",")):
        if not part:
            continue
        if ".." in part:
            a, b = part.split("..", 1)
            lo, hi = _int(a.strip()), _int(b.strip())
            if hi < lo:
                raise ValueError(f"empty range '{part}'")
            out.extend(range(lo, hi + 1))
        else:
            out.append(_int(part))
    if not out:
        raise ValueError("expected at least one integer")
    return tuple(out)


def parse_float_list(v: str) -> tuple[float, ...]:
    """``"0:0.05:0.4"`` (start:step:stop, inclusive) or ``"0.1,0.5"``."""
    out: list[float] = []
    for part in (p.strip() for p in v.split(",")):
        if not part:
            continue
        if ":" in part:
            bits = part.split(":")
            if len(bits) != 3:
                raise ValueError(f"expected start:step:stop, got '{part}'")
            a, h, b = (_float(x) for x in bits)
            if h <= 0 or b < a:
                raise ValueError(f"bad range '{part}'")
            count = int(math.floor((b - a) / h + 1e-9)) + 1
            out.extend(round(a + i * h, 12) for i in range(count))
        else:
            out.append(_float(part))
    if not out:
        raise ValueError("expected at least one number")
    return tuple(out)


def _check(pred: Callable[[Any], bool], what: str):
    def inner(x):
        if not pred(x):
            raise ValueError(f"out of range: must be {what}")
        return x
    return inner


def _all(pred):
    return lambda xs: all(pred(x) for x in xs)


_SCHEMA: dict[str, tuple[Callable[[str], Any], Callable[[Any], Any] | None]] = {
    "solver": (_solver, None),
    "solvers": (_solver_list, None),
    "n1": (_int, _check(lambda x: x >= 1, ">= 1")),
    "n2": (_int, _check(lambda x: x >= 1, ">= 1")),
    "rank": (_int, _check(lambda x: x >= 1, ">= 1")),
    "ratio": (_float, _check(lambda x: 0 < x <= 1, "in (0, 1]")),
    "sigma": (_float, _check(lambda x: x >= 0, ">= 0")),
    "outer": (_int, _check(lambda x: x >= 1, ">= 1")),
    "inner": (_optional(_int), _check(lambda x: x is None or x >= 1, ">= 1 or auto")),
    "tol": (_float, _check(lambda x: x > 0, "> 0")),
    "batch": (_int, _check(lambda x: x >= 1, ">= 1")),
    "init": (_choice("zero", "spectral"), None),
    "step": (_choice("bb", "fixed", "theory"), None),
    "eta": (_float, _check(lambda x: x > 0, "> 0")),
    "eta0": (_optional(_float), _check(lambda x: x is None or x > 0, "> 0 or auto")),
    "clamp_min": (_float, _check(lambda x: x > 0, "> 0")),
    "clamp_max": (_float, _check(lambda x: x > 0, "> 0")),
    "delta": (_float, _check(lambda x: 0 <= x < 1, "in [0, 1)")),
    "placement": (_float, _check(lambda x: 0 <= x <= 1, "in [0, 1]")),
    "tau": (_optional(_float), _check(lambda x: x is None or x >= 0, ">= 0 or auto")),
    "step_delta": (_optional(_float), _check(lambda x: x is None or x > 0, "> 0 or auto")),
    "match_budget": (_bool, None),
    "trials": (_int, _check(lambda x: x >= 1, ">= 1")),
    "ranks": (parse_int_list, _check(_all(lambda x: x >= 1), "all >= 1")),
    "ratios": (parse_float_list, _check(_all(lambda x: 0 < x <= 1), "all in (0, 1]")),
    "sigmas": (parse_float_list, _check(_all(lambda x: x >= 0), "all >= 0")),
    "observed": (_float, _check(lambda x: 0 < x <= 1, "in (0, 1]")),
    "image_rank": (_int, _check(lambda x: x >= 1, ">= 1")),
    "mode": (_choice("luminance", "per-channel"), None),
}

CONFIG_KEYS = tuple(f.name for f in fields(RunConfig))
assert set(CONFIG_KEYS) == set(_SCHEMA)


def _set(cfg: RunConfig, key: str, raw: str, line: int | None) -> RunConfig:
    if key not in _SCHEMA:
        raise ConfigParseError(f"unknown key (known: {', '.join(CONFIG_KEYS)})", line, key)
    parse, check = _SCHEMA[key]
    try:
        value = parse(raw.strip())
        if check is not None:
            check(value)
    except ValueError as exc:
        raise ConfigParseError(str(exc), line, key) from None
    return replace(cfg, **{key: value})


def _cross_check(cfg: RunConfig) -> RunConfig:
    if cfg.clamp_min > cfg.clamp_max:
        raise ConfigParseError("clamp_min exceeds clamp_max", None, "clamp_min")
    if cfg.rank > min(cfg.n1, cfg.n2):
        raise ConfigParseError(f"rank exceeds min(n1, n2) = {min(cfg.n1, cfg.n2)}", None, "rank")
    return cfg


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) on top of ``base``."""
    cfg = base or RunConfig()
    seen: set[str] = set()
    for no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigParseError("expected 'key = value'", no)
        key, value = (s.strip() for s in body.split("=", 1))
        if not key:
            raise ConfigParseError("missing key before '='", no)
        if key in seen:
            raise ConfigParseError("key given twice", no, key)
        seen.add(key)
        if not value:
            raise ConfigParseError("missing value", no, key)
        cfg = _set(cfg, key, value, no)
    return _cross_check(cfg)


def apply_overrides(cfg: RunConfig, pairs: Iterable[tuple[str, str]]) -> RunConfig:
    for key, value in pairs:
        cfg = _set(cfg, key.strip(), value, None)
    return _cross_check(cfg)


def _fmt(value: Any) -> str:
    if value is None:
        return AUTO
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_real(value)
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def format_config(cfg: RunConfig) -> list[str]:
    """``key = value`` lines that parse back to ``cfg``."""
    return [f"{f.name} = {_fmt(getattr(cfg, f.name))}" for f in fields(RunConfig)]


def step_rule(cfg: RunConfig):
    if cfg.step == "fixed":
        return FixedStep(cfg.eta)
    if cfg.step == "theory":
        return TheoryGuided(cfg.delta, cfg.placement)
    return BarzilaiBorwein(cfg.eta0, cfg.clamp_min, cfg.clamp_max)


def solver_config(cfg: RunConfig, seed: int = 0) -> SolverConfig:
    return SolverConfig(outer_iterations=cfg.outer, inner_iterations=cfg.inner, tolerance=cfg.tol,
                        step=step_rule(cfg), batch_size=cfg.batch, seed=seed, init=cfg.init)


def synthetic_spec(cfg: RunConfig, seed: int = 0) -> SyntheticSpec:
    return SyntheticSpec(cfg.n1, cfg.n2, cfg.rank, cfg.ratio, cfg.sigma, seed)


def svt_kwargs(cfg: RunConfig) -> dict:
    return {k: v for k, v in (("tau", cfg.tau), ("step_delta", cfg.step_delta)) if v is not None}


# ---------------------------------------------------------------------------
# CSV


def format_real(x: float) -> str:
    """17 significant digits: ``float(format_real(x)) == x`` for every double."""
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format_real(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(records: Sequence[dict], fieldnames: Sequence[str] | None = None,
              comments: Sequence[str] = ()) -> bytes:
    """RFC-4180 CSV with LF line endings, preceded by ``# comment`` lines.

    All records must share one key set; with no records the header comes from
    ``fieldnames`` (and is empty when that is not given).
    """
    if records:
        keys = list(records[0].keys())
        if fieldnames is not None and list(fieldnames) != keys:
            raise InvalidInputError("fieldnames do not match the record schema")
        for r in records:
            if list(r.keys()) != keys:
                raise InvalidInputError("records do not share one schema")
    else:
        keys = list(fieldnames or [])
    buf = _io.StringIO()
    for c in comments:
        if "\n" in c or "\r" in c:
            raise InvalidInputError("comment lines must not contain line breaks")
        buf.write(f"# {c}\n")
    if keys:
        w = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        w.writerow(keys)
        for r in records:
            w.writerow([_cell(r[k]) for k in keys])
    return buf.getvalue().encode("utf-8")


def read_csv(data: bytes) -> tuple[list[str], list[dict]]:
    """Inverse of ``write_csv`` up to typing: comment lines are returned
    separately and every field comes back as a string."""
    text = data.decode("utf-8")
    lines = text.split("\n")
    comments = [ln[2:] for ln in lines if ln.startswith("# ")]
    body = "\n".join(ln for ln in lines if not ln.startswith("#"))
    rows = list(csv.DictReader(_io.StringIO(body)))
    return comments, rows


def save_bytes(path: str, data: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(data)


# ---------------------------------------------------------------------------
# PGM / PPM


@dataclass(frozen=True, eq=False)
class PixmapImage:
    samples: np.ndarray  # uint8, (h, w) or (h, w, 3)

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.dtype != np.uint8 or s.ndim not in (2, 3) or (s.ndim == 3 and s.shape[2] != 3):
            raise InvalidInputError("pixmap samples must be uint8 (h, w) or (h, w, 3)")
        if s.shape[0] < 1 or s.shape[1] < 1:
            raise InvalidInputError("pixmap must have at least one pixel")

    peak = 255

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 2 else 3


_WS = b" \t\r\n\x0b\x0c"


def _header_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated tokens after the magic number,
    skipping ``#`` comments; returns the tokens and the offset just past the
    single whitespace byte that ends the header."""
    pos, toks = 2, []
    n = len(data)
    while len(toks) < count:
        while pos < n and (data[pos] in _WS or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < n and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < n and data[pos] not in _WS and data[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise FormatError("truncated pixmap header")
        toks.append(data[start:pos])
    if pos >= n or data[pos] not in _WS:
        raise FormatError("pixmap header must end with one whitespace byte")
    return toks, pos + 1


def read_pixmap(data: bytes) -> PixmapImage:
    """Parse a binary ``P5`` (grey) or ``P6`` (colour) pixmap with maxval 255."""
    data = bytes(data)
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported magic {magic!r}: expected P5 or P6")
    toks, off = _header_tokens(data, 3)
    try:
        w, h, maxval = (int(t) for t in toks)
    except ValueError:
        raise FormatError("non-numeric pixmap header field") from None
    if w < 1 or h < 1:
        raise FormatError("pixmap dimensions must be positive")
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}: only 255 is supported")
    ch = 1 if magic == b"P5" else 3
    need = w * h * ch
    if len(data) - off < need:
        raise FormatError(f"truncated pixmap payload: need {need} bytes, have {len(data) - off}")
    arr = np.frombuffer(data, dtype=np.uint8, count=need, offset=off).copy()
    return PixmapImage(arr.reshape((h, w)) if ch == 1 else arr.reshape((h, w, 3)))


def write_pixmap(image: PixmapImage | np.ndarray) -> bytes:
    """Canonical encoding: ``P5``/``P6``, ``"{w} {h}\\n255\\n"``, raw samples."""
    img = image if isinstance(image, PixmapImage) else PixmapImage(np.asarray(image))
    magic = b"P5" if img.channels == 1 else b"P6"
    head = magic + f"\n{img.width} {img.height}\n255\n".encode("ascii")
    return head + np.ascontiguousarray(img.samples).tobytes()


def load_pixmap(path: str) -> PixmapImage:
    with open(path, "rb") as fh:
        return read_pixmap(fh.read())


def save_pixmap(path: str, image) -> None:
    save_bytes(path, write_pixmap(image))
