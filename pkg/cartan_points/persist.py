from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import tempfile
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional

from mpmath import mp, mpf

from .enumeration import Candidate, UnitResult
from .errors import CheckpointError
from .precision import BigReal

log = logging.getLogger("cartan.persist")

CHECKPOINT_HEADER = "CARTANPTS v1"
REPORT_DIGITS = 30


def sha256_8(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:8]


def big(x: BigReal, digits: int = REPORT_DIGITS) -> dict[str, str]:
    return {"value": mp.nstr(x.value, digits), "err": mp.nstr(x.err, 5)}


def to_jsonable(obj: Any, digits: int = REPORT_DIGITS) -> Any:
    """Report encoding: BigReal as {value, err} strings, mpf and Fraction as strings."""
    if isinstance(obj, BigReal):
        return big(obj, digits)
    if isinstance(obj, mpf):
        return mp.nstr(obj, digits)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, Path):
        return str(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name), digits) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v, digits) for v in obj]
    return obj


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_report(path: Path, report: dict[str, Any]) -> Path:
    _atomic_write(path, json.dumps(to_jsonable(report), indent=2, ensure_ascii=False) + "\n")
    return path


# checkpoint payloads keep full precision so resumed candidates resolve identically


def _full(x: mpf) -> str:
    return mp.nstr(x, mp.dps + 5, strip_zeros=False)


def _encode_big(x: BigReal) -> list[str]:
    return [_full(x.value), _full(x.err)]


def _decode_big(raw: list[str]) -> BigReal:
    return BigReal(mpf(raw[0]), mpf(raw[1]))


def encode_unit_result(result: UnitResult) -> dict[str, Any]:
    return {
        "cusp": result.cusp,
        "b1_range": list(result.b1_range),
        "pruned": dict(result.pruned),
        "candidates": [
            {
                "cusp": c.cusp,
                "pivot": c.pivot,
                "b": [str(b) for b in c.b_vector],
                "t": _encode_big(c.t),
                "q": _encode_big(c.q_c),
            }
            for c in result.candidates
        ],
        "failures": [list(f) for f in result.failures],
        "warnings": list(result.warnings),
    }


def decode_unit_result(key: str, raw: dict[str, Any]) -> UnitResult:
    try:
        candidates = [
            Candidate(
                cusp=int(c["cusp"]),
                pivot=int(c["pivot"]),
                b_vector=tuple(Fraction(b) for b in c["b"]),
                t=_decode_big(c["t"]),
                q_c=_decode_big(c["q"]),
                j=None,
                classification=None,
            )
            for c in raw["candidates"]
        ]
        lo, hi = raw["b1_range"]
        return UnitResult(
            key=key,
            cusp=int(raw["cusp"]),
            b1_range=(int(lo), int(hi)),
            pruned={str(k): int(v) for k, v in raw["pruned"].items()},
            candidates=candidates,
            failures=[(str(a), str(b)) for a, b in raw["failures"]],
            warnings=[str(w) for w in raw["warnings"]],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed work unit {key!r} in checkpoint: {exc}") from exc


class Checkpoint:

    def __init__(self, path: Optional[Path], fingerprint: str) -> None:
        self.path = path
        self.fingerprint = fingerprint
        self.units: dict[str, UnitResult] = {}

    @classmethod
    def open(cls, path: Optional[Path], fingerprint: str) -> Checkpoint:
        cp = cls(path, fingerprint)
        if path is None or not path.exists() or path.stat().st_size == 0:
            return cp
        text = path.read_text(encoding="utf-8")
        header, _, body = text.partition("\n")
        if header.strip() != CHECKPOINT_HEADER:
            raise CheckpointError(
                f"{path}: header {header.strip()!r} is not {CHECKPOINT_HEADER!r}; delete it and re-run"
            )
        try:
            payload = json.loads(body)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: unreadable payload ({exc}); delete it and re-run") from exc
        if not isinstance(payload, dict) or payload.get("fingerprint") != fingerprint:
            raise CheckpointError(
                f"{path}: written for a different configuration; delete it and re-run"
            )
        units = payload.get("units")
        if not isinstance(units, dict):
            raise CheckpointError(f"{path}: missing work units")
        # decode everything before applying anything
        decoded = {key: decode_unit_result(key, raw) for key, raw in units.items()}
        cp.units = decoded
        log.info("resuming from %s with %d completed work units", path, len(decoded))
        return cp

    def done(self, key: str) -> bool:
        return key in self.units

    def record(self, result: UnitResult) -> None:
        self.units[result.key] = result
        self.flush()

    def flush(self) -> None:
        if self.path is None:
            return
        payload = {
            "fingerprint": self.fingerprint,
            "units": {k: encode_unit_result(v) for k, v in sorted(self.units.items())},
        }
        _atomic_write(self.path, CHECKPOINT_HEADER + "\n" + json.dumps(payload, sort_keys=True) + "\n")
