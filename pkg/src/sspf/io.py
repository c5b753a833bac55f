"""JSON Lines datasets and the binary particle-ensemble store."""

import json
import struct
from pathlib import Path
from typing import Iterable, Iterator, List

import numpy as np

from .filter import ParticleEnsemble
from .model import ChannelObservation, ModelParams, ObservationFrame, WordSegment

STORE_MAGIC = b"SSPF"
STORE_VERSION = 1
_HEADER = struct.Struct("<4sHIIII")       # magic, version, R, T, M, N
_FRAME_HEADER = struct.Struct("<i??")     # t, resampled, has_ancestors


def _dump_lines(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")))
            fh.write("\n")


def _load_lines(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None


def write_observations(path, frames) -> None:
    def records():
        for t, frame in enumerate(frames):
            channels = []
            for n in sorted(frame.channels):
                ch = frame.channels[n]
                rec = {"n": n, "dvec": ch.dvec.tolist()}
                if ch.ssl is not None:
                    rec["ssl"] = ch.ssl.tolist()
                if ch.doa is not None:
                    rec["doa"] = float(ch.doa)
                channels.append(rec)
            yield {"t": t, "channels": channels}
    _dump_lines(path, records())


def read_observations(path) -> List[ObservationFrame]:
    frames = {}
    for rec in _load_lines(path):
        t = int(rec["t"])
        if t in frames:
            raise ValueError(f"{path}: duplicate frame {t}")
        frame = ObservationFrame()
        for ch in rec.get("channels", []):
            n = int(ch["n"])
            frame.channels[n] = ChannelObservation(
                np.asarray(ch["dvec"], dtype=float),
                None if ch.get("ssl") is None else np.asarray(ch["ssl"], dtype=float),
                ch.get("doa"),
            )
        frames[t] = frame
    if not frames:
        return []
    T = max(frames) + 1
    # frames without a record are fully silent
    return [frames.get(t, ObservationFrame()) for t in range(T)]


def write_words(path, words, labels=None) -> None:
    def records():
        for i, w in enumerate(words):
            rec = {"l": w.l, "n": w.n, "start": w.start, "end": w.end}
            if labels is not None:
                rec["speaker"] = int(labels[i])
            yield rec
    _dump_lines(path, records())


def read_words(path):
    """Words and, when every record carries one, their speaker labels."""
    words, labels = [], []
    for rec in _load_lines(path):
        words.append(WordSegment(int(rec["l"]), int(rec["n"]), int(rec["start"]), int(rec["end"])))
        labels.append(rec.get("speaker"))
    if words and all(lab is not None for lab in labels):
        return words, np.asarray(labels, dtype=int)
    return words, None


def write_posteriors(path, posteriors: np.ndarray) -> None:
    T, N, _ = posteriors.shape
    _dump_lines(path, ({"t": t, "n": n, "p": posteriors[t, n].tolist()}
                       for t in range(T) for n in range(N)))


def read_posteriors(path) -> np.ndarray:
    recs = list(_load_lines(path))
    if not recs:
        raise ValueError(f"{path}: no posteriors")
    T = 1 + max(int(r["t"]) for r in recs)
    N = 1 + max(int(r["n"]) for r in recs)
    M = len(recs[0]["p"])
    out = np.full((T, N, M), np.nan)
    for r in recs:
        out[int(r["t"]), int(r["n"])] = r["p"]
    if np.isnan(out).any():
        raise ValueError(f"{path}: missing (t, n) records")
    return out


def write_trace(path, means: np.ndarray, resultants: np.ndarray) -> None:
    T, M = means.shape
    _dump_lines(path, ({"t": t, "m": m, "mean": float(means[t, m]),
                        "resultant": float(resultants[t, m])}
                       for t in range(T) for m in range(M)))


def read_trace(path):
    recs = list(_load_lines(path))
    T = 1 + max(int(r["t"]) for r in recs)
    M = 1 + max(int(r["m"]) for r in recs)
    means, res = np.zeros((T, M)), np.zeros((T, M))
    for r in recs:
        means[r["t"], r["m"]] = r["mean"]
        res[r["t"], r["m"]] = r["resultant"]
    return means, res


def write_truth(path, truth) -> None:
    _dump_lines(path, ({"t": t, "theta": truth.theta[t].tolist(),
                        "active": truth.active[t].tolist()}
                       for t in range(truth.theta.shape[0])))


def read_truth(path):
    recs = sorted(_load_lines(path), key=lambda r: r["t"])
    theta = np.array([r["theta"] for r in recs], dtype=float)
    active = np.array([r["active"] for r in recs], dtype=int)
    return theta, active


def write_params(path, params: ModelParams) -> None:
    Path(path).write_text(json.dumps(params.to_dict(), indent=1) + "\n", encoding="utf-8")


def read_params(path) -> ModelParams:
    return ModelParams.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class EnsembleWriter:
    """Streams ensembles to the binary store; the frame count is patched on close."""

    def __init__(self, path, R: int, M: int, N: int):
        self.R, self.M, self.N = R, M, N
        self.count = 0
        self._fh = open(path, "wb")
        self._fh.write(_HEADER.pack(STORE_MAGIC, STORE_VERSION, R, 0, M, N))

    def write(self, ens: ParticleEnsemble) -> None:
        if ens.q.shape != (self.R, self.N) or ens.theta.shape != (self.R, self.M):
            raise ValueError("ensemble shape does not match the store header")
        has_anc = ens.ancestors is not None
        self._fh.write(_FRAME_HEADER.pack(int(ens.t), bool(ens.resampled), has_anc))
        self._fh.write(np.ascontiguousarray(ens.q, dtype="<i4").tobytes())
        self._fh.write(np.ascontiguousarray(ens.theta, dtype="<f8").tobytes())
        self._fh.write(np.ascontiguousarray(ens.log_weights, dtype="<f8").tobytes())
        if has_anc:
            self._fh.write(np.ascontiguousarray(ens.ancestors, dtype="<i8").tobytes())
        self.count += 1

    def close(self) -> None:
        self._fh.seek(0)
        self._fh.write(_HEADER.pack(STORE_MAGIC, STORE_VERSION, self.R, self.count, self.M, self.N))
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_ensembles(path, ensembles) -> None:
    ensembles = list(ensembles)
    if not ensembles:
        raise ValueError("no ensembles to store")
    first = ensembles[0]
    with EnsembleWriter(path, first.R, first.theta.shape[1], first.q.shape[1]) as writer:
        for ens in ensembles:
            writer.write(ens)


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise ValueError("truncated ensemble store")
    return buf


def read_store_header(path) -> dict:
    with open(path, "rb") as fh:
        magic, version, R, T, M, N = _HEADER.unpack(_read_exact(fh, _HEADER.size))
    if magic != STORE_MAGIC:
        raise ValueError(f"{path}: not an ensemble store")
    if version != STORE_VERSION:
        raise ValueError(f"{path}: unsupported store version {version}")
    return {"R": R, "T": T, "M": M, "N": N}


def iter_ensembles(path) -> Iterator[ParticleEnsemble]:
    """Yield stored ensembles one frame at a time."""
    head = read_store_header(path)
    R, T, M, N = head["R"], head["T"], head["M"], head["N"]
    with open(path, "rb") as fh:
        fh.seek(_HEADER.size)
        for _ in range(T):
            t, resampled, has_anc = _FRAME_HEADER.unpack(_read_exact(fh, _FRAME_HEADER.size))
            q = np.frombuffer(_read_exact(fh, 4 * R * N), dtype="<i4").reshape(R, N).astype(np.int32)
            theta = np.frombuffer(_read_exact(fh, 8 * R * M), dtype="<f8").reshape(R, M).copy()
            log_w = np.frombuffer(_read_exact(fh, 8 * R), dtype="<f8").copy()
            anc = None
            if has_anc:
                anc = np.frombuffer(_read_exact(fh, 8 * R), dtype="<i8").astype(np.intp)
            yield ParticleEnsemble(t, q, theta, log_w, resampled, anc)


def read_ensembles(path) -> List[ParticleEnsemble]:
    return list(iter_ensembles(path))
