"""Readers and writers for samples, tables and parameter files."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import FrequencyProfile, Sample, SpinSample
from .errors import InvalidInputError


def read_sample(path) -> Sample:
    """One outcome label per line; blank lines skipped; optional ``# states=S`` header."""
    states = None
    labels: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                key, _, value = text[1:].strip().partition("=")
                if key.strip() == "states":
                    try:
                        states = int(value)
                    except ValueError:
                        raise InvalidInputError(f"bad states header {text!r}") from None
                continue
            labels.append(text)
    return Sample(tuple(labels), states)


def write_sample(path, sample: Sample) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if sample.states is not None:
            fh.write(f"# states={sample.states}\n")
        for label in sample.outcomes:
            fh.write(f"{label}\n")


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def read_rows(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInputError("empty table")
    return rows[0], rows[1:]


def write_frequency_table(path, counts: dict) -> None:
    items = sorted(counts.items(), key=lambda kv: (-kv[1], str(kv[0])))
    write_rows(path, ["state", "count"], items)


def write_rank_table(path, profile: FrequencyProfile) -> None:
    write_rows(path, ["rank", "count"], profile.rank_table())


def write_degeneracy_table(path, profile: FrequencyProfile) -> None:
    write_rows(path, ["k", "m_k"], sorted(profile.degeneracy.items()))


def write_profile(path, counts) -> None:
    write_rows(path, ["state_index", "count"], enumerate(np.asarray(counts).tolist()))


def write_spins(path, spins) -> None:
    s = spins.spins if isinstance(spins, SpinSample) else np.asarray(spins)
    with open(path, "w", encoding="utf-8") as fh:
        for row in s:
            fh.write(",".join(str(int(x)) for x in row) + "\n")


def read_spins(path) -> SpinSample:
    """CSV of +-1 (or 0/1) values, one observation per row, no header."""
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    except ValueError as exc:
        raise InvalidInputError(f"malformed spin file: {exc}") from None
    if arr.size == 0:
        raise InvalidInputError("empty sample")
    return SpinSample(arr)


def write_chain_trace(path, records) -> None:
    write_rows(
        path,
        ["step", "H_s", "H_k", "kmax_over_N", "loglik", "acc_rate"],
        ((r.step, r.resolution, r.relevance, r.kmax_frac, r.loglik, r.acc_rate) for r in records),
    )


def write_phi_curve(path, curve) -> None:
    write_rows(path, ["beta", "phi", "phi_se", "E", "E_se", "I", "kmax_frac"], curve.rows())


def write_scan_table(path, rows) -> None:
    write_rows(path, ["beta", "N", "Hs_norm", "kmax_frac"], ((r.beta, r.N, r.Hs_norm, r.kmax_frac) for r in rows))


# --- parameter files -------------------------------------------------------------


def params_to_json(params) -> dict:
    from .models.rbm import RBMParams
    from .models.sk import SKParams

    if isinstance(params, SKParams):
        return {"model": "sk", "n": params.n, "h": params.h.tolist(), "J": params.J.tolist()}
    if isinstance(params, RBMParams):
        return {
            "model": "rbm",
            "n_v": params.n_visible,
            "n_h": params.n_hidden,
            "unit_convention": params.unit_convention,
            "a": params.a.tolist(),
            "b": params.b.tolist(),
            "w": params.w.tolist(),
        }
    raise InvalidInputError("unsupported parameter type")


def params_from_json(data: dict):
    from .models.rbm import RBMParams
    from .models.sk import SKParams

    try:
        kind = data["model"]
        if kind == "sk":
            return SKParams(np.array(data["J"], dtype=float), np.array(data["h"], dtype=float))
        if kind == "rbm":
            return RBMParams(data["a"], data["b"], data["w"], data.get("unit_convention", "hidden01"))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInputError(f"malformed parameter file: {exc}") from None
    raise InvalidInputError(f"unknown model {data.get('model')!r}")


def save_params(path, params) -> None:
    Path(path).write_text(json.dumps(params_to_json(params), indent=2) + "\n", encoding="utf-8")


def load_params(path):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"malformed parameter file: {exc}") from None
    return params_from_json(data)
