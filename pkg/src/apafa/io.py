"""File formats: data CSV, key=value configs, truth bundles and the binary
draws archive.

Draws archive layout (all integers and floats little-endian)::

    b"APAFADRW"  u32 version  u64 header_len  header_json
    per draw:    i64[len(DIM_KEYS)] dims, then f64 blocks in STATE_FIELDS order
    optional:    f64 imputation matrix (m, n_missing)

The header carries the dimensions fixed for the whole run and the
deterministic metadata. A companion ``<archive>.index.json`` lists the
byte offset and dimensions of every draw.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import os
import struct
import tempfile

import numpy as np

from .gibbs import ChainConfig
from .model import Dataset, Hyperparameters, ModelState, PosteriorDraws, SyntheticTruth

MAGIC = b"APAFADRW"
VERSION = 1
STATE_FIELDS = ("Lambda", "Gamma", "Eta", "PhiTilde", "Psi", "Beta", "sigma2",
                "zeta_lambda", "zeta_gamma", "tau_phi", "tau_eta", "v_eta",
                "v_phi", "c_eta", "c_phi", "ProbitZ", "Y_imputed")
INT_FIELDS = ("c_eta", "c_phi")
DIM_KEYS = ("d", "k", "has_probit", "has_imputed")
# run-specific timings are kept out of the archive so reruns match bytewise
ARCHIVE_META_KEYS = ("seed", "iterations", "burn_in", "thinning", "spike_value",
                     "beta_update", "n", "p")


class FormatError(ValueError):
    """Malformed input file."""


def atomic_write(path, data):
    """Write bytes or text to ``path`` through a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode() if isinstance(data, str) else data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True,
                                  default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


# ---------------------------------------------------------------------- CSV

def _fmt(x):
    return "" if np.isnan(x) else repr(float(x))


def write_dataset_csv(path, dataset, group_labels=None):
    """Columns ``y1..yp``, ``group``, then ``z1..zq``; missing cells empty."""
    labels = (np.asarray(dataset.group_names, dtype=object)[dataset.groups]
              if group_labels is None else np.asarray(group_labels))
    Y = np.where(dataset.missing_mask, np.nan, dataset.Y)
    header = [f"y{j + 1}" for j in range(dataset.p)] + ["group"]
    header += [f"z{j + 1}" for j in range(dataset.q)]
    lines = [",".join(header)]
    for i in range(dataset.n):
        row = [_fmt(v) for v in Y[i]] + [str(labels[i])]
        if dataset.q:
            row += [_fmt(v) for v in dataset.Z[i]]
        lines.append(",".join(row))
    atomic_write(path, "\n".join(lines) + "\n")


def _label_key(label):
    try:
        return (0, int(label), "")
    except ValueError:
        return (1, 0, label)


def read_dataset_csv(path, binary=False, labels=None, strict_labels=False):
    """Parse a data CSV into a :class:`Dataset`.

    ``labels`` declares the group labels (and their order). With
    ``strict_labels`` a row whose label is not declared is an error;
    otherwise unseen labels are appended in sorted order.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if "group" not in header:
        raise FormatError(f"{path}: no 'group' column")
    g = header.index("group")
    ycols, zcols = header[:g], header[g + 1:]
    if not ycols or ycols != [f"y{j + 1}" for j in range(len(ycols))]:
        raise FormatError(f"{path}: expected columns y1..yp before 'group'")
    if zcols != [f"z{j + 1}" for j in range(len(zcols))]:
        raise FormatError(f"{path}: expected columns z1..zq after 'group'")
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    if not body:
        raise FormatError(f"{path}: no data rows")
    Y, Z, groups = [], [], []
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise FormatError(f"{path}:{lineno}: expected {len(header)} fields, "
                              f"got {len(r)}")
        try:
            Y.append([float(c) if c.strip() else np.nan for c in r[:g]])
            Z.append([float(c) for c in r[g + 1:]])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
        label = r[g].strip()
        if not label:
            raise FormatError(f"{path}:{lineno}: empty group label")
        groups.append(label)
    declared = [str(x) for x in labels] if labels is not None else []
    unseen = sorted(set(groups) - set(declared), key=_label_key)
    if unseen and strict_labels:
        raise FormatError(f"{path}: group labels {unseen} not declared")
    names = declared + unseen
    index = {name: s for s, name in enumerate(names)}
    idx = np.array([index[x] for x in groups])
    X = np.zeros((len(groups), len(names)))
    X[np.arange(len(groups)), idx] = 1.0
    Y = np.array(Y, dtype=float)
    mask = np.isnan(Y)
    if binary:
        observed = Y[~mask]
        if not np.all((observed == 0) | (observed == 1)):
            raise FormatError(f"{path}: --binary needs 0/1 outcomes")
    Zarr = np.array(Z, dtype=float) if zcols else None
    try:
        return Dataset(Y=np.where(mask, 0.0, Y), X=X, Z=Zarr, missing_mask=mask,
                       outcome_kind="binary" if binary else "continuous",
                       group_names=names)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# ------------------------------------------------------------------- config

def _coerce(key, raw, default):
    raw = raw.strip()
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if raw.lower() in ("none", ""):
        return None
    if isinstance(default, int) or key in ("d_max", "k_max", "adapt_end"):
        try:
            return int(raw)
        except ValueError:
            pass
    if isinstance(default, (int, float)) or default is None:
        try:
            return float(raw)
        except ValueError:
            pass
    return raw


def read_config(path):
    """Parse a flat ``key = value`` file into (Hyperparameters, ChainConfig,
    extra) where ``extra`` collects keys that belong to neither."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    with open(path) as fh:
        text = fh.read()
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return config_from_mapping(dict(parser["config"]))


def config_from_mapping(mapping):
    h_defaults = Hyperparameters()
    c_fields = {f.name: f.default for f in dataclasses.fields(ChainConfig)}
    h_kw, c_kw, extra = {}, {}, {}
    for key, raw in mapping.items():
        if hasattr(h_defaults, key):
            h_kw[key] = _coerce(key, str(raw), getattr(h_defaults, key))
        elif key in c_fields:
            c_kw[key] = _coerce(key, str(raw), c_fields[key])
        else:
            extra[key] = raw
    try:
        return Hyperparameters(**h_kw), ChainConfig(**c_kw), extra
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid configuration: {exc}") from exc


# -------------------------------------------------------------------- truth

def truth_to_dict(truth):
    return {"Lambda_true": truth.Lambda_true, "Gamma_true": truth.Gamma_true,
            "Psi_true": truth.Psi_true, "sigma2_true": truth.sigma2_true,
            "group_labels": np.asarray(truth.group_labels).astype(int)}


def write_truth(path, truth, extra=None):
    payload = truth_to_dict(truth)
    payload["Omega_by_group"] = [np.asarray(o) for o in truth.Omega_by_group]
    if extra:
        payload.update(extra)
    write_json(path, payload)


def read_truth(path):
    with open(path) as fh:
        raw = json.load(fh)
    p = len(raw["sigma2_true"])
    n = len(raw["group_labels"])
    Gamma = np.array(raw["Gamma_true"], dtype=float).reshape(p, -1)
    Psi = np.array(raw["Psi_true"], dtype=float).reshape(n, Gamma.shape[1])
    return SyntheticTruth(
        Lambda_true=np.array(raw["Lambda_true"], dtype=float).reshape(p, -1),
        Gamma_true=Gamma, Psi_true=Psi,
        sigma2_true=np.array(raw["sigma2_true"], dtype=float),
        group_labels=np.array(raw["group_labels"], dtype=int))


# ------------------------------------------------------------ draws archive

def _block_shapes(n, p, m, d, k, has_probit, has_imputed):
    shapes = {"Lambda": (p, d), "Gamma": (p, k), "Eta": (n, d),
              "PhiTilde": (n, k), "Psi": (n, k), "Beta": (m, k), "sigma2": (p,),
              "zeta_lambda": (d,), "zeta_gamma": (k,), "tau_phi": (k,),
              "tau_eta": (d,), "v_eta": (d,), "v_phi": (k,), "c_eta": (d,),
              "c_phi": (k,)}
    shapes["ProbitZ"] = (n, p) if has_probit else None
    shapes["Y_imputed"] = (n, p) if has_imputed else None
    return shapes


def encode_draws(draws):
    """Serialise ``draws`` to (archive bytes, index dict)."""
    states = draws.states
    meta = {k: draws.meta[k] for k in ARCHIVE_META_KEYS if k in draws.meta}
    if states:
        n, p, m = states[0].n, states[0].p, states[0].Beta.shape[0]
    else:
        n, p, m = draws.meta.get("n", 0), draws.meta.get("p", 0), 0
    imputations = draws.meta.get("imputations")
    header = {"version": VERSION, "n": n, "p": p, "m": m, "draws": len(states),
              "fields": list(STATE_FIELDS), "dims": list(DIM_KEYS), "meta": meta,
              "imputations": (list(np.shape(imputations))
                              if imputations is not None else None)}
    head = json.dumps(header, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<IQ", VERSION, len(head)), head]
    offset = sum(len(x) for x in parts)
    index = {"header_bytes": offset, "draws": []}
    for s in states:
        dims = (s.d, s.k, int(s.ProbitZ is not None), int(s.Y_imputed is not None))
        chunk = [np.asarray(dims, dtype="<i8").tobytes()]
        for name in STATE_FIELDS:
            value = getattr(s, name)
            if value is not None:
                chunk.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
        chunk = b"".join(chunk)
        index["draws"].append({"offset": offset, "bytes": len(chunk),
                               **dict(zip(DIM_KEYS, dims))})
        parts.append(chunk)
        offset += len(chunk)
    if imputations is not None:
        index["imputations_offset"] = offset
        parts.append(np.ascontiguousarray(imputations, dtype="<f8").tobytes())
    return b"".join(parts), index


def write_draws(path, draws):
    """Write the archive and ``<path>.index.json`` atomically."""
    data, index = encode_draws(draws)
    atomic_write(path, data)
    write_json(os.fspath(path) + ".index.json", index)
    return index


def read_draws(path):
    with open(path, "rb") as fh:
        data = fh.read()
    return decode_draws(data)


def decode_draws(data):
    if data[:8] != MAGIC:
        raise FormatError("not a draws archive")
    version, head_len = struct.unpack_from("<IQ", data, 8)
    if version != VERSION:
        raise FormatError(f"unsupported archive version {version}")
    pos = 8 + struct.calcsize("<IQ")
    header = json.loads(data[pos:pos + head_len])
    pos += head_len
    n, p, m = header["n"], header["p"], header["m"]
    states = []
    for _ in range(header["draws"]):
        dims = np.frombuffer(data, dtype="<i8", count=len(DIM_KEYS), offset=pos)
        pos += 8 * len(DIM_KEYS)
        shapes = _block_shapes(n, p, m, *(int(x) for x in dims))
        values = {}
        for name in STATE_FIELDS:
            shape = shapes[name]
            if shape is None:
                values[name] = None
                continue
            count = int(np.prod(shape))
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos)
            pos += 8 * count
            arr = arr.reshape(shape).astype(float)
            values[name] = arr.astype(int) if name in INT_FIELDS else arr
        states.append(ModelState(**values))
    meta = dict(header["meta"])
    if header.get("imputations") is not None:
        shape = tuple(header["imputations"])
        count = int(np.prod(shape))
        meta["imputations"] = np.frombuffer(
            data, dtype="<f8", count=count, offset=pos).reshape(shape).copy()
        pos += 8 * count
    if pos != len(data):
        raise FormatError("trailing bytes in draws archive")
    return PosteriorDraws(states=states, meta=meta)
