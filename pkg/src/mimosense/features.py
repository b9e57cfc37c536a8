"""Per-window feature extraction.

Each time window becomes 31 real tensors: the window's own amplitude,
plus five derived tensors (amplitude, unwrapped phase, real part,
imaginary part, normalized amplitude) for each of six complex
correlation tensors.  The correlation tensors stack Gram matrices of
the window along one mode:

  slot 0        |window|                              (T_w, F, M)
  slots 1-5     time x time correlation per antenna    (T_w, T_w, M)
  slots 6-10    freq x freq correlation per antenna    (F, F, M)
  slots 11-15   time x time correlation per subcarrier (T_w, T_w, F)
  slots 16-20   space x space correlation per subcarrier (M, M, F)
  slots 21-25   freq x freq correlation per snapshot   (F, F, T_w)
  slots 26-30   space x space correlation per snapshot (M, M, T_w)

Every real tensor is CP-decomposed and its descending weight vector
(zero-padded to the requested rank) becomes one feature vector; the
classifier consumes their concatenation with each vector's largest
weight dropped.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .channel import Activity
from .cp import AlsConfig, cp_als, rank_upper_bound, sorted_weights
from .errors import DataError, NumericError

__all__ = [
    "CorrelationSet",
    "FeatureSet",
    "N_FEATURE_VECTORS",
    "amp_phase_tensors",
    "assemble_input",
    "corr_per_antenna",
    "corr_per_subcarrier",
    "corr_per_time",
    "correlation_set",
    "extract_features",
    "feature_names",
    "load_features_bin",
    "load_features_csv",
    "normalized_complex",
    "phase_reference",
    "save_features_bin",
    "save_features_csv",
]

N_FEATURE_VECTORS = 31

_CORR_NAMES = (
    "time_corr_per_antenna",
    "freq_corr_per_antenna",
    "time_corr_per_subcarrier",
    "space_corr_per_subcarrier",
    "freq_corr_per_snapshot",
    "space_corr_per_snapshot",
)
_VARIANT_NAMES = ("amp", "phase", "re", "im", "norm_amp")


def feature_names() -> list[str]:
    """The 31 feature-vector names in their fixed slot order."""
    names = ["window_amp"]
    for corr in _CORR_NAMES:
        names.extend(f"{corr}.{v}" for v in _VARIANT_NAMES)
    return names


@dataclass(frozen=True)
class CorrelationSet:
    """The six correlation tensors of one window; every frontal slice is
    Hermitian positive semidefinite."""

    time_corr_per_antenna: np.ndarray  # (T_w, T_w, M)
    freq_corr_per_antenna: np.ndarray  # (F, F, M)
    time_corr_per_subcarrier: np.ndarray  # (T_w, T_w, F)
    space_corr_per_subcarrier: np.ndarray  # (M, M, F)
    freq_corr_per_snapshot: np.ndarray  # (F, F, T_w)
    space_corr_per_snapshot: np.ndarray  # (M, M, T_w)

    def in_slot_order(self) -> tuple[np.ndarray, ...]:
        return (
            self.time_corr_per_antenna,
            self.freq_corr_per_antenna,
            self.time_corr_per_subcarrier,
            self.space_corr_per_subcarrier,
            self.freq_corr_per_snapshot,
            self.space_corr_per_snapshot,
        )


@dataclass(frozen=True)
class FeatureSet:
    """CP-weight vectors of one window: row i is feature vector i,
    descending-sorted and zero-padded to the shared rank."""

    lambdas: np.ndarray  # (31, r_max)
    window_id: int
    label: Activity | None
    degenerate: bool = False

    @property
    def r_max(self) -> int:
        return self.lambdas.shape[1]


def _hermitize(c: np.ndarray) -> np.ndarray:
    """Average each frontal slice with its conjugate transpose so the
    Hermitian symmetry holds exactly despite gemm rounding."""
    return 0.5 * (c + np.conj(np.transpose(c, (1, 0, 2))))


def corr_per_antenna(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per antenna m, with G_m the T_w x F window slice: the Gram pair
    G_m·G_m^H (time x time) and G_m^H·G_m (freq x freq)."""
    gm = np.ascontiguousarray(np.moveaxis(g, 2, 0))  # (M, T_w, F)
    gmh = np.conj(np.transpose(gm, (0, 2, 1)))
    time = np.moveaxis(gm @ gmh, 0, 2)
    freq = np.moveaxis(gmh @ gm, 0, 2)
    return _hermitize(time), _hermitize(freq)


def corr_per_subcarrier(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per subcarrier f, with G_f the T_w x M slice: G_f·G_f^H
    (time x time) and G_f^H·G_f (space x space)."""
    gf = np.ascontiguousarray(np.moveaxis(g, 1, 0))  # (F, T_w, M)
    gfh = np.conj(np.transpose(gf, (0, 2, 1)))
    time = np.moveaxis(gf @ gfh, 0, 2)
    space = np.moveaxis(gfh @ gf, 0, 2)
    return _hermitize(time), _hermitize(space)


def corr_per_time(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per snapshot t, with G_t the F x M slice: G_t·G_t^H
    (freq x freq) and G_t^H·G_t (space x space)."""
    gt = np.ascontiguousarray(g)  # (T_w, F, M)
    gth = np.conj(np.transpose(gt, (0, 2, 1)))
    freq = np.moveaxis(gt @ gth, 0, 2)
    space = np.moveaxis(gth @ gt, 0, 2)
    return _hermitize(freq), _hermitize(space)


def correlation_set(g: np.ndarray) -> CorrelationSet:
    t_ant, f_ant = corr_per_antenna(g)
    t_sub, s_sub = corr_per_subcarrier(g)
    f_snap, s_snap = corr_per_time(g)
    return CorrelationSet(t_ant, f_ant, t_sub, s_sub, f_snap, s_snap)


def _slice_norms(x: np.ndarray) -> np.ndarray:
    """Frobenius norm of each frontal slice, shape (S,)."""
    return np.sqrt(np.sum(np.abs(x) ** 2, axis=(0, 1)))


def _unwrap_slices(ang: np.ndarray) -> np.ndarray:
    """2-D phase unwrap per frontal slice: along each row first, then
    the first column's unwrapped values shift whole rows (2π jumps,
    threshold π)."""
    if ang.shape[1] > 1:
        u = np.unwrap(ang, axis=1)
    else:
        u = ang.copy()
    if ang.shape[0] > 1:
        col = np.unwrap(u[:, 0, :], axis=0)
        u = u + (col - u[:, 0, :])[:, None, :]
    return u


def amp_phase_tensors(c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-slice normalized amplitude and unwrapped phase of a complex
    tensor; zero-norm slices map to zero slices."""
    mag = np.abs(c)
    a_norm = _slice_norms(mag)
    a = mag / np.where(a_norm == 0.0, 1.0, a_norm)

    u = _unwrap_slices(np.angle(c))
    p_norm = _slice_norms(u)
    p = u / np.where(p_norm == 0.0, 1.0, p_norm)
    return a, p


def normalized_complex(
    c: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-slice Frobenius normalization of the complex tensor itself,
    returned as entrywise (real, imaginary, magnitude) parts."""
    norms = _slice_norms(c)
    ct = c / np.where(norms == 0.0, 1.0, norms)
    return ct.real.copy(), ct.imag.copy(), np.abs(ct)


def _tensor_seed(base_seed: int, slot: int) -> int:
    """Per-slot ALS seed: a fixed function of the config seed and the
    feature slot only, so features stay comparable across window ids
    and antenna truncations."""
    seq = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(slot,))
    return int(seq.generate_state(1)[0])


def phase_reference(g: np.ndarray) -> np.ndarray:
    """Rotate each (subcarrier, antenna) chain by the conjugate unit
    phase of its window mean.

    Absolute oscillator phase — the initial drift plus however much
    carrier-frequency offset accumulated before the window started — is
    arbitrary and, worse, encodes the window's position inside its
    recording; referencing every chain to its own mean cancels it while
    leaving all within-window dynamics (and chain magnitudes) intact.
    Zero-mean chains are left unrotated.
    """
    ref = np.mean(g, axis=0, keepdims=True)
    mag = np.abs(ref)
    unit = np.divide(
        ref, mag, out=np.ones_like(ref), where=mag > 0.0
    )
    return g * np.conj(unit)


def real_feature_tensors(g: np.ndarray) -> list[np.ndarray]:
    """The 31 real tensors of one window, in slot order."""
    g = phase_reference(g)
    tensors: list[np.ndarray] = [np.abs(g)]
    for corr in correlation_set(g).in_slot_order():
        a, p = amp_phase_tensors(corr)
        re, im, amp = normalized_complex(corr)
        tensors.extend((a, p, re, im, amp))
    return tensors


def extract_features(
    g: np.ndarray,
    als: AlsConfig,
    window_id: int = 0,
    label: Activity | None = None,
) -> FeatureSet:
    """CP-decompose the window's 31 real tensors into weight vectors.

    Each tensor is fitted at rank min(als.rank, rank_upper_bound(dims))
    and its sorted weights are zero-padded to als.rank.  Raises
    NumericError if any fit diverges (non-finite residual).
    """
    g = np.asarray(g)
    if g.ndim != 3:
        raise ValueError(f"expected a third-order window, got ndim={g.ndim}")
    degenerate = not np.any(g)
    lambdas = np.zeros((N_FEATURE_VECTORS, als.rank))
    for slot, tensor in enumerate(real_feature_tensors(g)):
        r_eff = min(als.rank, rank_upper_bound(tensor.shape))
        cfg = replace(als, rank=r_eff, seed=_tensor_seed(als.seed, slot))
        with warnings.catch_warnings():
            # Capping at the weak rank bound still allows rank > the
            # smallest dimension; that is expected here, not a mistake.
            warnings.filterwarnings(
                "ignore", message="rank .* exceeds the smallest dimension"
            )
            model = cp_als(tensor, cfg)
        if not np.all(np.isfinite(model.diagnostics.fit_errors)):
            raise NumericError(
                f"CP fit diverged on feature slot {slot} "
                f"({feature_names()[slot]})"
            )
        lambdas[slot, :r_eff] = sorted_weights(model)
    return FeatureSet(
        lambdas=lambdas, window_id=window_id, label=label, degenerate=degenerate
    )


def assemble_input(fs: FeatureSet, drop_largest: bool = True) -> np.ndarray:
    """Concatenate the 31 weight vectors into one input row, discarding
    each vector's largest (first) weight when drop_largest is set."""
    block = fs.lambdas[:, 1:] if drop_largest else fs.lambdas
    return block.reshape(-1).copy()


# ------------------------------------------------------------ persistence


def _label_int(label: Activity | None) -> int:
    return -1 if label is None else int(label)


def _label_from_int(value: int) -> Activity | None:
    return None if value == -1 else Activity(value)


def save_features_csv(path, feature_sets) -> None:
    """One row per window: window_id, label, then the 31·r_max weights
    in slot order."""
    feature_sets = list(feature_sets)
    if not feature_sets:
        raise ValueError("refusing to write an empty feature file")
    r_max = feature_sets[0].r_max
    header = ["window_id", "label"]
    for name in feature_names():
        header.extend(f"{name}[{j}]" for j in range(r_max))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for fs in feature_sets:
            if fs.r_max != r_max:
                raise ValueError("mixed r_max across feature sets")
            row = [fs.window_id, _label_int(fs.label)]
            row.extend(repr(float(x)) for x in fs.lambdas.reshape(-1))
            writer.writerow(row)


def load_features_csv(path) -> list[FeatureSet]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"{path}: cannot read feature file ({exc})") from exc
    if not header or (len(header) - 2) % N_FEATURE_VECTORS != 0:
        raise DataError(f"{path}: malformed feature header")
    r_max = (len(header) - 2) // N_FEATURE_VECTORS
    out = []
    for row in rows:
        if len(row) != len(header):
            raise DataError(f"{path}: ragged feature row")
        try:
            window_id = int(row[0])
            label = _label_from_int(int(row[1]))
            lambdas = np.array([float(x) for x in row[2:]]).reshape(
                N_FEATURE_VECTORS, r_max
            )
        except ValueError as exc:
            raise DataError(f"{path}: unparsable feature row ({exc})") from exc
        out.append(
            FeatureSet(
                lambdas=lambdas,
                window_id=window_id,
                label=label,
                degenerate=not np.any(lambdas),
            )
        )
    return out


def save_features_bin(path, feature_sets) -> None:
    """Compact binary twin of the CSV: little-endian float64 rows of
    (window_id, label, weights…), described by a JSON schema sidecar."""
    feature_sets = list(feature_sets)
    if not feature_sets:
        raise ValueError("refusing to write an empty feature file")
    r_max = feature_sets[0].r_max
    rows = np.empty(
        (len(feature_sets), 2 + N_FEATURE_VECTORS * r_max), dtype="<f8"
    )
    for i, fs in enumerate(feature_sets):
        rows[i, 0] = fs.window_id
        rows[i, 1] = _label_int(fs.label)
        rows[i, 2:] = fs.lambdas.reshape(-1)
    path = Path(path)
    path.write_bytes(rows.tobytes())
    schema = {
        "format": "mimosense-features",
        "version": 1,
        "rows": len(feature_sets),
        "r_max": r_max,
        "dtype": "<f8",
        "row_layout": ["window_id", "label"]
        + [f"{n}[0..{r_max - 1}]" for n in feature_names()],
    }
    path.with_suffix(".schema.json").write_text(json.dumps(schema, indent=1))


def load_features_bin(path) -> list[FeatureSet]:
    path = Path(path)
    try:
        schema = json.loads(path.with_suffix(".schema.json").read_text())
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: cannot read feature binary ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: corrupt feature schema ({exc})") from exc
    try:
        n_rows, r_max = int(schema["rows"]), int(schema["r_max"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: invalid feature schema ({exc})") from exc
    width = 2 + N_FEATURE_VECTORS * r_max
    if len(raw) != n_rows * width * 8:
        raise DataError(f"{path}: feature payload size mismatch")
    rows = np.frombuffer(raw, dtype="<f8").reshape(n_rows, width)
    out = []
    for row in rows:
        lambdas = row[2:].reshape(N_FEATURE_VECTORS, r_max).copy()
        out.append(
            FeatureSet(
                lambdas=lambdas,
                window_id=int(row[0]),
                label=_label_from_int(int(row[1])),
                degenerate=not np.any(lambdas),
            )
        )
    return out
