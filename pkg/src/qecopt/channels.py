"""Quantum channels in operator-sum (Kraus) form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import linalg
from .errors import ChannelError, DimensionError, NotUnitaryError
from .policy import DEFAULT_POLICY

CHANNEL_FORMAT = "qecopt-channel"
CHANNEL_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class QuantumChannel:
    """A completely positive map ``rho -> sum_k K_k rho K_k^H``.

    Kraus elements are stored as read-only ``dim_out x dim_in`` arrays.
    Trace preservation is not enforced on construction because ingested,
    rounded data violates it; use :meth:`check_tp` or :func:`project_to_tp`.
    """

    kraus: tuple[np.ndarray, ...]
    provenance: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        mats = []
        for k in self.kraus:
            k = np.array(k, dtype=complex)
            if k.ndim != 2:
                raise DimensionError(f"Kraus element must be a matrix, got shape {k.shape}")
            k.setflags(write=False)
            mats.append(k)
        if not mats:
            raise ChannelError("a channel needs at least one Kraus element")
        shape = mats[0].shape
        if any(k.shape != shape for k in mats):
            raise DimensionError("all Kraus elements must share one shape")
        object.__setattr__(self, "kraus", tuple(mats))

    @property
    def dim_in(self) -> int:
        return self.kraus[0].shape[1]

    @property
    def dim_out(self) -> int:
        return self.kraus[0].shape[0]

    def __len__(self) -> int:
        return len(self.kraus)

    def __iter__(self):
        return iter(self.kraus)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        return apply(self, rho)

    def gram(self) -> np.ndarray:
        """``sum_k K_k^H K_k``."""
        return sum(linalg.dag(k) @ k for k in self.kraus)

    def tp_residual(self) -> float:
        return float(np.max(np.abs(self.gram() - np.eye(self.dim_in))))

    def is_trace_preserving(self, tol: float = DEFAULT_POLICY.tp_tol) -> bool:
        return self.tp_residual() <= tol

    def check_tp(self, tol: float = DEFAULT_POLICY.tp_tol) -> "QuantumChannel":
        resid = self.tp_residual()
        if resid > tol:
            raise ChannelError(f"channel is not trace preserving: residual {resid:.3e} > {tol:.1e}")
        return self

    def choi(self) -> np.ndarray:
        """Choi matrix ``sum_ij |i><j| (x) E(|i><j|)``, used to compare channel actions."""
        n = self.dim_in
        out = np.zeros((n * self.dim_out, n * self.dim_out), dtype=complex)
        for i in range(n):
            for j in range(n):
                e = np.zeros((n, n), dtype=complex)
                e[i, j] = 1.0
                out += np.kron(e, apply(self, e))
        return out

    def to_dict(self) -> dict:
        return {
            "format": CHANNEL_FORMAT,
            "version": CHANNEL_FORMAT_VERSION,
            "dim_in": self.dim_in,
            "dim_out": self.dim_out,
            "kraus": [matrix_to_json(k) for k in self.kraus],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QuantumChannel":
        if data.get("format", CHANNEL_FORMAT) != CHANNEL_FORMAT:
            raise ChannelError(f"not a channel file: format={data.get('format')!r}")
        kraus = [matrix_from_json(k) for k in data["kraus"]]
        ch = cls(tuple(kraus), provenance=dict(data.get("provenance", {})))
        if (ch.dim_in, ch.dim_out) != (data.get("dim_in", ch.dim_in), data.get("dim_out", ch.dim_out)):
            raise DimensionError("declared dimensions disagree with Kraus shapes")
        return ch


def matrix_to_json(m: np.ndarray) -> list:
    """Nested list of ``[re, im]`` pairs."""
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def matrix_from_json(rows: list) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ChannelError("complex matrix entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def save_channel(ch: QuantumChannel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(ch.to_dict(), indent=1))


def load_channel(path: str | Path) -> QuantumChannel:
    return QuantumChannel.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- constructors


def identity_channel(n: int) -> QuantumChannel:
    return QuantumChannel((np.eye(n),))


def unitary_channel(u: np.ndarray) -> QuantumChannel:
    return QuantumChannel((np.asarray(u, dtype=complex),))


def validate_density(rho: np.ndarray, tol: float = DEFAULT_POLICY.reconstruction_tol) -> np.ndarray:
    """Raise ``ValueError`` unless ``rho`` is Hermitian, PSD and unit trace."""
    rho = np.asarray(rho, dtype=complex)
    if not linalg.is_hermitian(rho, tol):
        raise ValueError("density matrix is not Hermitian")
    w, _ = linalg.hermitian_eig(rho, tol)
    if w[-1] < -tol:
        raise ValueError(f"density matrix has negative eigenvalue {w[-1]:.3e}")
    if abs(np.trace(rho) - 1.0) > tol:
        raise ValueError(f"density matrix has trace {np.trace(rho).real:.12f}")
    return rho


def apply(ch: QuantumChannel, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (ch.dim_in, ch.dim_in):
        raise DimensionError(f"state of shape {rho.shape} does not match channel input {ch.dim_in}")
    k = np.array(ch.kraus)
    return np.einsum("kij,jl,kml->im", k, rho, k.conj())


def compose(outer: QuantumChannel, inner: QuantumChannel) -> QuantumChannel:
    """The channel ``outer o inner`` with Kraus set ``{O_i I_j}``."""
    if inner.dim_out != outer.dim_in:
        raise DimensionError(f"cannot compose: inner outputs {inner.dim_out}, outer expects {outer.dim_in}")
    return QuantumChannel(tuple(o @ i for o in outer.kraus for i in inner.kraus))


def compose_all(channels: Sequence[QuantumChannel]) -> QuantumChannel:
    """Compose right to left: ``compose_all([R, E, C])`` is ``R o E o C``."""
    out = channels[-1]
    for ch in reversed(channels[:-1]):
        out = compose(ch, out)
    return out


def from_unitary_bath(
    u: np.ndarray,
    dim_sys: int,
    dim_bath: int,
    bath_state_index: int = 0,
    tol: float = DEFAULT_POLICY.unitary_tol,
) -> QuantumChannel:
    """Kraus form of ``rho -> Tr_B U (rho (x) |b><b|) U^H``.

    The joint space is ordered system-then-bath.  Element ``e`` is
    ``(I (x) <e|) U (I (x) |b>)``, so the channel has ``dim_bath`` elements.
    """
    u = np.asarray(u, dtype=complex)
    n = dim_sys * dim_bath
    if u.shape != (n, n):
        raise DimensionError(f"unitary of shape {u.shape} does not act on {dim_sys} x {dim_bath}")
    if np.max(np.abs(linalg.dag(u) @ u - np.eye(n))) > tol:
        raise NotUnitaryError("bath coupling matrix is not unitary")
    if not 0 <= bath_state_index < dim_bath:
        raise ValueError(f"bath_state_index {bath_state_index} outside 0..{dim_bath - 1}")
    blocks = u.reshape(dim_sys, dim_bath, dim_sys, dim_bath)
    kraus = tuple(blocks[:, e, :, bath_state_index] for e in range(dim_bath))
    return QuantumChannel(kraus)


def random_hermitian(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (a + linalg.dag(a))


def random_error_channel(seed: int, delta_e: float, dim_sys: int = 4, dim_bath: int = 2) -> QuantumChannel:
    """Error channel from a random system-bath Hamiltonian of spectral norm ``delta_e``.

    Draws ``H`` (Gaussian real and imaginary parts, Hermitian part taken),
    rescales it to ``||H|| = delta_e`` and traces the bath out of
    ``exp(-i H)`` with the bath prepared in ``|0>``.
    """
    if delta_e <= 0:
        raise ValueError("delta_e must be positive")
    rng = np.random.default_rng(seed)
    h = random_hermitian(rng, dim_sys * dim_bath)
    h *= delta_e / linalg.spectral_norm(h)
    ch = from_unitary_bath(linalg.expm_hermitian(h), dim_sys, dim_bath, 0)
    return QuantumChannel(
        ch.kraus,
        provenance={"generator": "random_error_channel", "seed": seed, "delta_e": delta_e,
                    "dim_sys": dim_sys, "dim_bath": dim_bath},
    )


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    """Haar-random unitary (QR of a complex Gaussian matrix with phase fix)."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_channel(rng: np.random.Generator, dim_in: int, dim_out: int | None = None, n_kraus: int = 2) -> QuantumChannel:
    """Random CPTP map obtained from a random isometry ``dim_in -> dim_out * n_kraus``."""
    dim_out = dim_in if dim_out is None else dim_out
    if dim_out * n_kraus < dim_in:
        raise DimensionError(f"{n_kraus} Kraus elements of shape {dim_out}x{dim_in} cannot be trace preserving")
    v = random_unitary(rng, dim_out * n_kraus)[:, :dim_in]
    return QuantumChannel(tuple(v[k * dim_out:(k + 1) * dim_out] for k in range(n_kraus)))


def random_density(rng: np.random.Generator, n: int, rank: int | None = None) -> np.ndarray:
    rank = n if rank is None else rank
    g = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    rho = g @ linalg.dag(g)
    return rho / np.trace(rho).real


def project_to_tp(ch: QuantumChannel) -> QuantumChannel:
    """Nearest-form trace-preserving rescaling ``K_k -> K_k G^{-1/2}``, ``G = sum K^H K``.

    Raises:
        ChannelError: if ``G`` is singular.
    """
    try:
        g_inv_sqrt = linalg.psd_power(linalg.hermitian_part(ch.gram()), -0.5, floor=1e-14)
    except np.linalg.LinAlgError as exc:
        raise ChannelError(f"cannot normalise channel: {exc}") from exc
    prov = dict(ch.provenance)
    prov["projected_to_tp"] = True
    prov["raw_tp_residual"] = ch.tp_residual()
    return QuantumChannel(tuple(k @ g_inv_sqrt for k in ch.kraus), provenance=prov)


# ---------------------------------------------------------------- shipped data

PAPER_CHANNELS = ("E_a", "E_b")


def _data_text(name: str) -> str:
    return resources.files("qecopt").joinpath("data").joinpath(name).read_text()


def paper_error_channel(name: str, project: bool = True) -> QuantumChannel:
    """The printed 3-decimal error channels ``E_a`` / ``E_b``.

    With ``project=False`` the rounded data is returned as printed (apart
    from the documented sign correction in ``E_b``); otherwise it is first
    passed through :func:`project_to_tp`.
    """
    files = {"E_a": "error_a.json", "E_b": "error_b.json"}
    if name not in files:
        raise KeyError(f"unknown paper channel {name!r}; choose from {PAPER_CHANNELS}")
    ch = QuantumChannel.from_dict(json.loads(_data_text(files[name])))
    return project_to_tp(ch) if project else ch


def paper_code() -> dict[str, np.ndarray]:
    """Printed 3-decimal optimized code for ``E_a``: keys ``C1``, ``R1``, ``R2``."""
    data = json.loads(_data_text("code_a100.json"))
    return {k: matrix_from_json(v) for k, v in data["matrices"].items()}
