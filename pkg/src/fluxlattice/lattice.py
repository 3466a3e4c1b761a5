"""Rhombic lattice topology, signed couplings, and the single-excitation Hamiltonian.

A lattice of ``l`` corner-sharing plaquettes has ``L = 3l + 1`` sites on three
rails: the spine sites ``(A, j)`` for ``j = 1..l+1`` and the arm sites
``(up, j)``, ``(dn, j)`` for ``j = 1..l``.  Each plaquette carries four bonds
whose coupling signs encode a synthetic flux of 0 or pi.  Everything here is
immutable after construction; operations are pure functions.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError

PI = math.pi

#: Tolerance for the Hermiticity check, relative to the largest entry.
HERMITICITY_TOL = 1e-12


class Rail(enum.Enum):
    """The three site rails of the rhombic chain."""

    A = "A"
    UP = "up"
    DOWN = "dn"


_RAIL_ALIASES = {
    "a": Rail.A,
    "up": Rail.UP,
    "u": Rail.UP,
    "↑": Rail.UP,
    "down": Rail.DOWN,
    "dn": Rail.DOWN,
    "d": Rail.DOWN,
    "↓": Rail.DOWN,
}


@dataclass(frozen=True)
class SiteId:
    """A single qubit site, addressed by rail and cell index (1-based)."""

    rail: Rail
    cell: int

    def __post_init__(self):
        if not isinstance(self.rail, Rail):
            raise ConfigError(f"rail must be a Rail, got {self.rail!r}")
        if self.cell < 1:
            raise ConfigError(f"cell index must be >= 1, got {self.cell}")

    @property
    def label(self) -> str:
        return f"{self.rail.value},{self.cell}"

    @classmethod
    def parse(cls, text: str) -> "SiteId":
        """Parse labels such as ``"A,2"``, ``"up,1"`` or ``"dn,1"``."""
        parts = text.replace(" ", "").split(",")
        if len(parts) != 2:
            raise ConfigError(f"cannot parse site label {text!r}")
        rail = _RAIL_ALIASES.get(parts[0].lower())
        if rail is None:
            raise ConfigError(f"unknown rail {parts[0]!r} in site label {text!r}")
        try:
            cell = int(parts[1])
        except ValueError:
            raise ConfigError(f"bad cell index in site label {text!r}") from None
        return cls(rail, cell)

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.label


def as_site(site: "SiteId | str") -> SiteId:
    return site if isinstance(site, SiteId) else SiteId.parse(site)


def num_sites(l: int) -> int:
    return 3 * l + 1


def site_index(site: SiteId, l: int) -> int:
    """Flat index in the documented order (A,1), (up,1), (dn,1), (A,2), ...

    The A rail runs 1..l+1, the arm rails 1..l.
    """
    if site.rail is Rail.A:
        if site.cell > l + 1:
            raise ConfigError(f"site {site.label} out of range for l={l}")
        return 3 * (site.cell - 1)
    if site.cell > l:
        raise ConfigError(f"site {site.label} out of range for l={l}")
    offset = 1 if site.rail is Rail.UP else 2
    return 3 * (site.cell - 1) + offset


def all_sites(l: int) -> tuple[SiteId, ...]:
    """All sites in flat-index order."""
    sites: list[SiteId] = []
    for j in range(1, l + 1):
        sites.append(SiteId(Rail.A, j))
        sites.append(SiteId(Rail.UP, j))
        sites.append(SiteId(Rail.DOWN, j))
    sites.append(SiteId(Rail.A, l + 1))
    return tuple(sites)


def site_labels(l: int) -> tuple[str, ...]:
    return tuple(s.label for s in all_sites(l))


class BondSign(enum.Enum):
    """Sign of the physical coupling on a bond.

    ``MINUS`` is a negative coupling (matrix element ``-J``) and carries a pi
    hopping phase; ``PLUS`` is a positive coupling (matrix element ``+J``).
    Only these two values are representable, so every plaquette flux is 0 or pi.
    """

    PLUS = 1
    MINUS = -1

    @property
    def phase(self) -> float:
        """Hopping phase: 0 for PLUS, pi for MINUS."""
        return 0.0 if self is BondSign.PLUS else PI


@dataclass(frozen=True)
class Bond:
    """A signed nearest-neighbour bond between an A site and an arm site."""

    a_site: SiteId
    arm_site: SiteId
    sign: BondSign = BondSign.MINUS
    magnitude_scale: float = 1.0

    def __post_init__(self):
        if self.a_site.rail is not Rail.A or self.arm_site.rail is Rail.A:
            raise ConfigError(
                f"bond must connect an A site to an arm site, got "
                f"{self.a_site.label} -- {self.arm_site.label}"
            )
        # Rhombic NN structure: A_j or A_{j+1} connects to up_j / dn_j.
        if self.a_site.cell not in (self.arm_site.cell, self.arm_site.cell + 1):
            raise ConfigError(
                f"bond {self.a_site.label} -- {self.arm_site.label} is not "
                "nearest-neighbour on the rhombic chain"
            )
        if self.magnitude_scale < 0:
            raise ConfigError("magnitude_scale must be nonnegative")

    @property
    def plaquette(self) -> int:
        return self.arm_site.cell


def _plaquette_bond_sites(j: int) -> tuple[tuple[SiteId, SiteId], ...]:
    up, dn = SiteId(Rail.UP, j), SiteId(Rail.DOWN, j)
    return (
        (SiteId(Rail.A, j), up),
        (SiteId(Rail.A, j), dn),
        (SiteId(Rail.A, j + 1), up),
        (SiteId(Rail.A, j + 1), dn),
    )


@dataclass(frozen=True, eq=False)
class RhombicLattice:
    """Immutable description of the signed-coupling rhombic chain.

    Attributes
    ----------
    l : number of plaquettes (>= 1).
    bonds : exactly four signed bonds per plaquette.
    detunings : on-site detuning for every site, in the same units as ``J``.
    J : global coupling magnitude; each bond contributes ``J * sign * scale``.
    """

    l: int
    bonds: tuple[Bond, ...]
    detunings: Mapping[SiteId, float] = field(default_factory=dict)
    J: float = 1.0

    def __post_init__(self):
        if self.l < 1:
            raise ConfigError(f"need at least one plaquette, got l={self.l}")
        if self.J < 0:
            raise ConfigError("J must be nonnegative")
        object.__setattr__(self, "bonds", tuple(self.bonds))
        by_plaquette: dict[int, dict[tuple[SiteId, SiteId], Bond]] = {}
        for bond in self.bonds:
            j = bond.plaquette
            if j > self.l:
                raise ConfigError(f"bond in plaquette {j} but lattice has l={self.l}")
            slot = by_plaquette.setdefault(j, {})
            key = (bond.a_site, bond.arm_site)
            if key in slot:
                raise ConfigError(f"duplicate bond {key[0].label} -- {key[1].label}")
            slot[key] = bond
        for j in range(1, self.l + 1):
            expected = _plaquette_bond_sites(j)
            present = by_plaquette.get(j, {})
            if set(present) != set(expected):
                raise ConfigError(f"plaquette {j} must carry exactly its 4 NN bonds")
        full = {site: 0.0 for site in all_sites(self.l)}
        for site, value in dict(self.detunings).items():
            site = as_site(site)
            if site not in full:
                raise ConfigError(f"detuning given for unknown site {site.label}")
            full[site] = float(value)
        object.__setattr__(self, "detunings", MappingProxyType(full))

    @property
    def num_sites(self) -> int:
        return num_sites(self.l)

    @property
    def sites(self) -> tuple[SiteId, ...]:
        return all_sites(self.l)

    def site_index(self, site: SiteId | str) -> int:
        return site_index(as_site(site), self.l)

    def detuning_vector(self) -> np.ndarray:
        return np.array([self.detunings[s] for s in self.sites], dtype=float)

    def plaquette_bonds(self, j: int) -> tuple[Bond, ...]:
        if not 1 <= j <= self.l:
            raise ConfigError(f"plaquette index {j} out of range 1..{self.l}")
        return tuple(b for b in self.bonds if b.plaquette == j)

    def with_detunings(self, detunings: Mapping[SiteId | str, float]) -> "RhombicLattice":
        """A copy with the detuning map replaced."""
        return RhombicLattice(self.l, self.bonds, dict(detunings), self.J)


def _normalize_flux(value: float) -> float:
    if abs(value) <= 1e-12:
        return 0.0
    if abs(value - PI) <= 1e-12:
        return PI
    raise ConfigError(f"plaquette flux must be 0 or pi, got {value!r}")


def build_lattice(
    l: int,
    plaquette_fluxes: Iterable[float],
    detunings: Mapping[SiteId | str, float] | None = None,
    J: float = 1.0,
) -> RhombicLattice:
    """Build a lattice with the requested flux through every plaquette.

    The default gauge makes all couplings negative (sign MINUS); a pi-flux
    plaquette flips the single bond ``A_{j+1} -- dn_j`` to positive, which is
    the one bond the Hamiltonian distinguishes.  Any other sign placement with
    the same fluxes is gauge-equivalent (see ``apply_site_gauge``).
    """
    fluxes = [_normalize_flux(f) for f in plaquette_fluxes]
    if len(fluxes) != l:
        raise ConfigError(f"expected {l} plaquette fluxes, got {len(fluxes)}")
    bonds: list[Bond] = []
    for j, flux in enumerate(fluxes, start=1):
        flipped = (SiteId(Rail.A, j + 1), SiteId(Rail.DOWN, j)) if flux == PI else None
        for a_site, arm_site in _plaquette_bond_sites(j):
            sign = BondSign.PLUS if (a_site, arm_site) == flipped else BondSign.MINUS
            bonds.append(Bond(a_site, arm_site, sign))
    return RhombicLattice(l, tuple(bonds), dict(detunings or {}), J)


def plaquette_flux(lattice: RhombicLattice, j: int) -> float:
    """Sum of the four bond phases around plaquette ``j``, mod 2*pi (0 or pi)."""
    n_minus = sum(1 for b in lattice.plaquette_bonds(j) if b.sign is BondSign.MINUS)
    return PI * (n_minus % 2)


def plaquette_fluxes(lattice: RhombicLattice) -> tuple[float, ...]:
    return tuple(plaquette_flux(lattice, j) for j in range(1, lattice.l + 1))


def uniform_flux(lattice: RhombicLattice) -> float:
    """The common plaquette flux, or raise if the fluxes are mixed."""
    fluxes = set(plaquette_fluxes(lattice))
    if len(fluxes) != 1:
        raise ConfigError("lattice has mixed plaquette fluxes")
    return fluxes.pop()


def apply_site_gauge(
    lattice: RhombicLattice, site_signs: Mapping[SiteId | str, int]
) -> RhombicLattice:
    """Flip bond signs by a per-site gauge transformation (signs +1/-1).

    Plaquette fluxes are invariant under this map, and so are all populations
    for initial states localized on a single site.
    """
    signs = {as_site(s): int(v) for s, v in site_signs.items()}
    if any(v not in (-1, 1) for v in signs.values()):
        raise ConfigError("gauge signs must be +1 or -1")

    def flip(bond: Bond) -> Bond:
        s = signs.get(bond.a_site, 1) * signs.get(bond.arm_site, 1)
        sign = bond.sign if s == 1 else (
            BondSign.PLUS if bond.sign is BondSign.MINUS else BondSign.MINUS
        )
        return Bond(bond.a_site, bond.arm_site, sign, bond.magnitude_scale)

    return RhombicLattice(
        lattice.l, tuple(flip(b) for b in lattice.bonds), dict(lattice.detunings), lattice.J
    )


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """A dense Hermitian matrix with its Hermiticity validated on construction."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ConfigError(f"operator must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m.view(float))):
            raise ConfigError("operator has non-finite entries")
        scale = max(np.abs(m).max(), 1.0)
        if np.abs(m - m.conj().T).max() > HERMITICITY_TOL * scale:
            raise ConfigError("matrix is not Hermitian within tolerance")
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (ascending) and the matrix of eigenvectors as columns."""
        return np.linalg.eigh(self.matrix)


def hamiltonian_single_excitation(lattice: RhombicLattice) -> HermitianOperator:
    """The L x L Hamiltonian on the single-excitation states, vacuum omitted.

    Diagonal entries are the site detunings; each bond contributes the signed
    hopping ``J * sign * magnitude_scale`` between its two sites.
    """
    n = lattice.num_sites
    h = np.zeros((n, n), dtype=complex)
    np.fill_diagonal(h, lattice.detuning_vector())
    for bond in lattice.bonds:
        i = lattice.site_index(bond.a_site)
        k = lattice.site_index(bond.arm_site)
        t = lattice.J * bond.sign.value * bond.magnitude_scale
        h[i, k] += t
        h[k, i] += t
    return HermitianOperator(h)


# ---------------------------------------------------------------------------
# Lattice definition files (JSON, schema 1)
# ---------------------------------------------------------------------------

_FLUX_TOKENS = {"0": 0.0, "0.0": 0.0, "pi": PI, "PI": PI}


def _parse_flux_token(value) -> float:
    if isinstance(value, str):
        if value in _FLUX_TOKENS:
            return _FLUX_TOKENS[value]
        raise ConfigError(f"flux token must be 0 or 'pi', got {value!r}")
    return _normalize_flux(float(value))


@dataclass(frozen=True)
class LatticeConfig:
    """A lattice plus the device-unit metadata carried by its definition file."""

    lattice: RhombicLattice
    J_MHz: float | None = None
    dephasing_over_J: Mapping[SiteId, float] | None = None

    def config_hash(self) -> str:
        import hashlib

        return hashlib.sha256(
            json.dumps(lattice_to_dict(self), sort_keys=True).encode()
        ).hexdigest()


def lattice_to_dict(config: LatticeConfig) -> dict:
    lattice = config.lattice
    doc: dict = {
        "schema": 1,
        "l": lattice.l,
        "fluxes": ["pi" if f == PI else 0 for f in plaquette_fluxes(lattice)],
        "detunings": {
            s.label: lattice.detunings[s] for s in lattice.sites if lattice.detunings[s] != 0.0
        },
    }
    if config.J_MHz is not None:
        doc["J_MHz"] = config.J_MHz
        doc["detunings"] = {
            s.label: lattice.detunings[s] * config.J_MHz
            for s in lattice.sites
            if lattice.detunings[s] != 0.0
        }
    default = build_lattice(lattice.l, plaquette_fluxes(lattice))
    overrides = [
        [b.a_site.label, b.arm_site.label, "plus" if b.sign is BondSign.PLUS else "minus"]
        for b, d in zip(sorted(lattice.bonds, key=lambda b: (b.plaquette, b.a_site.cell, b.arm_site.rail.value)),
                        sorted(default.bonds, key=lambda b: (b.plaquette, b.a_site.cell, b.arm_site.rail.value)))
        if b.sign is not d.sign
    ]
    if overrides:
        doc["gauge"] = overrides
    if config.dephasing_over_J:
        doc["dephasing_over_J"] = {s.label: g for s, g in config.dephasing_over_J.items()}
    return doc


def lattice_from_dict(doc: Mapping) -> LatticeConfig:
    if doc.get("schema", 1) != 1:
        raise ConfigError(f"unsupported lattice schema {doc.get('schema')!r}")
    try:
        l = int(doc["l"])
        fluxes = [_parse_flux_token(f) for f in doc["fluxes"]]
    except KeyError as missing:
        raise ConfigError(f"lattice file missing field {missing}") from None
    j_mhz = doc.get("J_MHz")
    detunings_raw = {SiteId.parse(k): float(v) for k, v in doc.get("detunings", {}).items()}
    if j_mhz is not None:
        if j_mhz <= 0:
            raise ConfigError("J_MHz must be positive")
        detunings = {s: v / j_mhz for s, v in detunings_raw.items()}
    else:
        detunings = detunings_raw
    lattice = build_lattice(l, fluxes, detunings, J=1.0)
    for a_label, arm_label, sign_name in doc.get("gauge", []):
        sign = {"plus": BondSign.PLUS, "minus": BondSign.MINUS}.get(sign_name)
        if sign is None:
            raise ConfigError(f"gauge sign must be 'plus' or 'minus', got {sign_name!r}")
        a, arm = SiteId.parse(a_label), SiteId.parse(arm_label)
        bonds = tuple(
            Bond(b.a_site, b.arm_site, sign, b.magnitude_scale)
            if (b.a_site, b.arm_site) == (a, arm)
            else b
            for b in lattice.bonds
        )
        lattice = RhombicLattice(l, bonds, dict(lattice.detunings), lattice.J)
    dephasing = None
    if "dephasing_over_J" in doc:
        dephasing = {SiteId.parse(k): float(v) for k, v in doc["dephasing_over_J"].items()}
    elif "dephasing_us" in doc:
        if j_mhz is None:
            raise ConfigError("dephasing_us requires J_MHz to fix the time unit")
        entry = doc["dephasing_us"]
        times = (
            {SiteId.parse(k): float(v) for k, v in entry.items()}
            if isinstance(entry, Mapping)
            else {s: float(entry) for s in lattice.sites}
        )
        # Gamma/J = 1 / (T_phi[us] * 2*pi * J_MHz): J_MHz is a cyclic frequency.
        dephasing = {s: 1.0 / (t * 2 * PI * j_mhz) for s, t in times.items() if t > 0}
    if dephasing is not None and any(g < 0 for g in dephasing.values()):
        raise ConfigError("dephasing rates must be nonnegative")
    return LatticeConfig(lattice, j_mhz, dephasing)


def load_lattice(path: str | Path) -> LatticeConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"lattice file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"lattice file is not valid JSON: {exc}") from None
    return lattice_from_dict(doc)


def save_lattice(config: LatticeConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(lattice_to_dict(config), indent=2, sort_keys=True) + "\n")
