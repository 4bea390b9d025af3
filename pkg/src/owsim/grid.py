"""Structured grid geometry, static face transmissibility factors and
slab partitioning with one-layer halos.

Cells are indexed i-fastest: gid = i + nx*(j + ny*k). Depth is positive
downward; layer k=0 is the shallowest. Grids and partitions are immutable
after construction and safe to share between workers.
"""

from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    """Invalid grid geometry or partitioning request."""


@dataclass(frozen=True)
class StructuredGrid:
    """Cell-centered structured grid with per-axis sizes.

    dx/dy/dz are per-axis size arrays (length nx/ny/nz); permeability and
    porosity are per-cell arrays of length nx*ny*nz.
    """

    nx: int
    ny: int
    nz: int
    dx: np.ndarray
    dy: np.ndarray
    dz: np.ndarray
    top_depth: float
    kx: np.ndarray
    ky: np.ndarray
    kz: np.ndarray
    phi_ref: np.ndarray
    # derived, filled by build_grid
    volume: np.ndarray = field(default=None, repr=False)
    depth: np.ndarray = field(default=None, repr=False)

    @property
    def n_cells(self):
        return self.nx * self.ny * self.nz

    @property
    def shape(self):
        return (self.nx, self.ny, self.nz)

    def gid(self, i, j, k):
        return i + self.nx * (j + self.ny * k)

    def ijk(self, gid):
        i = gid % self.nx
        j = (gid // self.nx) % self.ny
        k = gid // (self.nx * self.ny)
        return i, j, k


def build_grid(geometry):
    """Construct a StructuredGrid from a parsed geometry mapping.

    `geometry` carries: nx, ny, nz, dx, dy, dz (scalar or per-axis
    sequences), top_depth, and per-cell (or broadcastable) kx, ky, kz,
    phi_ref. Cell volumes and center depths are computed here; center
    depths step by the mean of adjacent layer thicknesses so top_depth is
    the depth of the top-layer cell centers.
    """
    nx, ny, nz = int(geometry["nx"]), int(geometry["ny"]), int(geometry["nz"])
    if nx < 1 or ny < 1 or nz < 1:
        raise GridError(f"DIMENS must be >= 1, got {nx} {ny} {nz}")
    n = nx * ny * nz

    def axis_sizes(key, count):
        raw = np.atleast_1d(np.asarray(geometry[key], dtype=float))
        if raw.size == 1:
            raw = np.full(count, raw[0])
        if raw.size != count:
            raise GridError(f"{key}: expected 1 or {count} values, got {raw.size}")
        if np.any(raw <= 0.0):
            raise GridError(f"{key}: all cell sizes must be > 0")
        return raw

    def cell_field(key, count, positive=False, unit_interval=False):
        raw = np.atleast_1d(np.asarray(geometry[key], dtype=float))
        if raw.size == 1:
            raw = np.full(count, raw[0])
        elif raw.size == nz:
            # layered value: constant within each k-layer
            raw = np.repeat(raw, nx * ny)
        if raw.size != count:
            raise GridError(
                f"{key}: expected 1, {nz} (per layer) or {count} values, got {raw.size}"
            )
        if np.any(raw < 0.0):
            raise GridError(f"{key}: values must be >= 0")
        if positive and np.any(raw <= 0.0):
            raise GridError(f"{key}: values must be > 0")
        if unit_interval and np.any(raw > 1.0):
            raise GridError(f"{key}: values must be <= 1")
        return raw

    dx = axis_sizes("dx", nx)
    dy = axis_sizes("dy", ny)
    dz = axis_sizes("dz", nz)
    kx = cell_field("kx", n)
    ky = cell_field("ky", n)
    kz = cell_field("kz", n)
    phi_ref = cell_field("phi_ref", n, positive=True, unit_interval=True)

    top = float(geometry["top_depth"])

    # volumes and depths, i-fastest ordering
    vol3 = dx[:, None, None] * dy[None, :, None] * dz[None, None, :]
    volume = vol3.transpose(2, 1, 0).reshape(-1)

    layer_depth = np.empty(nz)
    layer_depth[0] = top
    for k in range(1, nz):
        layer_depth[k] = layer_depth[k - 1] + 0.5 * (dz[k - 1] + dz[k])
    depth = np.repeat(layer_depth, nx * ny)

    return StructuredGrid(
        nx=nx, ny=ny, nz=nz, dx=dx, dy=dy, dz=dz, top_depth=top,
        kx=kx, ky=ky, kz=kz, phi_ref=phi_ref, volume=volume, depth=depth,
    )


_AXIS_PERM = {"x": 0, "y": 1, "z": 2}


def face_geom_factor(grid, cell_a, cell_b, axis):
    """Static K*A/dd factor of the face between two adjacent cells (mD*ft).

    Harmonic combination of the two half-cell contributions,
    2 / (dd_a/(K_a*A) + dd_b/(K_b*A)); symmetric in (a, b). A zero
    permeability on either side seals the face (factor 0).
    """
    ia, ja, ka = grid.ijk(cell_a)
    ib, jb, kb = grid.ijk(cell_b)
    delta = (ib - ia, jb - ja, kb - ka)
    ax = _AXIS_PERM[axis]
    expect = tuple(1 if d == ax else 0 for d in range(3))
    neg = tuple(-v for v in expect)
    if delta == neg:
        return face_geom_factor(grid, cell_b, cell_a, axis)
    if delta != expect:
        raise GridError(
            f"cells {cell_a} and {cell_b} are not adjacent along axis {axis!r}"
        )
    if axis == "x":
        area = grid.dy[ja] * grid.dz[ka]
        dd_a, dd_b = grid.dx[ia], grid.dx[ib]
        k_a, k_b = grid.kx[cell_a], grid.kx[cell_b]
    elif axis == "y":
        area = grid.dx[ia] * grid.dz[ka]
        dd_a, dd_b = grid.dy[ja], grid.dy[jb]
        k_a, k_b = grid.ky[cell_a], grid.ky[cell_b]
    else:
        area = grid.dx[ia] * grid.dy[ja]
        dd_a, dd_b = grid.dz[ka], grid.dz[kb]
        k_a, k_b = grid.kz[cell_a], grid.kz[cell_b]
    if k_a <= 0.0 or k_b <= 0.0:
        return 0.0
    return 2.0 / (dd_a / (k_a * area) + dd_b / (k_b * area))


def face_table(grid):
    """All interior faces as flat arrays: (cell_lo, cell_hi, geom_factor).

    cell_lo < cell_hi always (the lower global index is the first cell of
    the pair). Faces are ordered x-axis first, then y, then z, each in
    ascending cell order; the ordering is part of the deterministic
    assembly contract.
    """
    nx, ny, nz = grid.shape
    lo_list, hi_list, gf_list = [], [], []

    ii, jj, kk = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz),
                             indexing="ij")

    def flat(i, j, k):
        return (i + nx * (j + ny * k)).ravel(order="F")

    # x faces
    if nx > 1:
        i, j, k = ii[:-1, :, :], jj[:-1, :, :], kk[:-1, :, :]
        lo = flat(i, j, k)
        hi = flat(i + 1, j, k)
        area = (grid.dy[j] * grid.dz[k]).ravel(order="F")
        ka_, kb_ = grid.kx[lo], grid.kx[hi]
        dda = grid.dx[i].ravel(order="F")
        ddb = grid.dx[(i + 1)].ravel(order="F")
        gf = _harmonic(ka_, kb_, dda, ddb, area)
        lo_list.append(lo); hi_list.append(hi); gf_list.append(gf)
    # y faces
    if ny > 1:
        i, j, k = ii[:, :-1, :], jj[:, :-1, :], kk[:, :-1, :]
        lo = flat(i, j, k)
        hi = flat(i, j + 1, k)
        area = (grid.dx[i] * grid.dz[k]).ravel(order="F")
        ka_, kb_ = grid.ky[lo], grid.ky[hi]
        dda = grid.dy[j].ravel(order="F")
        ddb = grid.dy[(j + 1)].ravel(order="F")
        gf = _harmonic(ka_, kb_, dda, ddb, area)
        lo_list.append(lo); hi_list.append(hi); gf_list.append(gf)
    # z faces
    if nz > 1:
        i, j, k = ii[:, :, :-1], jj[:, :, :-1], kk[:, :, :-1]
        lo = flat(i, j, k)
        hi = flat(i, j, k + 1)
        area = (grid.dx[i] * grid.dy[j]).ravel(order="F")
        ka_, kb_ = grid.kz[lo], grid.kz[hi]
        dda = grid.dz[k].ravel(order="F")
        ddb = grid.dz[(k + 1)].ravel(order="F")
        gf = _harmonic(ka_, kb_, dda, ddb, area)
        lo_list.append(lo); hi_list.append(hi); gf_list.append(gf)

    if not lo_list:
        return (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64),
                np.empty(0))
    lo = np.concatenate(lo_list)
    hi = np.concatenate(hi_list)
    gf = np.concatenate(gf_list)
    return lo.astype(np.int64), hi.astype(np.int64), gf


def _harmonic(k_a, k_b, dd_a, dd_b, area):
    denom_a = np.where(k_a > 0.0, dd_a / np.where(k_a > 0.0, k_a * area, 1.0),
                       np.inf)
    denom_b = np.where(k_b > 0.0, dd_b / np.where(k_b > 0.0, k_b * area, 1.0),
                       np.inf)
    denom = denom_a + denom_b
    with np.errstate(divide="ignore"):
        gf = np.where(np.isfinite(denom), 2.0 / denom, 0.0)
    return np.where((k_a <= 0.0) | (k_b <= 0.0), 0.0, gf)


@dataclass(frozen=True)
class Partition:
    """Slab decomposition of a grid into worker-owned cell sets.

    halo_cells[w] holds the one-layer ghosts: cells 6-adjacent to w's
    owned cells but owned elsewhere. local_cells[w] + halo_cells[w] is the
    read set of worker w; global_to_local[w] maps a global cell id to its
    index in that concatenated local ordering (owned first).
    """

    num_workers: int
    owner: np.ndarray
    local_cells: list
    halo_cells: list
    global_to_local: list

    def local_ids(self, w):
        """Owned-then-ghost global cell ids of worker w."""
        return np.concatenate([self.local_cells[w], self.halo_cells[w]])

    def local_view(self, w, cell_field):
        """Gather a globally stored per-cell field into worker w's local
        (owned + ghost) ordering. This gather is the halo-exchange step:
        ghost entries are refreshed from the owner's current values."""
        return cell_field[self.local_ids(w)]


def partition_grid(grid, num_workers):
    """Slab-decompose the grid along its longest axis.

    Owned-cell counts differ by at most one slab; halo lists hold the
    single plane of neighbor-owned cells on each side.
    """
    if num_workers < 1:
        raise GridError("num_workers must be >= 1")
    nx, ny, nz = grid.shape
    extents = {"x": nx, "y": ny, "z": nz}
    axis = max(("x", "y", "z"), key=lambda a: extents[a])
    n_axis = extents[axis]
    if num_workers > n_axis:
        raise GridError(
            f"cannot split {n_axis} cells along axis {axis!r} into "
            f"{num_workers} workers"
        )

    counts = np.full(num_workers, n_axis // num_workers)
    counts[: n_axis % num_workers] += 1
    starts = np.concatenate([[0], np.cumsum(counts)])

    axi = _AXIS_PERM[axis]
    coords = np.empty((grid.n_cells, 3), dtype=np.int64)
    gids = np.arange(grid.n_cells)
    coords[:, 0] = gids % nx
    coords[:, 1] = (gids // nx) % ny
    coords[:, 2] = gids // (nx * ny)
    slab_coord = coords[:, axi]

    owner = np.searchsorted(starts[1:], slab_coord, side="right")

    local_cells, halo_cells, g2l = [], [], []
    for w in range(num_workers):
        owned = np.nonzero(owner == w)[0]
        ghosts = []
        if w > 0:
            ghosts.append(np.nonzero(slab_coord == starts[w] - 1)[0])
        if w < num_workers - 1:
            ghosts.append(np.nonzero(slab_coord == starts[w + 1])[0])
        halo = (np.sort(np.concatenate(ghosts)) if ghosts
                else np.empty(0, dtype=np.int64))
        local_cells.append(owned)
        halo_cells.append(halo)
        mapping = {int(g): idx for idx, g in
                   enumerate(np.concatenate([owned, halo]))}
        g2l.append(mapping)

    return Partition(num_workers=num_workers, owner=owner,
                     local_cells=local_cells, halo_cells=halo_cells,
                     global_to_local=g2l)


def halo_exchange(partition, local_fields):
    """Fill every worker's ghost entries from the owner's current values.

    `local_fields[w]` is worker w's array over its owned-then-ghost local
    ordering. Owned entries are left untouched; ghost entries are
    overwritten in place. This is the synchronization point: all owners
    publish before any ghost is read.
    """
    for w in range(partition.num_workers):
        n_own = partition.local_cells[w].size
        for idx, g in enumerate(partition.halo_cells[w]):
            owner = partition.owner[g]
            pos = partition.global_to_local[owner][int(g)]
            local_fields[w][n_own + idx] = local_fields[owner][pos]
    return local_fields
