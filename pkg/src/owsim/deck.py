"""Plain-text keyword deck parsing.

The format is a minimal ECLIPSE-flavored sectioned text file: a keyword
line opens a section, the following tokens (across any number of lines)
belong to it, and a lone '/' closes it; row-structured sections (SWOF,
WELSPECS, COMPDAT, WCON*, SCHEDULE) close each row with '/' and the
section with a final lone '/'. '--' starts a comment. All quantities are
field units. PERMX/PERMY/PERMZ and PORO accept a scalar, one value per
z-layer, a full per-cell list (i-fastest), or 'FILE <path>' pointing at a
whitespace-separated per-cell property file.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import wells as wl
from .grid import build_grid
from .props import FluidSystem, PhasePvt, RockModel, SatFunctionTable


class DeckError(ValueError):
    """Malformed deck; the message carries the offending line number."""


_REQUIRED = ("DIMENS", "DX", "DY", "DZ", "TOPS", "PERMX", "PERMY", "PERMZ",
             "PORO", "ROCK", "PVTO", "PVTW", "SWOF", "EQUIL", "ENDTIME")

_ROW_SECTIONS = {"SWOF", "WELSPECS", "COMPDAT", "WCONINJE", "WCONPROD",
                 "SCHEDULE", "SOLVER"}

_KNOWN = set(_REQUIRED) | _ROW_SECTIONS | {"GASDEN", "REPORT", "TITLE"}


@dataclass
class Deck:
    """Parsed simulation deck."""

    grid: object
    fluids: FluidSystem
    wells: tuple
    equil: tuple                 # (p_ref, z_ref, z_woc)
    end_time: float
    schedule_rows: int
    report_times: tuple = ()
    solver_options: dict = field(default_factory=dict)
    warnings: tuple = ()
    title: str = ""


def _tokenize(text):
    """Yield (line_number, [tokens]) with comments stripped."""
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("--", 1)[0].strip()
        if not line:
            continue
        yield ln, line.split()


def _collect_sections(text):
    """Split the deck into {keyword: (line, payload)} where payload is a
    flat token list for simple sections and a list of token rows for
    row-structured ones."""
    sections = {}
    order = []
    current = None
    for ln, tokens in _tokenize(text):
        if current is None:
            key = tokens[0].upper()
            current = (key, ln, [])
            tokens = tokens[1:]
            if not tokens:
                continue
        key, start_ln, rows = current
        row = []
        closed = False
        for tok in tokens:
            if tok == "/":
                if key in _ROW_SECTIONS:
                    if row:
                        rows.append((ln, row))
                        row = []
                    else:
                        closed = True
                else:
                    rows.append((ln, row))
                    closed = True
                break
            row.append(tok)
        if row and not closed and key in _ROW_SECTIONS:
            # a row crossing a line boundary is not supported; treat the
            # line as one row missing its terminator
            raise DeckError(f"line {ln}: row in {key} must end with '/'")
        if row and not closed:
            rows.append((ln, row))
            row = []
        if closed:
            if key in sections:
                raise DeckError(f"line {start_ln}: duplicate section {key}")
            sections[key] = (start_ln, rows)
            order.append(key)
            current = None
        else:
            current = (key, start_ln, rows)
    if current is not None:
        key, start_ln, rows = current
        if key in _ROW_SECTIONS or not rows:
            raise DeckError(f"line {start_ln}: section {key} not closed "
                            f"with '/'")
        sections[key] = (start_ln, rows)
        order.append(key)
    return sections, order


def _floats(key, ln_rows, expect=None):
    ln = ln_rows[0]
    flat = []
    for row_ln, row in ln_rows[1]:
        for tok in row:
            try:
                flat.append(float(tok))
            except ValueError:
                raise DeckError(
                    f"line {row_ln}: bad numeric value {tok!r} in {key}")
    if expect is not None and len(flat) != expect:
        raise DeckError(
            f"line {ln}: {key} expects {expect} values, got {len(flat)}")
    return flat


def parse_deck(text, base_dir="."):
    """Parse deck text into a Deck; property files resolve against
    base_dir."""
    sections, _ = _collect_sections(text)
    warnings = []

    for key in sections:
        if key not in _KNOWN:
            ln = sections[key][0]
            warnings.append(f"line {ln}: unknown keyword {key} ignored")
    for key in _REQUIRED:
        if key not in sections:
            raise DeckError(f"missing {key}")

    dims = _floats("DIMENS", sections["DIMENS"], expect=3)
    nx, ny, nz = (int(v) for v in dims)
    n = nx * ny * nz

    def prop_values(key):
        ln, rows = sections[key]
        flat = [tok for _, row in rows for tok in row]
        if flat and flat[0].upper() == "FILE":
            if len(flat) != 2:
                raise DeckError(f"line {ln}: {key} FILE expects one path")
            path = os.path.join(base_dir, flat[1])
            try:
                vals = np.loadtxt(path).ravel()
            except OSError as exc:
                raise DeckError(f"line {ln}: {key} file {path!r}: {exc}")
            return vals
        return np.array(_floats(key, sections[key]), dtype=float)

    geometry = {
        "nx": nx, "ny": ny, "nz": nz,
        "dx": _floats("DX", sections["DX"]),
        "dy": _floats("DY", sections["DY"]),
        "dz": _floats("DZ", sections["DZ"]),
        "top_depth": _floats("TOPS", sections["TOPS"], expect=1)[0],
        "kx": prop_values("PERMX"),
        "ky": prop_values("PERMY"),
        "kz": prop_values("PERMZ"),
        "phi_ref": prop_values("PORO"),
    }
    try:
        grid = build_grid(geometry)
    except ValueError as exc:
        raise DeckError(f"line {sections['DIMENS'][0]}: {exc}")

    rock_vals = _floats("ROCK", sections["ROCK"], expect=2)
    rock = RockModel(c_r=rock_vals[0], p_r=rock_vals[1])

    def pvt(key):
        vals = _floats(key, sections[key], expect=5)
        return PhasePvt(rho_ref=vals[0], p_ref=vals[1], c_comp=vals[2],
                        mu_ref=vals[3], c_mu=vals[4])

    oil = pvt("PVTO")
    water = pvt("PVTW")

    ln_swof, swof_rows = sections["SWOF"]
    table_rows = []
    for row_ln, row in swof_rows:
        if len(row) != 4:
            raise DeckError(
                f"line {row_ln}: SWOF rows need 4 columns (sw krw kro pc)")
        try:
            table_rows.append([float(t) for t in row])
        except ValueError:
            raise DeckError(f"line {row_ln}: bad numeric value in SWOF")
    if len(table_rows) < 2:
        raise DeckError(f"line {ln_swof}: SWOF needs at least two rows")
    cols = np.array(table_rows).T
    try:
        sat_table = SatFunctionTable(sw_nodes=cols[0], krw_nodes=cols[1],
                                     kro_nodes=cols[2], pc_nodes=cols[3])
    except ValueError as exc:
        raise DeckError(f"line {ln_swof}: {exc}")

    if "GASDEN" in sections:
        gas = _floats("GASDEN", sections["GASDEN"], expect=1)[0]
        warnings.append(
            f"gas density {gas} lbm/ft3 parsed and ignored (two-phase "
            f"oil-water model)")

    equil_vals = _floats("EQUIL", sections["EQUIL"], expect=3)
    equil = (equil_vals[0], equil_vals[1], equil_vals[2])

    end_time = _floats("ENDTIME", sections["ENDTIME"], expect=1)[0]
    if end_time < 0:
        raise DeckError("ENDTIME must be >= 0")

    report_times = ()
    if "REPORT" in sections:
        report_times = tuple(sorted(_floats("REPORT", sections["REPORT"])))

    solver_options = {}
    if "SOLVER" in sections:
        for row_ln, row in sections["SOLVER"][1]:
            if len(row) != 2:
                raise DeckError(
                    f"line {row_ln}: SOLVER rows are 'KEY value'")
            solver_options[row[0].upper()] = row[1]

    title = ""
    if "TITLE" in sections:
        title = " ".join(tok for _, row in sections["TITLE"][1]
                         for tok in row)

    wells, schedule_rows = _parse_wells(sections, grid, warnings)

    fluids = FluidSystem(rock=rock, oil=oil, water=water,
                         sat_table=sat_table)
    return Deck(grid=grid, fluids=fluids, wells=wells, equil=equil,
                end_time=end_time, schedule_rows=schedule_rows,
                report_times=report_times, solver_options=solver_options,
                warnings=tuple(warnings), title=title)


_SCHED_WORDS = {"SHUTIN", "STOP", "UNCHANGED"}
_MODE_WORDS = {"BHP", "ORAT", "WRAT", "LRAT"}


def _parse_wells(sections, grid, warnings):
    if "WELSPECS" not in sections:
        if "COMPDAT" in sections or "SCHEDULE" in sections:
            raise DeckError("COMPDAT/SCHEDULE present without WELSPECS")
        return (), 0

    specs = []           # (name, injector, ref_depth)
    names = {}
    for row_ln, row in sections["WELSPECS"][1]:
        if len(row) != 3:
            raise DeckError(
                f"line {row_ln}: WELSPECS rows are 'name INJ|PROD ref_depth'")
        name, kind, depth = row[0], row[1].upper(), row[2]
        if kind not in ("INJ", "PROD"):
            raise DeckError(f"line {row_ln}: well type must be INJ or PROD")
        if name in names:
            raise DeckError(f"line {row_ln}: duplicate well {name!r}")
        try:
            depth = float(depth)
        except ValueError:
            raise DeckError(f"line {row_ln}: bad reference depth {depth!r}")
        names[name] = len(specs)
        specs.append([name, kind == "INJ", depth, [], None, None])
        # fields: name, injector, ref_depth, perfs, initial control, radius

    if "COMPDAT" not in sections:
        raise DeckError("WELSPECS present without COMPDAT")
    for row_ln, row in sections["COMPDAT"][1]:
        if len(row) != 6 or row[4].upper() not in ("WI", "RADIUS"):
            raise DeckError(
                f"line {row_ln}: COMPDAT rows are "
                f"'name i j k WI|RADIUS value'")
        name = row[0]
        if name not in names:
            raise DeckError(f"line {row_ln}: unknown well {name!r}")
        try:
            i, j, k = int(row[1]) - 1, int(row[2]) - 1, int(row[3]) - 1
            value = float(row[5])
        except ValueError:
            raise DeckError(f"line {row_ln}: bad numeric value in COMPDAT")
        if not (0 <= i < grid.nx and 0 <= j < grid.ny and 0 <= k < grid.nz):
            raise DeckError(
                f"line {row_ln}: cell [{i + 1} {j + 1} {k + 1}] outside "
                f"the {grid.nx}x{grid.ny}x{grid.nz} grid")
        cell = grid.gid(i, j, k)
        if row[4].upper() == "WI":
            wi = wl.well_index_from_deck((value, None), grid, cell)
        else:
            wi = wl.well_index_from_deck((None, value), grid, cell)
            specs[names[name]][5] = value
        specs[names[name]][3].append(
            wl.Perforation(cell=cell, wi=wi, depth=float(grid.depth[cell])))

    def initial_control(section, injector_expected):
        if section not in sections:
            return
        limit_word = "BHPMAX" if injector_expected else "BHPMIN"
        usage = (f"line {{ln}}: {section} rows are "
                 f"'name MODE target {limit_word} limit' or "
                 f"'name SHUTIN {limit_word} limit'")
        for row_ln, row in sections[section][1]:
            if len(row) == 4 and row[1].upper() == "SHUTIN":
                row = [row[0], row[1], "0", row[2], row[3]]
            if len(row) != 5 or row[3].upper() != limit_word:
                raise DeckError(usage.format(ln=row_ln))
            name = row[0]
            if name not in names:
                raise DeckError(f"line {row_ln}: unknown well {name!r}")
            spec = specs[names[name]]
            if spec[1] != injector_expected:
                raise DeckError(
                    f"line {row_ln}: {section} applies to "
                    f"{'injectors' if injector_expected else 'producers'}")
            mode_word = row[1].upper()
            try:
                limit = float(row[4])
                if mode_word == "SHUTIN":
                    control = wl.WellControl(wl.Mode.SHUTIN, None, limit)
                elif mode_word in _MODE_WORDS:
                    control = wl.WellControl(wl.Mode(mode_word.lower()),
                                             float(row[2]), limit)
                else:
                    raise DeckError(
                        f"line {row_ln}: unknown mode {mode_word}")
            except ValueError:
                raise DeckError(f"line {row_ln}: bad numeric value "
                                f"in {section}")
            spec[4] = control

    initial_control("WCONINJE", True)
    initial_control("WCONPROD", False)

    sched_tokens = {name: [] for name in names}
    schedule_rows = 0
    if "SCHEDULE" in sections:
        for row_ln, row in sections["SCHEDULE"][1]:
            try:
                t = float(row[0])
            except ValueError:
                raise DeckError(f"line {row_ln}: bad schedule time "
                                f"{row[0]!r}")
            pos = 1
            for spec in specs:
                if pos >= len(row):
                    raise DeckError(
                        f"line {row_ln}: schedule row needs an entry for "
                        f"every well in WELSPECS order")
                tok = row[pos]
                word = tok.upper()
                if word in _SCHED_WORDS:
                    sched_tokens[spec[0]].append((t, word.lower()))
                    pos += 1
                elif word in _MODE_WORDS:
                    if pos + 1 >= len(row):
                        raise DeckError(
                            f"line {row_ln}: mode {word} needs a value")
                    sched_tokens[spec[0]].append(
                        (t, (word.lower(), float(row[pos + 1]))))
                    pos += 2
                else:
                    try:
                        sched_tokens[spec[0]].append((t, float(tok)))
                    except ValueError:
                        raise DeckError(
                            f"line {row_ln}: bad schedule token {tok!r}")
                    pos += 1
            if pos != len(row):
                raise DeckError(
                    f"line {row_ln}: trailing tokens in schedule row")
            schedule_rows += 1

    out = []
    for name, injector, ref_depth, perfs, control, radius in specs:
        if not perfs:
            raise DeckError(f"well {name!r} has no COMPDAT entry")
        rows = sched_tokens[name]
        if control is None and not rows:
            raise DeckError(f"well {name!r} has no control (WCON* or "
                            f"SCHEDULE)")
        bhp_limit = control.bhp_limit if control is not None else None
        try:
            schedule = wl.schedule_from_tokens(injector, rows, bhp_limit,
                                               initial=control)
        except ValueError as exc:
            raise DeckError(f"well {name!r}: {exc}")
        out.append(wl.WellSpec(name=name, injector=injector,
                               ref_depth=ref_depth, perforations=tuple(perfs),
                               schedule=schedule, radius=radius))
    return tuple(out), schedule_rows


def load_deck(path):
    """Parse a deck file; property files resolve relative to it."""
    with open(path) as fh:
        text = fh.read()
    return parse_deck(text, base_dir=os.path.dirname(os.path.abspath(path)))
