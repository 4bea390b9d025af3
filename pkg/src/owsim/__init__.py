"""owsim: a desk-scale fully implicit two-phase (oil-water) reservoir
simulator with a CPR-preconditioned Newton-Krylov solver stack."""

from importlib import resources

from .deck import Deck, DeckError, load_deck, parse_deck
from .discretization import (BlockMap, JacobianSystem, ReservoirModel,
                             SimulationState, assemble_jacobian,
                             assemble_residual, initialize_equilibrium)
from .grid import (Partition, StructuredGrid, build_grid, face_geom_factor,
                   halo_exchange, partition_grid)
from .nonlinear import NewtonConfig, TimeStepController, forcing_term
from .props import (FluidSystem, PhasePvt, RockModel, SatFunctionTable,
                    capillary_pressure, density, phase_potential, porosity,
                    rel_perm, viscosity)
from .simulator import (SimulationResult, SolverConfig, build_model,
                        config_from_deck, material_balance, run_simulation)
from .wells import Mode, Perforation, WellControl, WellSpec

__version__ = "0.1.0"


def bundled_deck_path(name):
    """Filesystem path of a deck shipped with the package (e.g.
    'mxsmo031.data')."""
    return str(resources.files(__package__) / "decks" / name)
