"""Phase at arrival to zero fast frequency, for Hamiltonians with one fast angle."""
from .averaging import (
    ImprovedCrossing, ImprovedState, averaged_crossing, from_improved, improved_crossing,
    state_with_invariant, to_improved,
)
from .errors import (
    BudgetExceeded, ConditionEViolated, DegenerateResonance, DomainError, EventNotFound, FieldBlowup,
    NoCrossing, NoResonantAction, PreconditionViolation, ResonanceError, TooCloseToResonance,
    TransformDiverged,
)
from .fourier import Coefficient, FourierSeries
from .integrate import EventSpec, IntegratorConfig, OdeProblem, Trajectory, integrate, integrate_to_event
from .model import PhaseState, SystemSpec, check_conditions, example_system, resonant_action
from .resonance import (
    CriticalPoint, PortraitClass, ResonanceReport, critical_points_of_F, detect_crossing, exclusion_margin,
    invert_pseudophase, nu_of, pendulum_energy, pseudophase, pseudophase_theory,
    pseudophase_theory_closed_example,
)

__version__ = "0.1.0"
