"""Monolithic time stepping for the embedded-interface flow-structure solver.

The driver advances the coupled unknowns (background velocity and pressure,
structural displacement) with a Newton-Raphson-like method on the exact block
residual: the flow rows combine the stabilized volume terms, the facet ghost
penalties, and the interface operator; the structural row carries the
generalized-alpha balance, the interface operator tested with the solid
weights, and the alpha-weighted interface force stored from the previous time
level.  The background mesh is re-cut after every structural update; when the
active background function space changes, the iteration is interrupted and
restarted on the new space with the extended iterate as the initial guess, a
bounded number of times per step.  History vectors cross space changes through
the copy/extension transfer.

A separate single-level solver couples two overlapping flow meshes (a cut
background mesh and an embedded patch) through the two-sided interface
operator; it shares the Newton machinery and convergence bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .coupling import NitscheParams, assemble_ff_coupling, assemble_fs_coupling
from .cutting import CutConfiguration, NodeRole, build_cut_configuration
from .fluid import FluidParams, assemble_ghost_penalties, assemble_navier_stokes
from .linalg import BlockSystem, factor_solve
from .meshes import StructuredGrid
from .projection import SpaceProjector
from .solid import (
    GenAlphaParams,
    SolidInversionError,
    SolidModel,
    SolidState,
    genalpha_displacement_residual,
    genalpha_effective_mass_scale,
    genalpha_recover_acceleration,
    genalpha_recover_velocity,
    interface_chain,
)

NEWTON_MESSAGE = "maximum number of Newton-Raphson iterations reached!"
CYCLE_MESSAGE = "maximum number of function space changes at t^n exceeded!"
CHECKPOINT_VERSION = 1


class NewtonError(RuntimeError):
    """The iteration count limit was exhausted without convergence."""


class FunctionSpaceCycleError(RuntimeError):
    """Too many restarts caused by active-space changes within one step."""


# ----------------------------------------------------------------------------
# interface kinematics


def interface_velocity(d_now, d_prev, u_prev, theta_iface: float, dt: float):
    """Solid velocity consistent with the one-step interface discretization.

    u^n = (d^n - d^{n-1}) / (theta dt) - ((1 - theta)/theta) u^{n-1}.
    """
    if theta_iface == 0.0:
        raise ValueError("interface velocity update requires theta_interface > 0")
    d_now = np.asarray(d_now, dtype=float)
    d_prev = np.asarray(d_prev, dtype=float)
    u_prev = np.asarray(u_prev, dtype=float)
    return (d_now - d_prev) / (theta_iface * dt) - (
        (1.0 - theta_iface) / theta_iface
    ) * u_prev


def fluid_acceleration_update(u_now, u_prev, a_prev, theta: float, dt: float):
    """End-of-step acceleration of the one-step-theta flow discretization.

    a^n = (u^n - u~^{n-1}) / (theta dt) - ((1 - theta)/theta) a~^{n-1}, with
    the previous-level vectors already carried onto the current space.
    """
    u_now = np.asarray(u_now, dtype=float)
    u_prev = np.asarray(u_prev, dtype=float)
    a_prev = np.asarray(a_prev, dtype=float)
    return (u_now - u_prev) / (theta * dt) - ((1.0 - theta) / theta) * a_prev


# ----------------------------------------------------------------------------
# problem description


@dataclass(frozen=True)
class DriverConfig:
    """Time-stepping, iteration, and coupling parameters."""

    dt: float
    n_steps: int
    theta: float = 1.0
    theta_interface: float = 1.0
    rho_inf: float = 1.0
    tol: float = 1e-8
    max_newton: int = 25
    max_cycles: int = 5
    nitsche: NitscheParams = field(default_factory=NitscheParams)
    freeze_space: bool = False
    predictor: str = "constant"
    backward_euler_first_step: bool = True
    max_halvings: int = 8

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        if not (0.0 < self.theta <= 1.0):
            raise ValueError("theta must lie in (0, 1]")
        if not (0.0 < self.theta_interface <= 1.0):
            raise ValueError("theta_interface must lie in (0, 1]")
        if not (0.0 <= self.rho_inf <= 1.0):
            raise ValueError("rho_inf must lie in [0, 1]")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.max_newton < 1 or self.max_cycles < 1:
            raise ValueError("iteration limits must be at least 1")
        if self.predictor not in ("constant", "velocity"):
            raise ValueError("predictor must be 'constant' or 'velocity'")
        if self.max_halvings < 0:
            raise ValueError("max_halvings must be non-negative")

    @property
    def genalpha(self) -> GenAlphaParams:
        return GenAlphaParams(self.rho_inf)


@dataclass(frozen=True)
class VelocityDirichlet:
    """Strongly prescribed velocity on one outer side of the background grid.

    `value` is either a constant pair or a callable (pts, t) -> (m, 2);
    `components` selects which velocity components are constrained.
    """

    side: str
    value: object = (0.0, 0.0)
    components: tuple[int, ...] = (0, 1)

    def evaluate(self, pts: np.ndarray, time: float) -> np.ndarray:
        if callable(self.value):
            out = np.asarray(self.value(pts, time), dtype=float)
        else:
            out = np.broadcast_to(
                np.asarray(self.value, dtype=float), (len(pts), 2)
            ).copy()
        return out.reshape(len(pts), 2)


@dataclass
class FluidProblem:
    """Background flow domain: grid, constants, and boundary data."""

    grid: StructuredGrid
    params: FluidParams
    dirichlet: list[VelocityDirichlet] = field(default_factory=list)
    body_force: object = None
    pin_pressure: bool = False


@dataclass
class SolidProblem:
    """Immersed structure: model plus a constant body load per unit mass.

    With ``rigid=True`` every displacement unknown is constrained to zero
    while the interface stays coupled — a fixed obstacle seen by the flow
    through the same interface operator.
    """

    model: SolidModel
    body_load: object = None
    rigid: bool = False

    def __post_init__(self):
        self.loop_nodes, self.wet_mask = interface_chain(self.model.mesh)


@dataclass
class FsiProblem:
    fluid: FluidProblem
    solid: SolidProblem | None = None


# ----------------------------------------------------------------------------
# state and history


@dataclass
class FsiState:
    """Converged solution of one time level plus the carried history.

    `u_iface` is the interface-velocity history of the one-step interface
    scheme, `f_iface` the stored interface force tested with the solid
    weights, and `d_space` the displacement whose cut generated this level's
    active function space (used to rebuild the space for the next transfer).
    """

    time: float
    step: int
    U: np.ndarray
    P: np.ndarray
    A: np.ndarray
    solid: SolidState
    u_iface: np.ndarray
    f_iface: np.ndarray
    d_space: np.ndarray

    def copy(self) -> "FsiState":
        return FsiState(
            self.time,
            self.step,
            self.U.copy(),
            self.P.copy(),
            self.A.copy(),
            self.solid.copy(),
            self.u_iface.copy(),
            self.f_iface.copy(),
            self.d_space.copy(),
        )


@dataclass
class StepHistory:
    """Previous-level data expressed on the current active space."""

    U_tilde: np.ndarray
    P_tilde: np.ndarray
    A_tilde: np.ndarray
    solid_prev: SolidState
    u_iface_prev: np.ndarray
    f_iface_prev: np.ndarray
    f_int_old: np.ndarray
    f_ext_old: np.ndarray
    f_ext_new: np.ndarray


# ----------------------------------------------------------------------------
# boundary conditions and constraints


def _fluid_fixed_masks(fluid: FluidProblem, cfg: CutConfiguration):
    n = fluid.grid.n_nodes
    fix_u = np.zeros(2 * n, dtype=bool)
    fix_p = np.zeros(n, dtype=bool)
    inactive = np.flatnonzero(cfg.node_role == NodeRole.INACTIVE)
    fix_u[2 * inactive] = True
    fix_u[2 * inactive + 1] = True
    fix_p[inactive] = True
    for bc in fluid.dirichlet:
        nodes = fluid.grid.boundary_nodes(bc.side)
        for comp in bc.components:
            fix_u[2 * nodes + comp] = True
    if fluid.pin_pressure:
        if cfg.active_nodes.size == 0:
            raise ValueError("cannot pin the pressure: no active nodes")
        fix_p[int(cfg.active_nodes[0])] = True
    return fix_u, fix_p


def _apply_fluid_values(fluid: FluidProblem, cfg, U, P, time: float):
    """Write prescribed values into the iterate: zeros on inactive nodes,
    boundary data on active constrained nodes, zero at the pinned pressure."""
    inactive = np.flatnonzero(cfg.node_role == NodeRole.INACTIVE)
    U[2 * inactive] = 0.0
    U[2 * inactive + 1] = 0.0
    P[inactive] = 0.0
    coords = fluid.grid.node_coords()
    for bc in fluid.dirichlet:
        nodes = fluid.grid.boundary_nodes(bc.side)
        nodes = nodes[cfg.node_role[nodes] != NodeRole.INACTIVE]
        if nodes.size == 0:
            continue
        vals = bc.evaluate(coords[nodes], time)
        for comp in bc.components:
            U[2 * nodes + comp] = vals[:, comp]
    if fluid.pin_pressure and cfg.active_nodes.size:
        P[int(cfg.active_nodes[0])] = 0.0


def _identity_constrain(A: sp.spmatrix, r: np.ndarray, fixed: np.ndarray):
    """Zero the rows and columns of fixed unknowns and put ones on their
    diagonal; the matching residual entries become zero.  Valid because the
    prescribed values are already written into the iterate, so the fixed
    increments vanish."""
    keep = sp.diags((~fixed).astype(float))
    A = (keep @ A @ keep + sp.diags(fixed.astype(float))).tocsr()
    return A, np.where(fixed, 0.0, r)


# ----------------------------------------------------------------------------
# coupled assembly


@dataclass
class CoupledSystem:
    """One linearization of the coupled residual.

    `system` holds the raw blocks and residual before constraints; `matrix`
    and `residual` are the constrained versions that are actually solved.
    `coupling_force` is the interface force tested with the solid weights
    (the negative of the structural coupling rows), kept for the stored-force
    history of the time discretization.
    """

    system: BlockSystem
    matrix: sp.csr_matrix
    residual: np.ndarray
    fixed: np.ndarray
    coupling_force: np.ndarray


def assemble_coupled_system(
    problem: FsiProblem,
    config: DriverConfig,
    cfg: CutConfiguration,
    U: np.ndarray,
    P: np.ndarray,
    D: np.ndarray,
    history: StepHistory,
    *,
    time: float,
    theta: float,
    widened: bool = False,
    advection: np.ndarray | None = None,
) -> CoupledSystem:
    """Block residual and tangent of the coupled system at one iterate.

    The flow rows add the stabilized volume residual, the facet ghost
    penalties, and the interface operator; the structural row is the
    generalized-alpha balance scaled by 1/(1 - alpha_f) plus the interface
    operator and the alpha-weighted stored force.  `advection` overrides the
    frozen convection field (defaults to the current velocity iterate);
    constraints are applied last.
    """
    fluid = problem.fluid
    grid = fluid.grid
    n = grid.n_nodes
    dt = config.dt
    sigma = 1.0 / (theta * dt)
    c_frozen = U if advection is None else advection

    Ru, Rp, Juu, Jup, Jpu, Jpp = assemble_navier_stokes(
        grid, cfg, fluid.params, dt, theta, U, P,
        history.U_tilde, history.A_tilde, c_frozen,
        body_force=fluid.body_force, time=time,
    )
    K_conv, K_div, K_press = assemble_ghost_penalties(
        grid, cfg, fluid.params, dt, theta, c_frozen, widened=widened
    )
    Kuu = (K_conv + K_div).tocsr()
    Ru = Ru + Kuu @ U
    Rp = Rp + K_press @ P
    Juu = (Juu + Kuu).tocsr()
    Jpp = (Jpp + K_press).tocsr()

    solid = problem.solid
    sizes = {"u": 2 * n, "p": n}
    if solid is not None:
        sizes["d"] = solid.model.n_dofs
    system = BlockSystem(sizes)

    coupling_force = np.zeros(sizes.get("d", 0))
    c_res = None
    c_jac = None
    if solid is not None and cfg.loop is not None and cfg.segments:
        u_if = interface_velocity(
            D, history.solid_prev.d, history.u_iface_prev,
            config.theta_interface, dt,
        )
        c_res, c_jac = assemble_fs_coupling(
            grid, cfg, fluid.params, config.nitsche,
            U, P, c_frozen, solid.loop_nodes, u_if,
            config.theta_interface, dt, sigma,
        )
        Ru = Ru + c_res["u"]
        Rp = Rp + c_res["p"]
        coupling_force = -c_res["d"]

    system.set_residual("u", Ru)
    system.set_residual("p", Rp)
    system.set_block("u", "u", Juu)
    system.set_block("u", "p", Jup)
    system.set_block("p", "u", Jpu)
    system.set_block("p", "p", Jpp)

    if solid is not None:
        model = solid.model
        ga = config.genalpha
        af = ga.alpha_f
        scale = 1.0 / (1.0 - af)
        f_int, K_s = model.internal_force(D, tangent=True)
        mass = model.mass_matrix()
        R_s = genalpha_displacement_residual(
            D, history.solid_prev, dt, ga, mass.dot,
            f_int, history.f_int_old, history.f_ext_new, history.f_ext_old,
        )
        Rd = scale * R_s - (af * scale) * history.f_iface_prev
        Ldd = scale * (
            genalpha_effective_mass_scale(dt, ga) * mass + (1.0 - af) * K_s
        )
        if c_res is not None:
            Rd = Rd + c_res["d"]
            system.set_block("u", "d", c_jac[("u", "d")])
            system.set_block("p", "d", c_jac[("p", "d")])
            system.set_block("d", "u", c_jac[("d", "u")])
            system.set_block("d", "p", c_jac[("d", "p")])
            Ldd = Ldd + c_jac[("d", "d")]
            system.add_to_block("u", "u", c_jac[("u", "u")])
            system.add_to_block("u", "p", c_jac[("u", "p")])
            system.add_to_block("p", "u", c_jac[("p", "u")])
        system.set_residual("d", Rd)
        system.set_block("d", "d", Ldd)

    fix_u, fix_p = _fluid_fixed_masks(fluid, cfg)
    parts = [fix_u, fix_p]
    if solid is not None:
        fix_d = np.zeros(solid.model.n_dofs, dtype=bool)
        if solid.rigid:
            fix_d[:] = True
        else:
            fix_d[solid.model.clamped_dofs()] = True
        parts.append(fix_d)
    fixed = np.concatenate(parts)
    matrix, residual = _identity_constrain(system.assemble(), system.residual, fixed)
    return CoupledSystem(system, matrix, residual, fixed, coupling_force)


# ----------------------------------------------------------------------------
# convergence bookkeeping


def _norm_pair(vec: np.ndarray) -> tuple[float, float]:
    if vec.size == 0:
        return 0.0, 0.0
    return float(np.linalg.norm(vec)), float(np.max(np.abs(vec)))


def _relative(values: tuple[float, float], reference: tuple[float, float]):
    """Both norms scaled by the reference, which saturates at one so that
    vanishing reference vectors turn the check into an absolute one."""
    return (
        values[0] / max(reference[0], 1.0),
        values[1] / max(reference[1], 1.0),
    )


@dataclass
class IterationRecord:
    """Relative residual/increment norms (l2, max) per block, plus the
    absolute residual l2 norms and the accepted step scaling."""

    residual: dict[str, tuple[float, float]]
    increment: dict[str, tuple[float, float]]
    residual_abs: dict[str, float]
    step_scale: float = 1.0


@dataclass
class NewtonResult:
    status: str  # "converged" | "space-changed"
    cfg: CutConfiguration
    U: np.ndarray
    P: np.ndarray
    D: np.ndarray
    d_geometry: np.ndarray
    coupling_force: np.ndarray
    iterations: int
    records: list[IterationRecord]


def _deformed_loop(solid: SolidProblem, D: np.ndarray) -> np.ndarray:
    disp = D.reshape(-1, 2)[solid.loop_nodes]
    return solid.model.mesh.nodes[solid.loop_nodes] + disp


def newton_loop(
    problem: FsiProblem,
    config: DriverConfig,
    cfg: CutConfiguration,
    U: np.ndarray,
    P: np.ndarray,
    D: np.ndarray,
    history: StepHistory,
    *,
    time: float,
    theta: float,
    allow_recut: bool = True,
    widened: bool = False,
    d_geometry: np.ndarray | None = None,
) -> NewtonResult:
    """Newton-Raphson-like iteration at a fixed active function space.

    Re-cuts the background mesh from the current displacement before every
    iteration but the first; if the active space differs, the current iterate
    is carried to the new space by copy/extension and returned as the initial
    guess of the next restart.  Convergence requires the relative l2 and max
    norms of every residual block and every increment block to drop below the
    tolerance separately.  A structural update that inverts an element is
    halved a bounded number of times.
    """
    solid = problem.solid
    U, P = U.copy(), P.copy()
    D = np.zeros(0) if D is None else D.copy()
    d_geom = D.copy() if d_geometry is None else d_geometry.copy()
    records: list[IterationRecord] = []
    reference: dict[str, tuple[float, float]] | None = None

    for it in range(1, config.max_newton + 1):
        if it > 1 and allow_recut and solid is not None:
            cfg_new = build_cut_configuration(
                problem.fluid.grid, _deformed_loop(solid, D), solid.wet_mask
            )
            if cfg_new.same_active_space(cfg):
                cfg = cfg_new
                d_geom = D.copy()
            else:
                carry = SpaceProjector(cfg, cfg_new)
                return NewtonResult(
                    "space-changed", cfg_new, carry.apply(U), carry.apply(P),
                    D, D.copy(), np.zeros(0), it, records,
                )
        _apply_fluid_values(problem.fluid, cfg, U, P, time)
        assembled = assemble_coupled_system(
            problem, config, cfg, U, P, D, history,
            time=time, theta=theta, widened=widened,
        )
        delta = factor_solve(assembled.matrix, -assembled.residual)
        blocks = assembled.system.split(delta)
        res_blocks = assembled.system.split(assembled.residual)
        if reference is None:
            reference = {k: _norm_pair(v) for k, v in res_blocks.items()}
        iterate = {"u": U, "p": P}
        if solid is not None:
            iterate["d"] = D
        record = IterationRecord(
            residual={
                k: _relative(_norm_pair(v), reference[k])
                for k, v in res_blocks.items()
            },
            increment={
                k: _relative(_norm_pair(v), _norm_pair(iterate[k]))
                for k, v in blocks.items()
            },
            residual_abs={k: _norm_pair(v)[0] for k, v in res_blocks.items()},
        )
        records.append(record)
        converged = all(
            max(pair) < config.tol
            for group in (record.residual, record.increment)
            for pair in group.values()
        )
        if converged:
            return NewtonResult(
                "converged", cfg, U, P, D, d_geom,
                assembled.coupling_force, it, records,
            )
        scale = 1.0
        if solid is not None:
            ok = False
            for _ in range(config.max_halvings + 1):
                try:
                    solid.model.internal_force(D + scale * blocks["d"], tangent=False)
                    ok = True
                    break
                except SolidInversionError:
                    scale *= 0.5
            if not ok:
                raise SolidInversionError(
                    "structural update still inverts an element after "
                    f"{config.max_halvings} increment halvings"
                )
            D = D + scale * blocks["d"]
        record.step_scale = scale
        U = U + scale * blocks["u"]
        P = P + scale * blocks["p"]
    raise NewtonError(NEWTON_MESSAGE)


# ----------------------------------------------------------------------------
# time loop


@dataclass
class StepReport:
    step: int
    time: float
    theta: float
    cycles: int
    space_changes: int
    newton: list[NewtonResult]


class FsiDriver:
    """Orchestrates predictor, cutting, transfer, restarts, and recoveries."""

    def __init__(self, problem: FsiProblem, config: DriverConfig):
        self.problem = problem
        self.config = config
        solid = problem.solid
        if solid is not None:
            self._f_body = (
                solid.model.body_force_vector(np.asarray(solid.body_load, float))
                if solid.body_load is not None
                else np.zeros(solid.model.n_dofs)
            )
        else:
            self._f_body = np.zeros(0)

    # -- state construction ------------------------------------------------

    def initial_state(
        self,
        U0: np.ndarray | None = None,
        P0: np.ndarray | None = None,
        d0: np.ndarray | None = None,
        v0: np.ndarray | None = None,
        a0: np.ndarray | None = None,
        f_iface0: np.ndarray | None = None,
        time: float = 0.0,
    ) -> FsiState:
        """State at the initial level; accelerations default to zero and the
        stored interface force to zero (start from rest)."""
        n = self.problem.fluid.grid.n_nodes
        nd = self.problem.solid.model.n_dofs if self.problem.solid else 0

        def take(vec, size):
            return np.zeros(size) if vec is None else np.asarray(vec, float).copy()

        d = take(d0, nd)
        v = take(v0, nd)
        return FsiState(
            time=time,
            step=0,
            U=take(U0, 2 * n),
            P=take(P0, n),
            A=np.zeros(2 * n),
            solid=SolidState(d, v, take(a0, nd)),
            u_iface=v.copy(),
            f_iface=take(f_iface0, nd),
            d_space=d.copy(),
        )

    # -- helpers -----------------------------------------------------------

    def _cut_from(self, d: np.ndarray) -> CutConfiguration:
        solid = self.problem.solid
        if solid is None:
            return build_cut_configuration(self.problem.fluid.grid, None)
        return build_cut_configuration(
            self.problem.fluid.grid, _deformed_loop(solid, d), solid.wet_mask
        )

    def _predict(self, state: FsiState) -> np.ndarray:
        if self.config.predictor == "velocity":
            return state.solid.d + self.config.dt * state.solid.v
        return state.solid.d.copy()

    # -- stepping ----------------------------------------------------------

    def step(self, state: FsiState) -> tuple[FsiState, StepReport]:
        config = self.config
        solid = self.problem.solid
        n_step = state.step + 1
        t_new = state.time + config.dt
        theta = (
            1.0
            if (n_step == 1 and config.backward_euler_first_step)
            else config.theta
        )

        d_pred = self._predict(state)
        cfg_prev = self._cut_from(state.d_space)
        cfg = self._cut_from(d_pred)
        carry = SpaceProjector(cfg_prev, cfg)
        history = StepHistory(
            U_tilde=carry.apply(state.U),
            P_tilde=carry.apply(state.P),
            A_tilde=carry.apply(state.A),
            solid_prev=state.solid,
            u_iface_prev=state.u_iface,
            f_iface_prev=state.f_iface,
            f_int_old=(
                solid.model.internal_force(state.solid.d, tangent=False)[0]
                if solid is not None
                else np.zeros(0)
            ),
            f_ext_old=self._f_body,
            f_ext_new=self._f_body,
        )

        U = history.U_tilde.copy()
        P = history.P_tilde.copy()
        D = d_pred
        d_geom = d_pred
        reports: list[NewtonResult] = []
        signals = 0
        cycle = 1
        while True:
            if cycle > config.max_cycles:
                raise FunctionSpaceCycleError(CYCLE_MESSAGE)
            frozen = config.freeze_space or signals >= 2
            result = newton_loop(
                self.problem, config, cfg, U, P, D, history,
                time=t_new, theta=theta,
                allow_recut=not frozen, widened=frozen,
                d_geometry=d_geom,
            )
            reports.append(result)
            if result.status == "converged":
                break
            signals += 1
            cycle += 1
            cfg = result.cfg
            frozen = config.freeze_space or signals >= 2
            carry = SpaceProjector(cfg_prev, cfg, widened=frozen)
            history.U_tilde = carry.apply(state.U)
            history.P_tilde = carry.apply(state.P)
            history.A_tilde = carry.apply(state.A)
            U, P, D = result.U, result.P, result.D
            d_geom = result.d_geometry

        A_new = fluid_acceleration_update(
            result.U, history.U_tilde, history.A_tilde, theta, config.dt
        )
        if solid is not None:
            ga = config.genalpha
            a_new = genalpha_recover_acceleration(
                result.D, state.solid, config.dt, ga
            )
            v_new = genalpha_recover_velocity(a_new, state.solid, config.dt, ga)
            u_if = interface_velocity(
                result.D, state.solid.d, state.u_iface,
                config.theta_interface, config.dt,
            )
            new_solid = SolidState(result.D.copy(), v_new, a_new)
        else:
            new_solid = SolidState(np.zeros(0), np.zeros(0), np.zeros(0))
            u_if = np.zeros(0)
        new_state = FsiState(
            time=t_new,
            step=n_step,
            U=result.U.copy(),
            P=result.P.copy(),
            A=A_new,
            solid=new_solid,
            u_iface=u_if,
            f_iface=result.coupling_force.copy(),
            d_space=result.d_geometry.copy(),
        )
        report = StepReport(
            step=n_step, time=t_new, theta=theta,
            cycles=cycle, space_changes=signals, newton=reports,
        )
        return new_state, report

    def run(
        self,
        state: FsiState | None = None,
        n_steps: int | None = None,
        on_step=None,
    ) -> tuple[list[FsiState], list[StepReport]]:
        if state is None:
            state = self.initial_state()
        steps = self.config.n_steps if n_steps is None else n_steps
        states = [state]
        reports: list[StepReport] = []
        for _ in range(steps):
            state, report = self.step(state)
            states.append(state)
            reports.append(report)
            if on_step is not None:
                on_step(state, report)
        return states, reports


def time_loop(
    problem: FsiProblem,
    config: DriverConfig,
    initial_state: FsiState | None = None,
    n_steps: int | None = None,
    on_step=None,
) -> tuple[list[FsiState], list[StepReport]]:
    """Run the monolithic time integration and return the state trajectory."""
    return FsiDriver(problem, config).run(initial_state, n_steps, on_step)


# ----------------------------------------------------------------------------
# checkpointing


def save_checkpoint(path, state: FsiState) -> None:
    """Versioned dump of every carried state vector and the step index.

    The file is a NumPy ``.npz`` archive with the arrays ``U, P, A`` (flow),
    ``d, v, a`` (structure), ``u_iface, f_iface, d_space`` (interface
    history), and scalars ``version, step, time``.  Reloading on the same
    platform reproduces the state bitwise.
    """
    np.savez(
        path,
        version=np.int64(CHECKPOINT_VERSION),
        step=np.int64(state.step),
        time=np.float64(state.time),
        U=state.U,
        P=state.P,
        A=state.A,
        d=state.solid.d,
        v=state.solid.v,
        a=state.solid.a,
        u_iface=state.u_iface,
        f_iface=state.f_iface,
        d_space=state.d_space,
    )


def load_checkpoint(path) -> FsiState:
    with np.load(path) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        return FsiState(
            time=float(data["time"]),
            step=int(data["step"]),
            U=data["U"].copy(),
            P=data["P"].copy(),
            A=data["A"].copy(),
            solid=SolidState(data["d"].copy(), data["v"].copy(), data["a"].copy()),
            u_iface=data["u_iface"].copy(),
            f_iface=data["f_iface"].copy(),
            d_space=data["d_space"].copy(),
        )


# ----------------------------------------------------------------------------
# overlapping two-mesh flow solver


@dataclass
class OverlapSolution:
    U1: np.ndarray
    P1: np.ndarray
    U2: np.ndarray
    P2: np.ndarray
    cfg1: CutConfiguration
    cfg2: CutConfiguration
    iterations: int
    records: list[IterationRecord]


def patch_boundary_loop(grid: StructuredGrid) -> np.ndarray:
    """Counterclockwise rectangle along the outer boundary of a grid."""
    x0, y0 = grid.origin
    x1 = x0 + grid.spacing[0] * grid.counts[0]
    y1 = y0 + grid.spacing[1] * grid.counts[1]
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def assemble_overlap_system(
    background: FluidProblem,
    patch: FluidProblem,
    nitsche: NitscheParams,
    cfg1: CutConfiguration,
    cfg2: CutConfiguration,
    U1, P1, U2, P2,
    *,
    dt: float,
    theta: float,
    history1: tuple[np.ndarray, np.ndarray],
    history2: tuple[np.ndarray, np.ndarray],
    time: float = 0.0,
    advection: tuple[np.ndarray, np.ndarray] | None = None,
):
    """Four-block residual/tangent of two overlapping flow meshes.

    The background rows see the embedded boundary through the two-sided
    interface operator; the patch mesh is boundary-fitted and uncut.  Returns
    (system, matrix, residual, fixed) with constraints applied last.
    """
    sigma = 1.0 / (theta * dt)
    c1 = U1 if advection is None else advection[0]
    c2 = U2 if advection is None else advection[1]

    out = {}
    for tag, fluid, cfg, U, P, c, hist in (
        ("1", background, cfg1, U1, P1, c1, history1),
        ("2", patch, cfg2, U2, P2, c2, history2),
    ):
        Ru, Rp, Juu, Jup, Jpu, Jpp = assemble_navier_stokes(
            fluid.grid, cfg, fluid.params, dt, theta, U, P,
            hist[0], hist[1], c, body_force=fluid.body_force, time=time,
        )
        K_conv, K_div, K_press = assemble_ghost_penalties(
            fluid.grid, cfg, fluid.params, dt, theta, c
        )
        Kuu = (K_conv + K_div).tocsr()
        out[tag] = (
            Ru + Kuu @ U, Rp + K_press @ P,
            (Juu + Kuu).tocsr(), Jup, Jpu, (Jpp + K_press).tocsr(),
        )

    c_res, c_jac = assemble_ff_coupling(
        background.grid, cfg1, patch.grid, background.params, nitsche,
        U1, P1, U2, P2, c1, c2, sigma,
    )

    n1, n2 = background.grid.n_nodes, patch.grid.n_nodes
    system = BlockSystem({"u1": 2 * n1, "p1": n1, "u2": 2 * n2, "p2": n2})
    for tag in ("1", "2"):
        Ru, Rp, Juu, Jup, Jpu, Jpp = out[tag]
        system.set_residual("u" + tag, Ru + c_res["u" + tag])
        system.set_residual("p" + tag, Rp + c_res["p" + tag])
        system.set_block("u" + tag, "u" + tag, Juu)
        system.set_block("u" + tag, "p" + tag, Jup)
        system.set_block("p" + tag, "u" + tag, Jpu)
        system.set_block("p" + tag, "p" + tag, Jpp)
    for key, block in c_jac.items():
        system.add_to_block(key[0], key[1], block)

    fix_u1, fix_p1 = _fluid_fixed_masks(background, cfg1)
    fix_u2, fix_p2 = _fluid_fixed_masks(patch, cfg2)
    fixed = np.concatenate([fix_u1, fix_p1, fix_u2, fix_p2])
    matrix, residual = _identity_constrain(system.assemble(), system.residual, fixed)
    return system, matrix, residual, fixed


def solve_overlapping_fluid(
    background: FluidProblem,
    patch: FluidProblem,
    nitsche: NitscheParams,
    *,
    dt: float | None = None,
    theta: float = 1.0,
    tol: float = 1e-8,
    max_newton: int = 25,
    time: float = 0.0,
    initial: tuple | None = None,
    history: tuple | None = None,
) -> OverlapSolution:
    """Solve the two-mesh flow system at one level with a Newton iteration.

    ``dt=None`` requests the stationary limit (the reactive time terms are
    switched off through a huge pseudo time step).  ``history`` optionally
    provides ``(U1_prev, A1_prev, U2_prev, A2_prev)`` for a transient step;
    ``initial`` seeds the iterate as ``(U1, P1, U2, P2)``.
    """
    if background.params.density != patch.params.density or (
        background.params.viscosity != patch.params.viscosity
    ):
        raise ValueError("overlapping meshes must share the fluid constants")
    steady = dt is None
    dt_eff = 1e30 if steady else dt

    cfg1 = build_cut_configuration(
        background.grid, patch_boundary_loop(patch.grid)
    )
    cfg2 = build_cut_configuration(patch.grid, None)

    n1, n2 = background.grid.n_nodes, patch.grid.n_nodes
    if initial is None:
        U1, P1 = np.zeros(2 * n1), np.zeros(n1)
        U2, P2 = np.zeros(2 * n2), np.zeros(n2)
    else:
        U1, P1, U2, P2 = (np.asarray(v, float).copy() for v in initial)
    if history is None:
        hist1 = (np.zeros(2 * n1), np.zeros(2 * n1))
        hist2 = (np.zeros(2 * n2), np.zeros(2 * n2))
    else:
        hist1 = (np.asarray(history[0], float), np.asarray(history[1], float))
        hist2 = (np.asarray(history[2], float), np.asarray(history[3], float))

    records: list[IterationRecord] = []
    reference = None
    for it in range(1, max_newton + 1):
        _apply_fluid_values(background, cfg1, U1, P1, time)
        _apply_fluid_values(patch, cfg2, U2, P2, time)
        system, matrix, residual, _ = assemble_overlap_system(
            background, patch, nitsche, cfg1, cfg2, U1, P1, U2, P2,
            dt=dt_eff, theta=theta, history1=hist1, history2=hist2, time=time,
        )
        delta = factor_solve(matrix, -residual)
        blocks = system.split(delta)
        res_blocks = system.split(residual)
        if reference is None:
            reference = {k: _norm_pair(v) for k, v in res_blocks.items()}
        iterate = {"u1": U1, "p1": P1, "u2": U2, "p2": P2}
        record = IterationRecord(
            residual={
                k: _relative(_norm_pair(v), reference[k])
                for k, v in res_blocks.items()
            },
            increment={
                k: _relative(_norm_pair(v), _norm_pair(iterate[k]))
                for k, v in blocks.items()
            },
            residual_abs={k: _norm_pair(v)[0] for k, v in res_blocks.items()},
        )
        records.append(record)
        if all(
            max(pair) < tol
            for group in (record.residual, record.increment)
            for pair in group.values()
        ):
            return OverlapSolution(U1, P1, U2, P2, cfg1, cfg2, it, records)
        U1 = U1 + blocks["u1"]
        P1 = P1 + blocks["p1"]
        U2 = U2 + blocks["u2"]
        P2 = P2 + blocks["p2"]
    raise NewtonError(NEWTON_MESSAGE)
