"""Brake orbits and heteroclinic connections by direct minimization of discrete actions.

Submodules are loaded on first attribute access so that ``brakeorb.cli`` can cap
BLAS threads before numpy is imported.
"""
import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "potential": ("Potential", "Kind", "scalar_quartic", "two_channel", "custom",
                  "nondegeneracy_constants", "sigma_and_M", "check_h1"),
    "grids": ("Grid1D", "Grid2D", "Path1D", "Field2D"),
    "optim": ("MinimizeConfig", "newton_minimize"),
    "profile1d": ("Connection", "Sign", "solve_connection", "solve_pair", "action_JR", "tail_rate",
                  "operator_T_spectrum", "estimate_mu", "equipartition_residual", "distance_to_tanh"),
    "fiber": ("decompose", "h_prime", "effective_potential", "monotone_f_check", "estimate_ep",
              "linfty_interpolation_check"),
    "brake1d": ("BrakeOrbit", "minimize_brake", "clamp_excursion", "smallness_test", "confinement_check",
                "energy_residual", "el_residual", "period_amplitude_oracle", "sweep_T"),
    "strip2d": ("StripSolution", "minimize_strip", "pde_residual", "hamiltonian_identities",
                "fiber_series", "stay_in_audit"),
    "diagnostics": ("DecayFit", "fit_q_decay", "fit_y_decay", "h_variation_audit", "testmap_energy",
                    "SweepTable", "sweep_L"),
    "fieldio": ("save_field", "load_field"),
}
_WHERE = {name: mod for mod, names in _EXPORTS.items() for name in names}
__all__ = sorted(_WHERE)


def __getattr__(name):
    mod = _WHERE.get(name)
    if mod is None:
        raise AttributeError(f"module 'brakeorb' has no attribute {name!r}")
    value = getattr(importlib.import_module(f".{mod}", __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(list(globals()) + __all__)
