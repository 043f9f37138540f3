"""HCP crystal plasticity at material-point scale with Taylor homogenization."""

from .constitutive import ConstitutiveParams, GrainState, Material, harden, shear_rates, twin_fraction
from .integrate import (GrainIntegrationError, LoadingSpec, integrate_strain_path, projected_stiffness,
                        run_grain, run_grains, taylor_homogenize)
from .lattice import SlipTwinSystemTable, hcp_systems, resolved_shear
from .model import CrystalModelConfig, CrystalPlasticityModel

__all__ = [
    "ConstitutiveParams", "GrainState", "Material", "harden", "shear_rates", "twin_fraction",
    "GrainIntegrationError", "LoadingSpec", "integrate_strain_path", "projected_stiffness",
    "run_grain", "run_grains", "taylor_homogenize", "SlipTwinSystemTable", "hcp_systems",
    "resolved_shear", "CrystalModelConfig", "CrystalPlasticityModel",
]
