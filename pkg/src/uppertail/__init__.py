"""Exponential last passage percolation, LUE spectra, and upper-tail large deviations."""
from .config import ExperimentConfig, parse_config
from .errors import UppertailError
from .lpp import GeodesicRecord, PassageStat, WeightField, geodesic, last_passage, sample_weight_field
from .mp import MPLaw, mp_cdf, mp_density, mp_integrate, mp_quantile
from .rates import beta_coefficient, rate_I, rate_Iy, rate_Jy
from .rmt import Spectrum, WishartSpec, sample_spectrum

__version__ = "0.1.0"
