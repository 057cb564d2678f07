"""Size-conditioned subcritical Bienayme trees with Cauchy-type offspring tails.

Modules: ``offspring`` (laws), ``asymptotics`` (a_n, b_n, ell_star),
``walk`` (bridges, Vervaat rotation), ``tree`` (coding and statistics),
``heights`` (height tails), ``oracle`` (exact small-instance laws) and
``harness`` (experiments and output).
"""
from .offspring import CauchyFamily, TableDistribution, from_spec, make_cauchy_family, tilt

__version__ = "0.1.0"
__all__ = ["CauchyFamily", "TableDistribution", "from_spec", "make_cauchy_family", "tilt"]
