"""Vector calculus for tamed Dirichlet spaces on simplicial model manifolds."""
__version__ = "0.1.0"

from .model_space import ModelSpace, build_model, load_mesh, mesh_size, refine, save_mesh  # noqa: E402
from .dirichlet import assemble, carre_du_champ, energy, heat_flow, laplacian, spectrum  # noqa: E402
from .kato import KatoMeasure, fit_form_bound, kato_constant, schrodinger_semigroup, taming_measure  # noqa: E402
