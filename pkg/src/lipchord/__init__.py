"""Upper bounds on Lipschitz constants of feedforward networks.

The constraint matrix of the sector-bounded semidefinite relaxation is
supported on overlapping diagonal blocks; its single large semidefinite
constraint therefore decomposes exactly into one small constraint per
maximal clique.  The built-in ADMM solver works directly on that decomposed
form (the undecomposed program is the single-clique special case).
"""

from .network import (
    ActivationSpec,
    Network,
    eval_forward,
    gaussian_network,
    load_network,
    naive_lip,
    random_network,
    save_network,
    scale_weights,
    spectral_norm,
)
from .sdp import assemble_Z, build_dims, build_problem, build_T, tau_index_set
from .chordal import (
    bron_kerbosch,
    check_chordal,
    dense_clique,
    maximal_cliques,
    oracle_edge_set,
    predicted_edge_set,
)
from .admm import (
    BoundReport,
    SolveOptions,
    decompose_nsd,
    mat,
    project_nsd,
    solve,
    vec,
    verify_solution,
)
from .verify import decomposition_roundtrip, lower_bound_sampling
from .cli import run_estimate

__version__ = "0.1.0"
