"""Intensity-driven dot-product random graphs: sampling, expectations,
heat operators, spectra, intensity PDEs, and the experiment harness."""

from .rng import SeededRng, derive_stream, hash64
from .gridfield import GridField, ball_mask, load_grid, save_grid
from .latent import (
    MAX_DIM,
    GridTabulated,
    IntensityModel,
    MixtureComponent,
    MixtureOfProducts,
    MomentSummary,
    Position,
    Product,
    QuadratureSpec,
    TabulatedJoint,
    TruncGaussianSpec,
    UniformBall,
    evaluate_intensity,
    kernel_affinity,
    load_model,
    model_dim,
    moments,
    save_model,
    total_intensity,
)
from .sampling import (
    SampledGraph,
    load_graph,
    observed_subgraph,
    sample_asymmetric_ephemeral,
    sample_ephemeral,
    sample_lifetime,
    sample_perennial,
    sample_positions,
    save_graph,
)
from .expectations import (
    AsymmetricEphemeral,
    EdgeRule,
    Ephemeral,
    Lifetime,
    PerennialDistinct,
    PerennialWithLoops,
    edge_ratio,
    expected_edges,
    overlap_probability,
)

__version__ = "0.1.0"
