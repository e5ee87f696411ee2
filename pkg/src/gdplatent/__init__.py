"""
Dynamic latent variable estimates of GDP, population and GDP per capita
from multiple noisy country-year series.
"""
__version__ = "0.1.0"

from .extend import (LINK_REGISTRY, DerivedLink, ExtendedModel, Transform, derived_growth,
                     growth_item, register_extension)
from .ingest import (FilterPolicy, GenerativeConfig, SourceRecord, TrueParams, apply_filters,
                     compute_anchors, ingest_files, load_records, log_transform, simulate_panel)
from .panel import Dimension, ItemSpec, Panel, build_panel, default_items, item_counts, to_triples
from .posterior import (ConvergenceReport, PosteriorSummary, diagnose, export_estimates,
                        summarize)
from .sampler import DrawStore, PriorConfig, SamplerPlan, run_chains
from .validate import (correlation_matrix, coverage, item_bias_profile, rmse_compare,
                       uncertainty_profile, zscores)
