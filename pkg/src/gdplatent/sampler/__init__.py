"""Gibbs sampler for the dynamic GDP / population latent variable model."""
from .kernels import ffbs_random_walk, sample_truncated_innovation, slice_sample
from .model import Model, compile_model
from .run import run_chain, run_chains
from .store import DrawStore, StoreError, store_panel, write_store
from .types import ChainState, PriorConfig, SamplerAssertion, SamplerError, SamplerPlan
from .updates import (derived_gdppc, draw_predictive, gibbs_iteration, init_state, intercept_conditional,
                      latent_site_conditional, precision_conditional, update_innovations,
                      update_intercepts, update_latents, update_level_shift, update_precisions)

__all__ = [
    "ChainState", "DrawStore", "Model", "PriorConfig", "SamplerAssertion", "SamplerError",
    "SamplerPlan", "StoreError", "compile_model", "derived_gdppc", "draw_predictive",
    "ffbs_random_walk", "gibbs_iteration", "init_state", "intercept_conditional",
    "latent_site_conditional", "precision_conditional", "run_chain", "run_chains",
    "sample_truncated_innovation", "slice_sample", "update_innovations", "update_intercepts",
    "update_latents", "update_level_shift", "update_precisions", "store_panel", "write_store",
]
