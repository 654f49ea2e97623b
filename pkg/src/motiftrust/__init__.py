"""motiftrust: temporal signed-graph edge classification with motif counts
and latent-group embeddings."""

__version__ = "0.1.0"
