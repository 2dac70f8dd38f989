"""Phrase-level discrete intonation codes: chink/chunk phrasing, F0 features,
an autoencoder + k-means baseline, a VAE with a sequence VAMP prior, MLPG
synthesis and listening-test statistics."""

__version__ = "0.1.0"
