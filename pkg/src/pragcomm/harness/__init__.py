"""Corpus generation, configuration, the per-image pipeline and experiment runs."""
