"""Adversarial discriminator-enhanced encoder-decoder for predicting the
adverse-event class of drug pairs, with a from-scratch float64 training
engine, data pipeline, ablation harness, classic baselines, and metrics."""

__version__ = "0.1.0"
