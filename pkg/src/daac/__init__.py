"""DAAC desk-scale laboratory.

Three-stage pipeline: AE-GAN discrepancy estimation on external normal
data, adaptive multi-view hierarchical contrastive pretraining, and
supervised fine-tuning, on a from-scratch differentiable tensor substrate.
"""

__version__ = "0.1.0"
