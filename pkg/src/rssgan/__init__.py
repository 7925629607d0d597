"""GAN-based synthetic data augmentation for RSS fingerprint room classification."""

__version__ = "0.1.0"
