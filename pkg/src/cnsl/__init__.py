"""Cross-network diffusion source localization."""
__version__ = "0.1.0"
