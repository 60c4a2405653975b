"""chanvae - physics-constrained generative modeling of mmWave MIMO channels"""

__version__ = "1.0.0"
