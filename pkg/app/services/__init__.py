"""Datasets, generative models, metrics, landscapes, compression and sweeps"""
