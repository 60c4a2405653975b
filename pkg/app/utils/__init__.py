"""Logging, seeded random streams and on-disk artifacts"""
