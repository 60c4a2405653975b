"""Numerical building blocks: linear algebra, channel model, autodiff"""
