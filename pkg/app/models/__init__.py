"""Pydantic schemas for configs, artifacts and the API"""
