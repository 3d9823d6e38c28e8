"""Computation services: signal front end, learners, search and data generation."""
