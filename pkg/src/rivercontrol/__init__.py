"""Stochastic control solvers for river environment management."""
