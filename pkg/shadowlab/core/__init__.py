"""Shared types and cross-cutting concerns for SHADOWLAB."""
