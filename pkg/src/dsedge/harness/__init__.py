"""Deterministic end-to-end evaluation harness.

Replaces real browsers with a seeded rasterizer and scripted clients so
the whole proxy/server/pipeline loop runs in CI in seconds.
"""
