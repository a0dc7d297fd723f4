"""Slow, table-free reference implementations used only as test oracles."""
