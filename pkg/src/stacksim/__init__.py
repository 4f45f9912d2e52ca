"""Transistor-level simulation of conventional and series-stacked SRAM columns."""
