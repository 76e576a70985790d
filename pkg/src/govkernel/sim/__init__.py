"""Seeded discrete-event simulation of the enterprise around the kernel."""
