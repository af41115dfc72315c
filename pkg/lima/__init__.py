"""
lima - LIMA mesh augmentation for LoRaWAN.

Protocol engine (lima.protocol), radio model (lima.radio), discrete-event
simulator (lima.sim) and the `lima` command line (lima.cli).
"""

__version__ = "0.6.0"
