"""LoRa PHY abstraction: regional plans, airtime, propagation, collisions, duty cycle, energy."""
