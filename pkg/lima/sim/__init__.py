"""
Discrete-event LoRa network simulator.

    engine          event queue and seeded RNG streams
    topology        grid layout of LG / LRs / EDs
    nodes           ED, LR and LG behaviour on top of lima.protocol
    network_server  in-process NS with ADR
    simulation      one run: Scenario -> Metrics
    sweeps          Variable-Size / Variable-Traffic tables
"""
