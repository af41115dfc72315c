"""
The LIMA protocol engine.

codec      frame layouts and payload caps
routing    REM processing and route tables
forwarding DER election, tunneling, dedup, DNoF, receive-window exit
adr        SNR history at the LG and the NS ADR algorithm
"""
