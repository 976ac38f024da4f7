# Mobile TV over WiMAX - downlink simulator
# Discrete-event simulation of trace-driven mobile TV over 802.16e
