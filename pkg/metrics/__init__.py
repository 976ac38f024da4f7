# QoS metric definitions and per-scenario collection
