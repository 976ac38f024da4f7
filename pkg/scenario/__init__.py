# Scenario configuration, simulation wiring, batch runner and result files
