# Discrete-event engine, registries and error types
