# Mobility, media traffic and the downlink MAC
