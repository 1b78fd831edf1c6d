# Simulateur de beam squint
