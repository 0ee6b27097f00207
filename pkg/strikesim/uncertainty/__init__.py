# Uncertainty package for strikesim
