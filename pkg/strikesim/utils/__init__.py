# Utilities package for strikesim
