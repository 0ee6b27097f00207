# Simgen package for strikesim
