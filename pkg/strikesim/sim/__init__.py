# Sim package for strikesim
