# Configuration package for strikesim
