# Models package for strikesim
