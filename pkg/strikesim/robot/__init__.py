# Robot package for strikesim
