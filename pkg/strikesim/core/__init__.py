# Core package for strikesim
