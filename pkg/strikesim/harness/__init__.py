# Harness package for strikesim
