"""
strikesim - Anticipatory Strike-Point Simulation Toolkit

Synthetic ping-pong segments, anticipatory trajectory predictors, uncertainty
proxies and a kinematic KUKA/Ridgeback interception benchmark.
"""

__version__ = "1.0.0"
